//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use brainsynth::inference::{evaluate_segmentations, segment, SegmentOptions, TissueCodeStub};
use brainsynth::loss::{composite_loss_with, cross_entropy, soft_dice_average, LossConfig, PredictionBundle};
use brainsynth::metrics::{hard_dice, pearson_correlation};
use brainsynth::nifti::{self, DataType};
use brainsynth::synth::{
    sample_gmm_params, sample_resolution, simulate_acquisition, GeneratorConfig, Orientation,
    Regime, ResolutionSpec,
};
use brainsynth::{
    ChannelStack, Error, FlipLr, Grid, IntensityVolume, LabelEntry, LabelSchema, LabelVolume,
};
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- generator

fn generator_constraints() -> Outcome {
    let start = Instant::now();
    let s = LabelSchema::brain();
    let cfg = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let draws = 10_000;
    let mut held = 0;
    for _ in 0..draws {
        let p = sample_gmm_params(&s, &cfg, &mut rng);
        let wm = 0.5 * (p.mean_of(2).unwrap() + p.mean_of(41).unwrap());
        let wmh = p.mean_of(77).unwrap();
        if (wm > cfg.wmh_threshold && wmh < wm) || (wm <= cfg.wmh_threshold && wmh > wm) {
            held += 1;
        }
    }
    ensure(held == draws, || format!("WMH constraint held in {held}/{draws} draws"))?;

    let mut counts = [0usize; 4];
    for _ in 0..draws {
        let r = sample_resolution(&cfg, &mut rng).regime;
        counts[Regime::ALL.iter().position(|&x| x == r).unwrap()] += 1;
    }
    let freqs = counts.map(|c| c as f64 / draws as f64);
    let worst = freqs.iter().map(|f| (f - 0.25).abs()).fold(0.0, f64::max);
    ensure(worst <= 0.02, || format!("regime frequencies {freqs:?}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "constraint {held}/{draws}, regime frequencies {freqs:?}, {secs:.2} s"
    ))
}

fn generator_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    std::fs::create_dir(&pairs).unwrap();
    common::write_training_pair(&pairs, "subject", [32, 32, 32]);
    let mut snaps = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let o = common::run(
            common::brainsynth()
                .args(["--command", "generate", "--count", "8", "--seed", "7", "--input"])
                .arg(&pairs)
                .arg("--output")
                .arg(&out),
        );
        ensure(o.status.success(), || {
            format!("generate exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
        })?;
        snaps.push(common::snapshot(&out));
    }
    let files = snaps[0].len();
    let nifti = snaps[0].iter().filter(|(p, _)| p.to_string_lossy().ends_with(".nii.gz")).count();
    ensure(nifti == 32, || format!("{nifti} NIfTI files, expected 32"))?;
    ensure(snaps[0] == snaps[1], || "outputs differ between runs".into())?;
    let bytes: usize = snaps[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{files} files ({bytes} bytes) identical, manifest included"))
}

// --------------------------------------------------------------------- loss

const N: usize = 4;

fn schema_of(ids: &[u32]) -> LabelSchema {
    let labels = ids
        .iter()
        .map(|&id| LabelEntry {
            id,
            name: format!("label{id}"),
        })
        .collect();
    LabelSchema::new(labels, vec![], vec![ids[1]], ids[ids.len() - 1], ids[0]).unwrap()
}

/// Values at `(x, y, z)` by nested loops; `at(x, y, z)` is the flat index.
fn at(x: usize, y: usize, z: usize) -> usize {
    x + N * (y + N * z)
}

fn loss_oracles() -> Outcome {
    let s = LabelSchema::brain();
    let ids: Vec<u32> = s.ids().collect();
    let l = ids.len();
    let g = Grid::isotropic([N; 3], 1.0).unwrap();
    let nv = N * N * N;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // probs[c][x][y][z]
        let mut probs = vec![[[[0f32; N]; N]; N]; l];
        let mut target = [[[0u32; N]; N]; N];
        let mut other = [[[0u32; N]; N]; N];
        let mut img = [[[0f32; N]; N]; N];
        let mut bias = [[[0f32; N]; N]; N];
        let mut pimg = [[[0f32; N]; N]; N];
        let mut pbias = [[[0f32; N]; N]; N];
        let used = rng.random_range(1..=l);
        for x in 0..N {
            for y in 0..N {
                for z in 0..N {
                    let e: Vec<f64> = (0..l).map(|_| rng.random_range(-4.0f64..4.0).exp()).collect();
                    let sum: f64 = e.iter().sum();
                    for c in 0..l {
                        probs[c][x][y][z] = (e[c] / sum) as f32;
                    }
                    target[x][y][z] = ids[rng.random_range(0..used)];
                    other[x][y][z] = ids[rng.random_range(0..used)];
                    img[x][y][z] = rng.random_range(0.0..3.0);
                    bias[x][y][z] = rng.random_range(0.2..5.0);
                    pimg[x][y][z] = rng.random_range(-1.0..3.0);
                    pbias[x][y][z] = rng.random_range(0.2..5.0);
                }
            }
        }
        let flat_f = |f: &[[[f32; N]; N]; N]| {
            let mut v = vec![0f32; nv];
            for x in 0..N {
                for y in 0..N {
                    for z in 0..N {
                        v[at(x, y, z)] = f[x][y][z];
                    }
                }
            }
            v
        };
        let flat_u = |f: &[[[u32; N]; N]; N]| {
            let mut v = vec![0u32; nv];
            for x in 0..N {
                for y in 0..N {
                    for z in 0..N {
                        v[at(x, y, z)] = f[x][y][z];
                    }
                }
            }
            v
        };
        let stack_data: Vec<f32> = probs.iter().flat_map(|p| flat_f(p)).collect();
        let pred = PredictionBundle::new(
            ChannelStack::new(g.clone(), l, stack_data).unwrap(),
            IntensityVolume::new(g.clone(), flat_f(&pimg)).unwrap(),
            IntensityVolume::new(g.clone(), flat_f(&pbias)).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let t = LabelVolume::new(g.clone(), flat_u(&target)).unwrap();
        let o = LabelVolume::new(g.clone(), flat_u(&other)).unwrap();
        let ti = IntensityVolume::new(g.clone(), flat_f(&img)).unwrap();
        let tb = IntensityVolume::new(g.clone(), flat_f(&bias)).unwrap();

        // Scalar-loop oracles.
        let (mut ce, mut l1i, mut l1b) = (0.0f64, 0.0f64, 0.0f64);
        let mut inter = vec![0.0f64; l];
        let mut psum = vec![0.0f64; l];
        let mut tsum = vec![0.0f64; l];
        let (mut both, mut na, mut nb) = (vec![0.0f64; l], vec![0.0f64; l], vec![0.0f64; l]);
        for x in 0..N {
            for y in 0..N {
                for z in 0..N {
                    for c in 0..l {
                        let p = probs[c][x][y][z] as f64;
                        let is_t = target[x][y][z] == ids[c];
                        let is_o = other[x][y][z] == ids[c];
                        psum[c] += p;
                        if is_t {
                            ce -= p.max(1e-12).ln();
                            inter[c] += p;
                            tsum[c] += 1.0;
                            na[c] += 1.0;
                        }
                        if is_o {
                            nb[c] += 1.0;
                        }
                        if is_t && is_o {
                            both[c] += 1.0;
                        }
                    }
                    l1i += (pimg[x][y][z] as f64 - img[x][y][z] as f64).abs();
                    l1b += ((pbias[x][y][z] as f64).ln() - (bias[x][y][z] as f64).ln()).abs();
                }
            }
        }
        ce /= nv as f64;
        l1i /= nv as f64;
        l1b /= nv as f64;
        let dice = (0..l).map(|c| 2.0 * inter[c] / (psum[c] + tsum[c] + 1e-6)).sum::<f64>() / l as f64;
        let hard: Vec<f64> = (0..l)
            .map(|c| if na[c] + nb[c] == 0.0 { 1.0 } else { 2.0 * both[c] / (na[c] + nb[c]) })
            .collect();

        let got_ce = cross_entropy(&pred, &t, &s).map_err(|e| e.to_string())?;
        let got_dice = soft_dice_average(&pred, &t, &s, &LossConfig::default()).map_err(|e| e.to_string())?;
        let got = composite_loss_with(&pred, &t, &ti, &tb, &s, &LossConfig::default()).map_err(|e| e.to_string())?;
        let got_hard = hard_dice(&t, &o, &ids).map_err(|e| e.to_string())?;
        worst = worst
            .max((got_ce - ce).abs())
            .max((got_dice - dice).abs())
            .max((got.total - (ce - dice + l1i + l1b)).abs());
        for c in 0..l {
            worst = worst.max((got_hard[c] - hard[c]).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("largest oracle deviation {worst:e}"))?;

    // Perfect prediction with every label present.
    let small = schema_of(&[0, 2, 17, 53, 77]);
    let sids: Vec<u32> = small.ids().collect();
    let labels = LabelVolume::from_fn(g.clone(), |i, j, k| sids[(i + 2 * j + 3 * k) % sids.len()]).unwrap();
    let img = IntensityVolume::from_fn(g.clone(), |i, j, k| (i * j + k) as f32 * 0.3).unwrap();
    let bias = IntensityVolume::from_fn(g.clone(), |i, j, k| 0.5 + (i + j + k) as f32 * 0.1).unwrap();
    let perfect = PredictionBundle::one_hot(&labels, &small, img.clone(), bias.clone()).unwrap();
    let b = composite_loss_with(&perfect, &labels, &img, &bias, &small, &LossConfig::default()).unwrap();
    ensure(b.total == b.ce - b.avg_dice + b.l1_image + b.l1_logbias, || "identity broken".into())?;
    ensure(b.ce == 0.0 && b.l1_image == 0.0 && b.l1_logbias == 0.0, || format!("{b:?}"))?;
    let gap = (b.total + 1.0).abs();
    ensure(gap <= 1e-6, || format!("perfect total {}", b.total))?;
    Ok(format!(
        "max oracle deviation {worst:.1e} over 100 instances; perfect total {} (ε-smoothing gap {gap:.1e})",
        b.total
    ))
}

fn closed_forms() -> Outcome {
    let g = Grid::isotropic([N; 3], 1.0).unwrap();
    let one = IntensityVolume::filled(g.clone(), 1.0);
    let mut worst_ce: f64 = 0.0;
    // 1/L is exact in float32 for powers of two.
    for l in [2usize, 4, 8, 16, 32] {
        let ids: Vec<u32> = (0..l as u32).collect();
        let s = schema_of(&ids);
        let stack = ChannelStack::new(g.clone(), l, vec![1.0 / l as f32; l * g.len()]).unwrap();
        let pred = PredictionBundle::new(stack, one.clone(), one.clone()).unwrap();
        let t = LabelVolume::from_fn(g.clone(), |i, j, k| ids[(i + 3 * j + 5 * k) % l]).unwrap();
        let ce = cross_entropy(&pred, &t, &s).unwrap();
        worst_ce = worst_ce.max((ce - (l as f64).ln()).abs());
    }
    // The brain schema's 1/38 is rounded to float32 on storage.
    let s = LabelSchema::brain();
    let l = s.len();
    let stored = 1.0 / l as f32;
    let stack = ChannelStack::new(g.clone(), l, vec![stored; l * g.len()]).unwrap();
    let pred = PredictionBundle::new(stack, one.clone(), one).unwrap();
    let ids: Vec<u32> = s.ids().collect();
    let t = LabelVolume::from_fn(g.clone(), |i, j, k| ids[(i + 3 * j + 5 * k) % l]).unwrap();
    let ce = cross_entropy(&pred, &t, &s).unwrap();
    let brain_gap = (ce + (stored as f64).ln()).abs();
    ensure(worst_ce <= 1e-9 && brain_gap <= 1e-9, || {
        format!("uniform CE off ln L by {worst_ce:e} (brain schema {brain_gap:e})")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_r: f64 = 0.0;
    for trial in 0..200 {
        let n = rng.random_range(3..200);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let mut a: f64 = rng.random_range(0.01..100.0);
        if trial % 2 == 1 {
            a = -a;
        }
        let b: f64 = rng.random_range(-1e3..1e3);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r = pearson_correlation(&x, &y).map_err(|e| e.to_string())?;
        worst_r = worst_r.max((r - a.signum()).abs());
    }
    ensure(worst_r <= 1e-12, || format!("affine Pearson off ±1 by {worst_r:e}"))?;
    Ok(format!(
        "uniform CE − ln L ≤ {worst_ce:.1e} (L = 2…32), brain schema vs stored 1/L {brain_gap:.1e}; affine Pearson ≤ {worst_r:.1e}"
    ))
}

// ---------------------------------------------------------------------- TTA

fn mirrored_grid(dims: [usize; 3]) -> Grid {
    let mut a = Matrix4::identity();
    a[(0, 0)] = -1.0;
    a[(0, 3)] = dims[0] as f64;
    Grid::new(dims, a).unwrap()
}

fn tta_correctness() -> Outcome {
    let s = LabelSchema::brain();
    let ids: Vec<u32> = s.ids().collect();
    let stub = TissueCodeStub::new(s.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut maps = 0;
    for trial in 0..20 {
        let dims = [rng.random_range(1..9), rng.random_range(1..7), rng.random_range(1..7)];
        let g = if trial % 2 == 0 { Grid::isotropic(dims, 1.0).unwrap() } else { mirrored_grid(dims) };
        let raw = LabelVolume::from_fn(g, |_, _, _| ids[rng.random_range(0..ids.len())]).unwrap();
        let map = TissueCodeStub::lateralize(&raw, &s).unwrap();
        let x = TissueCodeStub::encode(&map, &s);
        for tta in [false, true] {
            let r = segment(&x, &stub, &s, &SegmentOptions { tta, tiling: None }).map_err(|e| e.to_string())?;
            ensure(r.segmentation == map, || format!("round trip differs (dims {dims:?}, tta {tta})"))?;
        }
        maps += 1;
    }

    for _ in 0..100 {
        let dims = [rng.random_range(1..8), rng.random_range(1..8), rng.random_range(1..8)];
        let g = Grid::isotropic(dims, 1.0).unwrap();
        let labels = LabelVolume::from_fn(g.clone(), |_, _, _| ids[rng.random_range(0..ids.len())]).unwrap();
        let img = IntensityVolume::from_fn(g, |_, _, _| rng.random_range(0.0f32..500.0)).unwrap();
        let lf = labels.flip_lr(&s).unwrap();
        ensure(lf.flip_lr(&s).unwrap() == labels, || format!("label flip not an involution at {dims:?}"))?;
        ensure(img.flip_lr(&s).unwrap().flip_lr(&s).unwrap() == img, || {
            format!("intensity flip not an involution at {dims:?}")
        })?;
    }

    let table = [
        (2, 41), (3, 42), (4, 43), (5, 44), (7, 46), (8, 47), (10, 49), (11, 50),
        (12, 51), (13, 52), (17, 53), (18, 54), (26, 58), (28, 60), (30, 62), (31, 63),
    ];
    ensure(s.lateral_pairs().len() == table.len(), || "pair count differs".into())?;
    let g = Grid::isotropic([2, 1, 1], 1.0).unwrap();
    for (l, r) in table {
        let v = LabelVolume::new(g.clone(), vec![l, r]).unwrap();
        ensure(v.flip_lr(&s).unwrap().data() == [l, r], || format!("pair ({l}, {r}) not swapped"))?;
        let v = LabelVolume::new(g.clone(), vec![l, 0]).unwrap();
        ensure(v.flip_lr(&s).unwrap().data() == [0, r], || format!("{l} not mirrored to {r}"))?;
    }
    for id in [0, 14, 15, 16, 24, 77] {
        ensure(s.mirror_id(id) == id, || format!("midline label {id} swapped"))?;
    }
    Ok(format!(
        "{maps} stub maps exact with and without TTA; 100 flip involutions; {} pairs swap",
        table.len()
    ))
}

// -------------------------------------------------------------- acquisition

fn impulse_oracle(n: usize, at: usize) -> Vec<f64> {
    let sigma = 5.0 / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let radius = (3.0 * sigma).ceil() as i64;
    let w = |d: i64| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
    let norm: f64 = (-radius..=radius).map(w).sum();
    let blurred: Vec<f64> = (0..n as i64)
        .map(|z| {
            let d = z - at as i64;
            if d.abs() <= radius { w(d) / norm } else { 0.0 }
        })
        .collect();
    let kept = (n as f64 / 5.0).round() as usize;
    let samples: Vec<f64> = (0..kept).map(|s| blurred[5 * s]).collect();
    (0..n)
        .map(|z| {
            let p = z as f64 / 5.0;
            let lo = (p.floor() as usize).min(kept - 1);
            let hi = (lo + 1).min(kept - 1);
            let t = (p - lo as f64).min(1.0);
            samples[lo] * (1.0 - t) + samples[hi] * t
        })
        .collect()
}

fn acquisition() -> Outcome {
    let n = 41;
    let at = 20;
    let oracle = impulse_oracle(n, at);
    let peak = oracle.iter().cloned().fold(0.0, f64::max);
    let mut worst_rms: f64 = 0.0;
    for orientation in [Orientation::Axial, Orientation::Coronal, Orientation::Sagittal] {
        let axis = orientation.slice_world_axis();
        let mut dims = [6, 5, 4];
        dims[axis] = n;
        let g = Grid::isotropic(dims, 1.0).unwrap();
        let plane = IntensityVolume::from_fn(g, |i, j, k| if [i, j, k][axis] == at { 1.0 } else { 0.0 }).unwrap();
        for spec in [
            ResolutionSpec::slices(Regime::Clinical2d, orientation, 1.0, 5.0),
            ResolutionSpec::slices(Regime::PortableStock, orientation, 1.6, 5.0),
        ] {
            let out = simulate_acquisition(&plane, &spec).map_err(|e| e.to_string())?;
            let profile: Vec<f64> = (0..n)
                .map(|s| {
                    let mut v = [1, 1, 1];
                    v[axis] = s;
                    out.get(v[0], v[1], v[2]) as f64
                })
                .collect();
            let rms = (profile.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
            worst_rms = worst_rms.max(rms / peak);
        }
    }
    ensure(worst_rms < 0.02, || format!("relative RMS {worst_rms:.4}"))?;

    let cfg = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = Grid::isotropic([23, 19, 21], 1.0).unwrap();
    let c = 37.25f32;
    let vol = IntensityVolume::filled(g, c);
    let mut worst_c: f64 = 0.0;
    let mut seen = [false; 4];
    for _ in 0..40 {
        let spec = sample_resolution(&cfg, &mut rng);
        seen[Regime::ALL.iter().position(|&r| r == spec.regime).unwrap()] = true;
        let out = simulate_acquisition(&vol, &spec).map_err(|e| e.to_string())?;
        for &v in out.data() {
            worst_c = worst_c.max(((v - c) / c).abs() as f64);
        }
    }
    ensure(seen.iter().all(|&s| s), || "not every regime drawn".into())?;
    ensure(worst_c <= 1e-6, || format!("constant drifted by {worst_c:e}"))?;
    Ok(format!(
        "impulse relative RMS ≤ {:.2}% over 3 orientations × 2 regimes; constants within {worst_c:.1e} over all regimes",
        100.0 * worst_rms
    ))
}

// -------------------------------------------------------------------- NIfTI

fn nifti_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Matrix4::identity();
    a[(0, 0)] = -0.9;
    a[(1, 2)] = 1.1;
    a[(2, 1)] = 3.0;
    a[(0, 3)] = 91.0;
    let g = Grid::new([7, 5, 6], a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for ext in ["nii", "nii.gz"] {
        for (dt, hi) in [(DataType::U8, 255u32), (DataType::I16, 32_767), (DataType::I32, i32::MAX as u32)] {
            let v = LabelVolume::from_fn(g.clone(), |_, _, _| rng.random_range(0..=hi)).unwrap();
            let p = dir.path().join(format!("l_{dt:?}.{ext}"));
            nifti::write_labels(&v, &p, dt).map_err(|e| e.to_string())?;
            let back = nifti::read_labels(&p).map_err(|e| e.to_string())?;
            ensure(back.data() == v.data(), || format!("{dt:?} .{ext} not bit-exact"))?;
            ensure((back.grid().affine() - g.affine()).amax() < 1e-4, || "affine drift".into())?;
            checked += 1;
        }
        let v = IntensityVolume::from_fn(g.clone(), |_, _, _| rng.random_range(-1e5f32..1e5)).unwrap();
        let p = dir.path().join(format!("f.{ext}"));
        nifti::write_intensity(&v, &p, DataType::F32).map_err(|e| e.to_string())?;
        let back = nifti::read_intensity(&p).map_err(|e| e.to_string())?;
        let rel = back
            .data()
            .iter()
            .zip(v.data())
            .map(|(x, y)| ((x - y).abs() / y.abs().max(1.0)) as f64)
            .fold(0.0, f64::max);
        ensure(rel <= 1e-6, || format!("float32 .{ext} relative error {rel:e}"))?;
        checked += 1;
    }

    let plain = dir.path().join("l_I16.nii");
    let ok = std::fs::read(&plain).unwrap();
    let gz = std::fs::read(dir.path().join("l_I16.nii.gz")).unwrap();
    let patched = |off: usize, bytes: &[u8]| {
        let mut b = ok.clone();
        b[off..off + bytes.len()].copy_from_slice(bytes);
        b
    };
    let fixtures: Vec<(&str, Vec<u8>, fn(&Error) -> bool)> = vec![
        ("short header", ok[..100].to_vec(), |e| matches!(e, Error::Corrupt(_))),
        ("truncated data", ok[..ok.len() - 2].to_vec(), |e| matches!(e, Error::Corrupt(_))),
        ("truncated gzip", gz[..gz.len() / 2].to_vec(), |e| matches!(e, Error::Corrupt(_))),
        ("bad magic", patched(344, b"abc\0"), |e| matches!(e, Error::Format(_))),
        ("bad sizeof_hdr", patched(0, &100i32.to_le_bytes()), |e| matches!(e, Error::Format(_))),
        ("bad dim[0]", patched(40, &9i16.to_le_bytes()), |e| matches!(e, Error::Format(_))),
        ("zero dimension", patched(42, &0i16.to_le_bytes()), |e| matches!(e, Error::Format(_))),
        ("two-file magic", patched(344, b"ni1\0"), |e| matches!(e, Error::Unsupported(_))),
        ("complex datatype", patched(70, &32i16.to_le_bytes()), |e| matches!(e, Error::Unsupported(_))),
        ("five dimensions", {
            let mut b = patched(40, &5i16.to_le_bytes());
            b[50..52].copy_from_slice(&2i16.to_le_bytes());
            b
        }, |e| matches!(e, Error::Unsupported(_))),
    ];
    for (name, bytes, class) in &fixtures {
        let p = dir.path().join("fixture.nii");
        std::fs::write(&p, bytes).unwrap();
        match nifti::read_volume(&p) {
            Ok(_) => return Err(format!("{name} fixture accepted")),
            Err(e) if class(&e) => {}
            Err(e) => return Err(format!("{name} fixture gave the wrong class: {e}")),
        }
    }
    Ok(format!(
        "{checked} round trips (u8/i16/i32 exact, f32 ≤ 1e-6, plain and gzip); {} corrupt fixtures rejected by class",
        fixtures.len()
    ))
}

// --------------------------------------------------------------- evaluation

fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn textbook_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn from_counts(g: &Grid, counts: &[(u32, usize)]) -> LabelVolume {
    let mut data: Vec<u32> = counts.iter().flat_map(|&(id, n)| std::iter::repeat_n(id, n)).collect();
    data.resize(g.len(), 0);
    LabelVolume::new(g.clone(), data).unwrap()
}

fn evaluation() -> Outcome {
    let s = LabelSchema::brain();
    let ids: Vec<u32> = s.ids().filter(|&id| id != 0).collect();
    let g = Grid::isotropic([20, 20, 20], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    let selfs: Vec<_> = (0..5)
        .map(|c| {
            let counts: Vec<(u32, usize)> = ids.iter().map(|&id| (id, rng.random_range(10..200))).collect();
            let v = from_counts(&g, &counts);
            (format!("s{c}"), v.clone(), v)
        })
        .collect();
    let r = evaluate_segmentations(&selfs, &s).map_err(|e| e.to_string())?;
    for c in &r.cases {
        ensure(c.prediction.dice.as_ref().unwrap().iter().all(|&d| d == 1.0), || format!("{}: Dice below 1", c.case))?;
    }
    for row in &r.summary.correlations {
        let (p, sp) = (row.pearson.unwrap_or(f64::NAN), row.spearman.unwrap_or(f64::NAN));
        ensure((p - 1.0).abs() < 1e-12 && (sp - 1.0).abs() < 1e-12, || format!("{}: self correlation {p}", row.roi))?;
    }

    let mut pairs = Vec::new();
    let mut ref_vol = Vec::new();
    let mut pred_vol = Vec::new();
    for c in 0..12 {
        let rc: Vec<(u32, usize)> = ids.iter().map(|&id| (id, rng.random_range(10..200))).collect();
        let pc: Vec<(u32, usize)> = rc
            .iter()
            .map(|&(id, n)| (id, (n as i64 + rng.random_range(-50..50)).max(0) as usize))
            .collect();
        pairs.push((format!("c{c:02}"), from_counts(&g, &pc), from_counts(&g, &rc)));
        ref_vol.push(rc);
        pred_vol.push(pc);
    }
    let r = evaluate_segmentations(&pairs, &s).map_err(|e| e.to_string())?;
    let vol = |cohort: &Vec<Vec<(u32, usize)>>, ids: &[u32]| -> Vec<f64> {
        cohort
            .iter()
            .map(|case| {
                ids.iter()
                    .map(|id| case.iter().find(|e| e.0 == *id).unwrap().1 as f64)
                    .sum::<f64>()
                    / ids.len() as f64
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    for row in &r.summary.correlations {
        let (x, y) = (vol(&ref_vol, &row.ids), vol(&pred_vol, &row.ids));
        let rho = textbook_pearson(&x, &y);
        let rs = textbook_pearson(&textbook_ranks(&x), &textbook_ranks(&y));
        worst = worst
            .max((row.pearson.unwrap() - rho).abs())
            .max((row.spearman.unwrap() - rs).abs());
    }
    ensure(worst <= 1e-10, || format!("cohort correlation deviation {worst:e}"))?;
    let hippo = r.summary.correlations.iter().find(|c| c.ids == [17, 53]).unwrap();
    Ok(format!(
        "self-evaluation all ones; 12-case cohort {} ROIs within {worst:.1e} (hippocampus ρ = {:.4})",
        r.summary.correlations.len(),
        hippo.pearson.unwrap()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("generator constraint suite", generator_constraints),
        ("generator determinism", generator_determinism),
        ("loss oracle equivalence", loss_oracles),
        ("metric closed forms", closed_forms),
        ("TTA correctness", tta_correctness),
        ("acquisition simulation", acquisition),
        ("NIfTI round-trip", nifti_round_trip),
        ("evaluation pipeline", evaluation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{secs:.2}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.2}s]: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
