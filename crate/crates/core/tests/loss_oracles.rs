//! The loss and metric reductions against plain per-voxel loops over
//! nested arrays, written without any of the crate's channel layout helpers.

use brainsynth::loss::{
    composite_loss_with, cross_entropy, soft_dice_average, LossConfig, PredictionBundle,
};
use brainsynth::metrics::hard_dice;
use brainsynth::{ChannelStack, Grid, IntensityVolume, LabelEntry, LabelSchema, LabelVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 4;
type Field<T> = [[[T; N]; N]; N];

struct Instance {
    /// `probs[x][y][z][c]`
    probs: Vec<Field<f32>>,
    target: Field<u32>,
    other: Field<u32>,
    image: Field<f32>,
    bias: Field<f32>,
    pred_image: Field<f32>,
    pred_bias: Field<f32>,
}

fn six_labels() -> LabelSchema {
    let labels = [0, 2, 41, 17, 53, 77]
        .iter()
        .map(|&id| LabelEntry {
            id,
            name: format!("label{id}"),
        })
        .collect();
    LabelSchema::new(labels, vec![(2, 41), (17, 53)], vec![2, 41], 77, 0).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, ids: &[u32]) -> Instance {
    let l = ids.len();
    let mut probs = vec![[[[0f32; N]; N]; N]; l];
    let mut target = [[[0u32; N]; N]; N];
    let mut other = [[[0u32; N]; N]; N];
    let mut image = [[[0f32; N]; N]; N];
    let mut bias = [[[0f32; N]; N]; N];
    let mut pred_image = [[[0f32; N]; N]; N];
    let mut pred_bias = [[[0f32; N]; N]; N];
    // A few labels are often left out of a volume, so absent labels are exercised.
    let used = rng.random_range(1..=l);
    for x in 0..N {
        for y in 0..N {
            for z in 0..N {
                let logits: Vec<f64> = (0..l).map(|_| rng.random_range(-4.0..4.0)).collect();
                let m = logits.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                for c in 0..l {
                    probs[c][x][y][z] = (e[c] / s) as f32;
                }
                target[x][y][z] = ids[rng.random_range(0..used)];
                other[x][y][z] = ids[rng.random_range(0..used)];
                image[x][y][z] = rng.random_range(0.0..3.0);
                bias[x][y][z] = rng.random_range(0.2..5.0);
                pred_image[x][y][z] = rng.random_range(-1.0..3.0);
                pred_bias[x][y][z] = rng.random_range(0.2..5.0);
            }
        }
    }
    Instance {
        probs,
        target,
        other,
        image,
        bias,
        pred_image,
        pred_bias,
    }
}

fn flatten<T: Copy>(f: &Field<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(N * N * N);
    for z in 0..N {
        for y in 0..N {
            for x in 0..N {
                out.push(f[x][y][z]);
            }
        }
    }
    out
}

fn grid() -> Grid {
    Grid::isotropic([N; 3], 1.0).unwrap()
}

fn bundle(inst: &Instance) -> PredictionBundle {
    let data: Vec<f32> = inst.probs.iter().flat_map(flatten).collect();
    let stack = ChannelStack::new(grid(), inst.probs.len(), data).unwrap();
    PredictionBundle::new(
        stack,
        IntensityVolume::new(grid(), flatten(&inst.pred_image)).unwrap(),
        IntensityVolume::new(grid(), flatten(&inst.pred_bias)).unwrap(),
    )
    .unwrap()
}

fn labels(f: &Field<u32>) -> LabelVolume {
    LabelVolume::new(grid(), flatten(f)).unwrap()
}

fn each() -> impl Iterator<Item = (usize, usize, usize)> {
    (0..N).flat_map(|x| (0..N).flat_map(move |y| (0..N).map(move |z| (x, y, z))))
}

fn oracle_ce(inst: &Instance, ids: &[u32]) -> f64 {
    let mut sum = 0.0;
    for (x, y, z) in each() {
        let c = ids.iter().position(|&id| id == inst.target[x][y][z]).unwrap();
        sum -= (inst.probs[c][x][y][z] as f64).max(1e-12).ln();
    }
    sum / (N * N * N) as f64
}

fn oracle_dice(inst: &Instance, ids: &[u32], skip: Option<u32>) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for (c, &id) in ids.iter().enumerate() {
        if Some(id) == skip {
            continue;
        }
        let (mut inter, mut p, mut t) = (0.0, 0.0, 0.0);
        for (x, y, z) in each() {
            let pv = inst.probs[c][x][y][z] as f64;
            let tv = if inst.target[x][y][z] == id { 1.0 } else { 0.0 };
            inter += pv * tv;
            p += pv;
            t += tv;
        }
        total += 2.0 * inter / (p + t + 1e-6);
        count += 1.0;
    }
    total / count
}

fn oracle_l1(a: &Field<f32>, b: &Field<f32>, f: fn(f64) -> f64) -> f64 {
    each()
        .map(|(x, y, z)| (f(a[x][y][z] as f64) - f(b[x][y][z] as f64)).abs())
        .sum::<f64>()
        / (N * N * N) as f64
}

fn oracle_hard_dice(a: &Field<u32>, b: &Field<u32>, id: u32) -> f64 {
    let (mut both, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y, z) in each() {
        let ia = a[x][y][z] == id;
        let ib = b[x][y][z] == id;
        na += ia as u8 as f64;
        nb += ib as u8 as f64;
        both += (ia && ib) as u8 as f64;
    }
    if na + nb == 0.0 {
        1.0
    } else {
        2.0 * both / (na + nb)
    }
}

fn check_schema(schema: &LabelSchema, seed: u64) {
    let ids: Vec<u32> = schema.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let inst = random_instance(&mut rng, &ids);
        let pred = bundle(&inst);
        let target = labels(&inst.target);

        let ce = cross_entropy(&pred, &target, schema).unwrap();
        assert!((ce - oracle_ce(&inst, &ids)).abs() < 1e-6);
        assert!(ce >= 0.0);

        for include_background in [true, false] {
            let cfg = LossConfig { include_background };
            let d = soft_dice_average(&pred, &target, schema, &cfg).unwrap();
            let skip = (!include_background).then_some(schema.background_id());
            assert!((d - oracle_dice(&inst, &ids, skip)).abs() < 1e-6);
            assert!((0.0..=1.0).contains(&d));
        }

        let img = IntensityVolume::new(grid(), flatten(&inst.image)).unwrap();
        let bias = IntensityVolume::new(grid(), flatten(&inst.bias)).unwrap();
        let b = composite_loss_with(&pred, &target, &img, &bias, schema, &LossConfig::default()).unwrap();
        let want = oracle_ce(&inst, &ids) - oracle_dice(&inst, &ids, None)
            + oracle_l1(&inst.pred_image, &inst.image, |v| v)
            + oracle_l1(&inst.pred_bias, &inst.bias, f64::ln);
        assert!((b.total - want).abs() < 1e-6, "{} vs {want}", b.total);
        assert_eq!(b.total, b.ce - b.avg_dice + b.l1_image + b.l1_logbias);

        let hd = hard_dice(&target, &labels(&inst.other), &ids).unwrap();
        for (k, &id) in ids.iter().enumerate() {
            assert!((hd[k] - oracle_hard_dice(&inst.target, &inst.other, id)).abs() < 1e-6);
        }
        let rev = hard_dice(&labels(&inst.other), &target, &ids).unwrap();
        assert_eq!(hd, rev);
    }
}

#[test]
fn small_schema_matches_scalar_loops() {
    check_schema(&six_labels(), 1);
}

#[test]
fn brain_schema_matches_scalar_loops() {
    check_schema(&LabelSchema::brain(), 2);
}

#[test]
fn perfect_prediction_reaches_minus_one() {
    // Every label present, so each soft Dice is 2n/(2n + ε).
    let s = six_labels();
    let ids: Vec<u32> = s.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut lab: Vec<u32> = ids.clone();
        lab.extend((ids.len()..N * N * N).map(|_| ids[rng.random_range(0..ids.len())]));
        let labels = LabelVolume::new(grid(), lab).unwrap();
        let img = IntensityVolume::from_fn(grid(), |i, j, k| (i + 2 * j + 3 * k) as f32 * 0.1).unwrap();
        let bias = IntensityVolume::from_fn(grid(), |i, j, k| 0.5 + (i * j + k) as f32 * 0.05).unwrap();
        let pred = PredictionBundle::one_hot(&labels, &s, img.clone(), bias.clone()).unwrap();
        let b = composite_loss_with(&pred, &labels, &img, &bias, &s, &LossConfig::default()).unwrap();
        assert_eq!(b.ce, 0.0);
        assert_eq!(b.l1_image, 0.0);
        assert_eq!(b.l1_logbias, 0.0);
        assert_eq!(b.total, -b.avg_dice);
        assert!((b.total + 1.0).abs() < 1e-7);
    }
}

#[test]
fn perfect_prediction_is_the_minimum_on_two_cubed() {
    // Enumerate every labelling of a 2×2×2 volume over three labels and
    // compare the one-hot loss against soft predictions.
    let labels3: Vec<LabelEntry> = [0, 1, 2]
        .iter()
        .map(|&id| LabelEntry {
            id,
            name: format!("l{id}"),
        })
        .collect();
    let s = LabelSchema::new(labels3, vec![], vec![1], 2, 0).unwrap();
    let g = Grid::isotropic([2, 2, 2], 1.0).unwrap();
    let one = IntensityVolume::filled(g.clone(), 1.0);
    let third = 1.0f32 / 3.0;
    for code in 0..3usize.pow(8) {
        let lab: Vec<u32> = (0..8).map(|v| ((code / 3usize.pow(v)) % 3) as u32).collect();
        let labels = LabelVolume::new(g.clone(), lab).unwrap();
        let perfect = PredictionBundle::one_hot(&labels, &s, one.clone(), one.clone()).unwrap();
        let best = composite_loss_with(&perfect, &labels, &one, &one, &s, &LossConfig::default()).unwrap();
        let uniform = PredictionBundle::new(
            ChannelStack::new(g.clone(), 3, vec![third; 24]).unwrap(),
            one.clone(),
            one.clone(),
        )
        .unwrap();
        let worse = composite_loss_with(&uniform, &labels, &one, &one, &s, &LossConfig::default()).unwrap();
        assert!(best.total < worse.total);
        let present = labels.label_set().len() as f64;
        assert!((best.total + present / 3.0).abs() < 1e-6);
    }
}

#[test]
fn uniform_ce_is_ln_l() {
    let s = LabelSchema::brain();
    let l = s.len();
    let p = 1.0f64 / l as f64;
    let g = grid();
    // Exact f32 value of 1/L, so the comparison is against ln of what is stored.
    let stored = p as f32;
    let stack = ChannelStack::new(g.clone(), l, vec![stored; l * g.len()]);
    let one = IntensityVolume::filled(g.clone(), 1.0);
    let pred = PredictionBundle::new(stack.unwrap(), one.clone(), one).unwrap();
    let ids: Vec<u32> = s.ids().collect();
    let target = LabelVolume::from_fn(g, |i, j, k| ids[(i + j * 4 + k * 16) % l]).unwrap();
    let ce = cross_entropy(&pred, &target, &s).unwrap();
    assert!((ce + (stored as f64).ln()).abs() < 1e-9);
    assert!((ce - (l as f64).ln()).abs() < 1e-7);
}
