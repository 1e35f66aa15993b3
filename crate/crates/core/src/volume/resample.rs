use nalgebra::Matrix4;
use rayon::prelude::*;

use super::{Grid, IntensityVolume, LabelVolume, Volume};
use crate::error::{Error, Result};

/// What a sample falling outside the source field of view returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero intensity, or the background label.
    Background,
    /// Nearest edge voxel.
    Clamp,
}

/// Slack on the field-of-view test, in voxels.
const FOV_TOL: f64 = 1e-6;

/// Maps voxel coordinates of `target` into voxel coordinates of `source`.
#[derive(Clone, Copy)]
pub(crate) struct VoxelMap {
    m: Matrix4<f64>,
}

impl VoxelMap {
    pub fn between(source: &Grid, target: &Grid) -> Self {
        VoxelMap {
            m: source.inverse_affine() * target.affine(),
        }
    }

    #[inline]
    pub fn apply(&self, v: [usize; 3]) -> [f64; 3] {
        let (x, y, z) = (v[0] as f64, v[1] as f64, v[2] as f64);
        let m = &self.m;
        [0, 1, 2].map(|r| m[(r, 0)] * x + m[(r, 1)] * y + m[(r, 2)] * z + m[(r, 3)])
    }
}

#[inline]
fn inside(p: [f64; 3], dims: [usize; 3]) -> bool {
    (0..3).all(|a| p[a] >= -0.5 - FOV_TOL && p[a] <= dims[a] as f64 - 0.5 + FOV_TOL)
}

#[inline]
fn axis_split(p: f64, n: usize) -> (usize, usize, f64) {
    let c = p.clamp(0.0, (n - 1) as f64);
    let lo = c.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    (lo, hi, c - lo as f64)
}

/// Trilinear sample at continuous voxel coordinate `p`. `None` when `p` is
/// outside the field of view under [`Boundary::Background`].
#[inline]
pub(crate) fn trilinear(data: &[f32], dims: [usize; 3], p: [f64; 3], boundary: Boundary) -> Option<f64> {
    if boundary == Boundary::Background && !inside(p, dims) {
        return None;
    }
    let (x0, x1, fx) = axis_split(p[0], dims[0]);
    let (y0, y1, fy) = axis_split(p[1], dims[1]);
    let (z0, z1, fz) = axis_split(p[2], dims[2]);
    let at = |i: usize, j: usize, k: usize| data[i + dims[0] * (j + dims[1] * k)] as f64;
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a * (1.0 - t) + b * t };
    let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), fx);
    let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), fx);
    let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), fx);
    let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), fx);
    let c0 = lerp(c00, c10, fy);
    let c1 = lerp(c01, c11, fy);
    Some(lerp(c0, c1, fz))
}

/// Nearest-neighbour voxel index at continuous coordinate `p`.
#[inline]
pub(crate) fn nearest(dims: [usize; 3], p: [f64; 3], boundary: Boundary) -> Option<usize> {
    if boundary == Boundary::Background && !inside(p, dims) {
        return None;
    }
    let r = |a: usize| ((p[a] + 0.5).floor().max(0.0) as usize).min(dims[a] - 1);
    Some(r(0) + dims[0] * (r(1) + dims[1] * r(2)))
}

fn validate_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!(
            "target spacing must be positive, got {spacing:?}"
        )));
    }
    Ok(())
}

/// Trilinear resampling onto an arbitrary target grid.
pub fn resample_to_grid(vol: &IntensityVolume, target: &Grid, boundary: Boundary) -> IntensityVolume {
    if vol.grid().same_geometry(target) {
        return Volume::from_parts(target.clone(), vol.data().to_vec());
    }
    let map = VoxelMap::between(vol.grid(), target);
    let dims = vol.dims();
    let src = vol.data();
    let data: Vec<f32> = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let p = map.apply(target.coords(idx));
            trilinear(src, dims, p, boundary).unwrap_or(0.0) as f32
        })
        .collect();
    Volume::from_parts(target.clone(), data)
}

/// Nearest-neighbour resampling of labels onto an arbitrary target grid.
pub fn resample_labels_to_grid(
    vol: &LabelVolume,
    target: &Grid,
    boundary: Boundary,
    background: u32,
) -> LabelVolume {
    if vol.grid().same_geometry(target) {
        return Volume::from_parts(target.clone(), vol.data().to_vec());
    }
    let map = VoxelMap::between(vol.grid(), target);
    let dims = vol.dims();
    let src = vol.data();
    let data: Vec<u32> = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let p = map.apply(target.coords(idx));
            nearest(dims, p, boundary).map_or(background, |s| src[s])
        })
        .collect();
    Volume::from_parts(target.clone(), data)
}

/// Trilinear resampling to a new voxel spacing over the same field of view.
pub fn resample(vol: &IntensityVolume, target_spacing: [f64; 3]) -> Result<IntensityVolume> {
    validate_spacing(target_spacing)?;
    if vol.is_empty() {
        return Err(Error::invalid("cannot resample an empty volume"));
    }
    if vol.grid().has_spacing(target_spacing, 1e-9) {
        return Ok(vol.clone());
    }
    let target = vol.grid().respaced(target_spacing)?;
    Ok(resample_to_grid(vol, &target, Boundary::Clamp))
}

/// Nearest-neighbour counterpart of [`resample`]; never creates new labels.
pub fn resample_labels(vol: &LabelVolume, target_spacing: [f64; 3]) -> Result<LabelVolume> {
    validate_spacing(target_spacing)?;
    if vol.is_empty() {
        return Err(Error::invalid("cannot resample an empty volume"));
    }
    if vol.grid().has_spacing(target_spacing, 1e-9) {
        return Ok(vol.clone());
    }
    let target = vol.grid().respaced(target_spacing)?;
    Ok(resample_labels_to_grid(vol, &target, Boundary::Clamp, 0))
}
