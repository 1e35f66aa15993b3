use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::resample::{nearest, trilinear, Boundary};
use super::{ControlLattice, Grid, IntensityVolume, LabelVolume, Volume};
use crate::error::{Error, Result};

/// Spatial transform pulling each target voxel from a source location.
///
/// The source position of a target voxel with world position `w` is
///
/// ```text
/// c + A (w − c) + t + d(w)
/// ```
///
/// where `c` is the grid centre, `A` a linear map, `t` a translation and
/// `d` a smooth displacement (mm, world space) interpolated from a coarse
/// control lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    grid: Grid,
    linear: Matrix3<f64>,
    translation: Vector3<f64>,
    lattice: ControlLattice,
    control: Vec<[f64; 3]>,
}

impl DeformationField {
    pub fn identity(grid: &Grid) -> Self {
        DeformationField {
            grid: grid.clone(),
            linear: Matrix3::identity(),
            translation: Vector3::zeros(),
            lattice: ControlLattice::new([1, 1, 1], grid.dims()),
            control: vec![[0.0; 3]],
        }
    }

    pub fn new(
        grid: &Grid,
        linear: Matrix3<f64>,
        translation: Vector3<f64>,
        control_dims: [usize; 3],
        control: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let lattice = ControlLattice::new(control_dims, grid.dims());
        if control.len() != lattice.len() {
            return Err(Error::invalid(format!(
                "control lattice {control_dims:?} needs {} vectors, got {}",
                lattice.len(),
                control.len()
            )));
        }
        let finite = linear.iter().chain(translation.iter()).all(|v| v.is_finite())
            && control.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("deformation field contains non-finite values"));
        }
        Ok(DeformationField {
            grid: grid.clone(),
            linear,
            translation,
            lattice,
            control,
        })
    }

    pub fn translation(grid: &Grid, t: [f64; 3]) -> Self {
        let mut f = DeformationField::identity(grid);
        f.translation = Vector3::from(t);
        f
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn linear(&self) -> &Matrix3<f64> {
        &self.linear
    }

    pub fn translation_mm(&self) -> [f64; 3] {
        [self.translation[0], self.translation[1], self.translation[2]]
    }

    pub fn control_dims(&self) -> [usize; 3] {
        self.lattice.control
    }

    pub fn control_vectors(&self) -> &[[f64; 3]] {
        &self.control
    }

    pub fn is_identity(&self) -> bool {
        self.linear == Matrix3::identity()
            && self.translation == Vector3::zeros()
            && self.control.iter().all(|v| *v == [0.0; 3])
    }

    /// Smooth nonlinear displacement at a target voxel (mm).
    pub fn nonlinear_at(&self, v: [usize; 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for (c, w) in self.lattice.weights(v) {
            if w != 0.0 {
                for a in 0..3 {
                    d[a] += w * self.control[c][a];
                }
            }
        }
        d
    }

    /// World position sampled for target voxel `v`.
    pub fn source_world(&self, v: [usize; 3]) -> [f64; 3] {
        let w = Vector3::from(self.grid.voxel_to_world(v.map(|x| x as f64)));
        let c = Vector3::from(self.grid.center_world());
        let s = c + self.linear * (w - c) + self.translation;
        let d = self.nonlinear_at(v);
        [s[0] + d[0], s[1] + d[1], s[2] + d[2]]
    }

    /// Total displacement (mm) at target voxel `v`.
    pub fn displacement(&self, v: [usize; 3]) -> [f64; 3] {
        let w = self.grid.voxel_to_world(v.map(|x| x as f64));
        let s = self.source_world(v);
        [s[0] - w[0], s[1] - w[1], s[2] - w[2]]
    }

    fn source_voxel(&self, idx: usize) -> [f64; 3] {
        self.grid.world_to_voxel(self.source_world(self.grid.coords(idx)))
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if !self.grid.same_geometry(grid) {
            return Err(Error::invalid(format!(
                "deformation field grid {:?} does not match volume grid {:?}",
                self.grid.dims(),
                grid.dims()
            )));
        }
        Ok(())
    }
}

/// Warps an intensity volume (trilinear, zero outside the field of view).
pub fn apply_deformation(vol: &IntensityVolume, field: &DeformationField) -> Result<IntensityVolume> {
    field.check(vol.grid())?;
    if field.is_identity() {
        return Ok(vol.clone());
    }
    let dims = vol.dims();
    let src = vol.data();
    let data: Vec<f32> = (0..vol.len())
        .into_par_iter()
        .map(|idx| {
            trilinear(src, dims, field.source_voxel(idx), Boundary::Background).unwrap_or(0.0) as f32
        })
        .collect();
    Ok(Volume::from_parts(vol.grid().clone(), data))
}

/// Warps a label volume (nearest neighbour, `background` outside).
pub fn apply_deformation_labels(
    vol: &LabelVolume,
    field: &DeformationField,
    background: u32,
) -> Result<LabelVolume> {
    field.check(vol.grid())?;
    if field.is_identity() {
        return Ok(vol.clone());
    }
    let dims = vol.dims();
    let src = vol.data();
    let data: Vec<u32> = (0..vol.len())
        .into_par_iter()
        .map(|idx| {
            nearest(dims, field.source_voxel(idx), Boundary::Background).map_or(background, |s| src[s])
        })
        .collect();
    Ok(Volume::from_parts(vol.grid().clone(), data))
}
