//! Random deformation and bias field draws.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::gmm::uniform;
use super::GeneratorConfig;
use crate::volume::{ControlLattice, DeformationField, Grid, IntensityVolume, Volume};

fn lattice_dims(points: usize, dims: [usize; 3]) -> [usize; 3] {
    dims.map(|d| points.min(d).max(1))
}

/// Random affine about the grid centre composed with a smooth nonlinear
/// displacement interpolated from a coarse Gaussian lattice.
pub fn sample_deformation<R: Rng + ?Sized>(
    grid: &Grid,
    config: &GeneratorConfig,
    rng: &mut R,
) -> DeformationField {
    let rot = config.rotation_deg.to_radians();
    let angles = [(); 3].map(|_| uniform(rng, (-rot, rot)));
    let scales = [(); 3].map(|_| uniform(rng, config.scale_range));
    let shears = [(); 3].map(|_| uniform(rng, (-config.shear, config.shear)));
    let t = config.translation_mm;
    let translation = [(); 3].map(|_| uniform(rng, (-t, t)));

    let rotation = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]).into_inner();
    let shear = Matrix3::new(1.0, shears[0], shears[1], 0.0, 1.0, shears[2], 0.0, 0.0, 1.0);
    let scale = Matrix3::from_diagonal(&Vector3::from(scales));
    let linear = rotation * shear * scale;

    let cdims = lattice_dims(config.nonlinear_grid, grid.dims());
    let sigma = config.nonlinear_sigma_mm;
    let n: usize = cdims.iter().product();
    let control = (0..n)
        .map(|_| {
            [(); 3].map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z.clamp(-3.0, 3.0) * sigma
            })
        })
        .collect();
    DeformationField::new(grid, linear, Vector3::from(translation), cdims, control)
        .expect("sampled deformation is finite")
}

/// Smooth multiplicative field `exp(U)` with `U` interpolated from a coarse
/// lattice of `N(0, σ_B²)` values. Strictly positive; `σ_B = 0` gives 1.
pub fn sample_bias_field<R: Rng + ?Sized>(
    grid: &Grid,
    config: &GeneratorConfig,
    rng: &mut R,
) -> IntensityVolume {
    let cdims = lattice_dims(config.bias_grid, grid.dims());
    let lattice = ControlLattice::new(cdims, grid.dims());
    let control: Vec<f64> = (0..lattice.len())
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * config.bias_log_sigma
        })
        .collect();
    let data: Vec<f32> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let b = lattice.interpolate(&control, grid.coords(idx)).exp() as f32;
            b.max(f32::MIN_POSITIVE)
        })
        .collect();
    Volume::new(grid.clone(), data).expect("bias field is finite")
}
