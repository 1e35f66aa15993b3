use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};

/// Voxel lattice plus its voxel→world (mm) affine.
///
/// Voxel sizes are derived from the column norms of the affine's linear
/// part, so they can never disagree with the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    affine: Matrix4<f64>,
    inverse: Matrix4<f64>,
    voxel_size: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("empty grid dimensions {dims:?}")));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("affine contains non-finite entries"));
        }
        let inverse = affine
            .try_inverse()
            .ok_or_else(|| Error::invalid("affine is not invertible"))?;
        let voxel_size = [0, 1, 2].map(|j| {
            (affine[(0, j)].powi(2) + affine[(1, j)].powi(2) + affine[(2, j)].powi(2)).sqrt()
        });
        if voxel_size.iter().any(|&s| s <= 0.0) {
            return Err(Error::invalid("affine has a zero-length axis"));
        }
        Ok(Grid {
            dims,
            affine,
            inverse,
            voxel_size,
        })
    }

    /// Axis-aligned grid with the given spacing, centred on the world origin.
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("non-positive spacing {spacing:?}")));
        }
        let mut affine = Matrix4::identity();
        for a in 0..3 {
            affine[(a, a)] = spacing[a];
            affine[(a, 3)] = -0.5 * (dims[a].max(1) as f64 - 1.0) * spacing[a];
        }
        Grid::new(dims, affine)
    }

    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        Grid::with_spacing(dims, [spacing; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn inverse_affine(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.voxel_size.iter().product()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    pub fn voxel_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let w = self.affine * Vector4::new(v[0], v[1], v[2], 1.0);
        [w[0], w[1], w[2]]
    }

    pub fn world_to_voxel(&self, w: [f64; 3]) -> [f64; 3] {
        let v = self.inverse * Vector4::new(w[0], w[1], w[2], 1.0);
        [v[0], v[1], v[2]]
    }

    /// World position of the geometric centre of the lattice.
    pub fn center_world(&self) -> [f64; 3] {
        self.voxel_to_world(self.dims.map(|d| 0.5 * (d as f64 - 1.0)))
    }

    /// Same dims and affine entries within `1e-6` mm.
    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-6)
    }

    pub fn has_spacing(&self, spacing: [f64; 3], tol: f64) -> bool {
        self.voxel_size
            .iter()
            .zip(spacing.iter())
            .all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn is_1mm(&self) -> bool {
        self.has_spacing([1.0; 3], 1e-3)
    }

    /// Voxel axis whose affine column has the largest component along the
    /// given world axis (0 = x/left-right, 1 = y, 2 = z).
    ///
    /// Fails when the top two candidates are tied, which happens for 45°
    /// oblique acquisitions.
    pub fn voxel_axis_along(&self, world_axis: usize) -> Result<usize> {
        let mut comps: Vec<(usize, f64)> = (0..3)
            .map(|j| (j, self.affine[(world_axis, j)].abs()))
            .collect();
        comps.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (best, top) = comps[0];
        let second = comps[1].1;
        if top <= 0.0 || (top - second) <= 1e-6 * top {
            return Err(Error::Orientation(format!(
                "cannot identify voxel axis for world axis {world_axis}: affine columns {:?}",
                (0..3)
                    .map(|j| self.affine[(world_axis, j)])
                    .collect::<Vec<_>>()
            )));
        }
        Ok(best)
    }

    /// Voxel axis that runs left-right in world space.
    pub fn lr_axis(&self) -> Result<usize> {
        self.voxel_axis_along(0)
    }

    /// Grid covering the same field of view at a new spacing.
    ///
    /// The first voxel centre is kept fixed; output dims are
    /// `round(n · old / new)` (at least 1), so the field of view is
    /// preserved within one output voxel.
    pub fn respaced(&self, spacing: [f64; 3]) -> Result<Grid> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!("non-positive spacing {spacing:?}")));
        }
        let mut scale = Matrix4::identity();
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let factor = spacing[a] / self.voxel_size[a];
            scale[(a, a)] = factor;
            dims[a] = ((self.dims[a] as f64 / factor).round() as usize).max(1);
        }
        Grid::new(dims, self.affine * scale)
    }
}
