//! Value-type 3D volumes with world-space geometry.
//!
//! Every operation returns a fresh volume; inputs are never mutated. Voxel
//! data is stored x-fastest, matching the on-disk NIfTI layout.

mod deform;
mod flip;
mod grid;
mod lattice;
mod resample;

pub use deform::{apply_deformation, apply_deformation_labels, DeformationField};
pub use flip::FlipLr;
pub use grid::Grid;
pub(crate) use lattice::ControlLattice;
pub use resample::{
    resample, resample_labels, resample_labels_to_grid, resample_to_grid, Boundary,
};

use crate::error::{Error, Result};

/// Scalar types that can live in a [`Volume`].
pub trait Voxel: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    fn is_valid(&self) -> bool;
}

impl Voxel for f32 {
    fn is_valid(&self) -> bool {
        !self.is_nan()
    }
}

impl Voxel for u32 {
    fn is_valid(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    grid: Grid,
    data: Vec<T>,
}

/// Real-valued scan, bias field or regression target.
pub type IntensityVolume = Volume<f32>;

/// Segmentation with non-negative integer label ids.
pub type LabelVolume = Volume<u32>;

impl<T: Voxel> Volume<T> {
    pub fn new(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match grid {:?}",
                data.len(),
                grid.dims()
            )));
        }
        if data.iter().any(|v| !v.is_valid()) {
            return Err(Error::invalid("volume data contains NaN"));
        }
        Ok(Volume { grid, data })
    }

    pub fn filled(grid: Grid, value: T) -> Self {
        let data = vec![value; grid.len()];
        Volume { grid, data }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        let [nx, ny, nz] = grid.dims();
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Volume::new(grid, data)
    }

    /// Builds a volume from data already known to be valid.
    pub(crate) fn from_parts(grid: Grid, data: Vec<T>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Volume { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.grid.index(i, j, k)]
    }

    /// Same grid, new values.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<Volume<U>> {
        Volume::new(self.grid.clone(), data)
    }
}

impl LabelVolume {
    /// Sorted, de-duplicated label ids present in the volume.
    pub fn label_set(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.data.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Channel-indexed stack of volumes on one grid (channel-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    grid: Grid,
    channels: usize,
    data: Vec<f32>,
}

impl ChannelStack {
    pub fn new(grid: Grid, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("channel stack needs at least one channel"));
        }
        if data.len() != grid.len() * channels {
            return Err(Error::invalid(format!(
                "stack data length {} does not match {} channels of {:?}",
                data.len(),
                channels,
                grid.dims()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("channel stack contains NaN"));
        }
        Ok(ChannelStack {
            grid,
            channels,
            data,
        })
    }

    pub fn from_volumes(volumes: &[IntensityVolume]) -> Result<Self> {
        let first = volumes
            .first()
            .ok_or_else(|| Error::invalid("no volumes to stack"))?;
        let mut data = Vec::with_capacity(first.len() * volumes.len());
        for v in volumes {
            if !v.grid().same_geometry(first.grid()) {
                return Err(Error::invalid("stacked volumes must share one grid"));
            }
            data.extend_from_slice(v.data());
        }
        ChannelStack::new(first.grid().clone(), volumes.len(), data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn voxels(&self) -> usize {
        self.grid.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_volume(&self, c: usize) -> IntensityVolume {
        Volume::from_parts(self.grid.clone(), self.channel(c).to_vec())
    }

    /// Keeps only channels `range`, in order.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Result<ChannelStack> {
        if range.end > self.channels || range.is_empty() {
            return Err(Error::invalid(format!(
                "channel range {range:?} out of bounds for {} channels",
                self.channels
            )));
        }
        let n = self.voxels();
        let data = self.data[range.start * n..range.end * n].to_vec();
        ChannelStack::new(self.grid.clone(), range.len(), data)
    }
}
