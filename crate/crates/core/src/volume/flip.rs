use super::{ChannelStack, IntensityVolume, LabelVolume, Volume, Voxel};
use crate::error::Result;
use crate::schema::LabelSchema;

/// Left-right mirroring about the centre of the voxel lattice.
///
/// The affine is kept, so anatomy moves to the opposite hemisphere in world
/// space. Lateral label ids (and lateral posterior channels) are exchanged.
/// Applying the flip twice restores the input exactly.
pub trait FlipLr: Sized {
    fn flip_lr(&self, schema: &LabelSchema) -> Result<Self>;
}

fn mirror_along<T: Copy>(data: &[T], dims: [usize; 3], axis: usize) -> Vec<T> {
    let [nx, ny, _] = dims;
    let n = dims[axis];
    (0..data.len())
        .map(|idx| {
            let mut c = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
            c[axis] = n - 1 - c[axis];
            data[c[0] + nx * (c[1] + ny * c[2])]
        })
        .collect()
}

fn flip_volume<T: Voxel>(vol: &Volume<T>) -> Result<Volume<T>> {
    let axis = vol.grid().lr_axis()?;
    Ok(Volume::from_parts(
        vol.grid().clone(),
        mirror_along(vol.data(), vol.dims(), axis),
    ))
}

impl FlipLr for IntensityVolume {
    fn flip_lr(&self, _schema: &LabelSchema) -> Result<Self> {
        flip_volume(self)
    }
}

impl FlipLr for LabelVolume {
    fn flip_lr(&self, schema: &LabelSchema) -> Result<Self> {
        let mirrored = flip_volume(self)?;
        let data = mirrored.data().iter().map(|&id| schema.mirror_id(id)).collect();
        Ok(Volume::from_parts(self.grid().clone(), data))
    }
}

impl IntensityVolume {
    /// Schema-free left-right flip for scalar images.
    pub fn flipped_lr(&self) -> Result<Self> {
        flip_volume(self)
    }
}

impl FlipLr for ChannelStack {
    /// Mirrors every channel and, when the stack carries one channel per
    /// schema label (optionally followed by extra channels), permutes the
    /// label channels by the lateral swap.
    fn flip_lr(&self, schema: &LabelSchema) -> Result<Self> {
        let axis = self.grid().lr_axis()?;
        let n = self.voxels();
        let perm = schema.mirror_channels();
        let mut data = Vec::with_capacity(self.data().len());
        for c in 0..self.channels() {
            let src = if c < perm.len() && self.channels() >= perm.len() {
                perm[c]
            } else {
                c
            };
            data.extend(mirror_along(&self.data()[src * n..(src + 1) * n], self.grid().dims(), axis));
        }
        ChannelStack::new(self.grid().clone(), self.channels(), data)
    }
}
