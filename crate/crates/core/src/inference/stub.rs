//! In-process predictors for tests and pipeline plumbing.

use super::{Normalization, Predictor, PredictorMetadata};
use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::volume::{ChannelStack, IntensityVolume, LabelVolume, Volume};

/// Predictor that reads a label map back out of an encoded image.
///
/// The input intensity of each voxel is a label id with lateral pairs
/// collapsed onto their left member. The side is recovered from the voxel's
/// position along the left-right axis, so the stub is exactly equivariant
/// under [`FlipLr`](crate::volume::FlipLr). Voxels on the mid-plane of an
/// odd-sized axis count as left. Unknown codes decode as background.
///
/// Output is the one-hot posterior, the input as image and a unit bias.
#[derive(Debug, Clone)]
pub struct TissueCodeStub {
    schema: LabelSchema,
    metadata: PredictorMetadata,
}

impl TissueCodeStub {
    pub fn new(schema: LabelSchema) -> Self {
        let metadata = PredictorMetadata::for_schema(&schema, Normalization::None);
        TissueCodeStub { schema, metadata }
    }

    /// Image the stub decodes into `labels`, provided every lateral label
    /// lies on its own side.
    pub fn encode(labels: &LabelVolume, schema: &LabelSchema) -> IntensityVolume {
        let data = labels
            .data()
            .iter()
            .map(|&id| canonical(schema, id) as f32)
            .collect();
        Volume::from_parts(labels.grid().clone(), data)
    }

    /// Label map with each lateral id moved to the side the stub assigns.
    pub fn lateralize(labels: &LabelVolume, schema: &LabelSchema) -> Result<LabelVolume> {
        let side = SideMap::new(labels)?;
        let data = labels
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &id)| side.place(schema, canonical(schema, id), idx))
            .collect();
        Ok(Volume::from_parts(labels.grid().clone(), data))
    }

    pub fn decode(&self, input: &IntensityVolume) -> Result<LabelVolume> {
        let side = SideMap::new(input)?;
        let bg = self.schema.background_id();
        let data = input
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let r = v.round();
                let id = if r >= 0.0 && r <= u32::MAX as f32 && self.schema.contains(r as u32) {
                    r as u32
                } else {
                    bg
                };
                side.place(&self.schema, canonical(&self.schema, id), idx)
            })
            .collect();
        Ok(Volume::from_parts(input.grid().clone(), data))
    }
}

fn canonical(schema: &LabelSchema, id: u32) -> u32 {
    match schema.lateral_pairs().iter().find(|&&(_, r)| r == id) {
        Some(&(l, _)) => l,
        None => id,
    }
}

/// Which voxels lie on the left half of the lattice.
struct SideMap {
    dims: [usize; 3],
    axis: usize,
    /// True when increasing index moves towards world +x (the right).
    ascending: bool,
}

impl SideMap {
    fn new<T: crate::volume::Voxel>(vol: &Volume<T>) -> Result<Self> {
        let axis = vol.grid().lr_axis()?;
        Ok(SideMap {
            dims: vol.dims(),
            axis,
            ascending: vol.grid().affine()[(0, axis)] > 0.0,
        })
    }

    fn is_left(&self, idx: usize) -> bool {
        let [nx, ny, _] = self.dims;
        let c = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        // Twice the offset from the lattice centre, to stay in integers.
        let off = 2 * c[self.axis] as i64 - (self.dims[self.axis] as i64 - 1);
        if self.ascending {
            off <= 0
        } else {
            off >= 0
        }
    }

    fn place(&self, schema: &LabelSchema, left_or_midline: u32, idx: usize) -> u32 {
        if self.is_left(idx) {
            left_or_midline
        } else {
            schema.mirror_id(left_or_midline)
        }
    }
}

impl Predictor for TissueCodeStub {
    fn metadata(&self) -> &PredictorMetadata {
        &self.metadata
    }

    fn predict(&self, input: &IntensityVolume) -> Result<ChannelStack> {
        let labels = self.decode(input)?;
        let n = input.len();
        let l = self.schema.len();
        let mut data = vec![0.0f32; n * (l + 2)];
        for (v, &id) in labels.data().iter().enumerate() {
            let c = self
                .schema
                .channel_of(id)
                .ok_or_else(|| Error::invalid(format!("decoded unknown label {id}")))?;
            data[c * n + v] = 1.0;
        }
        data[l * n..(l + 1) * n].copy_from_slice(input.data());
        data[(l + 1) * n..].fill(1.0);
        ChannelStack::new(input.grid().clone(), l + 2, data)
    }
}

/// Predictor with the same posterior `1/L` everywhere.
#[derive(Debug, Clone)]
pub struct UniformStub {
    channels: usize,
    metadata: PredictorMetadata,
}

impl UniformStub {
    pub fn new(schema: &LabelSchema) -> Self {
        UniformStub {
            channels: schema.len(),
            metadata: PredictorMetadata::for_schema(schema, Normalization::RobustMinMax),
        }
    }
}

impl Predictor for UniformStub {
    fn metadata(&self) -> &PredictorMetadata {
        &self.metadata
    }

    fn predict(&self, input: &IntensityVolume) -> Result<ChannelStack> {
        let n = input.len();
        let l = self.channels;
        let mut data = vec![1.0 / l as f32; n * (l + 2)];
        data[l * n..(l + 1) * n].copy_from_slice(input.data());
        data[(l + 1) * n..].fill(1.0);
        ChannelStack::new(input.grid().clone(), l + 2, data)
    }
}
