//! Contrast- and resolution-agnostic brain MRI segmentation toolkit.
//!
//! The crate covers the data side of training a segmentation network on
//! synthetic scans and the test-time side of using it:
//!
//! * [`volume`]: 3D volumes with affine geometry, resampling, deformation
//!   and left-right flipping;
//! * [`nifti`]: NIfTI-1 input and output;
//! * [`synth`]: the domain-randomised sample generator;
//! * [`loss`] and [`metrics`]: the multi-task loss and evaluation metrics;
//! * [`inference`]: predictor interface, flip augmentation and evaluation.

pub mod error;
pub mod inference;
pub mod loss;
pub mod metrics;
pub mod nifti;
pub mod report;
pub mod schema;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use schema::{LabelEntry, LabelSchema};
pub use volume::{ChannelStack, FlipLr, Grid, IntensityVolume, LabelVolume, Volume};
