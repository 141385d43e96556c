//! voxmerge: supervoxel agglomeration on 3D volumes.
//!
//! The crate implements a complete desk-scale pipeline: synthetic volume
//! generation, threshold-ladder watershed oversegmentation, candidate edge
//! extraction, hand-designed and learned feature families, training-set
//! augmentation, MLP/boosting classifiers, and evaluation. See the
//! `examples/` directory for one runnable program per capability.

pub mod augment;
pub mod edges;
pub mod error;
pub mod features;
pub mod learn;
pub mod math;
pub mod segmentation;
pub mod volume;

pub use error::{Result, VoxError};
