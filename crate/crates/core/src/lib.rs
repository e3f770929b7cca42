//! Soft copy-paste augmentation for medical lesion segmentation.
//!
//! Lesions are cut from annotated source images together with a band of
//! surrounding context whose weight decays geometrically ring by ring, then
//! pasted into backgrounds at positions that satisfy anatomical overlap
//! constraints. Every sample is reproducible from the run configuration,
//! the master seed and its index.

// Config validation uses `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blend;
pub mod config;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod manifest;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod pipeline;
pub mod placement;
pub mod raster;
pub mod softmask;
pub mod transform;

pub use blend::{BlendMode, PasteOffset};
pub use config::{Ratio, RunConfig};
pub use dataset::{DatasetIndex, LesionInstance};
pub use error::{Error, Result};
pub use manifest::{ManifestEntry, ValidationReport};
pub use metrics::{ConfusionCounts, SegScores};
pub use placement::{PlacementConstraints, PlacementResult};
pub use raster::{BinaryMask, ClassConfig, ClassId, ImagePlane, LabelMap, Raster, Rect, SoftMask};
pub use softmask::SoftMaskParams;
pub use transform::{IntensityKind, RigidKind, TransformPipeline};
