//! Core library for lifting single-view 2D segmentation masks into 3D
//! Gaussian Splatting scenes.
//!
//! The pipeline: load a splat scene ([`scene_io`]) and its registered
//! cameras ([`camera_io`]), gate the Gaussians by a 2D mask, run the
//! depth-sorted Z-buffer occlusion pass and statistical filtering
//! ([`uplift`]), then render or back-project the selected subset
//! ([`rasterizer`]) and score it against ground truth ([`evaluate`]).
//! [`synth`] generates labeled synthetic scenes for end-to-end testing.

pub mod camera_io;
pub mod evaluate;
pub mod geometry;
pub mod mask_io;
pub mod rasterizer;
pub mod scene_io;
pub mod synth;
pub mod uplift;

pub use camera_io::{CameraView, ColmapError};
pub use evaluate::{EvalError, HullKind, MetricsReport};
pub use geometry::{
    CameraExtrinsics, CameraIntrinsics, Cov2D, GaussianSplat, GeometryError,
};
pub use mask_io::{Mask2D, MaskError};
pub use rasterizer::{RasterError, RenderOptions, RenderTarget};
pub use scene_io::{PlyError, SplatScene};
pub use synth::{SynthError, SynthOutput, SynthSpec};
pub use uplift::{SegmentationResult, UpliftConfig, UpliftError};
