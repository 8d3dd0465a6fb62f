//! LiDAR bird's-eye-view (BEV) multi-task perception toolkit.
//!
//! The crate covers the deterministic parts of a BEV perception pipeline:
//!
//! - [`pointcloud`]: KITTI / SemanticKITTI point, label and pose files.
//! - [`geometry`]: spherical conversion, range densification, motion compensation.
//! - [`raster`]: BEV projection, pseudo-residuals, static disparity, frame stacking
//!   and the `.bevg` raster container.
//! - [`sampler`]: asynchronous multi-dataset epoch planning.
//! - [`swag`]: semantic weighting and guidance gate, forward and backward.
//! - [`heads`]: keypoint / orientation / dimension decoding into detections.
//! - [`losses`]: focal, smooth-L1, masked box loss and rotating task weights.
//! - [`metrics`]: rotated IoU, average precision, segmentation IoU, latency bench.

pub mod geometry;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod pointcloud;
pub mod raster;
pub mod sampler;
pub mod swag;

pub use geometry::{DensifyConfig, SphericalPoint};
pub use heads::{Detection, HeadRasters};
pub use pointcloud::{PointCloud, PointLabels, Pose};
pub use raster::{BevConfig, BevGrid, ChannelKind};
pub use sampler::{AugmentationSchedule, DatasetSpec, EpochPlan, Role};
pub use swag::{FeatureMap, SwagOutput, SwagParams};
