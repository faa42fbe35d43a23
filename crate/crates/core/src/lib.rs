//! Deterministic image-corruption synthesis and robustness evaluation.
//!
//! The crate covers the full benchmark pipeline: corruption kernels
//! with a versioned severity table, dataset generation with manifests,
//! corruption-error metrics normalized against a published baseline,
//! input-standardization preprocessing, hold-out split protocols, and
//! the calibration/golden machinery that pins kernel behavior.

pub mod calibration;
pub mod corrupt;
pub mod dataset;
pub mod error;
pub mod image;
pub mod metrics;
pub mod preprocess;
pub mod splits;
pub mod ssim;

pub use corrupt::{apply_corruption, CorruptionKind, SeverityTable};
pub use error::{Error, Result};
pub use image::{ImageBuf, Rng64};
pub use metrics::{BaselineTable, ErrorProfile, RobustnessReport};
pub use ssim::ssim;
