use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {width}x{height}, minimum is 8x8")]
    ImageTooSmall { width: usize, height: usize },

    #[error("kernel exceeds image extent")]
    KernelExceedsImage,

    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("unknown corruption kind: {0}")]
    UnknownKind(String),

    #[error("severity must be in 0..=5, got {0}")]
    InvalidSeverity(u8),

    #[error("severity table {version:?} has no parameter {param:?} for {kind}")]
    MissingParameter {
        version: String,
        kind: &'static str,
        param: String,
    },

    #[error("texture too small: {tw}x{th} for image {iw}x{ih}")]
    TextureTooSmall {
        tw: usize,
        th: usize,
        iw: usize,
        ih: usize,
    },

    #[error("missing severity cell: {kind} severity {severity}")]
    MissingCell { kind: &'static str, severity: u8 },

    #[error("extra kinds not in mCE: {0}")]
    ExtraKindInMean(&'static str),

    #[error("core kind missing from aggregate: {0}")]
    CoreKindMissing(&'static str),

    #[error("nonpositive normalization denominator for {0}")]
    NonpositiveDenominator(&'static str),

    #[error("unknown image id: {0}")]
    UnknownImageId(String),

    #[error("duplicate prediction record for {image_id} ({split})")]
    DuplicateRecord { image_id: String, split: String },

    #[error("prediction log claims a training split but the manifest is test-only")]
    TestOnlyViolation,

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("corpus too small: {0} images (need at least 50)")]
    EmptyCorpus(usize),

    #[error("corpus fingerprint mismatch: expected {expected}, got {actual}")]
    CorpusFingerprint { expected: String, actual: String },

    #[error("unknown platform: {0}")]
    UnknownPlatform(String),

    #[error("entire broad class withheld: {0}")]
    WholeClassWithheld(String),

    #[error("class {class} has {subtypes} subtypes, cannot hold out {k}")]
    HoldoutTooLarge {
        class: String,
        subtypes: usize,
        k: usize,
    },

    #[error("missing test ids in prediction log: {0:?}")]
    MissingTestIds(Vec<String>),

    #[error("output directory {0} is not empty (pass --resume to continue)")]
    OutputNotEmpty(PathBuf),

    #[error("distribution length mismatch: {0} vs {1}")]
    DistributionLength(usize, usize),

    #[error("distribution does not sum to 1: {0}")]
    DistributionSum(f64),

    #[error("crop size {0} exceeds image {1}x{2}")]
    OversizeCrop(usize, usize, usize),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
