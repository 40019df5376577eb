use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlobError {
    #[error("bad magic {0:?}, expected \"VLIT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported blob version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDType(u8),
    #[error("dtype code {actual}, expected {expected}")]
    WrongDType { expected: u8, actual: u8 },
    #[error("rank {actual}, expected {expected}")]
    BadRank { expected: usize, actual: usize },
    #[error("file truncated: {actual} bytes, header implies {expected}")]
    Truncated { expected: u64, actual: u64 },
    #[error("trailing bytes: {actual} bytes, header implies {expected}")]
    TrailingBytes { expected: u64, actual: u64 },
}

/// Names of the checks performed on dump contents. These appear verbatim in
/// validation reports and API error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Manifest,
    MissingFile,
    Json,
    BlobFormat,
    AttentionShape,
    RowStochastic,
    HiddenShape,
    NonFinite,
    TokenConsistency,
    PatchGrid,
    MaskKey,
    MaskShape,
    Image,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::Manifest => "manifest",
            Check::MissingFile => "missing_file",
            Check::Json => "json",
            Check::BlobFormat => "blob_format",
            Check::AttentionShape => "attention_shape",
            Check::RowStochastic => "row_stochastic",
            Check::HiddenShape => "hidden_shape",
            Check::NonFinite => "non_finite",
            Check::TokenConsistency => "token_consistency",
            Check::PatchGrid => "patch_grid",
            Check::MaskKey => "mask_key",
            Check::MaskShape => "mask_shape",
            Check::Image => "image",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: BlobError,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("example {example}: {check} check failed: {message}")]
    Validation {
        example: String,
        check: Check,
        message: String,
    },
    #[error("invariant violated in {record} ({field}): {message}")]
    InvariantViolation {
        record: String,
        field: String,
        message: String,
    },
    #[error("unknown example {0:?}")]
    UnknownExample(String),
}

impl DumpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DumpError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("{field} = {value} out of range (limit {limit})")]
    IndexOutOfRange {
        field: &'static str,
        value: usize,
        limit: usize,
    },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

/// Failure raised by a metric for a single head.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct MetricError(pub String);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("metric {0:?} is already registered")]
    DuplicateName(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpearmanError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("input is constant")]
    ConstantInput,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("mask {mask_rows}x{mask_cols} is smaller than the {grid_rows}x{grid_cols} patch grid")]
    Dimension {
        mask_rows: usize,
        mask_cols: usize,
        grid_rows: usize,
        grid_cols: usize,
    },
    #[error("packed mask payload has {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("nonzero padding bits in mask row {0}")]
    Padding(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("need at least 4 points for t-SNE, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("invalid t-SNE configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Index(#[from] AnalyticsError),
    #[error("unknown example {0:?}")]
    UnknownExample(String),
    #[error("token {token_index} of {example_id} is removed by the token filter")]
    FilteredQuery {
        example_id: String,
        token_index: usize,
    },
    #[error("no retained tokens of the opposite modality")]
    EmptyPool,
    #[error("embedding cache I/O on {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Dump(#[from] DumpError),
}
