//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty term after normalization")]
    EmptyTerm,

    #[error("phrase queries require retained text")]
    PhraseNeedsText,

    #[error("daily quota exceeded")]
    QuotaExceeded,

    #[error("remote request failed: {0}")]
    Remote(String),

    /// The raw payload is retained for diagnosis.
    #[error("malformed remote response: {0}")]
    MalformedResponse(String),

    #[error("normalizer must be > 1, got {0}")]
    InvalidNormalizer(f64),

    #[error("normalizer too small: N = {n} does not exceed min count {min_count}")]
    NormalizerTooSmall { n: f64, min_count: f64 },

    #[error("negative count: {0}")]
    NegativeCount(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("count lookup failed for pair ({x}, {y}): {source}")]
    ForPair {
        x: String,
        y: String,
        #[source]
        source: Box<Error>,
    },

    #[error("duplicate leaves in quartet")]
    DuplicateLeaves,

    #[error("need >=4 items, got {0}")]
    TooFewItems(usize),

    #[error("need >=2 distinct terms")]
    TooFewTerms,

    #[error("tree does not match matrix labels: {0}")]
    LabelMismatch(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("construction requires s > a, got s = {s}, a = {a}")]
    UniformWitnessBounds { s: usize, a: usize },

    #[error("author class {0} has N_i = 0")]
    EmptyAuthorClass(usize),

    #[error("degenerate features: all examples featurize to identical vectors")]
    DegenerateFeatures,

    #[error("need >=2 examples per class (got {pos} positive, {neg} negative)")]
    TooFewExamples { pos: usize, neg: usize },

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("undefined correlation: zero variance")]
    ZeroVariance,

    #[error("sequences differ in length or are shorter than 2")]
    BadSequenceLength,

    #[error("permutation space too large: k = {0} exceeds 8")]
    PermutationSpaceTooLarge(usize),

    #[error("invalid basis vocabulary: {0}")]
    InvalidBasis(String),

    #[error("insufficient vocabulary in {file}: {detail}")]
    InsufficientVocabulary { file: String, detail: String },

    #[error("corrupt index at {path}: {detail}")]
    CorruptIndex { path: PathBuf, detail: String },

    #[error("malformed matrix file: {0}")]
    MalformedMatrix(String),

    #[error("malformed fixture record: {0}")]
    MalformedFixture(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}
