use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pair of identical entities: {0}")]
    IdenticalEntities(String),
    #[error("malformed entity id: {0:?}")]
    MalformedId(String),

    #[error("duplicate page id: {0}")]
    DuplicatePageId(String),
    #[error("page {page}: span [{start}, {end}) is out of range for text of length {len}")]
    OffsetOutOfRange {
        page: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("page {page}: table {table} is ragged (row {row} has {got} cells, expected {expected})")]
    RaggedTable {
        page: String,
        table: usize,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("page {page}: table {table} has {cells} cells (limit 500)")]
    TableTooLarge {
        page: String,
        table: usize,
        cells: usize,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("table snippet infeasible: header and evidence row need {needed} tokens, budget {budget}")]
    SnippetInfeasible { needed: usize, budget: usize },
    #[error("masked entity set matches no reasoning category")]
    InvalidMaskSet,
    #[error("no viable example for query {0}")]
    NoViableExample(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unknown evidence reference: {0}")]
    UnknownEvidence(String),

    #[error("evidence region is empty")]
    EmptyEvidenceRegion,
    #[error("table has no cells")]
    EmptyTable,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("cell ({row}, {col}) out of range for {n_rows}x{n_cols} table")]
    CellOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("requested {k} examples from a dataset of {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid window: window {window}, stride {stride}")]
    InvalidWindow { window: usize, stride: usize },
    #[error("requested {n} groups but only {available} are available")]
    TooFewGroups { n: usize, available: usize },

    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
