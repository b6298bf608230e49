use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
///
/// Each variant maps onto one of the CLI exit-code classes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph error: {0}")]
    Graph(String),

    #[error("invalid query: {0}")]
    Query(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Query(_) | Error::Json(_) => 2,
            Error::Numerical(_) | Error::Domain(_) => 4,
            Error::Graph(_)
            | Error::DegenerateInput(_)
            | Error::InsufficientData(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_) => 3,
        }
    }
}
