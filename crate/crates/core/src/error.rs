use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ids do not match between flow table and boundaries: {}", unmatched.join(", "))]
    Ingest { unmatched: Vec<String> },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("aggregation: {0}")]
    Aggregation(String),

    #[error("group {group} is not contiguous")]
    Contiguity { group: String },

    #[error("invalid range [{lo}, {hi}]")]
    Range { lo: f64, hi: f64 },

    #[error("sites {first} and {second} coincide")]
    DegenerateSite { first: usize, second: usize },

    #[error("leader too steep for gradient; minimal feasible k = {min_k}")]
    SteepLeader { min_k: f64 },

    #[error("layout mode: {0}")]
    Mode(String),

    #[error("port assignment left {remaining} crossing(s) unresolved")]
    CrossingRepair { remaining: usize },

    #[error("quadratic program: {0}")]
    Qp(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name used by the HTTP API and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Ingest { .. } => "IngestError",
            Error::Validation(_) => "ValidationError",
            Error::Geometry(_) => "GeometryError",
            Error::Aggregation(_) => "AggregationError",
            Error::Contiguity { .. } => "ContiguityError",
            Error::Range { .. } => "RangeError",
            Error::DegenerateSite { .. } => "DegenerateSiteError",
            Error::SteepLeader { .. } => "SteepLeaderError",
            Error::Mode(_) => "ModeError",
            Error::CrossingRepair { .. } => "CrossingRepairError",
            Error::Qp(_) => "QpError",
            Error::Io(_) => "IoError",
        }
    }

    /// Process exit code for the CLI. 1 is reserved for anything unexpected
    /// and 2 for argument errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::Ingest { .. } => 3,
            Error::Validation(_) => 4,
            Error::Geometry(_) => 5,
            Error::Aggregation(_) => 6,
            Error::Contiguity { .. } => 7,
            Error::Range { .. } => 8,
            Error::DegenerateSite { .. } => 9,
            Error::SteepLeader { .. } => 10,
            Error::Mode(_) => 11,
            Error::CrossingRepair { .. } => 12,
            Error::Qp(_) => 13,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
