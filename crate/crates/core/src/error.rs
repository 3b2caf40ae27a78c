use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial degree {0}: k+1 must be a power of two")]
    UnsupportedDegree(usize),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("level {level} out of range (hierarchy has {n_levels} levels)")]
    LevelOutOfRange { level: usize, n_levels: usize },

    #[error("inadmissible state: {0}")]
    Inadmissible(String),

    #[error("inadmissible state in cell {cell} on level {level}: {reason}")]
    InadmissibleCell {
        level: usize,
        cell: usize,
        reason: String,
    },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("option --{flag}: {msg}")]
    Flag { flag: String, msg: String },

    #[error("invalid mg key {key:?} at position {pos}: {msg}")]
    MgKey {
        key: String,
        pos: usize,
        msg: String,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a cell location to a pointwise admissibility error.
    pub fn at_cell(self, level: usize, cell: usize) -> Self {
        match self {
            Error::Inadmissible(reason) => Error::InadmissibleCell {
                level,
                cell,
                reason,
            },
            other => other,
        }
    }
}
