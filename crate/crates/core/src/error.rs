use thiserror::Error;

/// Errors produced by the simulator and the experiment modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    Validation(String),

    #[error("agent placement overlaps geometry: {0}")]
    Overlap(String),

    #[error("world state does not match world specification: {0}")]
    SpecMismatch(String),

    #[error("no collision-free placement found after {attempts} attempts")]
    Placement { attempts: usize },

    #[error("observation shapes differ ({left} vs {right} pixels)")]
    Shape { left: usize, right: usize },

    #[error("enumeration needs {required} evaluations, budget is {budget}")]
    Budget { required: u128, budget: u128 },

    #[error("residue execution collided with geometry")]
    CollisionDuringResidue,

    #[error("sequences are not collision-free from this start: {0}")]
    NotFreeSpace(String),

    #[error("dataset for dof {0} is empty")]
    EmptyDataset(usize),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("need at least {required} samples per group, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
