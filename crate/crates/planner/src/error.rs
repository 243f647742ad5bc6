use cdyn_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] CoreError),
    #[error("world model failure: {0}")]
    World(String),
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

pub type Result<T, E = PlanError> = std::result::Result<T, E>;
