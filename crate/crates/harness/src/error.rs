use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint (bad magic)")]
    Magic { path: String },
    #[error("{path}: checkpoint format version {found} is not supported (expected {expected})")]
    Version { path: String, found: u32, expected: u32 },
    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },
    #[error("config line {line}: {detail}")]
    Config { line: usize, detail: String },
    #[error("dataset {0} contains no trajectories")]
    EmptyDataset(String),
    #[error(transparent)]
    Core(#[from] cdyn_core::CoreError),
    #[error(transparent)]
    Tensor(#[from] cdyn_autodiff::TensorError),
    #[error(transparent)]
    Scene(#[from] cdyn_scene::SceneError),
    #[error(transparent)]
    Plan(#[from] cdyn_planner::PlanError),
}

impl HarnessError {
    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        HarnessError::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
