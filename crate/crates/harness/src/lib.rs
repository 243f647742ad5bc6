//! Dataset generation, two-phase training, rollout evaluation and planning
//! runs, shared by the `cdyn` command line and the acceptance suite.

mod binio;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod oracle;
pub mod train;

pub use checkpoint::{Checkpoint, OptimizerState, Progress, RngState};
pub use config::{EvalConfig, HarnessConfig, TrainConfig};
pub use error::{HarnessError, Result};
pub use eval::{evaluate_rollouts, write_reports, EvalMode, EvalReport, StepStats};
pub use oracle::{one_object_task, OracleEnv, OracleWorld, PushTask};
pub use train::{
    load_model, sample_minibatch, train_autoencoder, train_dynamics, AeTrainer, GnnTrainer, LatentCache,
};
