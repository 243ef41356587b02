//! ADAM, BFGS and the two-phase training loop.

mod adam;
mod bfgs;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use bfgs::{BfgsConfig, BfgsState, InverseHessian, StepReport, StepStatus};
pub use train::{
    train, write_log_rows, Best, LogRow, NoObserver, Observer, OptimizerState, Phase, PhasePlan,
    PhaseSpan, PinnProblem, Problem, Schedule, Split, Stage, TrainSettings, TrainingRecord, LOG_HEADER,
};
