//! Angular-error evaluation, reports and experiment protocols.

mod config;
mod experiment;
mod metrics;
mod report;

pub use config::{apply_train_config, parse_config, read_config, ConfigEntry};
pub use experiment::{run_experiment, ExperimentContext, ExperimentReport, ExperimentRow, ExperimentSpec};
pub use metrics::{angular_error, CorrectionModel, IdentityModel, OracleModel};
pub use report::{evaluate, ErrorStats, EvalReport, ObjectStats, ReportFormat, SampleError, TimedReport, EVAL_BATCH};
