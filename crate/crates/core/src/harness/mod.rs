//! Closed-loop trials, metrics, batches and sweeps.

pub mod autonomy;
pub mod batch;
pub mod io;
pub mod metrics;
pub mod scenario;
pub mod trial;

pub use autonomy::{Autonomy, Observation, Stage, TickOutput};
pub use batch::{corruption_sweep, dropout_sweep, run_batch, BatchReport, SweepRow};
pub use scenario::{PlannerConfig, RunConfig, Scenario, SuccessConfig, YawMode};
pub use trial::{run_trial, RunOptions, TickRecord, TrialOutcome, TrialResult};
