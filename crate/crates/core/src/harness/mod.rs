//! Experiment orchestration: seeded multi-run execution, learning-rate
//! sweeps, clipping ablation, optimizer comparison, theory checks and
//! result emission.

pub mod config;
pub mod emit;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, OptimizerSpec, RunConfig, SelectionMetric, SweepSpec};
pub use emit::{emit_results, Format};
pub use run::{run_experiment, run_single, RunRecord, RunSummary, StepRecord, Stepper};
pub use sweep::{ablate_mu, compare, lr_sweep, AblationResult, CompareResult, SweepResult, SweepRow};
pub use verify::{verify_hutchinson, verify_lemma1, verify_rate, HutchinsonReport, Lemma1Report, RateReport};
