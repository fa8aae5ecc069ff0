pub mod attack;
pub mod edf_sim;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod metrics;
pub mod seed;
pub mod task_model;
pub mod taskset_gen;

pub use attack::{run_dyps, run_scheduleak_baseline, AttackResult, AttackSummary};
pub use edf_sim::{simulate, ScheduleTrace, Slice, TieBreak, VariationConfig};
pub use error::{AttackError, ExperimentError, FormatError, GenError, ModelError, SimError};
pub use task_model::{Interval, JobRecord, TaskId, TaskKind, TaskSet, TaskSpec, Tick};
pub use taskset_gen::{generate, Constraint, GenConfig};
