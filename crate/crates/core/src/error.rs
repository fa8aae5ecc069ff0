use thiserror::Error;

use crate::task_model::{Interval, TaskId, Tick, Violation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("period must be >= 1, got {0}")]
    NonPositivePeriod(Tick),
    #[error("lcm({a}, {b}) overflows the tick type")]
    TickOverflow { a: Tick, b: Tick },
    #[error("observer and victim periods must differ, both are {0}")]
    EqualPeriods(Tick),
    #[error("observer period {observer_period} must exceed victim period {victim_period}")]
    Unobservable {
        observer_period: Tick,
        victim_period: Tick,
    },
    #[error("invalid task set: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("horizon must be >= 1, got {0}")]
    BadHorizon(Tick),
    #[error("invalid variation config: {0}")]
    BadVariation(String),
    #[error(
        "deadline miss: task {task_id} job {job_index} (deadline {deadline}) \
         has {remaining} ticks left at t={at}"
    )]
    DeadlineMiss {
        task_id: TaskId,
        job_index: u64,
        deadline: Tick,
        remaining: Tick,
        at: Tick,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error("constraint {constraint} not satisfied after {attempts} attempts")]
    Unsatisfiable { constraint: String, attempts: u64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("victim arrivals are unobservable: T_o={observer_period} <= T_v={victim_period}")]
    Unobservable {
        observer_period: Tick,
        victim_period: Tick,
    },
    #[error("no observer job started in window {0}")]
    NoObserverJob(Interval),
    #[error("attack window {window} extends past the trace horizon {horizon}")]
    WindowOutsideTrace { window: Interval, horizon: Tick },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
