//! Static task model: task parameters, task sets, job records and intervals.
//!
//! All time quantities are integer ticks ([`Tick`]). Utilization checks are
//! done with exact rationals so that `Σ C_i/T_i ≤ 1` never suffers from
//! floating point rounding.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// A point in time or a duration, in scheduler ticks.
pub type Tick = i64;

/// Dense task index, `0..n`.
pub type TaskId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Periodic,
    Sporadic,
}

/// Static parameters of one implicit-deadline task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub wcet: Tick,
    pub period: Tick,
    pub phase: Tick,
    pub kind: TaskKind,
}

impl TaskSpec {
    pub fn periodic(id: TaskId, wcet: Tick, period: Tick, phase: Tick) -> Self {
        TaskSpec {
            id,
            wcet,
            period,
            phase,
            kind: TaskKind::Periodic,
        }
    }

    pub fn sporadic(id: TaskId, wcet: Tick, period: Tick, phase: Tick) -> Self {
        TaskSpec {
            kind: TaskKind::Sporadic,
            ..Self::periodic(id, wcet, period, phase)
        }
    }

    /// Relative deadline; always equal to the period.
    pub fn deadline(&self) -> Tick {
        self.period
    }

    pub fn utilization(&self) -> BigRational {
        BigRational::new(BigInt::from(self.wcet), BigInt::from(self.period))
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == TaskKind::Periodic
    }
}

/// A task set together with the attacker (observer) and victim roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<TaskSpec>,
    pub observer_id: TaskId,
    pub victim_id: TaskId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_note: Option<String>,
}

impl TaskSet {
    pub fn new(tasks: Vec<TaskSpec>, observer_id: TaskId, victim_id: TaskId) -> Self {
        TaskSet {
            tasks,
            observer_id,
            victim_id,
            seed_note: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: TaskId) -> &TaskSpec {
        &self.tasks[id]
    }

    /// Panics if `observer_id` is out of range; call [`validate_taskset`] first.
    pub fn observer(&self) -> &TaskSpec {
        &self.tasks[self.observer_id]
    }

    pub fn victim(&self) -> &TaskSpec {
        &self.tasks[self.victim_id]
    }

    /// Exact total utilization.
    pub fn utilization(&self) -> BigRational {
        self.tasks
            .iter()
            .fold(BigRational::from_integer(BigInt::from(0)), |acc, t| {
                acc + t.utilization()
            })
    }

    pub fn utilization_f64(&self) -> f64 {
        self.tasks
            .iter()
            .map(|t| t.wcet as f64 / t.period as f64)
            .sum()
    }

    /// Task ids ordered by descending period (display order).
    pub fn ids_by_descending_period(&self) -> Vec<TaskId> {
        let mut ids: Vec<TaskId> = (0..self.tasks.len()).collect();
        ids.sort_by(|&a, &b| self.tasks[b].period.cmp(&self.tasks[a].period));
        ids
    }

    /// LCM of the observer and victim periods, the natural attack-duration unit.
    pub fn observer_victim_lcm(&self) -> Result<Tick, ModelError> {
        lcm_pair(self.observer().period, self.victim().period)
    }
}

/// One invariant violation found by [`validate_taskset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewTasks(usize),
    NonDenseId { position: usize, id: TaskId },
    BadWcet { id: TaskId, wcet: Tick, period: Tick },
    BadPeriod { id: TaskId, period: Tick },
    BadPhase { id: TaskId, phase: Tick, period: Tick },
    DuplicatePeriod { a: TaskId, b: TaskId, period: Tick },
    Overloaded,
    UnknownRole { role: &'static str, id: TaskId },
    SameRole,
    NotObservable { observer_period: Tick, victim_period: Tick },
    NotPeriodic { role: &'static str, id: TaskId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewTasks(n) => write!(f, "task set needs at least 2 tasks, has {n}"),
            Violation::NonDenseId { position, id } => {
                write!(f, "task at position {position} has id {id}; ids must be 0..n")
            }
            Violation::BadWcet { id, wcet, period } => {
                write!(f, "task {id}: wcet {wcet} not in [1, period={period}]")
            }
            Violation::BadPeriod { id, period } => write!(f, "task {id}: period {period} < 1"),
            Violation::BadPhase { id, phase, period } => {
                write!(f, "task {id}: phase {phase} not in [0, {period})")
            }
            Violation::DuplicatePeriod { a, b, period } => {
                write!(f, "tasks {a} and {b} share period {period}; periods must be distinct")
            }
            Violation::Overloaded => write!(f, "total utilization exceeds 1"),
            Violation::UnknownRole { role, id } => write!(f, "{role} id {id} is not a task"),
            Violation::SameRole => write!(f, "observer and victim must be different tasks"),
            Violation::NotObservable {
                observer_period,
                victim_period,
            } => write!(
                f,
                "observer period {observer_period} must exceed victim period {victim_period}"
            ),
            Violation::NotPeriodic { role, id } => write!(f, "{role} task {id} must be periodic"),
        }
    }
}

/// Checks every task-set invariant and returns all violations found.
pub fn validate_taskset(ts: &TaskSet) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let n = ts.tasks.len();
    if n < 2 {
        v.push(Violation::TooFewTasks(n));
    }
    for (pos, t) in ts.tasks.iter().enumerate() {
        if t.id != pos {
            v.push(Violation::NonDenseId { position: pos, id: t.id });
        }
        if t.period < 1 {
            v.push(Violation::BadPeriod { id: t.id, period: t.period });
        }
        if t.wcet < 1 || t.wcet > t.period {
            v.push(Violation::BadWcet { id: t.id, wcet: t.wcet, period: t.period });
        }
        if t.phase < 0 || t.phase >= t.period {
            v.push(Violation::BadPhase { id: t.id, phase: t.phase, period: t.period });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if ts.tasks[i].period == ts.tasks[j].period {
                v.push(Violation::DuplicatePeriod {
                    a: ts.tasks[i].id,
                    b: ts.tasks[j].id,
                    period: ts.tasks[i].period,
                });
            }
        }
    }
    if ts.tasks.iter().all(|t| t.period >= 1) && ts.utilization() > BigRational::one() {
        v.push(Violation::Overloaded);
    }

    let obs_ok = ts.observer_id < n;
    let vic_ok = ts.victim_id < n;
    if !obs_ok {
        v.push(Violation::UnknownRole { role: "observer", id: ts.observer_id });
    }
    if !vic_ok {
        v.push(Violation::UnknownRole { role: "victim", id: ts.victim_id });
    }
    if ts.observer_id == ts.victim_id {
        v.push(Violation::SameRole);
    } else if obs_ok && vic_ok {
        let (o, vt) = (ts.observer(), ts.victim());
        if o.period <= vt.period {
            v.push(Violation::NotObservable {
                observer_period: o.period,
                victim_period: vt.period,
            });
        }
    }
    if obs_ok && !ts.observer().is_periodic() {
        v.push(Violation::NotPeriodic { role: "observer", id: ts.observer_id });
    }
    if vic_ok && !ts.victim().is_periodic() {
        v.push(Violation::NotPeriodic { role: "victim", id: ts.victim_id });
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Realized parameters of one job in a schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub task_id: TaskId,
    pub job_index: u64,
    pub arrival: Tick,
    pub abs_deadline: Tick,
    pub exec_budget: Tick,
    pub start: Option<Tick>,
    pub completion: Option<Tick>,
}

/// Half-open tick interval `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub begin: Tick,
    pub end: Tick,
}

impl Interval {
    /// Returns `None` for empty or inverted bounds.
    pub fn new(begin: Tick, end: Tick) -> Option<Self> {
        (begin < end).then_some(Interval { begin, end })
    }

    pub fn len(&self) -> Tick {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn contains(&self, t: Tick) -> bool {
        self.begin <= t && t < self.end
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.begin.max(other.begin), self.end.min(other.end))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.begin, self.end)
    }
}

pub fn gcd_pair(a: Tick, b: Tick) -> Tick {
    a.gcd(&b)
}

/// Least common multiple with overflow detection.
pub fn lcm_pair(a: Tick, b: Tick) -> Result<Tick, ModelError> {
    if a < 1 || b < 1 {
        return Err(ModelError::NonPositivePeriod(a.min(b)));
    }
    (a / gcd_pair(a, b))
        .checked_mul(b)
        .ok_or(ModelError::TickOverflow { a, b })
}

/// LCM of all task periods.
pub fn hyperperiod(ts: &TaskSet) -> Result<Tick, ModelError> {
    ts.tasks.iter().try_fold(1, |acc, t| lcm_pair(acc, t.period))
}
