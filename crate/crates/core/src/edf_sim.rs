//! Discrete-time preemptive uniprocessor EDF simulator.
//!
//! The simulator is event driven: it only stops at job arrivals, job
//! completions and the horizon, but the produced schedule is tick-exact and
//! identical to a per-tick simulation with the same tie-breaking rule.
//!
//! Tie handling: a running job is never preempted by a job with an equal
//! absolute deadline. When the processor must pick among several jobs with the
//! same smallest deadline, [`TieBreak`] decides.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{ModelError, SimError};
use crate::task_model::{validate_taskset, Interval, JobRecord, TaskId, TaskKind, TaskSet, Tick};

/// How the scheduler chooses among ready jobs sharing the smallest deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    SeededRandom,
    LowestId,
}

/// Run-time variation of execution times and sporadic inter-arrival times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationConfig {
    pub enabled: bool,
    /// Mean execution time as a fraction of the WCET.
    pub exec_mean_factor: f64,
    /// Probability mass of the execution-time normal at or below the WCET.
    pub exec_p_le_wcet: f64,
    /// Poisson mean of sporadic inter-arrival times as a multiple of `T`.
    pub sporadic_lambda_factor: f64,
    pub rng_seed: u64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        VariationConfig {
            enabled: true,
            exec_mean_factor: 0.8,
            exec_p_le_wcet: 0.9999,
            sporadic_lambda_factor: 1.2,
            rng_seed: 0,
        }
    }
}

impl VariationConfig {
    /// WCET execution and strictly periodic arrivals.
    pub fn disabled() -> Self {
        VariationConfig {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.exec_mean_factor > 0.0 && self.exec_mean_factor <= 1.0) {
            return Err(SimError::BadVariation(format!(
                "exec_mean_factor {} not in (0, 1]",
                self.exec_mean_factor
            )));
        }
        if !(self.exec_p_le_wcet > 0.5 && self.exec_p_le_wcet < 1.0) {
            return Err(SimError::BadVariation(format!(
                "exec_p_le_wcet {} not in (0.5, 1)",
                self.exec_p_le_wcet
            )));
        }
        if self.sporadic_lambda_factor.is_nan() || self.sporadic_lambda_factor <= 0.0 {
            return Err(SimError::BadVariation(format!(
                "sporadic_lambda_factor {} must be positive",
                self.sporadic_lambda_factor
            )));
        }
        Ok(())
    }

    /// Standard-normal quantile at `exec_p_le_wcet`.
    pub fn z_quantile(&self) -> f64 {
        StdNormal::new(0.0, 1.0)
            .expect("unit normal")
            .inverse_cdf(self.exec_p_le_wcet)
    }
}

/// One maximal stretch of uninterrupted execution of a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub task_id: TaskId,
    pub job_index: u64,
    #[serde(flatten)]
    pub interval: Interval,
}

/// Everything that happened in one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    /// Sorted by `begin`, non-overlapping.
    pub slices: Vec<Slice>,
    /// `jobs[task_id]` in job-index order.
    pub jobs: Vec<Vec<JobRecord>>,
    pub horizon: Tick,
    pub tie_break: TieBreak,
    pub variation: VariationConfig,
}

impl ScheduleTrace {
    pub fn slices_of(&self, task: TaskId) -> impl Iterator<Item = &Slice> + '_ {
        self.slices.iter().filter(move |s| s.task_id == task)
    }

    /// Checks the structural trace invariants against the task set.
    ///
    /// The EDF check is a direct per-tick replay, so it is quadratic-ish and
    /// meant for tests on short horizons.
    pub fn check_invariants(&self, ts: &TaskSet) -> Result<(), String> {
        let mut prev_end = 0;
        for s in &self.slices {
            if s.interval.begin < prev_end {
                return Err(format!("slice {:?} overlaps or is unsorted", s));
            }
            if s.interval.begin < 0 || s.interval.end > self.horizon || s.interval.is_empty() {
                return Err(format!("slice {:?} outside [0, {})", s, self.horizon));
            }
            prev_end = s.interval.end;
        }
        for (tid, jobs) in self.jobs.iter().enumerate() {
            let task = ts.task(tid);
            for j in jobs {
                if j.abs_deadline != j.arrival + task.period {
                    return Err(format!("job {:?}: deadline != arrival + period", j));
                }
                if j.exec_budget > task.wcet || j.exec_budget < 1 {
                    return Err(format!("job {:?}: budget outside [1, wcet]", j));
                }
                let executed: Tick = self
                    .slices
                    .iter()
                    .filter(|s| s.task_id == tid && s.job_index == j.job_index)
                    .map(|s| s.interval.len())
                    .sum();
                if j.completion.is_some() && executed != j.exec_budget {
                    return Err(format!("job {:?}: executed {executed} ticks", j));
                }
                if let Some(s) = j.start {
                    if s < j.arrival || s > j.abs_deadline - j.exec_budget {
                        return Err(format!("job {:?}: start outside feasible window", j));
                    }
                }
            }
        }
        // Per-tick EDF replay.
        let mut remaining: Vec<Vec<Tick>> = self
            .jobs
            .iter()
            .map(|js| js.iter().map(|j| j.exec_budget).collect())
            .collect();
        let mut si = 0;
        for t in 0..self.horizon {
            while si < self.slices.len() && self.slices[si].interval.end <= t {
                si += 1;
            }
            let running = self
                .slices
                .get(si)
                .filter(|s| s.interval.contains(t))
                .copied();
            let mut min_ready: Option<Tick> = None;
            for (tid, js) in self.jobs.iter().enumerate() {
                for (k, j) in js.iter().enumerate() {
                    if j.arrival <= t && remaining[tid][k] > 0 {
                        min_ready = Some(min_ready.map_or(j.abs_deadline, |m| m.min(j.abs_deadline)));
                    }
                }
            }
            match (running, min_ready) {
                (None, Some(_)) => return Err(format!("idle at t={t} with a ready job")),
                (Some(s), m) => {
                    let j = &self.jobs[s.task_id][s.job_index as usize];
                    if j.arrival > t {
                        return Err(format!("job runs before arrival at t={t}"));
                    }
                    if let Some(m) = m {
                        if m < j.abs_deadline {
                            return Err(format!("EDF violated at t={t}"));
                        }
                    }
                    remaining[s.task_id][s.job_index as usize] -= 1;
                }
                (None, None) => {}
            }
        }
        Ok(())
    }
}

/// Draws one job execution time.
pub fn sample_exec_time<R: Rng + ?Sized>(wcet: Tick, var: &VariationConfig, rng: &mut R) -> Tick {
    if !var.enabled || wcet <= 1 {
        return wcet.max(1);
    }
    sample_exec_with_z(wcet, var, var.z_quantile(), rng)
}

fn sample_exec_with_z<R: Rng + ?Sized>(wcet: Tick, var: &VariationConfig, z: f64, rng: &mut R) -> Tick {
    if !var.enabled || wcet <= 1 {
        return wcet.max(1);
    }
    let c = wcet as f64;
    let mean = var.exec_mean_factor * c;
    let sd = (1.0 - var.exec_mean_factor) * c / z;
    let draw = if sd > 0.0 {
        Normal::new(mean, sd).expect("finite sd").sample(rng)
    } else {
        mean
    };
    // f64::round is half-away-from-zero.
    (draw.round() as Tick).clamp(1, wcet)
}

/// Next arrival of a sporadic task; never earlier than `prev + period`.
pub fn next_sporadic_arrival<R: Rng + ?Sized>(
    prev: Tick,
    period: Tick,
    var: &VariationConfig,
    rng: &mut R,
) -> Tick {
    if !var.enabled {
        return prev + period;
    }
    let lambda = var.sporadic_lambda_factor * period as f64;
    let draw = Poisson::new(lambda).expect("positive lambda").sample(rng) as Tick;
    prev + draw.max(period)
}

struct Pending {
    task: TaskId,
    job: usize,
    deadline: Tick,
    remaining: Tick,
}

/// Simulates `ts` over `[0, horizon)`.
///
/// Deterministic in `(ts, horizon, var, tie_break)`. A deadline miss aborts
/// the run with [`SimError::DeadlineMiss`].
pub fn simulate(
    ts: &TaskSet,
    horizon: Tick,
    var: &VariationConfig,
    tie_break: TieBreak,
) -> Result<ScheduleTrace, SimError> {
    validate_taskset(ts).map_err(ModelError::Invalid)?;
    if horizon < 1 {
        return Err(SimError::BadHorizon(horizon));
    }
    var.validate()?;

    let n = ts.len();
    let z = var.z_quantile();
    let mut var_rng = ChaCha8Rng::seed_from_u64(var.rng_seed);
    let mut tie_rng = ChaCha8Rng::seed_from_u64(var.rng_seed);
    tie_rng.set_stream(1);

    let mut jobs: Vec<Vec<JobRecord>> = vec![Vec::new(); n];
    let mut next_arrival: Vec<Tick> = ts.tasks.iter().map(|t| t.phase).collect();
    let mut ready: Vec<Pending> = Vec::with_capacity(n);
    let mut slices: Vec<Slice> = Vec::new();
    // (task, job) that executed in the segment ending at `t`.
    let mut last_run: Option<(TaskId, usize)> = None;
    let mut t: Tick = 0;

    loop {
        for p in &ready {
            if p.deadline <= t {
                return Err(SimError::DeadlineMiss {
                    task_id: p.task,
                    job_index: p.job as u64,
                    deadline: p.deadline,
                    remaining: p.remaining,
                    at: t,
                });
            }
        }
        if t >= horizon {
            break;
        }

        for (i, task) in ts.tasks.iter().enumerate() {
            if next_arrival[i] == t {
                let budget = sample_exec_with_z(task.wcet, var, z, &mut var_rng);
                let k = jobs[i].len();
                jobs[i].push(JobRecord {
                    task_id: i,
                    job_index: k as u64,
                    arrival: t,
                    abs_deadline: t + task.period,
                    exec_budget: budget,
                    start: None,
                    completion: None,
                });
                ready.push(Pending {
                    task: i,
                    job: k,
                    deadline: t + task.period,
                    remaining: budget,
                });
                next_arrival[i] = match task.kind {
                    TaskKind::Periodic => t + task.period,
                    TaskKind::Sporadic => next_sporadic_arrival(t, task.period, var, &mut var_rng),
                };
            }
        }

        let upcoming = next_arrival.iter().copied().min().unwrap_or(Tick::MAX);
        if ready.is_empty() {
            last_run = None;
            t = upcoming.min(horizon);
            continue;
        }

        let pick = choose(&ready, last_run, tie_break, &mut tie_rng);
        let p = &mut ready[pick];
        let until = (t + p.remaining).min(upcoming).min(horizon);
        let rec = &mut jobs[p.task][p.job];
        rec.start.get_or_insert(t);
        match slices.last_mut() {
            Some(s)
                if s.task_id == p.task
                    && s.job_index == p.job as u64
                    && s.interval.end == t =>
            {
                s.interval.end = until
            }
            _ => slices.push(Slice {
                task_id: p.task,
                job_index: p.job as u64,
                interval: Interval { begin: t, end: until },
            }),
        }
        p.remaining -= until - t;
        t = until;
        if p.remaining == 0 {
            rec.completion = Some(t);
            last_run = None;
            ready.swap_remove(pick);
        } else {
            last_run = Some((p.task, p.job));
        }
    }

    Ok(ScheduleTrace {
        slices,
        jobs,
        horizon,
        tie_break,
        variation: *var,
    })
}

fn choose(
    ready: &[Pending],
    last_run: Option<(TaskId, usize)>,
    tie_break: TieBreak,
    rng: &mut ChaCha8Rng,
) -> usize {
    let best = ready.iter().map(|p| p.deadline).min().expect("non-empty");
    if let Some((task, job)) = last_run {
        if let Some(i) = ready
            .iter()
            .position(|p| p.task == task && p.job == job && p.deadline == best)
        {
            return i;
        }
    }
    let tied = || ready.iter().enumerate().filter(|(_, p)| p.deadline == best);
    match tie_break {
        TieBreak::LowestId => tied().min_by_key(|(_, p)| p.task).map(|(i, _)| i).unwrap(),
        TieBreak::SeededRandom => {
            let count = tied().count();
            if count == 1 {
                return tied().next().unwrap().0;
            }
            // Sort for an order independent of `ready`'s internal layout.
            let mut ids: Vec<(TaskId, usize)> = tied().map(|(i, p)| (p.task, i)).collect();
            ids.sort_unstable();
            ids[rng.random_range(0..count)].1
        }
    }
}
