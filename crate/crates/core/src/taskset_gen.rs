//! Synthetic task-set generation.
//!
//! Utilizations come from UUniFast, periods are drawn uniformly (without
//! repetition) from a range, and the observer/victim roles are assigned by
//! rank in descending-period order: the observer is the `(⌊n/3⌋+1)`-th task
//! and the victim the `(n-⌊n/3⌋)`-th. Constraints are met by rejection.
//!
//! Every attempt draws its base parameters from its own seed-derived stream
//! with a fixed number of draws, so configurations that differ only in the
//! constraint see the same candidates before filtering. The harmonic
//! overwrite uses a separate stream.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenError;
use crate::metrics::{coverage_dyps, Ratio};
use crate::seed::derive_seed;
use crate::task_model::{validate_taskset, TaskKind, TaskSet, TaskSpec, Tick};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000;

/// Acceptance filter applied to generated candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Constraint {
    /// `C_DyPS >= 1`.
    CoverageGeOne,
    /// `C_DyPS >= 1` and no task period divides `T_o`.
    NoHarmonic,
    /// `lo <= C_DyPS < hi`.
    CoverageInBin { lo: f64, hi: f64 },
    /// `C_DyPS >= 1` and at least one non-observer task with `T_o mod T_i = 0`.
    ForceHarmonic,
    /// `C_o > T_o - T_v`, so part of some observer jobs is always outside the
    /// valid observation region.
    ForceInvalidIntervals,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::CoverageGeOne => write!(f, "coverage_ge_one"),
            Constraint::NoHarmonic => write!(f, "no_harmonic"),
            Constraint::CoverageInBin { lo, hi } => write!(f, "coverage_in_bin({lo},{hi})"),
            Constraint::ForceHarmonic => write!(f, "force_harmonic"),
            Constraint::ForceInvalidIntervals => write!(f, "force_invalid_intervals"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_tasks: usize,
    /// Target total utilization is drawn uniformly from `[low, high)`.
    pub util_range: (f64, f64),
    /// Inclusive period range.
    pub period_range: (Tick, Tick),
    pub sporadic_fraction: f64,
    pub constraint: Constraint,
    pub rng_seed: u64,
    pub max_attempts: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_tasks: 5,
            util_range: (0.001, 1.0),
            period_range: (100, 1000),
            sporadic_fraction: 0.5,
            constraint: Constraint::CoverageGeOne,
            rng_seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::BadConfig(m));
        // With n = 3 the rank rule gives observer and victim the same slot.
        if self.n_tasks < 4 {
            return bad(format!("n_tasks must be >= 4, got {}", self.n_tasks));
        }
        let (lo, hi) = self.util_range;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return bad(format!("util_range [{lo}, {hi}) must satisfy 0 < low < high <= 1"));
        }
        let (pmin, pmax) = self.period_range;
        if pmin < 1 || pmax < pmin || ((pmax - pmin + 1) as usize) < self.n_tasks {
            return bad(format!(
                "period range [{pmin}, {pmax}] cannot hold {} distinct periods",
                self.n_tasks
            ));
        }
        if !(0.0..=1.0).contains(&self.sporadic_fraction) {
            return bad(format!("sporadic_fraction {} not in [0, 1]", self.sporadic_fraction));
        }
        if let Constraint::CoverageInBin { lo, hi } = self.constraint {
            if !(lo >= 0.0 && lo < hi) {
                return bad(format!("coverage bin [{lo}, {hi}) is empty"));
            }
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        Ok(())
    }
}

/// UUniFast: `n` positive utilizations summing to `total`.
pub fn uunifast<R: Rng + ?Sized>(n: usize, total: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut sum = total;
    for i in 1..n {
        let next = sum * rng.random::<f64>().powf(1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    out.push(sum);
    out
}

/// Index of the observer (0-based) in descending-period order.
pub fn observer_rank(n: usize) -> usize {
    n / 3
}

/// Index of the victim (0-based) in descending-period order.
pub fn victim_rank(n: usize) -> usize {
    n - n / 3 - 1
}

struct Draw {
    utils: Vec<f64>,
    periods: Vec<Tick>,
    phase_fracs: Vec<f64>,
    sporadic_keys: Vec<u64>,
}

fn draw_base(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Draw {
    let n = cfg.n_tasks;
    let (lo, hi) = cfg.util_range;
    let total = lo + (hi - lo) * rng.random::<f64>();
    let utils = uunifast(n, total, rng);
    let (pmin, pmax) = cfg.period_range;
    let mut periods = Vec::with_capacity(n);
    while periods.len() < n {
        let p = rng.random_range(pmin..=pmax);
        if !periods.contains(&p) {
            periods.push(p);
        }
    }
    let phase_fracs = (0..n).map(|_| rng.random::<f64>()).collect();
    let sporadic_keys = (0..n).map(|_| rng.random::<u64>()).collect();
    Draw {
        utils,
        periods,
        phase_fracs,
        sporadic_keys,
    }
}

fn divisors_in(t: Tick, lo: Tick) -> Vec<Tick> {
    (lo.max(1)..t).filter(|d| t % d == 0).collect()
}

/// Turns a draw into a task set; `None` if it is not schedulable after rounding.
fn assemble(cfg: &GenConfig, d: &Draw, harmonic_rng: Option<&mut ChaCha8Rng>) -> Option<TaskSet> {
    let n = cfg.n_tasks;
    // Task slots sorted by descending period.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d.periods[b].cmp(&d.periods[a]));
    let mut periods: Vec<Tick> = order.iter().map(|&i| d.periods[i]).collect();
    let o = observer_rank(n);

    if let Some(rng) = harmonic_rng {
        let divs: Vec<Tick> = divisors_in(periods[o], cfg.period_range.0)
            .into_iter()
            .filter(|p| !periods.contains(p))
            .collect();
        if divs.is_empty() {
            return None;
        }
        let slot = rng.random_range(o + 1..n);
        periods[slot] = divs[rng.random_range(0..divs.len())];
        // Re-sorting keeps the observer's rank: the new period is still < T_o.
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| periods[b].cmp(&periods[a]));
        order = idx.iter().map(|&i| order[i]).collect();
        periods = idx.iter().map(|&i| periods[i]).collect();
    }

    let v = victim_rank(n);
    let mut tasks: Vec<TaskSpec> = order
        .iter()
        .zip(&periods)
        .enumerate()
        .map(|(id, (&src, &t))| {
            let wcet = ((d.utils[src] * t as f64).round() as Tick).clamp(1, t);
            let phase = ((d.phase_fracs[src] * t as f64) as Tick).min(t - 1);
            TaskSpec::periodic(id, wcet, t, phase)
        })
        .collect();

    let n_sporadic = (n as f64 * cfg.sporadic_fraction).floor() as usize;
    let mut others: Vec<usize> = (0..n).filter(|&i| i != o && i != v).collect();
    others.sort_by_key(|&i| d.sporadic_keys[order[i]]);
    for &i in others.iter().take(n_sporadic) {
        tasks[i].kind = TaskKind::Sporadic;
    }

    let ts = TaskSet::new(tasks, o, v);
    validate_taskset(&ts).ok()?;
    Some(ts)
}

fn coverage(ts: &TaskSet) -> Ratio {
    let (o, v) = (ts.observer(), ts.victim());
    coverage_dyps(o.wcet, o.period, v.period).expect("observer period exceeds victim period")
}

pub fn has_harmonic(ts: &TaskSet) -> bool {
    let to = ts.observer().period;
    ts.tasks
        .iter()
        .any(|t| t.id != ts.observer_id && to % t.period == 0)
}

pub fn satisfies(ts: &TaskSet, c: Constraint) -> bool {
    let one = Ratio::from_integer(1);
    match c {
        Constraint::CoverageGeOne => coverage(ts) >= one,
        Constraint::NoHarmonic => coverage(ts) >= one && !has_harmonic(ts),
        Constraint::ForceHarmonic => coverage(ts) >= one && has_harmonic(ts),
        Constraint::CoverageInBin { lo, hi } => {
            let c = crate::metrics::to_f64(coverage(ts));
            c >= lo && c < hi
        }
        Constraint::ForceInvalidIntervals => {
            ts.observer().wcet > ts.observer().period - ts.victim().period
        }
    }
}

/// Candidate for attempt `attempt`, before constraint filtering.
pub fn candidate(cfg: &GenConfig, attempt: u64) -> Option<TaskSet> {
    let seed = derive_seed(cfg.rng_seed, &[attempt]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draw_base(cfg, &mut rng);
    if cfg.constraint == Constraint::ForceHarmonic {
        let mut hrng = ChaCha8Rng::seed_from_u64(seed);
        hrng.set_stream(1);
        assemble(cfg, &d, Some(&mut hrng))
    } else {
        assemble(cfg, &d, None)
    }
}

/// Generates one task set satisfying `cfg.constraint`.
pub fn generate(cfg: &GenConfig) -> Result<TaskSet, GenError> {
    cfg.validate()?;
    for attempt in 0..cfg.max_attempts {
        if let Some(mut ts) = candidate(cfg, attempt) {
            if satisfies(&ts, cfg.constraint) {
                ts.seed_note = Some(format!(
                    "seed={} attempt={attempt} constraint={}",
                    cfg.rng_seed, cfg.constraint
                ));
                return Ok(ts);
            }
        }
    }
    Err(GenError::Unsatisfiable {
        constraint: cfg.constraint.to_string(),
        attempts: cfg.max_attempts,
    })
}
