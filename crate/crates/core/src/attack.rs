//! Phase inference from the observer task's own schedule.
//!
//! The pipeline has four steps:
//!
//! 1. reconstruct the observer's phase from its job start times
//!    ([`reconstruct_phi_o`]);
//! 2. keep only the part of each observer job's execution that lies in the
//!    valid observation region `[ã_o, ã_o + T_o - T_v)`
//!    ([`reconstruct_valid_intervals`]);
//! 3. fold the kept intervals onto a ladder of width `T_v` and eliminate every
//!    column they touch ([`compute_candidates`]);
//! 4. pick the start of the longest contiguous run of surviving columns as
//!    the victim phase ([`infer_phi_v`]).
//!
//! Inside the valid region the victim always has a strictly earlier deadline
//! than the observer job, so a tick where the observer runs cannot be a victim
//! arrival. Outside it the observer may legitimately run over a victim
//! arrival, which is what breaks the fixed-priority attack under EDF
//! ([`run_scheduleak_baseline`]).

use serde::{Deserialize, Serialize};

use crate::edf_sim::ScheduleTrace;
use crate::error::AttackError;
use crate::task_model::{lcm_pair, Interval, TaskSet, Tick};

/// What the observer task can measure about itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObserverView {
    /// `(job_index, start)` for every observer job in the window, in job order.
    pub start_times: Vec<(u64, Tick)>,
    /// Observer execution slices tagged with their job index.
    pub own_slices: Vec<(u64, Interval)>,
    pub observer_period: Tick,
    pub victim_period: Tick,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipStats {
    pub kept: usize,
    pub truncated: usize,
    pub dropped: usize,
}

/// Ladder columns `0..T_v` that survived elimination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    mask: Vec<bool>,
}

impl Candidates {
    pub fn all(victim_period: Tick) -> Self {
        Candidates {
            mask: vec![true; victim_period as usize],
        }
    }

    pub fn from_columns(victim_period: Tick, cols: &[Tick]) -> Self {
        let mut mask = vec![false; victim_period as usize];
        for &c in cols {
            mask[c.rem_euclid(victim_period) as usize] = true;
        }
        Candidates { mask }
    }

    pub fn width(&self) -> Tick {
        self.mask.len() as Tick
    }

    pub fn contains(&self, col: Tick) -> bool {
        self.mask[col.rem_euclid(self.width()) as usize]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&c| c)
    }

    pub fn columns(&self) -> Vec<Tick> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| i as Tick)
            .collect()
    }

    fn eliminate(&mut self, iv: &Interval) {
        let w = self.width();
        if iv.len() >= w {
            self.mask.iter_mut().for_each(|c| *c = false);
            return;
        }
        for t in iv.begin..iv.end {
            self.mask[t.rem_euclid(w) as usize] = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackResult {
    pub phi_o_hat: Tick,
    pub e_recon: Vec<Interval>,
    pub candidates: Candidates,
    pub phi_v_hat: Option<Tick>,
    pub longest_run_len: Tick,
    pub clip: ClipStats,
}

/// Flat export record of an [`AttackResult`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub phi_o_hat: Tick,
    pub phi_v_hat: Option<Tick>,
    pub candidate_count: usize,
    pub longest_run_len: Tick,
    pub intervals_kept: usize,
    pub intervals_truncated: usize,
    pub intervals_dropped: usize,
}

impl AttackResult {
    pub fn summary(&self) -> AttackSummary {
        AttackSummary {
            phi_o_hat: self.phi_o_hat,
            phi_v_hat: self.phi_v_hat,
            candidate_count: self.candidates.len(),
            longest_run_len: self.longest_run_len,
            intervals_kept: self.clip.kept,
            intervals_truncated: self.clip.truncated,
            intervals_dropped: self.clip.dropped,
        }
    }
}

/// Attack window of `lcm_multiples · LCM(T_o, T_v)` ticks starting at the
/// first observer arrival at or after `warmup`.
pub fn attack_window(ts: &TaskSet, lcm_multiples: u32, warmup: Tick) -> Result<Interval, AttackError> {
    let o = ts.observer();
    let lcm = lcm_pair(o.period, ts.victim().period)?;
    let anchor = if warmup <= o.phase {
        o.phase
    } else {
        o.phase + (warmup - o.phase + o.period - 1) / o.period * o.period
    };
    let len = lcm
        .checked_mul(lcm_multiples as Tick)
        .ok_or(crate::error::ModelError::TickOverflow { a: lcm, b: lcm_multiples as Tick })?;
    Interval::new(anchor, anchor + len).ok_or(AttackError::NoObserverJob(Interval {
        begin: anchor,
        end: anchor,
    }))
}

/// Collects the observer's start times and slices for jobs arriving in `window`.
pub fn extract_observer_view(
    trace: &ScheduleTrace,
    ts: &TaskSet,
    window: Interval,
) -> Result<ObserverView, AttackError> {
    if window.end > trace.horizon {
        return Err(AttackError::WindowOutsideTrace {
            window,
            horizon: trace.horizon,
        });
    }
    let obs = ts.observer_id;
    let jobs = &trace.jobs[obs];
    let in_window = |k: u64| {
        jobs.get(k as usize)
            .is_some_and(|j| window.contains(j.arrival))
    };
    let start_times: Vec<(u64, Tick)> = jobs
        .iter()
        .filter(|j| window.contains(j.arrival))
        .filter_map(|j| j.start.map(|s| (j.job_index, s)))
        .collect();
    if start_times.is_empty() {
        return Err(AttackError::NoObserverJob(window));
    }
    let own_slices = trace
        .slices_of(obs)
        .filter(|s| in_window(s.job_index))
        .map(|s| (s.job_index, s.interval))
        .collect();
    Ok(ObserverView {
        start_times,
        own_slices,
        observer_period: ts.observer().period,
        victim_period: ts.victim().period,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closer {
    Earlier,
    Later,
}

/// Which of two start times `p` observer periods apart lies closer to its
/// own arrival. Ties go to the later one.
pub fn closer_start(s_k: Tick, s_kp: Tick, p: u64, observer_period: Tick) -> Closer {
    if s_k < s_kp - p as Tick * observer_period {
        Closer::Earlier
    } else {
        Closer::Later
    }
}

/// Observer phase estimate from start times of (not necessarily contiguous)
/// jobs: every start is shifted back to the first job's period and the
/// minimum is reduced modulo `T_o`. Returns `None` without start times.
pub fn phase_from_starts(start_times: &[(u64, Tick)], observer_period: Tick) -> Option<Tick> {
    let &(k0, _) = start_times.first()?;
    start_times
        .iter()
        .map(|&(k, s)| s - (k - k0) as Tick * observer_period)
        .min()
        .map(|m| m.rem_euclid(observer_period))
}

pub fn reconstruct_phi_o(view: &ObserverView) -> Tick {
    phase_from_starts(&view.start_times, view.observer_period)
        .expect("observer view holds at least one start time")
}

/// Projected arrival of the job that started at `start`, given the estimated phase.
pub fn project_arrival(start: Tick, phi_o_hat: Tick, observer_period: Tick) -> Tick {
    start - (start - phi_o_hat).rem_euclid(observer_period)
}

/// Clips each observer slice to its job's valid region
/// `[ã_o, ã_o + T_o - T_v)`, where `ã_o` is projected from that job's own
/// first start time.
pub fn reconstruct_valid_intervals(view: &ObserverView, phi_o_hat: Tick) -> (Vec<Interval>, ClipStats) {
    let reach = view.observer_period - view.victim_period;
    let mut stats = ClipStats::default();
    let mut out = Vec::new();
    let mut starts = view.start_times.iter().peekable();
    let mut region: Option<(u64, Interval)> = None;
    for &(k, iv) in &view.own_slices {
        if region.map(|(rk, _)| rk) != Some(k) {
            while starts.peek().is_some_and(|&&(sk, _)| sk < k) {
                starts.next();
            }
            let s = match starts.peek() {
                Some(&&(sk, s)) if sk == k => s,
                _ => iv.begin,
            };
            let a = project_arrival(s, phi_o_hat, view.observer_period);
            region = Some((k, Interval { begin: a, end: a + reach }));
        }
        let (_, valid) = region.expect("set above");
        match iv.intersect(&valid) {
            Some(c) if c == iv => {
                stats.kept += 1;
                out.push(c);
            }
            Some(c) => {
                stats.truncated += 1;
                out.push(c);
            }
            None => stats.dropped += 1,
        }
    }
    (out, stats)
}

/// Ladder columns never touched by any interval.
pub fn compute_candidates(e_recon: &[Interval], victim_period: Tick) -> Candidates {
    let mut c = Candidates::all(victim_period);
    for iv in e_recon {
        c.eliminate(iv);
    }
    c
}

/// Start column and length of the longest circular run of candidates.
///
/// Ties go to the smallest start column; a full ladder yields `(0, T_v)`;
/// an empty candidate set yields `None`.
pub fn longest_run(candidates: &Candidates) -> Option<(Tick, Tick)> {
    let w = candidates.width();
    if candidates.is_empty() {
        return None;
    }
    if candidates.len() as Tick == w {
        return Some((0, w));
    }
    // Start scanning just after an eliminated column so no run is split.
    let gap = (0..w).find(|&c| !candidates.contains(c)).expect("not full");
    let mut best: Option<(Tick, Tick)> = None;
    let mut run_start = 0;
    let mut run_len = 0;
    for off in 1..=w {
        let col = (gap + off) % w;
        if candidates.contains(col) {
            if run_len == 0 {
                run_start = col;
            }
            run_len += 1;
        } else if run_len > 0 {
            best = pick(best, (run_start, run_len));
            run_len = 0;
        }
    }
    if run_len > 0 {
        best = pick(best, (run_start, run_len));
    }
    best
}

fn pick(best: Option<(Tick, Tick)>, run: (Tick, Tick)) -> Option<(Tick, Tick)> {
    match best {
        Some(b) if b.1 > run.1 || (b.1 == run.1 && b.0 < run.0) => Some(b),
        _ => Some(run),
    }
}

pub fn infer_phi_v(candidates: &Candidates) -> Option<Tick> {
    longest_run(candidates).map(|(start, _)| start)
}

/// First inferred victim arrival at or after `t`.
pub fn predict_next_arrival(t: Tick, phi_v_hat: Tick, victim_period: Tick) -> Tick {
    t + (phi_v_hat - t).rem_euclid(victim_period)
}

fn check_observable(ts: &TaskSet) -> Result<(), AttackError> {
    let (o, v) = (ts.observer().period, ts.victim().period);
    if o <= v {
        return Err(AttackError::Unobservable {
            observer_period: o,
            victim_period: v,
        });
    }
    Ok(())
}

fn finish(phi_o_hat: Tick, e_recon: Vec<Interval>, clip: ClipStats, victim_period: Tick) -> AttackResult {
    let candidates = compute_candidates(&e_recon, victim_period);
    let run = longest_run(&candidates);
    AttackResult {
        phi_o_hat,
        e_recon,
        candidates,
        phi_v_hat: run.map(|r| r.0),
        longest_run_len: run.map_or(0, |r| r.1),
        clip,
    }
}

/// Full four-step inference over `window`.
///
/// With `override_phi_o` the phase reconstruction step is skipped and the
/// given value is used instead.
pub fn run_dyps(
    trace: &ScheduleTrace,
    ts: &TaskSet,
    window: Interval,
    override_phi_o: Option<Tick>,
) -> Result<AttackResult, AttackError> {
    check_observable(ts)?;
    let view = extract_observer_view(trace, ts, window)?;
    let phi_o_hat = override_phi_o.unwrap_or_else(|| reconstruct_phi_o(&view));
    let (e_recon, clip) = reconstruct_valid_intervals(&view, phi_o_hat);
    Ok(finish(phi_o_hat, e_recon, clip, view.victim_period))
}

/// The fixed-priority attack applied unchanged under EDF: every observer
/// slice in the window is used, without validity clipping.
pub fn run_scheduleak_baseline(
    trace: &ScheduleTrace,
    ts: &TaskSet,
    window: Interval,
) -> Result<AttackResult, AttackError> {
    check_observable(ts)?;
    let view = extract_observer_view(trace, ts, window)?;
    let phi_o_hat = reconstruct_phi_o(&view);
    let e_recon: Vec<Interval> = view.own_slices.iter().map(|&(_, iv)| iv).collect();
    let clip = ClipStats {
        kept: e_recon.len(),
        ..Default::default()
    };
    Ok(finish(phi_o_hat, e_recon, clip, view.victim_period))
}
