//! Benchmark fixtures shared by the bench targets.

use edfscope::attack::attack_window;
use edfscope::{generate, Constraint, GenConfig, Interval, TaskSet, Tick};

/// A generated set with `n` tasks around 60% utilization, plus the
/// `mult`·LCM attack window and the horizon that covers it.
pub fn fixture(n: usize, mult: u32, seed: u64) -> (TaskSet, Interval, Tick) {
    let ts = generate(&GenConfig {
        n_tasks: n,
        util_range: (0.501, 0.7),
        constraint: Constraint::CoverageGeOne,
        rng_seed: seed,
        ..GenConfig::default()
    })
    .expect("fixture generation");
    let to = ts.observer().period;
    let w = attack_window(&ts, mult, 5 * to).expect("window");
    (ts, w, w.end + to)
}
