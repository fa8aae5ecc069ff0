//! Analytical quantities and evaluation metrics, all in exact arithmetic.
//!
//! Conversion to floating point happens only when results are written out
//! (see [`to_f64`]).

use num_traits::{Signed, ToPrimitive};

use crate::error::ModelError;
use crate::task_model::{gcd_pair, Tick};

/// Exact reduced fraction.
pub type Ratio = num_rational::Ratio<i64>;

pub fn to_f64(r: Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Whether victim arrivals can ever be observed: `T_o > T_v`.
///
/// Equal periods are outside the task model and are rejected.
pub fn observable(observer_period: Tick, victim_period: Tick) -> Result<bool, ModelError> {
    if observer_period == victim_period {
        return Err(ModelError::EqualPeriods(observer_period));
    }
    Ok(observer_period > victim_period)
}

/// Inverse of the number of observer arrivals per `LCM(T_o, T_i)`,
/// i.e. `T_o / LCM(T_o, T_i) = GCD(T_o, T_i) / T_i`.
pub fn sigma(observer_period: Tick, other_period: Tick) -> Ratio {
    Ratio::new(gcd_pair(observer_period, other_period), other_period)
}

/// Upper bound on the fraction of observer arrivals a single task can delay:
/// `ceil(u_i / sigma) * sigma`.
pub fn psi(observer_period: Tick, other_period: Tick, other_wcet: Tick) -> Ratio {
    let g = gcd_pair(observer_period, other_period);
    let slots = (other_wcet + g - 1) / g;
    Ratio::new(slots * g, other_period)
}

/// Fraction of ladder columns the observer's valid execution can reach:
/// `min(C_o, T_o - T_v) / GCD(T_o, T_v)`. A value `>= 1` means full coverage.
pub fn coverage_dyps(observer_wcet: Tick, observer_period: Tick, victim_period: Tick) -> Result<Ratio, ModelError> {
    if !observable(observer_period, victim_period)? {
        return Err(ModelError::Unobservable {
            observer_period,
            victim_period,
        });
    }
    let reach = observer_wcet.min(observer_period - victim_period);
    Ok(Ratio::new(reach, gcd_pair(observer_period, victim_period)))
}

/// Fixed-priority coverage ratio `C_o / GCD(T_o, T_v)` (no validity clipping).
pub fn coverage_scheduleak(observer_wcet: Tick, observer_period: Tick, victim_period: Tick) -> Ratio {
    Ratio::new(observer_wcet, gcd_pair(observer_period, victim_period))
}

/// One-sided observer phase error `((phi_hat - phi) mod T_o) / T_o`, in `[0, 1)`.
pub fn error_ratio(phi_hat: Tick, phi: Tick, observer_period: Tick) -> Ratio {
    Ratio::new((phi_hat - phi).rem_euclid(observer_period), observer_period)
}

/// Victim inference precision `|eps / (T_v/2) - 1|` with `eps = |phi_hat - phi|`.
///
/// `eps` is the plain absolute difference; an estimate just across the wrap
/// (e.g. `phi_hat = T_v - 1`, `phi = 0`) therefore scores close to 1.
pub fn inference_precision(phi_hat: Tick, phi: Tick, victim_period: Tick) -> Ratio {
    let eps = (phi_hat - phi).abs();
    Ratio::new(2 * eps - victim_period, victim_period).abs()
}
