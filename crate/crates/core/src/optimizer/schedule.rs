//! Stepsize and weight schedules.
//!
//! The two-phase schedule serves any recursion of the form
//! `r^{k+1} <= (1 - a eta^k) r^k - eta^k s^k + (eta^k)^2 c` with `eta^k <= 1/d`:
//!
//! - short horizons (`T <= d/a`): `eta^k = 1/d`, `w^k = (1 - a/d)^{-(k+1)}`;
//! - otherwise `eta^k = 1/d`, `w^k = 0` for `k < t0 = ceil(T/2)`, then
//!   `eta^k = 2 / (a (kappa + k - t0))`, `w^k = (kappa + k - t0)^2` with
//!   `kappa = 2d/a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Fixed stepsize; every iterate weighted equally.
    Constant { eta: f64 },
    TwoPhase { a: f64, d: f64, horizon: usize },
}

impl Schedule {
    pub fn constant(eta: f64) -> Result<Self> {
        let s = Schedule::Constant { eta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Constant { eta } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(Error::param(format!("stepsize {eta} must be positive")));
                }
            }
            Schedule::TwoPhase { a, d, .. } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::param(format!(
                        "schedule needs a > 0 (strong quasi-convexity), got {a}"
                    )));
                }
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::param(format!("schedule needs d > 0, got {d}")));
                }
                if a >= d {
                    return Err(Error::param(format!("schedule needs a < d (a = {a}, d = {d})")));
                }
            }
        }
        Ok(())
    }

    /// `(eta^k, w^k)`
    pub fn step(&self, k: usize) -> (f64, f64) {
        match *self {
            Schedule::Constant { eta } => (eta, 1.0),
            Schedule::TwoPhase { a, d, horizon } => {
                if horizon as f64 <= d / a {
                    (1.0 / d, (1.0 - a / d).powf(-((k + 1) as f64)))
                } else {
                    let t0 = horizon.div_ceil(2);
                    if k < t0 {
                        (1.0 / d, 0.0)
                    } else {
                        let shifted = 2.0 * d / a + (k - t0) as f64;
                        (2.0 / (a * shifted), shifted * shifted)
                    }
                }
            }
        }
    }

    pub fn stepsize(&self, k: usize) -> f64 {
        self.step(k).0
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.step(k).1
    }

    /// `kappa = 2d/a` for the two-phase schedule.
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            Schedule::TwoPhase { a, d, .. } => Some(2.0 * d / a),
            Schedule::Constant { .. } => None,
        }
    }

    /// Start of the decreasing phase, when there is one.
    pub fn switch_point(&self) -> Option<usize> {
        match *self {
            Schedule::TwoPhase { a, d, horizon } if horizon as f64 > d / a => Some(horizon.div_ceil(2)),
            _ => None,
        }
    }
}

pub fn make_schedule(a: f64, d: f64, horizon: usize) -> Result<Schedule> {
    let s = Schedule::TwoPhase { a, d, horizon };
    s.validate()?;
    Ok(s)
}
