//! Numerical evaluation of the convergence guarantees.
//!
//! Full participation:
//! `64 delta_n L r0 exp(-mu T / (4 delta_n L)) + 36 ((delta_n - 1) D + delta sigma2 / n) / (mu T)`
//! with `delta_n = 1 + (delta - 1)/n`.
//!
//! Partial participation replaces `delta_n` by `delta_S` and the noise term
//! by `(1 + a_S) delta sigma2 / n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `delta_n = 1 + (delta - 1) / n`
pub fn delta_n(delta: f64, n: usize) -> f64 {
    1.0 + (delta - 1.0) / n as f64
}

/// Compressor variance after aggregation over the participating nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveVariance {
    /// Second-moment parameter of the compressor itself.
    pub delta: f64,
    /// `delta_n` or `delta_S`.
    pub delta_eff: f64,
    /// `a_S`; zero under full participation.
    pub a_s: f64,
}

impl EffectiveVariance {
    pub fn full(delta: f64, n: usize) -> Self {
        Self {
            delta,
            delta_eff: delta_n(delta, n),
            a_s: 0.0,
        }
    }

    /// From the `(a_S, delta_S)` pair produced by the sampling module.
    pub fn partial(delta: f64, a_s: f64, delta_s: f64) -> Self {
        Self {
            delta,
            delta_eff: delta_s,
            a_s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub l: f64,
    pub mu: f64,
    pub sigma2: f64,
    /// The heterogeneity constant `D`.
    pub heterogeneity: f64,
    /// `||x^0 - x*||^2`
    pub r0: f64,
    pub horizon: usize,
}

/// Constants `(a, c, d)` of the one-step recursion
/// `r^{k+1} <= (1 - a eta) r^k - eta s^k + eta^2 c`, valid for `eta <= 1/d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionConstants {
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

pub fn recursion_constants(var: &EffectiveVariance, inputs: &BoundInputs) -> Result<RecursionConstants> {
    check(var, inputs)?;
    let n = inputs.n as f64;
    Ok(RecursionConstants {
        a: inputs.mu,
        c: (var.delta_eff - 1.0) * inputs.heterogeneity
            + (1.0 + var.a_s) * var.delta * inputs.sigma2 / n,
        d: 2.0 * var.delta_eff * inputs.l,
    })
}

pub fn theorem_bound(var: &EffectiveVariance, inputs: &BoundInputs) -> Result<f64> {
    let rc = recursion_constants(var, inputs)?;
    if inputs.horizon == 0 {
        return Err(Error::param("bound needs a horizon T >= 1"));
    }
    let t = inputs.horizon as f64;
    let scale = var.delta_eff * inputs.l;
    Ok(64.0 * scale * inputs.r0 * (-inputs.mu * t / (4.0 * scale)).exp() + 36.0 * rc.c / (inputs.mu * t))
}

fn check(var: &EffectiveVariance, inputs: &BoundInputs) -> Result<()> {
    if !(inputs.mu > 0.0) {
        return Err(Error::param(format!("bound needs mu > 0 (got {})", inputs.mu)));
    }
    if !(inputs.l > 0.0) || inputs.n == 0 {
        return Err(Error::param("bound needs L > 0 and n >= 1"));
    }
    if !(var.delta >= 1.0 && var.delta_eff >= 1.0 && var.a_s >= 0.0) {
        return Err(Error::param(format!("invalid variance parameters {var:?}")));
    }
    if inputs.sigma2 < 0.0 || inputs.heterogeneity < 0.0 || inputs.r0 < 0.0 {
        return Err(Error::param("sigma2, D and r0 must be non-negative"));
    }
    Ok(())
}
