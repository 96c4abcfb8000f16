//! Tabulated convergence bounds over a grid of node counts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ProblemSpec;
use crate::error::{Error, Result};
use crate::optimizer::{theorem_bound, BoundInputs, EffectiveVariance};
use crate::sampling::SamplingScheme;

pub const CSV_HEADER: &str =
    "n,delta,delta_n,bound_full,delta_s_full,bound_pp_full,b,a_s_half,delta_s_half,bound_pp_half";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    #[serde(rename = "L")]
    pub l: f64,
    pub mu: f64,
    pub sigma2: f64,
    #[serde(rename = "D")]
    pub heterogeneity: f64,
    pub r0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBoundsConfig {
    pub nodes: Vec<usize>,
    pub deltas: Vec<f64>,
    pub horizon: usize,
    /// Either explicit constants or a problem to derive them from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<BoundConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: usize,
    pub delta: f64,
    pub delta_n: f64,
    pub bound_full: f64,
    /// `delta_S` of the full sampling, which must equal `delta_n`.
    pub delta_s_full: f64,
    pub bound_pp_full: f64,
    /// Minibatch size of the `b`-nice column, `max(1, n/2)`.
    pub b: usize,
    pub a_s_half: f64,
    pub delta_s_half: f64,
    pub bound_pp_half: f64,
}

impl CompareBoundsConfig {
    pub fn resolve_constants(&self, base: &Path) -> Result<BoundConstants> {
        match (&self.constants, &self.problem) {
            (Some(c), None) => Ok(*c),
            (None, Some(spec)) => {
                let p = spec.build(base)?;
                let c = p.constants();
                Ok(BoundConstants {
                    l: c.l,
                    mu: c.mu,
                    sigma2: p.noise_sigma2(),
                    heterogeneity: c.heterogeneity,
                    r0: p.initial_distance_sq(),
                })
            }
            (Some(_), Some(_)) => Err(Error::param("give either constants or problem, not both")),
            (None, None) => Err(Error::param("missing constants: give constants or problem")),
        }
    }
}

pub fn compare_bounds(cfg: &CompareBoundsConfig, base: &Path) -> Result<Vec<BoundRow>> {
    let mut errors = Vec::new();
    if cfg.nodes.is_empty() || cfg.nodes.contains(&0) {
        errors.push("nodes must be a non-empty list of positive counts".to_string());
    }
    if cfg.deltas.is_empty() || cfg.deltas.iter().any(|d| !(*d >= 1.0)) {
        errors.push("deltas must be a non-empty list of values >= 1".to_string());
    }
    if cfg.horizon == 0 {
        errors.push("horizon must be positive".to_string());
    }
    let constants = cfg.resolve_constants(base).map_err(|e| errors.push(e.to_string())).ok();
    if let Some(c) = constants {
        if !(c.mu > 0.0 && c.l >= c.mu) {
            errors.push(format!("need 0 < mu <= L, got mu={} L={}", c.mu, c.l));
        }
        if c.sigma2 < 0.0 || c.heterogeneity < 0.0 || c.r0 < 0.0 {
            errors.push("sigma2, D and r0 must be non-negative".to_string());
        }
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let c = constants.expect("validated");

    let mut rows = Vec::new();
    for &n in &cfg.nodes {
        let inputs = BoundInputs {
            n,
            l: c.l,
            mu: c.mu,
            sigma2: c.sigma2,
            heterogeneity: c.heterogeneity,
            r0: c.r0,
            horizon: cfg.horizon,
        };
        let full_scheme = SamplingScheme::full(n)?;
        let b = (n / 2).max(1);
        let half = SamplingScheme::b_nice(n, b)?;
        let v_half = half.default_eso_vector()?;
        let v_full = full_scheme.default_eso_vector()?;
        for &delta in &cfg.deltas {
            let full = EffectiveVariance::full(delta, n);
            let (a_full, ds_full) = full_scheme.pp_variance_parameters(&v_full, delta)?;
            let pp_full = EffectiveVariance::partial(delta, a_full, ds_full);
            let (a_half, ds_half) = half.pp_variance_parameters(&v_half, delta)?;
            let pp_half = EffectiveVariance::partial(delta, a_half, ds_half);
            rows.push(BoundRow {
                n,
                delta,
                delta_n: full.delta_eff,
                bound_full: theorem_bound(&full, &inputs)?,
                delta_s_full: ds_full,
                bound_pp_full: theorem_bound(&pp_full, &inputs)?,
                b,
                a_s_half: a_half,
                delta_s_half: ds_half,
                bound_pp_half: theorem_bound(&pp_half, &inputs)?,
            });
        }
    }
    Ok(rows)
}

pub fn bounds_csv(rows: &[BoundRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{:e}\n",
            r.n, r.delta, r.delta_n, r.bound_full, r.delta_s_full, r.bound_pp_full, r.b, r.a_s_half, r.delta_s_half, r.bound_pp_half
        ));
    }
    out
}
