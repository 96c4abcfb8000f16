//! Monte-Carlo certification of compressor classes.
//!
//! For each vector of a fixed panel the compressor is applied `trials`
//! times. Per-coordinate bias is turned into a z-score against its standard
//! error, and the second-moment and contraction ratios are averaged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStreams};
use crate::vector::DenseVector;

pub const MIN_TRIALS: usize = 10_000;
/// Largest bias z-score still classified as unbiased.
pub const BIAS_Z_THRESHOLD: f64 = 4.0;
const PANEL_SEED: u64 = 0x05ee_d0f9_a4e1;

pub const CSV_HEADER: &str =
    "compressor,dim,trials,nominal_delta,max_bias_z,delta_hat,delta_hat_se,contraction_hat,contraction_hat_se,unbiased,contractive";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationRow {
    pub compressor: String,
    pub dim: usize,
    pub trials: usize,
    pub nominal_delta: f64,
    pub max_bias_z: f64,
    /// Largest panel mean of `||C(x)||^2 / ||x||^2`.
    pub delta_hat: f64,
    pub delta_hat_se: f64,
    /// Largest panel mean of `||C(x) - x||^2 / ||x||^2`.
    pub contraction_hat: f64,
    pub contraction_hat_se: f64,
    pub unbiased: bool,
    /// `contraction_hat <= 1 - 1/delta` within four standard errors.
    pub contractive: bool,
}

impl CertificationRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            self.compressor,
            self.dim,
            self.trials,
            self.nominal_delta,
            self.max_bias_z,
            self.delta_hat,
            self.delta_hat_se,
            self.contraction_hat,
            self.contraction_hat_se,
            self.unbiased,
            self.contractive
        )
    }
}

pub fn report_csv(rows: &[CertificationRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Standard basis vector, all-ones, a Cauchy draw and a near-sparse vector.
pub fn certification_panel(dim: usize) -> Result<Vec<DenseVector>> {
    if dim == 0 {
        return Err(Error::param("panel dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PANEL_SEED);
    let mut basis = vec![0.0; dim];
    basis[0] = 1.0;
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid scale");
    let heavy: Vec<f64> = (0..dim).map(|_| cauchy.sample(&mut rng)).collect();
    let mut near_sparse: Vec<f64> = (0..dim)
        .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 1e-2 * z })
        .collect();
    near_sparse[0] = 10.0;
    if dim > 1 {
        near_sparse[dim / 2] = -7.0;
    }
    [basis, vec![1.0; dim], heavy, near_sparse].into_iter().map(DenseVector::new).collect()
}

/// Welford running mean and variance.
#[derive(Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }

    /// Mean and its standard error.
    fn mean_se(&self) -> (f64, f64) {
        let var = (self.m2 / (self.count - 1.0)).max(0.0);
        (self.mean, (var / self.count).sqrt())
    }
}

struct PanelStats {
    max_z: f64,
    ratio: (f64, f64),
    contraction: (f64, f64),
}

fn panel_stats(spec: &CompressorSpec, x: &DenseVector, trials: usize, rng: &mut impl rand::Rng) -> Result<PanelStats> {
    let d = x.dim();
    let norm_sq = x.norm_sq();
    let mut bias: Vec<Moments> = (0..d).map(|_| Moments::default()).collect();
    let mut ratio = Moments::default();
    let mut contraction = Moments::default();
    let mut c = vec![0.0; d];
    for _ in 0..trials {
        c.iter_mut().for_each(|v| *v = 0.0);
        spec.compress(x, rng)?.accumulate_into(1.0, &mut c)?;
        let mut sq = 0.0;
        let mut err_sq = 0.0;
        for ((m, &cj), &xj) in bias.iter_mut().zip(&c).zip(x.iter()) {
            let e = cj - xj;
            m.push(e);
            sq += cj * cj;
            err_sq += e * e;
        }
        ratio.push(sq / norm_sq);
        contraction.push(err_sq / norm_sq);
    }
    let mut max_z: f64 = 0.0;
    for (m, &xj) in bias.iter().zip(x.iter()) {
        let (mean, se) = m.mean_se();
        let z = if se > 0.0 {
            mean.abs() / se
        } else if mean.abs() <= 1e-12 * (1.0 + xj.abs()) {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
    }
    Ok(PanelStats {
        max_z,
        ratio: ratio.mean_se(),
        contraction: contraction.mean_se(),
    })
}

pub fn certify_compressor(spec: &CompressorSpec, dim: usize, trials: usize, seed: u64) -> Result<CertificationRow> {
    if trials < MIN_TRIALS {
        return Err(Error::param(format!("certification needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    spec.validate(dim)?;
    let nominal_delta = spec.nominal_delta(dim)?;
    let streams = RngStreams::new(seed);
    let mut max_z: f64 = 0.0;
    let mut delta = (f64::NEG_INFINITY, 0.0);
    let mut contraction = (f64::NEG_INFINITY, 0.0);
    for (idx, x) in certification_panel(dim)?.iter().enumerate() {
        let mut rng = streams.stream(idx as u64, 0, Purpose::Harness);
        let stats = panel_stats(spec, x, trials, &mut rng)?;
        max_z = max_z.max(stats.max_z);
        if stats.ratio.0 > delta.0 {
            delta = stats.ratio;
        }
        if stats.contraction.0 > contraction.0 {
            contraction = stats.contraction;
        }
    }
    let unbiased = max_z <= BIAS_Z_THRESHOLD;
    let contractive = contraction.0 <= 1.0 - 1.0 / nominal_delta + 4.0 * contraction.1 + 1e-12;
    Ok(CertificationRow {
        compressor: spec.label(),
        dim,
        trials,
        nominal_delta,
        max_bias_z: max_z,
        delta_hat: delta.0,
        delta_hat_se: delta.1,
        contraction_hat: contraction.0,
        contraction_hat_se: contraction.1,
        unbiased,
        contractive,
    })
}

/// The operators certified by default at dimension `dim` with budget `k`.
pub fn default_certification_set(dim: usize, k: usize) -> Vec<CompressorSpec> {
    vec![
        CompressorSpec::TopK { k },
        CompressorSpec::RandK { k },
        CompressorSpec::NuRand1,
        CompressorSpec::WangniK { k },
        CompressorSpec::TernaryDither,
        CompressorSpec::induced(CompressorSpec::TopK { k: (k / 2).max(1) }, CompressorSpec::WangniK { k: (k - k / 2).max(1).min(dim) }),
    ]
}

pub fn certify_all(specs: &[CompressorSpec], dim: usize, trials: usize, seed: u64) -> Result<Vec<CertificationRow>> {
    specs.par_iter().map(|s| certify_compressor(s, dim, trials, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_is_fixed() {
        let a = certification_panel(6).unwrap();
        let b = certification_panel(6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(certification_panel(0).is_err());
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(certify_compressor(&CompressorSpec::RandK { k: 1 }, 4, 10, 0).is_err());
    }

    #[test]
    fn top_k_is_biased_and_contractive() {
        let row = certify_compressor(&CompressorSpec::TopK { k: 2 }, 8, MIN_TRIALS, 1).unwrap();
        assert!(!row.unbiased);
        assert!(row.contractive);
        assert!(row.contraction_hat <= 1.0 - 2.0 / 8.0);
    }
}
