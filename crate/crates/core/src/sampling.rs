//! Client samplings: distributions over subsets of the `n` nodes.
//!
//! A sampling `S` has inclusion probabilities `p_i = P(i in S)` and pairwise
//! probabilities `P_ij = P({i, j} in S)`. An ESO vector `v` certifies
//! `P - p p^T <= Diag(p o v)`, which bounds the variance of the reweighted
//! aggregate `sum_{i in S} zeta_i / (n p_i)`:
//!
//! `E|| sum_{i in S} zeta_i / (n p_i) - mean(zeta) ||^2 <= (1/n^2) sum_i (v_i / p_i) ||zeta_i||^2`.
//!
//! Explicit tables address subsets by bitmask (bit `i` set when node `i`
//! participates) and are limited to `n <= 20`. The parametric families have
//! closed-form `p` and `P` at any `n`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Largest node count for bitmask enumeration.
pub const MAX_EXPLICIT_NODES: usize = 20;
/// Largest node count for exact enumeration of the variance inequality.
pub const MAX_ENUMERATION_NODES: usize = 12;
/// Eigenvalue slack for the PSD check of an ESO certificate.
pub const ESO_TOLERANCE: f64 = 1e-10;
const TABLE_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum SamplingFamily {
    /// Every node, every round.
    Full,
    /// A uniformly random subset of exactly `b` nodes.
    BNice { b: usize },
    /// Node `i` participates independently with probability `p[i]`.
    Independent { p: Vec<f64> },
    /// `(subset bitmask, probability)` rows summing to one.
    Explicit { table: Vec<(u32, f64)> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingScheme {
    n: usize,
    family: SamplingFamily,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsoCertificate {
    pub v: Vec<f64>,
    pub valid: bool,
    /// Smallest eigenvalue of `Diag(p o v) - (P - p p^T)`.
    pub min_eig: f64,
}

impl SamplingScheme {
    pub fn full(n: usize) -> Result<Self> {
        check_nodes(n)?;
        Ok(Self {
            n,
            family: SamplingFamily::Full,
        })
    }

    pub fn b_nice(n: usize, b: usize) -> Result<Self> {
        check_nodes(n)?;
        if b == 0 || b > n {
            return Err(Error::param(format!("b-nice sampling needs 1 <= b <= n (b = {b}, n = {n})")));
        }
        Ok(Self {
            n,
            family: SamplingFamily::BNice { b },
        })
    }

    pub fn independent(p: Vec<f64>) -> Result<Self> {
        check_nodes(p.len())?;
        if let Some(i) = p.iter().position(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::param(format!("probability p[{i}] = {} outside [0, 1]", p[i])));
        }
        Ok(Self {
            n: p.len(),
            family: SamplingFamily::Independent { p },
        })
    }

    pub fn explicit(n: usize, table: Vec<(u32, f64)>) -> Result<Self> {
        check_nodes(n)?;
        if n > MAX_EXPLICIT_NODES {
            return Err(Error::param(format!(
                "explicit samplings support at most {MAX_EXPLICIT_NODES} nodes (n = {n})"
            )));
        }
        let limit = 1u64 << n;
        let mut total = 0.0;
        for &(mask, prob) in &table {
            if u64::from(mask) >= limit {
                return Err(Error::param(format!("subset mask {mask:#b} names a node >= n = {n}")));
            }
            if !(prob >= 0.0 && prob.is_finite()) {
                return Err(Error::param(format!("subset {mask:#b} has invalid probability {prob}")));
            }
            total += prob;
        }
        if (total - 1.0).abs() > TABLE_SUM_TOLERANCE {
            return Err(Error::param(format!("explicit table sums to {total}, not 1")));
        }
        Ok(Self {
            n,
            family: SamplingFamily::Explicit { table },
        })
    }

    /// Parses one `bitmask probability` pair per line. Masks may be decimal,
    /// `0b` binary or `0x` hex; `#` starts a comment.
    pub fn parse_table(text: &str, n: usize) -> Result<Self> {
        let mut table = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Format(format!("line {}: {what}: {raw:?}", lineno + 1));
            let mut fields = line.split_whitespace();
            let (Some(mask), Some(prob), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(bad("expected `bitmask probability`"));
            };
            let mask = if let Some(bits) = mask.strip_prefix("0b") {
                u32::from_str_radix(bits, 2)
            } else if let Some(hex) = mask.strip_prefix("0x") {
                u32::from_str_radix(hex, 16)
            } else {
                mask.parse()
            }
            .map_err(|_| bad("invalid bitmask"))?;
            let prob: f64 = prob.parse().map_err(|_| bad("invalid probability"))?;
            table.push((mask, prob));
        }
        Self::explicit(n, table)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &SamplingFamily {
        &self.family
    }

    pub fn probability_vector(&self) -> Vec<f64> {
        let n = self.n;
        match &self.family {
            SamplingFamily::Full => vec![1.0; n],
            SamplingFamily::BNice { b } => vec![*b as f64 / n as f64; n],
            SamplingFamily::Independent { p } => p.clone(),
            SamplingFamily::Explicit { table } => {
                let mut p = vec![0.0; n];
                for &(mask, prob) in table {
                    for (i, pi) in p.iter_mut().enumerate() {
                        if mask >> i & 1 == 1 {
                            *pi += prob;
                        }
                    }
                }
                p
            }
        }
    }

    pub fn probability_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        match &self.family {
            SamplingFamily::Full => DMatrix::from_element(n, n, 1.0),
            SamplingFamily::BNice { b } => {
                let (nf, bf) = (n as f64, *b as f64);
                let off = if n > 1 { bf * (bf - 1.0) / (nf * (nf - 1.0)) } else { 0.0 };
                DMatrix::from_fn(n, n, |i, j| if i == j { bf / nf } else { off })
            }
            SamplingFamily::Independent { p } => {
                DMatrix::from_fn(n, n, |i, j| if i == j { p[i] } else { p[i] * p[j] })
            }
            SamplingFamily::Explicit { table } => {
                let mut m = DMatrix::zeros(n, n);
                for &(mask, prob) in table {
                    let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                    for &i in &members {
                        for &j in &members {
                            m[(i, j)] += prob;
                        }
                    }
                }
                m
            }
        }
    }

    /// Expected number of participating nodes, `sum p_i`.
    pub fn expected_size(&self) -> f64 {
        self.probability_vector().iter().sum()
    }

    pub fn is_proper(&self) -> bool {
        self.probability_vector().iter().all(|&p| p > 0.0)
    }

    pub fn ensure_proper(&self) -> Result<Vec<f64>> {
        let p = self.probability_vector();
        match p.iter().position(|&q| q <= 0.0) {
            Some(node) => Err(Error::Improper {
                node,
                probability: p[node],
            }),
            None => Ok(p),
        }
    }

    /// `v_i = n (1 - p_i)`, always a valid certificate.
    pub fn default_eso_vector(&self) -> Result<Vec<f64>> {
        let n = self.n as f64;
        Ok(self.ensure_proper()?.iter().map(|p| (n * (1.0 - p)).max(0.0)).collect())
    }

    /// Checks `P - p p^T <= Diag(p o v)` through the smallest eigenvalue of
    /// the difference.
    pub fn validate_eso(&self, v: &[f64]) -> Result<EsoCertificate> {
        let p = self.ensure_proper()?;
        self.check_eso_vector(v)?;
        let n = self.n;
        let probs = self.probability_matrix();
        let diff = DMatrix::from_fn(n, n, |i, j| {
            let cov = probs[(i, j)] - p[i] * p[j];
            let diag = if i == j { p[i] * v[i] } else { 0.0 };
            diag - cov
        });
        let min_eig = SymmetricEigen::new(diff).eigenvalues.min();
        Ok(EsoCertificate {
            v: v.to_vec(),
            valid: min_eig >= -ESO_TOLERANCE,
            min_eig,
        })
    }

    fn check_eso_vector(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        if let Some(i) = v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::param(format!("ESO vector entry v[{i}] = {} must be >= 0", v[i])));
        }
        Ok(())
    }

    /// Draws a participating subset, sorted ascending.
    pub fn draw_subset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match &self.family {
            SamplingFamily::Full => (0..self.n).collect(),
            SamplingFamily::BNice { b } => {
                let mut s = rand::seq::index::sample(rng, self.n, *b).into_vec();
                s.sort_unstable();
                s
            }
            SamplingFamily::Independent { p } => {
                (0..self.n).filter(|&i| rng.random::<f64>() < p[i]).collect()
            }
            SamplingFamily::Explicit { table } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = None;
                for &(mask, prob) in table {
                    if prob <= 0.0 {
                        continue;
                    }
                    acc += prob;
                    chosen = Some(mask);
                    if u < acc {
                        break;
                    }
                }
                let mask = chosen.unwrap_or(0);
                (0..self.n).filter(|i| mask >> i & 1 == 1).collect()
            }
        }
    }

    /// Every subset with positive probability, as `(bitmask, probability)`.
    pub fn support(&self) -> Result<Vec<(u32, f64)>> {
        let n = self.n;
        if n > MAX_EXPLICIT_NODES {
            return Err(Error::param(format!(
                "support enumeration limited to {MAX_EXPLICIT_NODES} nodes (n = {n})"
            )));
        }
        let all = ((1u64 << n) - 1) as u32;
        Ok(match &self.family {
            SamplingFamily::Full => vec![(all, 1.0)],
            SamplingFamily::BNice { b } => {
                let count = binomial(n, *b);
                (0..=all)
                    .filter(|m| m.count_ones() as usize == *b)
                    .map(|m| (m, 1.0 / count))
                    .collect()
            }
            SamplingFamily::Independent { p } => (0..=all)
                .map(|m| {
                    let prob = (0..n)
                        .map(|i| if m >> i & 1 == 1 { p[i] } else { 1.0 - p[i] })
                        .product::<f64>();
                    (m, prob)
                })
                .filter(|&(_, prob)| prob > 0.0)
                .collect(),
            SamplingFamily::Explicit { table } => {
                table.iter().copied().filter(|&(_, prob)| prob > 0.0).collect()
            }
        })
    }

    /// Both sides of the variance inequality, the left side computed exactly
    /// over the support.
    pub fn check_variance_inequality(&self, v: &[f64], zetas: &[DenseVector]) -> Result<(f64, f64)> {
        let p = self.ensure_proper()?;
        self.check_eso_vector(v)?;
        let n = self.n;
        if n > MAX_ENUMERATION_NODES {
            return Err(Error::param(format!(
                "exact enumeration limited to {MAX_ENUMERATION_NODES} nodes (n = {n})"
            )));
        }
        if zetas.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: zetas.len(),
            });
        }
        let dim = zetas[0].dim();
        for z in zetas {
            z.ensure_dim(dim)?;
        }
        let nf = n as f64;
        let mut mean = DenseVector::zeros(dim);
        for z in zetas {
            mean.axpy(1.0 / nf, z);
        }
        let mut lhs = 0.0;
        for (mask, prob) in self.support()? {
            let mut est = DenseVector::zeros(dim);
            for i in (0..n).filter(|i| mask >> i & 1 == 1) {
                est.axpy(1.0 / (nf * p[i]), &zetas[i]);
            }
            lhs += prob * est.sub(&mean).norm_sq();
        }
        let rhs = (0..n).map(|i| v[i] / p[i] * zetas[i].norm_sq()).sum::<f64>() / (nf * nf);
        Ok((lhs, rhs))
    }

    /// `(a_S, delta_S)` with `a_S = max v_i / p_i` and
    /// `delta_S = (delta a_S + delta - 1) / n + 1`.
    pub fn pp_variance_parameters(&self, v: &[f64], delta: f64) -> Result<(f64, f64)> {
        if !(delta >= 1.0) {
            return Err(Error::param(format!("compressor delta {delta} must be >= 1")));
        }
        let cert = self.validate_eso(v)?;
        if !cert.valid {
            return Err(Error::param(format!(
                "v is not an ESO certificate (min eigenvalue {:e})",
                cert.min_eig
            )));
        }
        let p = self.probability_vector();
        let a_s = v.iter().zip(&p).map(|(vi, pi)| vi / pi).fold(0.0, f64::max);
        let delta_s = (delta * a_s + (delta - 1.0)) / self.n as f64 + 1.0;
        Ok((a_s, delta_s))
    }
}

fn check_nodes(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("a sampling needs at least one node"));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
