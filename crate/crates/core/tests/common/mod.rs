//! Exact enumeration oracles shared by the integration and acceptance tests.
//! Each oracle lists every random outcome of an operator with its
//! probability, built from first principles rather than from the sampler.

#![allow(dead_code)]

use dcsgd::compressors::{
    compress_top_k, nu_rand1_with_index, rand_k_with_subset, ternary_with_mask, wangni_with_mask,
};
use dcsgd::{CompressedMessage, DenseVector};

pub struct Outcome {
    pub prob: f64,
    pub message: CompressedMessage,
}

pub fn dense(values: &[f64]) -> DenseVector {
    DenseVector::new(values.to_vec()).unwrap()
}

/// All `k`-subsets of `0..d` in lexicographic order.
pub fn k_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, k, &mut Vec::new(), &mut out);
    out
}

/// All keep/drop masks of length `d`.
pub fn masks(d: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u32 << d).map(move |m| (0..d).map(|i| m >> i & 1 == 1).collect())
}

/// Probability of an independent keep mask.
pub fn mask_probability(probs: &[f64], keep: &[bool]) -> f64 {
    probs
        .iter()
        .zip(keep)
        .map(|(&p, &k)| if k { p } else { 1.0 - p })
        .product()
}

/// Water-filling by bisection on the scale `c` in `p_i = min(1, c |x_i|)`.
pub fn wangni_reference_probabilities(x: &[f64], k: usize) -> Vec<f64> {
    let nonzero = x.iter().filter(|v| **v != 0.0).count();
    if nonzero == 0 {
        return vec![0.0; x.len()];
    }
    if k >= nonzero {
        return x.iter().map(|v| if *v != 0.0 { 1.0 } else { 0.0 }).collect();
    }
    let total = |c: f64| x.iter().map(|v| (c * v.abs()).min(1.0)).sum::<f64>();
    let min_abs = x.iter().filter(|v| **v != 0.0).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, 1.0 / min_abs);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < k as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x.iter().map(|v| (hi * v.abs()).min(1.0)).collect()
}

pub fn rand_k_outcomes(x: &DenseVector, k: usize) -> Vec<Outcome> {
    let subsets = k_subsets(x.dim(), k);
    let prob = 1.0 / subsets.len() as f64;
    subsets
        .iter()
        .map(|s| Outcome {
            prob,
            message: rand_k_with_subset(x, k, s).unwrap(),
        })
        .collect()
}

pub fn nu_rand1_outcomes(x: &DenseVector) -> Vec<Outcome> {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return vec![Outcome {
            prob: 1.0,
            message: CompressedMessage::empty(x.dim()),
        }];
    }
    (0..x.dim())
        .filter(|&i| x[i] != 0.0)
        .map(|i| Outcome {
            prob: x[i].abs() / l1,
            message: nu_rand1_with_index(x, i).unwrap(),
        })
        .collect()
}

pub fn wangni_outcomes(x: &DenseVector, k: usize) -> Vec<Outcome> {
    let probs = wangni_reference_probabilities(x.as_slice(), k);
    masks(x.dim())
        .map(|keep| (mask_probability(&probs, &keep), keep))
        .filter(|(prob, _)| *prob > 0.0)
        .map(|(prob, keep)| Outcome {
            prob,
            message: wangni_with_mask(x, &probs, &keep).unwrap(),
        })
        .collect()
}

pub fn ternary_outcomes(x: &DenseVector) -> Vec<Outcome> {
    let scale = x.norm_inf();
    let probs: Vec<f64> = x.iter().map(|v| if scale > 0.0 { v.abs() / scale } else { 0.0 }).collect();
    masks(x.dim())
        .map(|keep| (mask_probability(&probs, &keep), keep))
        .filter(|(prob, _)| *prob > 0.0)
        .map(|(prob, keep)| Outcome {
            prob,
            message: ternary_with_mask(x, &keep).unwrap(),
        })
        .collect()
}

/// Top-`k1` followed by Rand-`k2` of the residual.
pub fn induced_top_rand_outcomes(x: &DenseVector, k1: usize, k2: usize) -> Vec<Outcome> {
    let first = compress_top_k(x, k1).unwrap();
    let residual = x.sub(&first.decompress().unwrap());
    rand_k_outcomes(&residual, k2)
        .into_iter()
        .map(|o| Outcome {
            prob: o.prob,
            message: CompressedMessage::composite(first.clone(), o.message).unwrap(),
        })
        .collect()
}

pub struct Moments {
    pub total_prob: f64,
    pub mean: Vec<f64>,
    pub second_moment: f64,
    pub error_second_moment: f64,
}

pub fn moments(x: &DenseVector, outcomes: &[Outcome]) -> Moments {
    let mut mean = vec![0.0; x.dim()];
    let mut total_prob = 0.0;
    let mut second_moment = 0.0;
    let mut error_second_moment = 0.0;
    for o in outcomes {
        let c = o.message.decompress().unwrap();
        total_prob += o.prob;
        for (m, v) in mean.iter_mut().zip(c.iter()) {
            *m += o.prob * v;
        }
        second_moment += o.prob * c.norm_sq();
        error_second_moment += o.prob * c.sub(x).norm_sq();
    }
    Moments {
        total_prob,
        mean,
        second_moment,
        error_second_moment,
    }
}

/// Bit cost recomputed from the payload shape and the encoding formula.
pub fn reference_bit_cost(m: &CompressedMessage) -> u64 {
    use dcsgd::compressors::Payload;
    let d = m.dim() as f64;
    let index_bits = d.log2().ceil() as u64;
    match m.payload() {
        Payload::Sparse(entries) => entries.len() as u64 * (index_bits + 32),
        Payload::Ternary { .. } => 32 + 2 * m.dim() as u64,
        Payload::Composite(a, b) => reference_bit_cost(a) + reference_bit_cost(b),
    }
}

/// Probability matrix computed from an explicit `(mask, prob)` table.
pub fn table_probability_matrix(n: usize, table: &[(u32, f64)]) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; n]; n];
    for &(mask, prob) in table {
        for i in 0..n {
            for j in 0..n {
                if mask >> i & 1 == 1 && mask >> j & 1 == 1 {
                    p[i][j] += prob;
                }
            }
        }
    }
    p
}

/// `E || sum_{i in S} z_i / (n p_i) - mean(z) ||^2` through the second-moment
/// identity `(1/n^2) sum_ij (P_ij / (p_i p_j) - 1) <z_i, z_j>`.
pub fn variance_closed_form(pm: &[Vec<f64>], zetas: &[DenseVector]) -> f64 {
    let n = zetas.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (pm[i][j] / (pm[i][i] * pm[j][j]) - 1.0) * zetas[i].dot(&zetas[j]);
        }
    }
    acc / (n * n) as f64
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}
