//! The compression operators.
//!
//! Every randomized operator is split into a sampler and a deterministic
//! realization taking the sampled randomness explicitly (`*_with_*`), so
//! exact enumeration over outcomes can drive the same code path as the
//! randomized entry points.

use rand::Rng;

use super::message::CompressedMessage;
use crate::error::{Error, Result};
use crate::vector::DenseVector;

fn check_budget(dim: usize, k: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::param(format!("budget k = {k} must lie in [1, {dim}]")));
    }
    Ok(())
}

/// Every nonzero coordinate, unscaled.
pub fn compress_identity(x: &DenseVector) -> CompressedMessage {
    CompressedMessage::sparse(x.dim(), x.iter().copied().enumerate())
        .expect("dense vector yields a valid sparse message")
}

/// Keeps the `k` entries of largest magnitude. Ties go to the lower index.
pub fn compress_top_k(x: &DenseVector, k: usize) -> Result<CompressedMessage> {
    check_budget(x.dim(), k)?;
    let v = x.as_slice();
    let mut order: Vec<usize> = (0..v.len()).collect();
    // Stable sort keeps lower indices first among equal magnitudes.
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    CompressedMessage::sparse(x.dim(), kept.into_iter().map(|i| (i, v[i])))
}

/// Rand-K realized on a given subset of `k` distinct coordinates.
pub fn rand_k_with_subset(x: &DenseVector, k: usize, subset: &[usize]) -> Result<CompressedMessage> {
    check_budget(x.dim(), k)?;
    if subset.len() != k {
        return Err(Error::param(format!("subset has {} coordinates, expected {k}", subset.len())));
    }
    let mut kept = subset.to_vec();
    kept.sort_unstable();
    let scale = x.dim() as f64 / k as f64;
    CompressedMessage::sparse(x.dim(), kept.into_iter().map(|i| (i, x[i] * scale)))
}

/// Keeps `k` uniformly chosen distinct coordinates, scaled by `d / k`.
pub fn compress_rand_k<R: Rng + ?Sized>(
    x: &DenseVector,
    k: usize,
    rng: &mut R,
) -> Result<CompressedMessage> {
    check_budget(x.dim(), k)?;
    let subset = rand::seq::index::sample(rng, x.dim(), k).into_vec();
    rand_k_with_subset(x, k, &subset)
}

/// Selection probabilities `|x_i| / ||x||_1`; all zero for the zero vector.
pub fn nu_rand1_probabilities(x: &DenseVector) -> Vec<f64> {
    let total = x.norm_l1();
    if total == 0.0 {
        return vec![0.0; x.dim()];
    }
    x.iter().map(|v| v.abs() / total).collect()
}

/// NU Rand-1 realized with coordinate `index` selected.
pub fn nu_rand1_with_index(x: &DenseVector, index: usize) -> Result<CompressedMessage> {
    if index >= x.dim() {
        return Err(Error::param(format!("index {index} out of range for dim {}", x.dim())));
    }
    if x[index] == 0.0 {
        // Zero-probability outcome; also covers the zero vector.
        return Ok(CompressedMessage::empty(x.dim()));
    }
    // x_i / p_i = sign(x_i) * ||x||_1
    let value = x[index].signum() * x.norm_l1();
    CompressedMessage::sparse(x.dim(), [(index, value)])
}

/// Keeps one coordinate drawn with probability proportional to `|x_i|`,
/// rescaled for unbiasedness. The zero vector maps to the empty message.
pub fn compress_nu_rand1<R: Rng + ?Sized>(x: &DenseVector, rng: &mut R) -> Result<CompressedMessage> {
    let total = x.norm_l1();
    if total == 0.0 {
        return Ok(CompressedMessage::empty(x.dim()));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (i, v) in x.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        acc += v.abs();
        chosen = Some(i);
        if target < acc {
            break;
        }
    }
    nu_rand1_with_index(x, chosen.expect("nonzero vector has a nonzero coordinate"))
}

/// Keep probabilities for magnitude-weighted sparsification: start from
/// `k |x_i| / ||x||_1`, clamp anything above one and spread the leftover
/// budget over the unclamped coordinates in proportion to magnitude, until
/// nothing new clamps.
pub fn wangni_probabilities(x: &DenseVector, k: usize) -> Result<Vec<f64>> {
    check_budget(x.dim(), k)?;
    let mag: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let nnz = mag.iter().filter(|&&m| m > 0.0).count();
    let mut probs = vec![0.0; x.dim()];
    if nnz <= k {
        for (p, &m) in probs.iter_mut().zip(&mag) {
            if m > 0.0 {
                *p = 1.0;
            }
        }
        return Ok(probs);
    }
    let mut clamped = vec![false; x.dim()];
    loop {
        let budget = (k - clamped.iter().filter(|&&c| c).count()) as f64;
        let mass: f64 = mag
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(m, _)| m)
            .sum();
        if mass == 0.0 || budget == 0.0 {
            break;
        }
        let mut newly_clamped = false;
        for i in 0..mag.len() {
            if clamped[i] {
                continue;
            }
            let p = budget * mag[i] / mass;
            if p >= 1.0 {
                clamped[i] = true;
                probs[i] = 1.0;
                newly_clamped = true;
            } else {
                probs[i] = p;
            }
        }
        if !newly_clamped {
            break;
        }
    }
    for (p, &c) in probs.iter_mut().zip(&clamped) {
        if c {
            *p = 1.0;
        }
    }
    Ok(probs)
}

/// Magnitude-weighted sparsification realized with a keep mask.
pub fn wangni_with_mask(x: &DenseVector, probs: &[f64], keep: &[bool]) -> Result<CompressedMessage> {
    x.ensure_dim(probs.len())?;
    x.ensure_dim(keep.len())?;
    let entries = (0..x.dim())
        .filter(|&i| keep[i] && probs[i] > 0.0)
        .map(|i| (i, x[i] / probs[i]));
    CompressedMessage::sparse(x.dim(), entries)
}

/// Keeps each coordinate independently with its water-filled probability.
pub fn compress_wangni<R: Rng + ?Sized>(
    x: &DenseVector,
    k: usize,
    rng: &mut R,
) -> Result<CompressedMessage> {
    let probs = wangni_probabilities(x, k)?;
    let keep: Vec<bool> = probs.iter().map(|&p| rng.random::<f64>() < p).collect();
    wangni_with_mask(x, &probs, &keep)
}

/// Ternary dithering realized with a mask of coordinates sent as nonzero.
pub fn ternary_with_mask(x: &DenseVector, keep: &[bool]) -> Result<CompressedMessage> {
    x.ensure_dim(keep.len())?;
    let scale = x.norm_inf();
    let signs = x
        .iter()
        .zip(keep)
        .map(|(&v, &k)| if k && v != 0.0 { v.signum() as i8 } else { 0 })
        .collect();
    CompressedMessage::ternary(scale, signs)
}

/// One-level dithering against the infinity norm: coordinate `i` becomes
/// `sign(x_i) ||x||_inf` with probability `|x_i| / ||x||_inf`, else zero.
pub fn compress_ternary_dither<R: Rng + ?Sized>(
    x: &DenseVector,
    rng: &mut R,
) -> Result<CompressedMessage> {
    let scale = x.norm_inf();
    let keep: Vec<bool> = x
        .iter()
        .map(|&v| scale > 0.0 && rng.random::<f64>() < v.abs() / scale)
        .collect();
    ternary_with_mask(x, &keep)
}

pub fn decompress(message: &CompressedMessage) -> Result<DenseVector> {
    message.decompress()
}
