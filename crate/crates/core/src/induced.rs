//! Induced compressors: a contractive operator plus an unbiased compression
//! of its residual, `C(x) = C1(x) + C2(x - C1(x))`.
//!
//! The result is unbiased for any unbiased `C2`, with
//! `E||C(x) - x||^2 <= (delta2 - 1)(1 - 1/delta1) ||x||^2`, so it belongs to
//! `U(delta2 (1 - 1/delta1) + 1/delta1)`. The residual lives only for the
//! duration of one call.

use rand::Rng;

use crate::compressors::{CompressedMessage, CompressorSpec};
use crate::error::{Error, Result};
use crate::vector::DenseVector;

#[derive(Clone, Debug, PartialEq)]
pub struct InducedCompressor {
    contractive: CompressorSpec,
    unbiased: CompressorSpec,
}

impl InducedCompressor {
    pub fn new(contractive: CompressorSpec, unbiased: CompressorSpec) -> Result<Self> {
        if !contractive.is_contractive_unscaled() {
            return Err(Error::param(format!(
                "{contractive} cannot serve as a lambda = 1 contractive first stage"
            )));
        }
        if !unbiased.is_unbiased() {
            return Err(Error::param(format!("{unbiased} is not an unbiased compressor")));
        }
        Ok(Self {
            contractive,
            unbiased,
        })
    }

    /// First stage `Top-a`, second stage magnitude-weighted sparsification
    /// with the remaining `k - a` budget, `a = k / 2`.
    pub fn top_half_wangni(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::param("split budget k must be at least 2"));
        }
        let first = k / 2;
        Self::new(
            CompressorSpec::TopK { k: first },
            CompressorSpec::WangniK { k: k - first },
        )
    }

    pub fn contractive(&self) -> &CompressorSpec {
        &self.contractive
    }

    pub fn unbiased(&self) -> &CompressorSpec {
        &self.unbiased
    }

    pub fn spec(&self) -> CompressorSpec {
        CompressorSpec::induced(self.contractive.clone(), self.unbiased.clone())
    }

    /// Composite `(C1(x), C2(x - C1(x)))`.
    pub fn compress<R: Rng + ?Sized>(&self, x: &DenseVector, rng: &mut R) -> Result<CompressedMessage> {
        let first = self.contractive.compress(x, rng)?;
        let residual = x.sub(&first.decompress()?);
        let second = self.unbiased.compress(&residual, rng)?;
        CompressedMessage::composite(first, second)
    }

    pub fn delta(&self, dim: usize) -> Result<f64> {
        induced_delta(self.contractive.nominal_delta(dim)?, self.unbiased.nominal_delta(dim)?)
    }

    /// Bound on `E||C(x) - x||^2 / ||x||^2`.
    pub fn variance_factor(&self, dim: usize) -> Result<f64> {
        let d1 = self.contractive.nominal_delta(dim)?;
        let d2 = self.unbiased.nominal_delta(dim)?;
        Ok((d2 - 1.0) * (1.0 - 1.0 / d1))
    }
}

/// `delta2 (1 - 1/delta1) + 1/delta1`
pub fn induced_delta(delta1: f64, delta2: f64) -> Result<f64> {
    if !(delta1 >= 1.0 && delta2 >= 1.0) {
        return Err(Error::param(format!(
            "induced delta needs delta1, delta2 >= 1 (got {delta1}, {delta2})"
        )));
    }
    Ok(delta2 * (1.0 - 1.0 / delta1) + 1.0 / delta1)
}
