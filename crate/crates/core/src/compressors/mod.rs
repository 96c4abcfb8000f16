//! Compression operators `C: R^d -> R^d` with exact bit accounting.
//!
//! Operators fall into two classes. Unbiased ones satisfy `E[C(x)] = x` and
//! `E||C(x)||^2 <= delta ||x||^2`. Contractive ones satisfy
//! `E||C(x) - x||^2 <= (1 - 1/delta) ||x||^2`. [`CompressorSpec::nominal_delta`]
//! reports the analytic `delta` for either class.
//!
//! Nominal values for operators without a tight closed form: NU Rand-1 uses
//! `d` (its second moment is `||x||_1^2 <= d ||x||^2`), magnitude-weighted
//! sparsification uses `d/k` (`sum x_i^2 / p_i <= ||x||_1^2 / k`), and
//! ternary dithering uses `sqrt(d)` (`||x||_inf ||x||_1 <= sqrt(d) ||x||^2`).

mod message;
mod ops;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use message::{index_bits, CompressedMessage, Payload, SparseEntry, VALUE_BITS};
pub use ops::{
    compress_identity, compress_nu_rand1, compress_rand_k, compress_ternary_dither,
    compress_top_k, compress_wangni, decompress, nu_rand1_probabilities, nu_rand1_with_index,
    rand_k_with_subset, ternary_with_mask, wangni_probabilities, wangni_with_mask,
};

use crate::error::{Error, Result};
use crate::induced::{induced_delta, InducedCompressor};
use crate::vector::DenseVector;

/// Which of the two operator classes a compressor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorClass {
    Unbiased,
    /// Biased, but contractive with `lambda = 1`.
    Contractive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorSpec {
    Identity,
    TopK { k: usize },
    RandK { k: usize },
    #[serde(rename = "nu_rand1")]
    NuRand1,
    WangniK { k: usize },
    TernaryDither,
    Induced {
        contractive: Box<CompressorSpec>,
        unbiased: Box<CompressorSpec>,
    },
}

impl CompressorSpec {
    pub fn induced(contractive: CompressorSpec, unbiased: CompressorSpec) -> Self {
        CompressorSpec::Induced {
            contractive: Box::new(contractive),
            unbiased: Box::new(unbiased),
        }
    }

    pub fn class(&self) -> CompressorClass {
        match self {
            CompressorSpec::TopK { .. } => CompressorClass::Contractive,
            _ => CompressorClass::Unbiased,
        }
    }

    pub fn is_unbiased(&self) -> bool {
        self.class() == CompressorClass::Unbiased
    }

    /// Usable as the first stage of an induced compressor (contractive with
    /// `lambda = 1`).
    pub fn is_contractive_unscaled(&self) -> bool {
        matches!(self, CompressorSpec::Identity | CompressorSpec::TopK { .. })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let budget = |k: usize| {
            if k == 0 || k > dim {
                Err(Error::param(format!("{self}: budget k = {k} must lie in [1, {dim}]")))
            } else {
                Ok(())
            }
        };
        match self {
            CompressorSpec::Identity | CompressorSpec::NuRand1 | CompressorSpec::TernaryDither => {
                Ok(())
            }
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k } | CompressorSpec::WangniK { k } => {
                budget(*k)
            }
            CompressorSpec::Induced {
                contractive,
                unbiased,
            } => {
                if !contractive.is_contractive_unscaled() {
                    return Err(Error::param(format!(
                        "induced first stage {contractive} is not contractive with lambda = 1"
                    )));
                }
                if !unbiased.is_unbiased() {
                    return Err(Error::param(format!(
                        "induced second stage {unbiased} is not unbiased"
                    )));
                }
                contractive.validate(dim)?;
                unbiased.validate(dim)
            }
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, x: &DenseVector, rng: &mut R) -> Result<CompressedMessage> {
        match self {
            CompressorSpec::Identity => Ok(compress_identity(x)),
            CompressorSpec::TopK { k } => compress_top_k(x, *k),
            CompressorSpec::RandK { k } => compress_rand_k(x, *k, rng),
            CompressorSpec::NuRand1 => compress_nu_rand1(x, rng),
            CompressorSpec::WangniK { k } => compress_wangni(x, *k, rng),
            CompressorSpec::TernaryDither => compress_ternary_dither(x, rng),
            CompressorSpec::Induced {
                contractive,
                unbiased,
            } => InducedCompressor::new((**contractive).clone(), (**unbiased).clone())?.compress(x, rng),
        }
    }

    /// Analytic `delta` of the operator's class at dimension `dim`.
    pub fn nominal_delta(&self, dim: usize) -> Result<f64> {
        self.validate(dim)?;
        let d = dim as f64;
        Ok(match self {
            CompressorSpec::Identity => 1.0,
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k } | CompressorSpec::WangniK { k } => {
                d / *k as f64
            }
            CompressorSpec::NuRand1 => d,
            CompressorSpec::TernaryDither => d.sqrt(),
            CompressorSpec::Induced {
                contractive,
                unbiased,
            } => induced_delta(contractive.nominal_delta(dim)?, unbiased.nominal_delta(dim)?)?,
        })
    }

    /// Short label used in file names and tables.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressorSpec::Identity => write!(f, "identity"),
            CompressorSpec::TopK { k } => write!(f, "top{k}"),
            CompressorSpec::RandK { k } => write!(f, "rand{k}"),
            CompressorSpec::NuRand1 => write!(f, "nurand1"),
            CompressorSpec::WangniK { k } => write!(f, "wangni{k}"),
            CompressorSpec::TernaryDither => write!(f, "terngrad"),
            CompressorSpec::Induced {
                contractive,
                unbiased,
            } => write!(f, "induced[{contractive}+{unbiased}]"),
        }
    }
}
