//! Shared fixtures for the benchmarks.

use dcsgd::problems::{make_random_quadratic, RandomQuadraticParams};
use dcsgd::{DenseVector, ProblemInstance};

/// Deterministic dense vector with entries of mixed sign and magnitude.
pub fn fixture_vector(dim: usize) -> DenseVector {
    let values = (0..dim)
        .map(|i| {
            let t = (i as f64 + 1.0) * 0.618_033_988_749_895;
            (t.fract() - 0.5) * (1.0 + (i % 7) as f64)
        })
        .collect();
    DenseVector::new(values).expect("finite fixture")
}

pub fn fixture_problem(n: usize, d: usize) -> ProblemInstance {
    make_random_quadratic(&RandomQuadraticParams {
        n,
        d,
        mu: 0.1,
        l: 1.0,
        heterogeneity: 1.0,
        sigma2: 0.01,
        seed: 7,
    })
    .expect("valid parameters")
}
