//! Synthetic quadratic problems with analytically known constants.
//!
//! Node `i` holds `f_i(x) = 1/2 x^T A_i x + b_i^T x + c_i` and the objective is
//! `f = (1/n) sum_i f_i`. Every node Hessian must be positive definite, so
//! each `f_i` and `f` have unique minimizers and the constants below are
//! closed-form:
//!
//! - `L`: largest eigenvalue over all node Hessians. With exact gradients this
//!   gives `||grad f_i(x)||^2 <= 2L (f_i(x) - f_i*)` for every node.
//! - `L_f`: largest eigenvalue of the mean Hessian, the smoothness of `f`.
//! - `mu`: smallest eigenvalue of the mean Hessian.
//! - `D = (2L/n) sum_i (f_i(x*) - f_i*)`.
//!
//! Gradient noise is additive Gaussian with covariance `(sigma2 / d) I`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Relative distance under which node minimizers count as shared.
const SHARED_MINIMIZER_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticNodeFunction {
    a: DMatrix<f64>,
    b: DenseVector,
    c: f64,
}

impl QuadraticNodeFunction {
    pub fn new(a: DMatrix<f64>, b: DenseVector, c: f64) -> Result<Self> {
        let d = b.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Construction(format!(
                "Hessian is {}x{} but b has dimension {d}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::Construction("non-finite quadratic coefficients".into()));
        }
        if (0..d).any(|i| (0..i).any(|j| a[(i, j)] != a[(j, i)])) {
            return Err(Error::Construction("Hessian is not symmetric".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear(&self) -> &DenseVector {
        &self.b
    }

    pub fn offset(&self) -> f64 {
        self.c
    }

    pub fn value(&self, x: &DenseVector) -> f64 {
        let ax = self.apply(x);
        0.5 * x.dot(&ax) + self.b.dot(x) + self.c
    }

    pub fn gradient(&self, x: &DenseVector) -> DenseVector {
        let mut g = self.apply(x);
        g.axpy(1.0, &self.b);
        g
    }

    fn apply(&self, x: &DenseVector) -> DenseVector {
        let d = self.dim();
        let v = x.as_slice();
        DenseVector::from_raw(
            (0..d)
                .map(|i| (0..d).map(|j| self.a[(i, j)] * v[j]).sum())
                .collect(),
        )
    }

    /// Unique minimizer `-A^{-1} b`.
    pub fn minimizer(&self) -> Result<DenseVector> {
        let chol = Cholesky::new(self.a.clone())
            .ok_or_else(|| Error::Construction("node Hessian is not positive definite".into()))?;
        let rhs = DVector::from_iterator(self.dim(), self.b.iter().map(|v| -v));
        Ok(DenseVector::from_raw(chol.solve(&rhs).iter().copied().collect()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_f")]
    pub l_f: f64,
    pub mu: f64,
    pub x_star: DenseVector,
    pub f_star: f64,
    pub f_i_star: Vec<f64>,
    #[serde(rename = "D")]
    pub heterogeneity: f64,
}

impl ProblemConstants {
    pub fn compute(nodes: &[QuadraticNodeFunction]) -> Result<Self> {
        let Some(first) = nodes.first() else {
            return Err(Error::Construction("a problem needs at least one node".into()));
        };
        let d = first.dim();
        let n = nodes.len() as f64;
        if let Some(bad) = nodes.iter().find(|f| f.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }

        let mut l: f64 = 0.0;
        let mut mean_a = DMatrix::zeros(d, d);
        let mut mean_b = DenseVector::zeros(d);
        let mut minimizers = Vec::with_capacity(nodes.len());
        let mut f_i_star = Vec::with_capacity(nodes.len());
        for f in nodes {
            let eig = SymmetricEigen::new(f.a.clone()).eigenvalues;
            if eig.min() <= 0.0 {
                return Err(Error::Construction(format!(
                    "node Hessian has eigenvalue {} <= 0",
                    eig.min()
                )));
            }
            l = l.max(eig.max());
            mean_a += &f.a / n;
            mean_b.axpy(1.0 / n, &f.b);
            let xi = f.minimizer()?;
            f_i_star.push(f.value(&xi));
            minimizers.push(xi);
        }
        let eig = SymmetricEigen::new(mean_a.clone()).eigenvalues;
        let (mu, l_f) = (eig.min(), eig.max());

        let shared = minimizers.iter().all(|m| {
            m.sub(&minimizers[0]).norm() <= SHARED_MINIMIZER_TOLERANCE * (1.0 + minimizers[0].norm())
        });
        let (x_star, gaps) = if shared {
            (minimizers[0].clone(), vec![0.0; nodes.len()])
        } else {
            let mean = QuadraticNodeFunction::new(mean_a, mean_b, 0.0)?;
            let x_star = mean.minimizer()?;
            // f_i(x*) - f_i* = 1/2 (x* - x_i*)^T A_i (x* - x_i*)
            let gaps = nodes
                .iter()
                .zip(&minimizers)
                .map(|(f, xi)| {
                    let e = x_star.sub(xi);
                    0.5 * e.dot(&f.apply(&e))
                })
                .collect();
            (x_star, gaps)
        };
        let f_star = nodes.iter().map(|f| f.value(&x_star)).sum::<f64>() / n;
        let heterogeneity = 2.0 * l / n * gaps.iter().sum::<f64>();
        Ok(Self {
            l,
            l_f,
            mu,
            x_star,
            f_star,
            f_i_star,
            heterogeneity,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct ProblemInstance {
    nodes: Vec<QuadraticNodeFunction>,
    noise_sigma2: f64,
    initial_point: DenseVector,
    constants: ProblemConstants,
    /// Mean Hessian, kept for `suboptimality`.
    mean_hessian: QuadraticNodeFunction,
}

impl ProblemInstance {
    pub fn new(
        nodes: Vec<QuadraticNodeFunction>,
        noise_sigma2: f64,
        initial_point: DenseVector,
    ) -> Result<Self> {
        if !(noise_sigma2 >= 0.0 && noise_sigma2.is_finite()) {
            return Err(Error::param(format!("noise variance {noise_sigma2} must be >= 0")));
        }
        let constants = ProblemConstants::compute(&nodes)?;
        initial_point.ensure_dim(nodes[0].dim())?;
        let d = nodes[0].dim();
        let n = nodes.len() as f64;
        let mean_a = nodes.iter().fold(DMatrix::zeros(d, d), |acc, f| acc + &f.a / n);
        let mean_hessian = QuadraticNodeFunction::new(mean_a, DenseVector::zeros(d), 0.0)?;
        Ok(Self {
            nodes,
            noise_sigma2,
            initial_point,
            constants,
            mean_hessian,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn nodes(&self) -> &[QuadraticNodeFunction] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &QuadraticNodeFunction {
        &self.nodes[i]
    }

    pub fn noise_sigma2(&self) -> f64 {
        self.noise_sigma2
    }

    pub fn initial_point(&self) -> &DenseVector {
        &self.initial_point
    }

    pub fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    pub fn value(&self, x: &DenseVector) -> f64 {
        self.nodes.iter().map(|f| f.value(x)).sum::<f64>() / self.n() as f64
    }

    pub fn gradient(&self, x: &DenseVector) -> DenseVector {
        let mut g = DenseVector::zeros(self.dim());
        for f in &self.nodes {
            g.axpy(1.0 / self.n() as f64, &f.gradient(x));
        }
        g
    }

    /// `f(x) - f*`, evaluated as `1/2 (x - x*)^T A (x - x*)` with `A` the mean
    /// Hessian. Equal to `value(x) - f_star` in exact arithmetic but free of
    /// the cancellation that floors the difference near `1e-16 |f*|`.
    pub fn suboptimality(&self, x: &DenseVector) -> f64 {
        self.mean_hessian.value(&x.sub(&self.constants.x_star))
    }

    /// `||x^0 - x*||^2`
    pub fn initial_distance_sq(&self) -> f64 {
        self.initial_point.sub(&self.constants.x_star).norm_sq()
    }

    /// Stochastic gradient of node `i`: exact gradient plus zero-mean
    /// Gaussian noise of total variance `sigma2`.
    pub fn gradient_oracle<R: Rng + ?Sized>(
        &self,
        i: usize,
        x: &DenseVector,
        rng: &mut R,
    ) -> Result<DenseVector> {
        let node = self.nodes.get(i).ok_or_else(|| {
            Error::param(format!("node index {i} out of range for n = {}", self.n()))
        })?;
        x.ensure_dim(self.dim())?;
        let mut g = node.gradient(x);
        if self.noise_sigma2 > 0.0 {
            let sd = (self.noise_sigma2 / self.dim() as f64).sqrt();
            for v in g.as_mut_slice() {
                let z: f64 = StandardNormal.sample(rng);
                *v += sd * z;
            }
        }
        Ok(g)
    }
}

/// The three-node problem on which plain Top-1 compression diverges:
/// `f_j(x) = <a_j, x>^2 + 1/4 ||x||^2` with `a_1 = (-3, 2, 2)`,
/// `a_2 = (2, -3, 2)`, `a_3 = (2, 2, -3)`, started at `(t, t, t)`.
pub fn make_counterexample(t: f64) -> Result<ProblemInstance> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("counterexample needs t > 0 (got {t})")));
    }
    let directions = [[-3.0, 2.0, 2.0], [2.0, -3.0, 2.0], [2.0, 2.0, -3.0]];
    let nodes = directions
        .iter()
        .map(|a| {
            // Hessian of <a,x>^2 + 1/4 ||x||^2 is 2 a a^T + 1/2 I.
            let hess = DMatrix::from_fn(3, 3, |i, j| 2.0 * a[i] * a[j] + if i == j { 0.5 } else { 0.0 });
            QuadraticNodeFunction::new(hess, DenseVector::zeros(3), 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    ProblemInstance::new(nodes, 0.0, DenseVector::filled(3, t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomQuadraticParams {
    pub n: usize,
    pub d: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Distance of each node minimizer from the shared center.
    pub heterogeneity: f64,
    pub sigma2: f64,
    pub seed: u64,
}

/// Random strongly convex quadratics whose node Hessian spectra lie in
/// `[mu, L]` (both endpoints attained when `d >= 2`). Node minimizers sit at
/// a shared Gaussian center shifted by `heterogeneity` along random unit
/// directions; each `f_i* = 0`. Starts at the origin.
pub fn make_random_quadratic(params: &RandomQuadraticParams) -> Result<ProblemInstance> {
    let &RandomQuadraticParams {
        n,
        d,
        mu,
        l,
        heterogeneity,
        sigma2,
        seed,
    } = params;
    if n == 0 || d == 0 {
        return Err(Error::param("random quadratic needs n >= 1 and d >= 1"));
    }
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(Error::param(format!("spectrum bounds need 0 < mu <= L (mu = {mu}, L = {l})")));
    }
    if !(heterogeneity >= 0.0 && heterogeneity.is_finite()) {
        return Err(Error::param(format!("heterogeneity {heterogeneity} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let center: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let g = DMatrix::from_fn(d, d, |_, _| gaussian(&mut rng));
        let q = g.qr().q();
        let mut spectrum: Vec<f64> = (0..d).map(|_| rng.random_range(mu..=l)).collect();
        if d >= 2 {
            spectrum[0] = mu;
            spectrum[d - 1] = l;
        } else {
            spectrum[0] = mu;
        }
        let hess = &q * DMatrix::from_diagonal(&DVector::from_vec(spectrum)) * q.transpose();
        let hess = (&hess + hess.transpose()) * 0.5;

        let mut shift: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let norm = shift.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for s in &mut shift {
            *s *= heterogeneity / norm;
        }
        let minimizer = DVector::from_iterator(d, center.iter().zip(&shift).map(|(c, s)| c + s));
        let b = -(&hess * &minimizer);
        let c = 0.5 * minimizer.dot(&(&hess * &minimizer));
        nodes.push(QuadraticNodeFunction::new(
            hess,
            DenseVector::from_raw(b.iter().copied().collect()),
            c,
        )?);
    }
    ProblemInstance::new(nodes, sigma2, DenseVector::zeros(d))
}

pub fn problem_constants(problem: &ProblemInstance) -> Result<ProblemConstants> {
    ProblemConstants::compute(&problem.nodes)
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    /// Row-major Hessian.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    nodes: Vec<RawNode>,
    noise_sigma2: f64,
    initial_point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constants: Option<ProblemConstants>,
}

impl TryFrom<RawInstance> for ProblemInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let nodes = raw
            .nodes
            .into_iter()
            .map(|node| {
                let d = node.a.len();
                if node.a.iter().any(|row| row.len() != d) {
                    return Err(Error::Construction("Hessian rows have unequal length".into()));
                }
                let a = DMatrix::from_fn(d, d, |i, j| node.a[i][j]);
                QuadraticNodeFunction::new(a, DenseVector::new(node.b)?, node.c)
            })
            .collect::<Result<Vec<_>>>()?;
        // Stored constants are informational; they are always recomputed.
        ProblemInstance::new(nodes, raw.noise_sigma2, DenseVector::new(raw.initial_point)?)
    }
}

impl From<ProblemInstance> for RawInstance {
    fn from(p: ProblemInstance) -> Self {
        RawInstance {
            nodes: p
                .nodes
                .iter()
                .map(|f| RawNode {
                    a: f.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    b: f.b.as_slice().to_vec(),
                    c: f.c,
                })
                .collect(),
            noise_sigma2: p.noise_sigma2,
            initial_point: p.initial_point.into_inner(),
            constants: Some(p.constants),
        }
    }
}
