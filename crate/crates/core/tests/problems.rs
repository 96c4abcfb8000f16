mod common;

use common::*;
use dcsgd::problems::{make_counterexample, make_random_quadratic, RandomQuadraticParams};
use dcsgd::{DenseVector, ProblemInstance};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances() -> Vec<ProblemInstance> {
    let mut out = vec![make_counterexample(1.0).unwrap(), make_counterexample(0.3).unwrap()];
    for (seed, (n, d, het, sigma2)) in [(1, 3, 0.0, 0.0), (4, 5, 1.0, 0.0), (6, 2, 3.0, 0.5), (8, 4, 0.2, 0.0)]
        .into_iter()
        .enumerate()
    {
        out.push(
            make_random_quadratic(&RandomQuadraticParams {
                n,
                d,
                mu: 0.3,
                l: 4.0,
                heterogeneity: het,
                sigma2,
                seed: seed as u64,
            })
            .unwrap(),
        );
    }
    out
}

fn random_point(d: usize, scale: f64, rng: &mut impl Rng) -> DenseVector {
    DenseVector::new((0..d).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn to_na(x: &DenseVector) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

#[test]
fn constants_recomputed_independently() {
    for p in instances() {
        let n = p.n() as f64;
        let d = p.dim();
        let c = p.constants();
        let mut l: f64 = 0.0;
        let mut mean_a = DMatrix::zeros(d, d);
        let mut mean_b = DVector::zeros(d);
        let mut minimizers = Vec::new();
        for f in p.nodes() {
            l = l.max(SymmetricEigen::new(f.hessian().clone()).eigenvalues.max());
            mean_a += f.hessian() / n;
            mean_b += to_na(f.linear()) / n;
            minimizers.push(f.hessian().clone().lu().solve(&(-to_na(f.linear()))).unwrap());
        }
        assert!(rel_err(c.l, l) < 1e-10);
        let eig = SymmetricEigen::new(mean_a.clone()).eigenvalues;
        assert!(rel_err(c.mu, eig.min()) < 1e-10);
        assert!(rel_err(c.l_f, eig.max()) < 1e-10);
        assert!(c.mu <= c.l && c.heterogeneity >= 0.0);

        let x_star = mean_a.lu().solve(&(-mean_b)).unwrap();
        assert!((x_star - to_na(&c.x_star)).norm() < 1e-10 * (1.0 + c.x_star.norm()));
        let mut gap_sum = 0.0;
        for (i, (f, xi)) in p.nodes().iter().zip(&minimizers).enumerate() {
            let xi = DenseVector::new(xi.as_slice().to_vec()).unwrap();
            let fi_star = f.value(&xi);
            assert!((fi_star - c.f_i_star[i]).abs() < 1e-10 * (1.0 + fi_star.abs()));
            gap_sum += f.value(&c.x_star) - fi_star;
        }
        let d_want = 2.0 * l / n * gap_sum;
        assert!((c.heterogeneity - d_want).abs() < 1e-10 * (1.0 + d_want));
        assert!((p.value(&c.x_star) - c.f_star).abs() < 1e-12 * (1.0 + c.f_star.abs()));
    }
}

#[test]
fn quasi_convexity_holds_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in instances() {
        let c = p.constants();
        for _ in 0..1000 {
            let x = random_point(p.dim(), 5.0, &mut rng);
            let diff = c.x_star.sub(&x);
            let rhs = p.value(&x) + p.gradient(&x).dot(&diff) + 0.5 * c.mu * diff.norm_sq();
            assert!(c.f_star >= rhs - 1e-9 * (1.0 + rhs.abs()));
        }
    }
}

#[test]
fn expected_smoothness_holds_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in instances().into_iter().filter(|p| p.noise_sigma2() == 0.0) {
        let c = p.constants();
        for _ in 0..1000 {
            let x = random_point(p.dim(), 5.0, &mut rng);
            for (i, f) in p.nodes().iter().enumerate() {
                let g = f.gradient(&x).norm_sq();
                let bound = 2.0 * c.l * (f.value(&x) - c.f_i_star[i]);
                assert!(g <= bound * (1.0 + 1e-9) + 1e-9);
            }
        }
    }
}

#[test]
fn counterexample_values() {
    let p = make_counterexample(1.0).unwrap();
    let x0 = p.initial_point();
    assert_eq!(x0, &dense(&[1.0, 1.0, 1.0]));
    let g = p.gradient_oracle(0, x0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(g, dense(&[-5.5, 4.5, 4.5]));
    let c = p.constants();
    assert!(c.x_star.is_zero() && c.f_star == 0.0 && c.mu > 0.0);
    assert_eq!(c.heterogeneity, 0.0);
    assert!(make_counterexample(0.0).is_err());
    let t = 2.5;
    let g = make_counterexample(t).unwrap().gradient(&DenseVector::filled(3, t));
    assert!(g.norm() > 0.0);
}

#[test]
fn random_quadratic_examples() {
    let base = RandomQuadraticParams {
        n: 4,
        d: 6,
        mu: 0.5,
        l: 3.0,
        heterogeneity: 0.0,
        sigma2: 0.0,
        seed: 12,
    };
    assert_eq!(make_random_quadratic(&base).unwrap().constants().heterogeneity, 0.0);
    let single = make_random_quadratic(&RandomQuadraticParams { n: 1, heterogeneity: 2.0, ..base.clone() }).unwrap();
    assert_eq!(single.constants().heterogeneity, 0.0);
    for f in make_random_quadratic(&RandomQuadraticParams { heterogeneity: 1.0, ..base.clone() }).unwrap().nodes() {
        let eig = SymmetricEigen::new(f.hessian().clone()).eigenvalues;
        assert!(eig.min() >= 0.5 - 1e-10 && eig.max() <= 3.0 + 1e-10);
    }
    assert!(make_random_quadratic(&RandomQuadraticParams { mu: 4.0, ..base.clone() }).is_err());
    assert!(make_random_quadratic(&RandomQuadraticParams { mu: 0.0, ..base }).is_err());
}

#[test]
fn gradient_oracle_is_unbiased_with_set_variance() {
    const DRAWS: usize = 100_000;
    let p = make_random_quadratic(&RandomQuadraticParams {
        n: 2,
        d: 4,
        mu: 1.0,
        l: 2.0,
        heterogeneity: 1.0,
        sigma2: 4.0,
        seed: 5,
    })
    .unwrap();
    let x = dense(&[0.3, -1.0, 2.0, 0.5]);
    let exact = p.node(1).gradient(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sum = [0.0; 4];
    let mut total_var = 0.0;
    for _ in 0..DRAWS {
        let g = p.gradient_oracle(1, &x, &mut rng).unwrap();
        for (s, v) in sum.iter_mut().zip(g.iter()) {
            *s += v;
        }
        total_var += g.sub(&exact).norm_sq();
    }
    let se = (4.0 / 4.0 / DRAWS as f64).sqrt();
    for (s, e) in sum.iter().zip(exact.iter()) {
        assert!((s / DRAWS as f64 - e).abs() <= 4.0 * se);
    }
    assert!(rel_err(total_var / DRAWS as f64, 4.0) < 0.02);
    let quiet = make_counterexample(1.0).unwrap();
    let y = dense(&[0.3, -1.0, 2.0]);
    let a = quiet.gradient_oracle(2, &y, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = quiet.gradient_oracle(2, &y, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, quiet.node(2).gradient(&y));
}

#[test]
fn json_document_round_trips_and_recomputes_constants() {
    let p = make_random_quadratic(&RandomQuadraticParams {
        n: 3,
        d: 4,
        mu: 0.2,
        l: 5.0,
        heterogeneity: 1.5,
        sigma2: 0.1,
        seed: 77,
    })
    .unwrap();
    let json = serde_json::to_string(&p).unwrap();
    let back: ProblemInstance = serde_json::from_str(&json).unwrap();
    assert_eq!(back, p);
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = value["nodes"][0]["a"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1][0], value["nodes"][0]["a"][0][1]);
}

#[test]
fn suboptimality_matches_value_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for p in instances() {
        let c = p.constants();
        for _ in 0..200 {
            let x = random_point(p.dim(), 3.0, &mut rng);
            let direct = p.value(&x) - c.f_star;
            assert!((p.suboptimality(&x) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
        }
        assert_eq!(p.suboptimality(&c.x_star), 0.0);
    }
}
