mod common;

use common::*;
use nszsl_core::eszsl::*;
use nszsl_core::nszsl::TrainingSet;
use nszsl_core::Matrix;
use rand::Rng;

/// `2 X (X^T V Z - Y) Z^T + 2 lambda V Z Z^T + 2 gamma X X^T V + 2 lambda gamma V`
fn gradient(t: &TrainingSet, v: &Matrix, c: &EszslConfig) -> Matrix {
    let (x, y, z) = (t.x(), t.y(), t.z());
    let r = x.tr_mul(&(v * z)) - y;
    (x * r * z.transpose()) * 2.0
        + (v * z * z.transpose()) * (2.0 * c.lambda)
        + (x * x.transpose() * v) * (2.0 * c.gamma)
        + v * (2.0 * c.lambda * c.gamma)
}

#[test]
fn gradient_agrees_with_finite_differences() {
    let mut rng = rng(41);
    for _ in 0..20 {
        let t = problem(&mut rng, 4, 6, 3, 12);
        let c = EszslConfig {
            gamma: 0.3,
            lambda: 2.0,
        };
        let v = uniform(&mut rng, 4, 6);
        let analytic = gradient(&t, &v, &c);
        let fd = finite_difference(&v, 1e-5, |w| eszsl_objective(&t, w, &c).unwrap());
        assert!((&analytic - &fd).norm() / analytic.norm() < 1e-5);
    }
}

#[test]
fn closed_form_is_stationary() {
    let mut rng = rng(42);
    for _ in 0..50 {
        // both the Woodbury (C < d̂) and the direct path
        let doc = rng.random_range(2..12);
        let classes = rng.random_range(2..8);
        let d = rng.random_range(2..10);
        let t = problem(&mut rng, d, doc, classes, 25);
        let c = EszslConfig {
            gamma: 10f64.powi(rng.random_range(-2..3)),
            lambda: 10f64.powi(rng.random_range(-2..3)),
        };
        let m = eszsl_fit(&t, &c).unwrap();
        assert!(stationarity_residual(&t, &m.v, &c).unwrap() <= 1e-8);
        let at_zero = gradient(&t, &Matrix::zeros(m.v.nrows(), m.v.ncols()), &c).norm();
        assert!(gradient(&t, &m.v, &c).norm() <= 1e-6 * (1.0 + at_zero));
    }
}

#[test]
fn closed_form_beats_perturbations() {
    let mut rng = rng(43);
    let t = problem(&mut rng, 5, 7, 4, 20);
    let c = EszslConfig::default();
    let m = eszsl_fit(&t, &c).unwrap();
    let best = eszsl_objective(&t, &m.v, &c).unwrap();
    for _ in 0..20 {
        let p = &m.v + uniform(&mut rng, 5, 7) * 1e-3;
        assert!(eszsl_objective(&t, &p, &c).unwrap() >= best);
    }
}
