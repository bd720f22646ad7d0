#![allow(dead_code)]

use nszsl_core::nszsl::TrainingSet;
use nszsl_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// `G G^T + I`
pub fn spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = uniform(rng, n, n);
    &g * g.transpose() + Matrix::identity(n, n)
}

/// PSD of the given rank (zero matrix for rank 0).
pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let g = uniform(rng, n, rank);
    &g * g.transpose()
}

/// Training set with every class present and random real-valued documents.
pub fn problem(rng: &mut ChaCha8Rng, d: usize, doc: usize, c: usize, n: usize) -> TrainingSet {
    let x = uniform(rng, d, n);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let z = uniform(rng, doc, c);
    TrainingSet::from_labels(x, &labels, z).unwrap()
}

/// Kronecker product, written out entry by entry.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    Matrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `a W + W b = c` through `(I ⊗ a + b^T ⊗ I) vec(W) = vec(c)`.
pub fn kron_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let m = a.nrows();
    let q = b.nrows();
    let big = kron(&Matrix::identity(q, q), a) + kron(&b.transpose(), &Matrix::identity(m, m));
    let rhs = nszsl_core::Vector::from_column_slice(c.as_slice());
    let v = big.lu().solve(&rhs).expect("nonsingular Kronecker system");
    Matrix::from_column_slice(m, q, v.as_slice())
}

/// The full training objective with the smoothed penalty, computed with
/// explicit loops over `X^T V Z`.
pub fn naive_objective(t: &TrainingSet, wx: &Matrix, wz: &Matrix, l1: f64, l2: f64, sigma: f64) -> f64 {
    let (x, y, z) = (t.x(), t.y(), t.z());
    let (d, n) = x.shape();
    let (doc, c) = z.shape();
    let m = wx.nrows();
    let mut v = vec![0.0; d * doc];
    for i in 0..d {
        for j in 0..doc {
            for k in 0..m {
                v[i * doc + j] += wx[(k, i)] * wz[(k, j)];
            }
        }
    }
    let mut vz = vec![0.0; d * c];
    for i in 0..d {
        for cc in 0..c {
            for j in 0..doc {
                vz[i * c + cc] += v[i * doc + j] * z[(j, cc)];
            }
        }
    }
    let mut loss = 0.0;
    for s in 0..n {
        for cc in 0..c {
            let mut score = 0.0;
            for i in 0..d {
                score += x[(i, s)] * vz[i * c + cc];
            }
            loss += (score - y[(s, cc)]).powi(2);
        }
    }
    let matching: f64 = vz.iter().map(|v| v * v).sum();
    let mut penalty = 0.0;
    for j in 0..doc {
        let mut sq = 0.0;
        for k in 0..m {
            sq += wz[(k, j)] * wz[(k, j)];
        }
        penalty += (sq + sigma).sqrt();
    }
    loss + l1 * matching + l2 * penalty
}

/// Gradients of the smoothed objective with respect to `Wx` and `Wz`.
pub fn gradients(t: &TrainingSet, wx: &Matrix, wz: &Matrix, l1: f64, l2: f64, sigma: f64) -> (Matrix, Matrix) {
    let v = wx.tr_mul(wz);
    let r = t.x().tr_mul(&(&v * t.z())) - t.y();
    let gv = (t.x() * r * t.z().transpose()) * 2.0 + (&v * t.z() * t.z().transpose()) * (2.0 * l1);
    let gx = wz * gv.transpose();
    let mut gz = wx * &gv;
    for (i, mut col) in gz.column_iter_mut().enumerate() {
        let w = wz.column(i);
        col += &w * (l2 / (w.norm_squared() + sigma).sqrt());
    }
    (gx, gz)
}

/// Gradient descent with Armijo backtracking and a step that grows after
/// every accepted move. `fixed_wx` restricts the descent to `Wz`.
pub fn gradient_descent(
    t: &TrainingSet,
    mut wx: Matrix,
    mut wz: Matrix,
    (l1, l2, sigma): (f64, f64, f64),
    steps: usize,
    fixed_wx: bool,
) -> (Matrix, Matrix, f64) {
    let f = |wx: &Matrix, wz: &Matrix| naive_objective(t, wx, wz, l1, l2, sigma);
    let mut value = f(&wx, &wz);
    let mut step = 1e-3;
    for _ in 0..steps {
        let (mut gx, gz) = gradients(t, &wx, &wz, l1, l2, sigma);
        if fixed_wx {
            gx.fill(0.0);
        }
        let g2 = gx.norm_squared() + gz.norm_squared();
        if g2 == 0.0 {
            break;
        }
        loop {
            let nx = &wx - &gx * step;
            let nz = &wz - &gz * step;
            let nv = f(&nx, &nz);
            if nv <= value - 0.5 * step * g2 {
                wx = nx;
                wz = nz;
                value = nv;
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return (wx, wz, value);
            }
        }
    }
    (wx, wz, value)
}

/// Central finite-difference gradient of `f` at `w`.
pub fn finite_difference(w: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(w.nrows(), w.ncols());
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            let mut plus = w.clone();
            plus[(i, j)] += h;
            let mut minus = w.clone();
            minus[(i, j)] -= h;
            g[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}
