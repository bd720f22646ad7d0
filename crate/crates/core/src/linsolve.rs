//! Dense linear-algebra kernels used by the solvers.
//!
//! Matrices are `nalgebra::DMatrix<f64>`, stored column-major. The
//! eigendecomposition, Cholesky and SVD factorizations come from nalgebra; the
//! Sylvester solvers are built on top of them.
//!
//! Positivity tests are scale-relative: an eigenvalue counts as positive when
//! it exceeds [`SPD_RELATIVE_TOL`] times the largest eigenvalue.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{dims, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry `||M - M^T||_F / ||M||_F` accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const SPD_RELATIVE_TOL: f64 = 1e-12;

const EIG_MAX_SWEEPS_PER_DIM: usize = 1000;

/// Eigendecomposition `M = Q diag(eigenvalues) Q^T` of a symmetric matrix,
/// eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactorization {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl SpdFactorization {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn smallest(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fails with `NotPositiveDefinite` unless every eigenvalue clears the
    /// scale-relative positivity threshold.
    pub fn require_positive_definite(&self) -> Result<()> {
        let largest = self.largest();
        let smallest = self.smallest();
        if !(largest > 0.0) || smallest <= SPD_RELATIVE_TOL * largest {
            return Err(Error::NotPositiveDefinite { smallest, largest });
        }
        Ok(())
    }

    pub fn reconstruct(&self) -> Matrix {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.eigenvalues[j];
        }
        scaled * q.transpose()
    }

    /// Applies `M^{-1}` to `rhs` through the eigenbasis.
    pub fn inverse_apply(&self, rhs: &Matrix) -> Matrix {
        let q = &self.eigenvectors;
        let mut proj = q.tr_mul(rhs);
        for (i, mut row) in proj.row_iter_mut().enumerate() {
            row /= self.eigenvalues[i];
        }
        q * proj
    }
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

pub fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / scale
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(dims(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn require_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
pub fn sym_eig(m: &Matrix) -> Result<SpdFactorization> {
    require_square(m, "sym_eig input")?;
    require_finite(m, "sym_eig input")?;
    let asym = relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NonSymmetric(asym));
    }
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIG_MAX_SWEEPS_PER_DIM * n)
        .ok_or_else(|| Error::NoConvergence(format!("symmetric eigensolver on {n}x{n} matrix")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpdFactorization {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigendecomposition that additionally enforces positive definiteness.
pub fn spd_factor(m: &Matrix) -> Result<SpdFactorization> {
    let f = sym_eig(m)?;
    f.require_positive_definite()?;
    Ok(f)
}

/// Reusable Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl SpdSolver {
    pub fn new(m: &Matrix) -> Result<Self> {
        require_square(m, "SPD solver matrix")?;
        let chol = Cholesky::new(m.clone()).ok_or_else(|| {
            let d = m.diagonal();
            Error::NotPositiveDefinite {
                smallest: d.min(),
                largest: d.max(),
            }
        })?;
        Ok(SpdSolver { chol })
    }

    /// Factor of `x x^T + ridge I`.
    pub fn ridge(x: &Matrix, ridge: f64) -> Result<Self> {
        if !(ridge > 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidInput(format!("ridge must be positive, got {ridge}")));
        }
        let mut gram = x * x.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        Self::new(&gram)
    }

    pub fn dimension(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if rhs.nrows() != self.dimension() {
            return Err(dims(format!(
                "SPD solve: rhs has {} rows, matrix dimension is {}",
                rhs.nrows(),
                self.dimension()
            )));
        }
        Ok(self.chol.solve(rhs))
    }
}

fn cholesky_solve(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    SpdSolver::new(m)?.solve(rhs)
}

/// Solves `m W = rhs` for symmetric positive definite `m`.
///
/// Positivity is checked on the spectrum (scale-relative), the solve itself
/// runs through a Cholesky factorization.
pub fn solve_spd(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    require_square(m, "solve_spd matrix")?;
    if rhs.nrows() != m.nrows() {
        return Err(dims(format!(
            "solve_spd: rhs has {} rows, matrix is {}x{}",
            rhs.nrows(),
            m.nrows(),
            m.ncols()
        )));
    }
    spd_factor(m)?;
    cholesky_solve(m, rhs)
}

/// `(x x^T + ridge I)^{-1} rhs`.
pub fn ridge_lstsq(x: &Matrix, ridge: f64, rhs: &Matrix) -> Result<Matrix> {
    if rhs.nrows() != x.nrows() {
        return Err(dims(format!(
            "ridge_lstsq: rhs has {} rows, x has {}",
            rhs.nrows(),
            x.nrows()
        )));
    }
    SpdSolver::ridge(x, ridge)?.solve(rhs)
}

fn check_pencil(alpha: &Vector, beta: &[f64]) -> Result<()> {
    let scale = alpha.iter().chain(beta.iter()).fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min_sum = alpha.min() + beta.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_sum > SPD_RELATIVE_TOL * scale) {
        return Err(Error::SingularPencil(min_sum));
    }
    Ok(())
}

/// Solves `a W + W b = c` where `a` is SPD and `b` is symmetric PSD.
///
/// Both coefficients are diagonalised, `a = U diag(alpha) U^T` and
/// `b = V diag(beta) V^T`, giving
/// `W = U [ (U^T c V)_ij / (alpha_i + beta_j) ] V^T`.
pub fn solve_sylvester_spd(a: &Matrix, b_sym: &Matrix, c: &Matrix) -> Result<Matrix> {
    require_square(a, "Sylvester left coefficient")?;
    require_square(b_sym, "Sylvester right coefficient")?;
    if c.nrows() != a.nrows() || c.ncols() != b_sym.nrows() {
        return Err(dims(format!(
            "Sylvester: a is {0}x{0}, b is {1}x{1}, c is {2}x{3}",
            a.nrows(),
            b_sym.nrows(),
            c.nrows(),
            c.ncols()
        )));
    }
    let fa = spd_factor(a)?;
    let fb = sym_eig(b_sym)?;
    let beta: Vec<f64> = fb.eigenvalues.iter().copied().collect();
    check_pencil(&fa.eigenvalues, &beta)?;

    let u = &fa.eigenvectors;
    let v = &fb.eigenvectors;
    let mut core = u.tr_mul(c) * v;
    for j in 0..core.ncols() {
        for i in 0..core.nrows() {
            core[(i, j)] /= fa.eigenvalues[i] + beta[j];
        }
    }
    Ok(u * core * v.transpose())
}

/// Solves `a W + W (g g^T) = c` where `a` is given by its SPD factorization and
/// the PSD right coefficient is supplied through a tall factor `g` (q x r).
///
/// Only the thin SVD of `g` is needed: on the orthogonal complement of
/// `range(g)` the right coefficient vanishes and the equation reduces to
/// `a W = c`. Cost is `O(m^2 q + m q r)` instead of the `O(q^3)` of a dense
/// eigendecomposition.
pub fn solve_sylvester_lowrank(a: &SpdFactorization, g: &Matrix, c: &Matrix) -> Result<Matrix> {
    let m = a.dimension();
    let q = g.nrows();
    if c.nrows() != m || c.ncols() != q {
        return Err(dims(format!(
            "low-rank Sylvester: a is {m}x{m}, factor is {q}x{}, c is {}x{}",
            g.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    a.require_positive_definite()?;

    let (basis, beta) = thin_left_basis(g)?;
    let mut all_beta = beta.clone();
    if basis.ncols() < q {
        all_beta.push(0.0);
    }
    check_pencil(&a.eigenvalues, &all_beta)?;

    let u = &a.eigenvectors;
    let alpha = &a.eigenvalues;
    // t = U^T c, s = t V_r
    let t = u.tr_mul(c);
    let s = &t * &basis;
    let mut inner = t;
    for (i, mut row) in inner.row_iter_mut().enumerate() {
        row /= alpha[i];
    }
    let mut correction = Matrix::zeros(m, basis.ncols());
    for k in 0..basis.ncols() {
        for i in 0..m {
            correction[(i, k)] = s[(i, k)] / (alpha[i] + beta[k]) - s[(i, k)] / alpha[i];
        }
    }
    inner += correction * basis.transpose();
    Ok(u * inner)
}

/// Solves `p W (g g^T) + lambda W = c` for symmetric PSD `p` (given by its
/// eigendecomposition), `lambda > 0` and a tall factor `g` (q x r).
///
/// Same solution as [`solve_sylvester_lowrank`] with `a = lambda p^{-1}` and
/// right-hand side `p^{-1} c`, but no inverse of `p` is formed. Every
/// eigen-denominator `lambda + p_i beta_j` is at least `lambda`, so singular
/// or badly conditioned `p` is fine.
pub fn solve_sylvester_scaled_lowrank(p: &SpdFactorization, lambda: f64, g: &Matrix, c: &Matrix) -> Result<Matrix> {
    ScaledSylvester::new(p, lambda, g)?.solve(c)
}

/// [`solve_sylvester_scaled_lowrank`] with the factorisations kept, for
/// several right-hand sides against the same coefficients.
#[derive(Debug, Clone)]
pub struct ScaledSylvester<'a> {
    p: &'a SpdFactorization,
    lambda: f64,
    clamped: Vec<f64>,
    basis: Matrix,
    beta: Vec<f64>,
}

impl<'a> ScaledSylvester<'a> {
    pub fn new(p: &'a SpdFactorization, lambda: f64, g: &Matrix) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        let largest = p.largest().max(0.0);
        if p.smallest() < -SPD_RELATIVE_TOL * largest {
            return Err(Error::NotPositiveDefinite {
                smallest: p.smallest(),
                largest,
            });
        }
        let (basis, beta) = thin_left_basis(g)?;
        Ok(ScaledSylvester {
            p,
            lambda,
            clamped: p.eigenvalues.iter().map(|v| v.max(0.0)).collect(),
            basis,
            beta,
        })
    }

    pub fn solve(&self, c: &Matrix) -> Result<Matrix> {
        let m = self.p.dimension();
        let q = self.basis.nrows();
        if c.nrows() != m || c.ncols() != q {
            return Err(dims(format!(
                "scaled Sylvester: p is {m}x{m}, factor has {q} rows, c is {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        let lambda = self.lambda;
        let u = &self.p.eigenvectors;
        let t = u.tr_mul(c);
        let s = &t * &self.basis;
        let mut inner = t / lambda;
        let mut correction = Matrix::zeros(m, self.basis.ncols());
        for k in 0..self.basis.ncols() {
            for i in 0..m {
                correction[(i, k)] = s[(i, k)] / (lambda + self.clamped[i] * self.beta[k]) - s[(i, k)] / lambda;
            }
        }
        inner += correction * self.basis.transpose();
        Ok(u * inner)
    }
}

/// Left singular vectors of `g` and the squared singular values.
fn thin_left_basis(g: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let q = g.nrows();
    if g.ncols() == 0 || q == 0 {
        return Ok((Matrix::zeros(q, 0), Vec::new()));
    }
    let svd = SVD::try_new(
        g.clone(),
        true,
        false,
        f64::EPSILON,
        EIG_MAX_SWEEPS_PER_DIM * g.ncols().max(1),
    )
    .ok_or_else(|| Error::NoConvergence(format!("SVD of {}x{} factor", q, g.ncols())))?;
    let basis = svd.u.expect("left singular vectors requested");
    let beta = svd.singular_values.iter().map(|s| s * s).collect();
    Ok((basis, beta))
}

/// `||a W + W b - c||_F / max(||c||_F, 1)`.
pub fn sylvester_residual(a: &Matrix, b: &Matrix, c: &Matrix, w: &Matrix) -> f64 {
    (a * w + w * b - c).norm() / c.norm().max(1.0)
}
