//! Noise-suppressed zero-shot learning.
//!
//! The compatibility between an image feature `x` and a class description `z`
//! is `x^T Wx^T Wz z`. Training minimises
//!
//! ```text
//! ||X^T Wx^T Wz Z - Y||_F^2 + lambda1 ||Wx^T Wz Z||_F^2 + lambda2 sum_i ||Wz[:, i]||_2
//! ```
//!
//! by alternating two convex subproblems. With `Wx` fixed, the l2,1 term is
//! handled by iterative reweighting: each pass solves a Sylvester equation with
//! a diagonal weight `D` and then refreshes `D` from the new columns of `Wz`.
//! With `Wz` fixed, `Wx` has a closed form.
//!
//! The l2,1 norm is smoothed as `sum_i sqrt(||w_i||^2 + sigma)` inside the
//! solver; every trace value reported here uses that smoothed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linsolve::{self, Matrix, SpdFactorization, SpdSolver, Vector};
use crate::model::{self, Compatibility};
use crate::textpipe::{DocMatrix, Vocabulary};

/// Iterative-refinement passes on each inner Sylvester solve; Wx can grow large
/// enough that a single eigen-based solve loses several digits.
const REFINE_STEPS: usize = 3;

/// Seen-class training data: features `x` (d x N), one-hot labels `y`
/// (N x C) and class descriptions `z` (d̂ x C).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    x: Matrix,
    y: Matrix,
    z: Matrix,
    labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(x: Matrix, y: Matrix, z: Matrix) -> Result<Self> {
        if x.ncols() != y.nrows() {
            return Err(dims(format!("x has {} examples, y has {} rows", x.ncols(), y.nrows())));
        }
        if y.ncols() != z.ncols() {
            return Err(dims(format!(
                "y has {} classes, z has {} columns",
                y.ncols(),
                z.ncols()
            )));
        }
        if x.ncols() == 0 || x.nrows() == 0 || z.nrows() == 0 || z.ncols() == 0 {
            return Err(dims("training set has an empty dimension"));
        }
        for (what, m) in [("x", &x), ("y", &y), ("z", &z)] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
            }
        }
        let mut labels = Vec::with_capacity(y.nrows());
        for (n, row) in y.row_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::InvalidInput(format!("label row {n} is not one-hot")));
            }
            labels.push(row.iter().position(|&v| v == 1.0).unwrap());
        }
        Ok(TrainingSet { x, y, z, labels })
    }

    pub fn from_labels(x: Matrix, labels: &[usize], z: Matrix) -> Result<Self> {
        let c = z.ncols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(dims(format!("label {bad} out of range for {c} classes")));
        }
        let y = Matrix::from_fn(labels.len(), c, |n, k| if labels[n] == k { 1.0 } else { 0.0 });
        Self::new(x, y, z)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feat_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn doc_dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.z.ncols()
    }

    pub fn num_examples(&self) -> usize {
        self.x.ncols()
    }

    /// Keeps only the examples of `classes` and re-indexes labels to the
    /// order given. Rows of `y` and columns of `z` for other classes are dropped.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<(Matrix, Vec<usize>, Matrix)> {
        let mut remap = vec![usize::MAX; self.num_classes()];
        for (new, &old) in classes.iter().enumerate() {
            if old >= self.num_classes() {
                return Err(dims(format!("class {old} out of range")));
            }
            remap[old] = new;
        }
        let keep: Vec<usize> = (0..self.num_examples())
            .filter(|&n| remap[self.labels[n]] != usize::MAX)
            .collect();
        let x = self.x.select_columns(keep.iter());
        let labels = keep.iter().map(|&n| remap[self.labels[n]]).collect();
        let z = self.z.select_columns(classes.iter());
        Ok((x, labels, z))
    }

    pub fn subset(&self, classes: &[usize]) -> Result<TrainingSet> {
        let (x, labels, z) = self.restrict_to_classes(classes)?;
        TrainingSet::from_labels(x, &labels, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// `lambda2 * sum_i ||Wz[:, i]||_2`, the noise-suppression penalty.
    #[default]
    L21,
    /// `lambda2 * ||Wz||_F^2`, the ablation without column coupling.
    Frobenius,
}

impl std::str::FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l21" => Ok(Regularizer::L21),
            "frobenius" => Ok(Regularizer::Frobenius),
            other => Err(Error::InvalidInput(format!("unknown regularizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub regularizer: Regularizer,
    pub epsilon_ridge: f64,
    /// Number of rows of `Wx` and `Wz`. `None` uses the number of seen classes.
    #[serde(default)]
    pub rank: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            sigma: 1e-6,
            max_outer: 100,
            max_inner: 50,
            rel_tol: 1e-5,
            seed: 0,
            regularizer: Regularizer::L21,
            epsilon_ridge: 1e-8,
            rank: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda1", self.lambda1)?;
        positive("lambda2", self.lambda2)?;
        positive("sigma", self.sigma)?;
        positive("rel_tol", self.rel_tol)?;
        positive("epsilon_ridge", self.epsilon_ridge)?;
        if self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::InvalidInput("max_inner and max_outer must be at least 1".into()));
        }
        if self.rank == Some(0) {
            return Err(Error::InvalidInput("rank must be at least 1".into()));
        }
        Ok(())
    }
}

/// Terms of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub total: f64,
    pub loss: f64,
    pub reg_match: f64,
    pub reg_l21: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HalfStep {
    Wz,
    Wx,
}

/// Objective after one half-step of the alternation. `reg_wz` is the penalty
/// the solver actually minimises (smoothed l2,1 or squared Frobenius norm),
/// `reg_l21` the exact l2,1 norm for reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub step: HalfStep,
    pub total: f64,
    pub loss: f64,
    pub reg_match: f64,
    pub reg_wz: f64,
    pub reg_l21: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    #[serde(with = "crate::dataio::rows")]
    pub wx: Matrix,
    #[serde(with = "crate::dataio::rows")]
    pub wz: Matrix,
    pub config: SolverConfig,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    /// Inner solves that stopped at `max_inner` without meeting `rel_tol`.
    pub inner_unconverged: usize,
    /// False when `rank` overrode the number of seen classes.
    pub conformant: bool,
    #[serde(default)]
    pub vocab_hash: Option<String>,
}

impl ModelWeights {
    pub fn rank(&self) -> usize {
        self.wx.nrows()
    }

    pub fn feat_dim(&self) -> usize {
        self.wx.ncols()
    }

    pub fn doc_dim(&self) -> usize {
        self.wz.ncols()
    }

    /// The compatibility matrix `V = Wx^T Wz` (d x d̂).
    pub fn compatibility(&self) -> Matrix {
        self.wx.tr_mul(&self.wz)
    }
}

impl Compatibility for ModelWeights {
    fn feat_dim(&self) -> usize {
        self.wx.ncols()
    }

    fn doc_dim(&self) -> usize {
        self.wz.ncols()
    }

    fn score_batch(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        model::check_dims(self, x, z)?;
        let left = &self.wx * x;
        let right = &self.wz * z;
        Ok(left.tr_mul(&right))
    }
}

/// Sum of column l2-norms.
pub fn l21_norm(w: &Matrix) -> f64 {
    w.column_iter().map(|c| c.norm()).sum()
}

/// `sum_i sqrt(||w_i||^2 + sigma)`.
pub fn smoothed_l21(w: &Matrix, sigma: f64) -> f64 {
    w.column_iter().map(|c| (c.norm_squared() + sigma).sqrt()).sum()
}

/// Reweighting diagonal `d_i = 1 / (2 sqrt(||w_i||^2 + sigma))`.
pub fn update_d(wz: &Matrix, sigma: f64) -> Vector {
    Vector::from_iterator(
        wz.ncols(),
        wz.column_iter().map(|c| 0.5 / (c.norm_squared() + sigma).sqrt()),
    )
}

fn check_weights(train: &TrainingSet, wx: &Matrix, wz: &Matrix) -> Result<()> {
    if wx.ncols() != train.feat_dim() || wz.ncols() != train.doc_dim() || wx.nrows() != wz.nrows() {
        return Err(dims(format!(
            "weights Wx {}x{}, Wz {}x{} do not fit d={}, d̂={}",
            wx.nrows(),
            wx.ncols(),
            wz.nrows(),
            wz.ncols(),
            train.feat_dim(),
            train.doc_dim()
        )));
    }
    Ok(())
}

/// Exact objective with the true l2,1 norm, evaluated directly from `X`.
pub fn objective(train: &TrainingSet, wx: &Matrix, wz: &Matrix, lambda1: f64, lambda2: f64) -> Result<Objective> {
    check_weights(train, wx, wz)?;
    let v_z = wx.tr_mul(&(wz * train.z()));
    let loss = (train.x().tr_mul(&v_z) - train.y()).norm_squared();
    let reg_match = v_z.norm_squared();
    let reg_l21 = l21_norm(wz);
    Ok(Objective {
        total: loss + lambda1 * reg_match + lambda2 * reg_l21,
        loss,
        reg_match,
        reg_l21,
    })
}

pub fn model_objective(train: &TrainingSet, model: &ModelWeights) -> Result<Objective> {
    objective(train, &model.wx, &model.wz, model.config.lambda1, model.config.lambda2)
}

/// Result of one Wz subproblem solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub wz: Matrix,
    /// Surrogate objective after each reweighting pass.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Largest relative Sylvester residual over all passes.
    pub max_residual: f64,
}

/// Quantities that stay fixed for the whole alternation.
struct Problem<'a> {
    train: &'a TrainingSet,
    config: &'a SolverConfig,
    /// X X^T
    xxt: Matrix,
    /// X Y
    xy: Matrix,
    /// ||Y||_F^2
    yy: f64,
}

/// Quantities that depend on `Wx` only.
struct WxTerms {
    wx: Matrix,
    /// Wx X X^T Wx^T
    k: Matrix,
    /// Wx Wx^T
    gram: Matrix,
    /// Wx X Y
    l: Matrix,
}

impl<'a> Problem<'a> {
    fn new(train: &'a TrainingSet, config: &'a SolverConfig) -> Self {
        let x = train.x();
        Problem {
            train,
            config,
            xxt: x * x.transpose(),
            xy: x * train.y(),
            yy: train.y().norm_squared(),
        }
    }

    fn wx_terms(&self, wx: &Matrix) -> WxTerms {
        WxTerms {
            wx: wx.clone(),
            k: wx * &self.xxt * wx.transpose(),
            gram: wx * wx.transpose(),
            l: wx * &self.xy,
        }
    }

    /// (loss, reg_match) via the Gram identities on `M = Wx^T Wz Z`. Going
    /// through M rather than `Wx X X^T Wx^T` keeps the accuracy when the scale
    /// drifts between Wx and Wz.
    fn fit_terms(&self, t: &WxTerms, g: &Matrix) -> (f64, f64) {
        let m = t.wx.tr_mul(g);
        let quad = m.dot(&(&self.xxt * &m));
        let cross = m.dot(&self.xy);
        let loss = (quad - 2.0 * cross + self.yy).max(0.0);
        (loss, m.norm_squared())
    }

    fn penalty(&self, wz: &Matrix) -> f64 {
        match self.config.regularizer {
            Regularizer::L21 => smoothed_l21(wz, self.config.sigma),
            Regularizer::Frobenius => wz.norm_squared(),
        }
    }

    fn surrogate(&self, t: &WxTerms, wz: &Matrix) -> f64 {
        let g = wz * self.train.z();
        let (loss, reg_match) = self.fit_terms(t, &g);
        loss + self.config.lambda1 * reg_match + self.config.lambda2 * self.penalty(wz)
    }

    fn trace_entry(&self, iteration: usize, step: HalfStep, wx: &Matrix, wz: &Matrix) -> TraceEntry {
        let t = self.wx_terms(wx);
        let g = wz * self.train.z();
        let (loss, reg_match) = self.fit_terms(&t, &g);
        let reg_wz = self.penalty(wz);
        TraceEntry {
            iteration,
            step,
            total: loss + self.config.lambda1 * reg_match + self.config.lambda2 * reg_wz,
            loss,
            reg_match,
            reg_wz,
            reg_l21: l21_norm(wz),
        }
    }

    /// Eigendecomposition of an m x m Gram matrix, adding
    /// `epsilon_ridge * trace / m` to the diagonal if it is not positive definite.
    fn factor_with_repair(&self, mut m: Matrix) -> Result<SpdFactorization> {
        m = (&m + m.transpose()) * 0.5;
        match linsolve::spd_factor(&m) {
            Ok(f) => Ok(f),
            Err(Error::NotPositiveDefinite { .. }) => {
                let n = m.nrows();
                let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
                for i in 0..n {
                    m[(i, i)] += self.config.epsilon_ridge * scale;
                }
                linsolve::spd_factor(&m)
            }
            Err(e) => Err(e),
        }
    }

    fn solve_wz(&self, wx: &Matrix, init: Option<&Matrix>) -> Result<InnerSolve> {
        let cfg = self.config;
        let z = self.train.z();
        let t = self.wx_terms(wx);

        // P Wz Z Z^T + lambda2 Wz D = R is A Wz + Wz Z Z^T D^{-1} = C multiplied
        // through by P, with A = lambda2 P^{-1}. Working with P avoids its inverse.
        let p = &t.k + &t.gram * cfg.lambda1;
        let fp = linsolve::sym_eig(&((&p + p.transpose()) * 0.5))?;
        let r = &t.l * z.transpose();
        let m = fp.dimension();

        let (mut d, passes) = match (cfg.regularizer, init) {
            (Regularizer::Frobenius, _) => (Vector::from_element(z.nrows(), 1.0), 1),
            (Regularizer::L21, Some(w0)) => (update_d(w0, cfg.sigma), cfg.max_inner),
            (Regularizer::L21, None) => (Vector::from_element(z.nrows(), 1.0), cfg.max_inner),
        };

        let mut trace = Vec::new();
        let mut max_residual = 0.0_f64;
        let mut converged = cfg.regularizer == Regularizer::Frobenius;
        let mut wz = Matrix::zeros(m, z.nrows());
        let lambda2 = cfg.lambda2;
        let p_vals: Vec<f64> = fp.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let u = &fp.eigenvectors;
        for _ in 0..passes {
            // With G = Wz Z the system P Wz Z Z^T + lambda2 Wz D = R reduces to
            // P G K + lambda2 G = R D^{-1} Z, K = Z^T D^{-1} Z, which is C x C.
            let inv_d: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
            let mut z_scaled = z.clone();
            for (i, mut row) in z_scaled.row_iter_mut().enumerate() {
                row *= inv_d[i];
            }
            let fk = {
                let k = z.tr_mul(&z_scaled);
                linsolve::sym_eig(&((&k + k.transpose()) * 0.5))?
            };
            let beta: Vec<f64> = fk.eigenvalues.iter().map(|v| v.max(0.0)).collect();
            let v = &fk.eigenvectors;
            let solve = |e: &Matrix| -> Matrix {
                let mut g = u.tr_mul(&(e * &z_scaled)) * v;
                for k in 0..g.ncols() {
                    for i in 0..g.nrows() {
                        g[(i, k)] /= lambda2 + p_vals[i] * beta[k];
                    }
                }
                let g = u * g * v.transpose();
                let mut w = (e - &p * (g * z.transpose())) / lambda2;
                for (i, mut col) in w.column_iter_mut().enumerate() {
                    col *= inv_d[i];
                }
                w
            };
            let apply = |w: &Matrix| {
                let mut out = &p * ((w * z) * z.transpose());
                for (i, mut col) in out.column_iter_mut().enumerate() {
                    col.axpy(lambda2 * d[i], &w.column(i), 1.0);
                }
                out
            };
            wz = solve(&r);
            let mut err = &r - apply(&wz);
            let floor = 1e-14 * r.norm();
            for _ in 0..REFINE_STEPS {
                if err.norm() <= floor {
                    break;
                }
                let corrected = &wz + solve(&err);
                let next = &r - apply(&corrected);
                if next.norm() >= err.norm() {
                    break;
                }
                wz = corrected;
                err = next;
            }
            max_residual = max_residual.max(err.norm() / r.norm().max(1.0));

            let f = self.surrogate(&t, &wz);
            let done = trace
                .last()
                .map(|&prev: &f64| (prev - f).abs() <= cfg.rel_tol * prev.abs())
                .unwrap_or(false);
            trace.push(f);
            if cfg.regularizer == Regularizer::Frobenius {
                break;
            }
            if done {
                converged = true;
                break;
            }
            d = update_d(&wz, cfg.sigma);
        }
        if !wz.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence("Wz solve produced non-finite values".into()));
        }
        Ok(InnerSolve {
            wz,
            trace,
            converged,
            max_residual,
        })
    }

    /// Wx = (G G^T)^{-1} G (X Y)^T (X X^T + lambda1 I)^{-1}, with G = Wz Z.
    fn solve_wx(&self, wz: &Matrix, ridge: &SpdSolver) -> Result<Matrix> {
        let g = wz * self.train.z();
        let gram = &g * g.transpose();
        let fg = self.factor_with_repair(gram).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::SingularGram,
            other => other,
        })?;
        // (X X^T + lambda1 I)^{-1} X Y G^T, then the m x m Gram inverse on the right.
        let left = ridge.solve(&(&self.xy * g.transpose()))?;
        let wx_t = fg.inverse_apply(&left.transpose()).transpose();
        Ok(wx_t.transpose())
    }

    fn ridge(&self) -> Result<SpdSolver> {
        let mut m = self.xxt.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.config.lambda1;
        }
        SpdSolver::new(&m)
    }
}

/// Solves the Wz subproblem for fixed `wx`, starting from `D = I`.
pub fn solve_wz(train: &TrainingSet, wx: &Matrix, config: &SolverConfig) -> Result<InnerSolve> {
    solve_wz_from(train, wx, config, None)
}

/// Like [`solve_wz`], but when `init` is given the first weighting is built
/// from its columns, so the first pass already decreases the surrogate
/// relative to `init`.
pub fn solve_wz_from(
    train: &TrainingSet,
    wx: &Matrix,
    config: &SolverConfig,
    init: Option<&Matrix>,
) -> Result<InnerSolve> {
    config.validate()?;
    if wx.ncols() != train.feat_dim() {
        return Err(dims(format!("Wx has {} columns, d = {}", wx.ncols(), train.feat_dim())));
    }
    if let Some(w0) = init {
        check_weights(train, wx, w0)?;
    }
    Problem::new(train, config).solve_wz(wx, init)
}

/// Closed-form minimiser over Wx for fixed `wz`.
pub fn solve_wx(train: &TrainingSet, wz: &Matrix, config: &SolverConfig) -> Result<Matrix> {
    config.validate()?;
    if wz.ncols() != train.doc_dim() {
        return Err(dims(format!("Wz has {} columns, d̂ = {}", wz.ncols(), train.doc_dim())));
    }
    let problem = Problem::new(train, config);
    let ridge = problem.ridge()?;
    problem.solve_wx(wz, &ridge)
}

/// The subproblem objective (smoothed penalty) the inner loop minimises.
pub fn surrogate_objective(train: &TrainingSet, wx: &Matrix, wz: &Matrix, config: &SolverConfig) -> Result<f64> {
    check_weights(train, wx, wz)?;
    let problem = Problem::new(train, config);
    Ok(problem.surrogate(&problem.wx_terms(wx), wz))
}

/// Gaussian initialisation of Wx with standard deviation `1/sqrt(d)`.
pub fn init_wx(rank: usize, feat_dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (feat_dim as f64).sqrt()).expect("positive std");
    let values: Vec<f64> = (0..rank * feat_dim).map(|_| normal.sample(&mut rng)).collect();
    Matrix::from_row_slice(rank, feat_dim, &values)
}

/// Alternating minimisation: Wz subproblem, then the closed-form Wx step,
/// until the objective's relative change drops below `rel_tol`.
pub fn fit(train: &TrainingSet, config: &SolverConfig) -> Result<ModelWeights> {
    config.validate()?;
    let rank = config.rank.unwrap_or(train.num_classes());
    let problem = Problem::new(train, config);
    let ridge = problem.ridge()?;

    let mut wx = init_wx(rank, train.feat_dim(), config.seed);
    let mut wz: Option<Matrix> = None;
    let mut trace = Vec::with_capacity(2 * config.max_outer);
    let mut converged = false;
    let mut inner_unconverged = 0;
    let mut prev_total: Option<f64> = None;

    for iteration in 1..=config.max_outer {
        let inner = problem.solve_wz(&wx, wz.as_ref())?;
        if !inner.converged {
            inner_unconverged += 1;
        }
        trace.push(problem.trace_entry(iteration, HalfStep::Wz, &wx, &inner.wz));
        wx = problem.solve_wx(&inner.wz, &ridge)?;
        let entry = problem.trace_entry(iteration, HalfStep::Wx, &wx, &inner.wz);
        trace.push(entry);
        wz = Some(inner.wz);
        if let Some(prev) = prev_total {
            if (prev - entry.total).abs() <= config.rel_tol * prev.abs() {
                converged = true;
                break;
            }
        }
        prev_total = Some(entry.total);
    }

    let wz = wz.expect("at least one outer iteration");
    if !wx.iter().chain(wz.iter()).all(|v| v.is_finite()) {
        return Err(Error::NoConvergence("alternation produced non-finite weights".into()));
    }
    Ok(ModelWeights {
        wx,
        wz,
        config: config.clone(),
        trace,
        converged,
        inner_unconverged,
        conformant: rank == train.num_classes(),
        vocab_hash: None,
    })
}

/// Objective trace as CSV, one row per half-step.
pub fn trace_to_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("# nszsl trace v1\niteration,step,total,loss,reg_match,reg_wz,reg_l21\n");
    for e in trace {
        let step = match e.step {
            HalfStep::Wz => "wz",
            HalfStep::Wx => "wx",
        };
        out.push_str(&format!(
            "{},{step},{:?},{:?},{:?},{:?},{:?}\n",
            e.iteration, e.total, e.loss, e.reg_match, e.reg_wz, e.reg_l21
        ));
    }
    out
}

/// Best unseen class for `x` and the full score vector; ties go to the lowest index.
pub fn predict(model: &ModelWeights, x: &Vector, unseen_z: &Matrix) -> Result<(usize, Vector)> {
    model::predict(model, x, unseen_z)
}

pub fn predict_topk(model: &ModelWeights, x: &Vector, unseen_z: &Matrix, k: usize) -> Result<Vec<usize>> {
    model::predict_topk(model, x, unseen_z, k)
}

/// Per-word relevance: the l2-norm of each column of Wz.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights {
    pub values: Vec<f64>,
}

impl ImportanceWeights {
    pub fn gini(&self) -> f64 {
        gini(&self.values)
    }
}

pub fn importance_weights(model: &ModelWeights) -> ImportanceWeights {
    ImportanceWeights {
        values: model.wz.column_iter().map(|c| c.norm()).collect(),
    }
}

/// Gini coefficient of non-negative values; 0 for uniform or all-zero input.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
    2.0 * weighted / (n as f64 * total) - (n as f64 + 1.0) / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassTopWords {
    pub class_id: String,
    pub words: Vec<(String, f64)>,
}

/// For each class, the words present in its description ranked by importance
/// weight (descending, lowest index first on ties), at most `k` of them.
pub fn top_words_per_class(
    model: &ModelWeights,
    vocab: &Vocabulary,
    z: &DocMatrix,
    k: usize,
) -> Result<Vec<ClassTopWords>> {
    let weights = importance_weights(model);
    if vocab.len() != model.doc_dim() || z.vocab_size() != model.doc_dim() {
        return Err(dims(format!(
            "model has d̂ = {}, vocabulary {}, doc matrix {}",
            model.doc_dim(),
            vocab.len(),
            z.vocab_size()
        )));
    }
    Ok(z.class_ids
        .iter()
        .enumerate()
        .map(|(c, id)| {
            let mut present: Vec<usize> = (0..z.vocab_size()).filter(|&i| z.entries[(i, c)] != 0.0).collect();
            present.sort_by(|&a, &b| weights.values[b].total_cmp(&weights.values[a]).then(a.cmp(&b)));
            ClassTopWords {
                class_id: id.clone(),
                words: present
                    .into_iter()
                    .take(k)
                    .map(|i| (vocab.term(i).to_string(), weights.values[i]))
                    .collect(),
            }
        })
        .collect())
}
