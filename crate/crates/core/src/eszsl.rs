//! Single-matrix bilinear baseline with closed-form training.
//!
//! Minimises
//!
//! ```text
//! ||X^T V Z - Y||_F^2 + lambda ||V Z||_F^2 + gamma ||X^T V||_F^2 + lambda gamma ||V||_F^2
//! ```
//!
//! whose stationarity condition factors as
//! `(X X^T + lambda I) V (Z Z^T + gamma I) = X Y Z^T`.

use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::linsolve::{Matrix, SpdSolver, Vector};
use crate::model::{self, Compatibility};
use crate::nszsl::TrainingSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EszslConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for EszslConfig {
    fn default() -> Self {
        EszslConfig {
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

impl EszslConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EszslModel {
    #[serde(with = "crate::dataio::rows")]
    pub v: Matrix,
    pub config: EszslConfig,
    #[serde(default)]
    pub vocab_hash: Option<String>,
}

impl Compatibility for EszslModel {
    fn feat_dim(&self) -> usize {
        self.v.nrows()
    }

    fn doc_dim(&self) -> usize {
        self.v.ncols()
    }

    fn score_batch(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        model::check_dims(self, x, z)?;
        Ok(x.tr_mul(&(&self.v * z)))
    }
}

fn check_v(train: &TrainingSet, v: &Matrix) -> Result<()> {
    if v.nrows() != train.feat_dim() || v.ncols() != train.doc_dim() {
        return Err(dims(format!(
            "V is {}x{}, expected {}x{}",
            v.nrows(),
            v.ncols(),
            train.feat_dim(),
            train.doc_dim()
        )));
    }
    Ok(())
}

pub fn eszsl_objective(train: &TrainingSet, v: &Matrix, config: &EszslConfig) -> Result<f64> {
    check_v(train, v)?;
    let vz = v * train.z();
    let xtv = train.x().tr_mul(v);
    let loss = (train.x().tr_mul(&vz) - train.y()).norm_squared();
    Ok(loss
        + config.lambda * vz.norm_squared()
        + config.gamma * xtv.norm_squared()
        + config.lambda * config.gamma * v.norm_squared())
}

/// Right-multiplies `b` by `(Z Z^T + gamma I)^{-1}`. When Z has fewer columns
/// than rows the Woodbury identity keeps the solve at C x C.
fn apply_doc_inverse(b: &Matrix, z: &Matrix, gamma: f64) -> Result<Matrix> {
    let (rows, cols) = z.shape();
    if cols < rows {
        let mut small = z.tr_mul(z);
        for i in 0..cols {
            small[(i, i)] += gamma;
        }
        let bz = b * z;
        let t = SpdSolver::new(&small)?.solve(&bz.transpose())?;
        Ok((b - t.transpose() * z.transpose()) / gamma)
    } else {
        let t = SpdSolver::ridge(z, gamma)?.solve(&b.transpose())?;
        Ok(t.transpose())
    }
}

pub fn eszsl_fit(train: &TrainingSet, config: &EszslConfig) -> Result<EszslModel> {
    config.validate()?;
    let rhs = (train.x() * train.y()) * train.z().transpose();
    let left = SpdSolver::ridge(train.x(), config.lambda)?.solve(&rhs)?;
    let v = apply_doc_inverse(&left, train.z(), config.gamma)?;
    Ok(EszslModel {
        v,
        config: *config,
        vocab_hash: None,
    })
}

/// `||(X X^T + lambda I) V (Z Z^T + gamma I) - X Y Z^T||_F / ||X Y Z^T||_F`.
pub fn stationarity_residual(train: &TrainingSet, v: &Matrix, config: &EszslConfig) -> Result<f64> {
    check_v(train, v)?;
    let x = train.x();
    let z = train.z();
    let mut left = x * x.transpose();
    for i in 0..left.nrows() {
        left[(i, i)] += config.lambda;
    }
    let mut right = z * z.transpose();
    for i in 0..right.nrows() {
        right[(i, i)] += config.gamma;
    }
    let rhs = (x * train.y()) * z.transpose();
    Ok((left * v * right - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE))
}

pub fn eszsl_predict(model: &EszslModel, x: &Vector, unseen_z: &Matrix) -> Result<usize> {
    Ok(model::predict(model, x, unseen_z)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar() -> TrainingSet {
        TrainingSet::from_labels(Matrix::from_element(1, 1, 1.0), &[0], Matrix::from_element(1, 1, 1.0)).unwrap()
    }

    #[test]
    fn zero_v_objective_is_label_mass() {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let z = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let t = TrainingSet::from_labels(x, &[0, 1, 1], z).unwrap();
        assert_eq!(
            eszsl_objective(&t, &Matrix::zeros(2, 2), &EszslConfig::default()).unwrap(),
            3.0
        );
    }

    #[test]
    fn scalar_objective_and_fit() {
        let t = scalar();
        let cfg = EszslConfig::default();
        for v in [-1.0, 0.0, 0.25, 2.0] {
            let got = eszsl_objective(&t, &Matrix::from_element(1, 1, v), &cfg).unwrap();
            assert_relative_eq!(got, (v - 1.0) * (v - 1.0) + 3.0 * v * v, epsilon = 1e-14);
        }
        let m = eszsl_fit(&t, &cfg).unwrap();
        assert_relative_eq!(m.v[(0, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn woodbury_and_direct_paths_agree() {
        let z_tall = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let b = Matrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0]);
        let fast = apply_doc_inverse(&b, &z_tall, 0.7).unwrap();
        let mut full = &z_tall * z_tall.transpose();
        for i in 0..4 {
            full[(i, i)] += 0.7;
        }
        let direct = SpdSolver::new(&full)
            .unwrap()
            .solve(&b.transpose())
            .unwrap()
            .transpose();
        assert_relative_eq!(fast, direct, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(eszsl_fit(
            &scalar(),
            &EszslConfig {
                gamma: 0.0,
                lambda: 1.0
            }
        )
        .is_err());
    }
}
