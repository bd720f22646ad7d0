//! Bilinear compatibility scoring shared by the trained models.

use serde::{Deserialize, Serialize};

use crate::error::{dims, Result};
use crate::eszsl::EszslModel;
use crate::linsolve::{Matrix, Vector};
use crate::nszsl::ModelWeights;

/// A model that scores image features against class descriptions with a
/// bilinear form `x^T V z`.
pub trait Compatibility {
    fn feat_dim(&self) -> usize;
    fn doc_dim(&self) -> usize;

    /// Scores for every (example, class) pair: `x` is d x n, `z` is d̂ x c,
    /// the result n x c.
    fn score_batch(&self, x: &Matrix, z: &Matrix) -> Result<Matrix>;

    fn scores(&self, x: &Vector, z: &Matrix) -> Result<Vector> {
        let x = Matrix::from_column_slice(x.len(), 1, x.as_slice());
        Ok(self.score_batch(&x, z)?.row(0).transpose())
    }
}

pub(crate) fn check_dims<M: Compatibility + ?Sized>(model: &M, x: &Matrix, z: &Matrix) -> Result<()> {
    if x.nrows() != model.feat_dim() {
        return Err(dims(format!(
            "features have d = {}, model expects {}",
            x.nrows(),
            model.feat_dim()
        )));
    }
    if z.nrows() != model.doc_dim() {
        return Err(dims(format!(
            "documents have d̂ = {}, model expects {}",
            z.nrows(),
            model.doc_dim()
        )));
    }
    if z.ncols() == 0 {
        return Err(dims("no candidate classes"));
    }
    Ok(())
}

/// Indices sorted by descending score, lowest index first among ties.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict<M: Compatibility + ?Sized>(model: &M, x: &Vector, z: &Matrix) -> Result<(usize, Vector)> {
    let s = model.scores(x, z)?;
    Ok((argmax(s.as_slice()), s))
}

pub fn predict_topk<M: Compatibility + ?Sized>(model: &M, x: &Vector, z: &Matrix, k: usize) -> Result<Vec<usize>> {
    let s = model.scores(x, z)?;
    let mut order = rank_scores(s.as_slice());
    order.truncate(k);
    Ok(order)
}

/// Either trained model, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Nszsl(ModelWeights),
    Eszsl(EszslModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Nszsl(_) => "nszsl",
            Model::Eszsl(_) => "eszsl",
        }
    }

    pub fn vocab_hash(&self) -> Option<&str> {
        match self {
            Model::Nszsl(m) => m.vocab_hash.as_deref(),
            Model::Eszsl(m) => m.vocab_hash.as_deref(),
        }
    }

    pub fn set_vocab_hash(&mut self, hash: Option<String>) {
        match self {
            Model::Nszsl(m) => m.vocab_hash = hash,
            Model::Eszsl(m) => m.vocab_hash = hash,
        }
    }
}

impl Compatibility for Model {
    fn feat_dim(&self) -> usize {
        match self {
            Model::Nszsl(m) => m.feat_dim(),
            Model::Eszsl(m) => Compatibility::feat_dim(m),
        }
    }

    fn doc_dim(&self) -> usize {
        match self {
            Model::Nszsl(m) => m.doc_dim(),
            Model::Eszsl(m) => Compatibility::doc_dim(m),
        }
    }

    fn score_batch(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        match self {
            Model::Nszsl(m) => m.score_batch(x, z),
            Model::Eszsl(m) => m.score_batch(x, z),
        }
    }
}
