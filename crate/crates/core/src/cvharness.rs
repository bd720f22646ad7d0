//! Class-wise cross-validation, hyperparameter grid search and multi-trial
//! evaluation.
//!
//! Folds hold out whole classes: the fold model never sees the validation
//! classes' examples or descriptions, so validation accuracy is itself a
//! zero-shot score. Classes are shuffled once per seed and each fold takes the
//! next contiguous slice of the permutation as its validation set.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::TestSet;
use crate::error::{Error, Result};
use crate::eszsl::{eszsl_fit, EszslConfig};
use crate::linsolve::Matrix;
use crate::model::{rank_scores, Compatibility, Model};
use crate::nszsl::{fit, SolverConfig, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Top1,
    Top5,
    MeanPerClassAccuracy,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Top1 => "top1",
            Metric::Top5 => "top5",
            Metric::MeanPerClassAccuracy => "mean_per_class_accuracy",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(Metric::Top1),
            "top5" => Ok(Metric::Top5),
            "mean_per_class_accuracy" | "mpca" => Ok(Metric::MeanPerClassAccuracy),
            other => Err(Error::InvalidInput(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub num_folds: usize,
    pub holdout_fraction: f64,
    /// Each grid value is `10^b` for `b` in this list.
    pub grid_exponents: Vec<i32>,
    pub num_trials: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            num_folds: 5,
            holdout_fraction: 0.2,
            grid_exponents: (-2..=6).collect(),
            num_trials: 10,
            metric: Metric::Top1,
            seed: 0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "holdout_fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.num_folds < 2 {
            return Err(Error::InvalidInput("num_folds must be at least 2".into()));
        }
        if self.grid_exponents.is_empty() {
            return Err(Error::InvalidInput("hyperparameter grid is empty".into()));
        }
        if self.num_trials == 0 {
            return Err(Error::InvalidInput("num_trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid_values(&self) -> Vec<f64> {
        self.grid_exponents.iter().map(|&b| 10f64.powi(b)).collect()
    }

    fn with_seed(&self, seed: u64) -> CvPlan {
        CvPlan { seed, ..self.clone() }
    }
}

/// Which model the grid tunes. For `Nszsl` the grid covers (lambda1, lambda2)
/// and every other solver setting comes from the base config; for `Eszsl` it
/// covers (gamma, lambda).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Nszsl { base: SolverConfig },
    Eszsl,
}

impl Method {
    pub fn param_names(&self) -> (&'static str, &'static str) {
        match self {
            Method::Nszsl { .. } => ("lambda1", "lambda2"),
            Method::Eszsl => ("gamma", "lambda"),
        }
    }

    /// Trains at one grid cell. The fit seed is the plan seed.
    pub fn fit_cell(&self, train: &TrainingSet, p1: f64, p2: f64, seed: u64) -> Result<Model> {
        match self {
            Method::Nszsl { base } => {
                let cfg = SolverConfig {
                    lambda1: p1,
                    lambda2: p2,
                    seed,
                    ..base.clone()
                };
                Ok(Model::Nszsl(fit(train, &cfg)?))
            }
            Method::Eszsl => Ok(Model::Eszsl(eszsl_fit(train, &EszslConfig { gamma: p1, lambda: p2 })?)),
        }
    }
}

/// Number of validation classes per fold.
pub fn validation_size(num_classes: usize, plan: &CvPlan) -> usize {
    (plan.holdout_fraction * num_classes as f64).round() as usize
}

/// (training classes, validation classes) for one fold, both ascending.
pub fn split_classes(num_classes: usize, plan: &CvPlan, fold_index: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    plan.validate()?;
    if fold_index >= plan.num_folds {
        return Err(Error::InvalidInput(format!(
            "fold {fold_index} out of range for {} folds",
            plan.num_folds
        )));
    }
    let v = validation_size(num_classes, plan);
    if v == 0 || num_classes < v + 2 {
        return Err(Error::TooFewClasses(format!(
            "{num_classes} classes with holdout {} give {v} validation and {} training classes",
            plan.holdout_fraction,
            num_classes.saturating_sub(v)
        )));
    }
    let mut perm: Vec<usize> = (0..num_classes).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let mut is_val = vec![false; num_classes];
    for j in 0..v {
        is_val[perm[(fold_index * v + j) % num_classes]] = true;
    }
    let val = (0..num_classes).filter(|&c| is_val[c]).collect();
    let train = (0..num_classes).filter(|&c| !is_val[c]).collect();
    Ok((train, val))
}

/// Training set and held-out validation set for one fold.
pub fn fold_data(train: &TrainingSet, plan: &CvPlan, fold_index: usize) -> Result<(TrainingSet, TestSet)> {
    let (tr, va) = split_classes(train.num_classes(), plan, fold_index)?;
    let fold_train = train.subset(&tr)?;
    let (x, labels, z) = train.restrict_to_classes(&va)?;
    if fold_train.num_classes() != tr.len() || z.ncols() != va.len() {
        return Err(Error::DimensionMismatch("fold split leaked classes".into()));
    }
    Ok((fold_train, TestSet { x, labels, z }))
}

/// Scores `model` on labelled unseen-class examples.
pub fn evaluate<M: Compatibility + ?Sized>(
    model: &M,
    test_x: &Matrix,
    test_labels: &[usize],
    unseen_z: &Matrix,
    metric: Metric,
) -> Result<f64> {
    if test_labels.is_empty() || test_x.ncols() == 0 {
        return Err(Error::EmptyTestSet);
    }
    if test_labels.len() != test_x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} test examples",
            test_labels.len(),
            test_x.ncols()
        )));
    }
    let num_classes = unseen_z.ncols();
    if let Some(&bad) = test_labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::DimensionMismatch(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let scores = model.score_batch(test_x, unseen_z)?;
    let k = match metric {
        Metric::Top5 => 5.min(num_classes),
        _ => 1,
    };
    let hits: Vec<bool> = scores
        .row_iter()
        .zip(test_labels)
        .map(|(row, &label)| {
            let row: Vec<f64> = row.iter().copied().collect();
            rank_scores(&row)[..k].contains(&label)
        })
        .collect();
    Ok(match metric {
        Metric::Top1 | Metric::Top5 => hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64,
        Metric::MeanPerClassAccuracy => {
            let mut correct = vec![0usize; num_classes];
            let mut total = vec![0usize; num_classes];
            for (&label, &h) in test_labels.iter().zip(&hits) {
                total[label] += 1;
                correct[label] += h as usize;
            }
            let present: Vec<f64> = (0..num_classes)
                .filter(|&c| total[c] > 0)
                .map(|c| correct[c] as f64 / total[c] as f64)
                .collect();
            present.iter().sum::<f64>() / present.len() as f64
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub exponents: (i32, i32),
    pub params: (f64, f64),
    pub fold_scores: Vec<Option<f64>>,
    /// Mean validation score; `None` when any fold failed (ranks as -inf).
    pub mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl TrialSummary {
    /// Mean and sample standard deviation (zero for a single trial).
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let std = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        TrialSummary { scores, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub method: Method,
    pub plan: CvPlan,
    pub param_names: (String, String),
    pub best_params: (f64, f64),
    pub best_exponents: (i32, i32),
    pub best_score: f64,
    pub cells: Vec<CellResult>,
    /// Unseen-class test metric over trials, when a test set was supplied.
    #[serde(default)]
    pub test: Option<TrialSummary>,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub result: CvResult,
    /// Retrained on all seen classes at the best cell.
    pub model: Model,
}

/// Evaluates every grid cell on every fold, picks the best mean validation
/// score (first cell in grid order on ties) and retrains on all classes.
pub fn grid_search(train: &TrainingSet, plan: &CvPlan, method: &Method) -> Result<GridSearch> {
    plan.validate()?;
    let folds: Vec<(TrainingSet, TestSet)> = (0..plan.num_folds)
        .map(|f| fold_data(train, plan, f))
        .collect::<Result<_>>()?;

    let exps = &plan.grid_exponents;
    let cells: Vec<(i32, i32)> = exps.iter().flat_map(|&a| exps.iter().map(move |&b| (a, b))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();

    let outcomes: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (b1, b2) = cells[c];
            let (fold_train, val) = &folds[f];
            let model = method.fit_cell(fold_train, 10f64.powi(b1), 10f64.powi(b2), plan.seed)?;
            evaluate(&model, &val.x, &val.labels, &val.z, plan.metric)
        })
        .collect();

    let mut table = Vec::with_capacity(cells.len());
    let mut outcomes = outcomes.into_iter();
    for &(b1, b2) in &cells {
        let mut fold_scores = Vec::with_capacity(folds.len());
        let mut error = None;
        for _ in 0..folds.len() {
            match outcomes.next().expect("one outcome per job") {
                Ok(s) => fold_scores.push(Some(s)),
                Err(e) => {
                    error.get_or_insert_with(|| format!("{}: {e}", e.category()));
                    fold_scores.push(None);
                }
            }
        }
        let mean = if error.is_none() {
            Some(fold_scores.iter().flatten().sum::<f64>() / folds.len() as f64)
        } else {
            None
        };
        table.push(CellResult {
            exponents: (b1, b2),
            params: (10f64.powi(b1), 10f64.powi(b2)),
            fold_scores,
            mean,
            error,
        });
    }

    let mut best: Option<usize> = None;
    for (i, cell) in table.iter().enumerate() {
        if let Some(m) = cell.mean {
            if best.is_none_or(|b| m > table[b].mean.unwrap()) {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::NoConvergence(format!(
            "every grid cell failed; first error: {}",
            table[0].error.clone().unwrap_or_default()
        ))
    })?;
    let cell = &table[best];
    let model = method.fit_cell(train, cell.params.0, cell.params.1, plan.seed)?;
    let (n1, n2) = method.param_names();
    let result = CvResult {
        method: method.clone(),
        plan: plan.clone(),
        param_names: (n1.to_string(), n2.to_string()),
        best_params: cell.params,
        best_exponents: cell.exponents,
        best_score: cell.mean.unwrap(),
        cells: table,
        test: None,
    };
    Ok(GridSearch { result, model })
}

/// Full protocol: for each trial `t` the plan seed becomes `seed + t`, the grid
/// search is repeated, the retrained model is scored on the unseen test set,
/// and mean ± std is reported. The returned result is trial 0's grid with the
/// test summary attached, together with trial 0's model.
pub fn run_trials(train: &TrainingSet, test: &TestSet, plan: &CvPlan, method: &Method) -> Result<GridSearch> {
    plan.validate()?;
    let mut first: Option<GridSearch> = None;
    let mut scores = Vec::with_capacity(plan.num_trials);
    for t in 0..plan.num_trials {
        let gs = grid_search(train, &plan.with_seed(plan.seed + t as u64), method)?;
        scores.push(evaluate(&gs.model, &test.x, &test.labels, &test.z, plan.metric)?);
        if first.is_none() {
            first = Some(gs);
        }
    }
    let mut gs = first.expect("at least one trial");
    gs.result.test = Some(TrialSummary::from_scores(scores));
    Ok(gs)
}

/// Cell table as CSV: one row per (cell, fold) plus the cell mean.
pub fn cells_to_csv(result: &CvResult) -> String {
    let (n1, n2) = &result.param_names;
    let mut out = format!("# nszsl cv table v1\n{n1}_exp,{n2}_exp,{n1},{n2},mean");
    for f in 0..result.plan.num_folds {
        out.push_str(&format!(",fold{f}"));
    }
    out.push('\n');
    let fmt = |v: Option<f64>| v.map_or_else(|| "-inf".to_string(), |s| format!("{s:?}"));
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{:?},{:?},{}",
            c.exponents.0,
            c.exponents.1,
            c.params.0,
            c.params.1,
            fmt(c.mean)
        ));
        for s in &c.fold_scores {
            out.push(',');
            out.push_str(&fmt(*s));
        }
        out.push('\n');
    }
    out
}
