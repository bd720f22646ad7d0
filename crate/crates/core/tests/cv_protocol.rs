mod common;

use nszsl_core::cvharness::*;
use nszsl_core::dataio::TestSet;
use nszsl_core::nszsl::{fit, SolverConfig};
use nszsl_core::synthgen::{generate, SynthSpec};
use nszsl_core::Model;

fn small() -> SynthSpec {
    SynthSpec {
        num_seen: 10,
        num_unseen: 4,
        feat_dim: 12,
        doc_dim: 40,
        informative_dims: 12,
        samples_per_class: 6,
        ..SynthSpec::default()
    }
}

fn quick() -> SolverConfig {
    SolverConfig {
        max_outer: 10,
        ..SolverConfig::default()
    }
}

#[test]
fn folds_never_see_validation_classes() {
    let data = generate(&small()).unwrap();
    let plan = CvPlan::default();
    for f in 0..plan.num_folds {
        let (tr, va) = split_classes(10, &plan, f).unwrap();
        let (fold_train, val) = fold_data(&data.seen, &plan, f).unwrap();
        assert_eq!(fold_train.num_classes(), tr.len());
        assert_eq!(val.z.ncols(), va.len());
        for (k, &c) in tr.iter().enumerate() {
            assert_eq!(fold_train.z().column(k), data.seen.z().column(c));
        }
        for (k, &c) in va.iter().enumerate() {
            assert_eq!(val.z.column(k), data.seen.z().column(c));
        }
        let val_examples = data.seen.labels().iter().filter(|l| va.contains(l)).count();
        assert_eq!(val.x.ncols(), val_examples);
        assert_eq!(fold_train.num_examples() + val_examples, data.seen.num_examples());
    }
}

#[test]
fn grid_search_is_deterministic_across_thread_counts() {
    let data = generate(&small()).unwrap();
    let plan = CvPlan {
        grid_exponents: vec![-1, 0, 1],
        ..CvPlan::default()
    };
    let method = Method::Nszsl { base: quick() };
    let a = grid_search(&data.seen, &plan, &method).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| grid_search(&data.seen, &plan, &method)).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.model, b.model);
}

#[test]
fn single_cell_grid_equals_direct_fit() {
    let data = generate(&small()).unwrap();
    let plan = CvPlan {
        grid_exponents: vec![0],
        seed: 9,
        ..CvPlan::default()
    };
    let gs = grid_search(&data.seen, &plan, &Method::Nszsl { base: quick() }).unwrap();
    let direct = fit(&data.seen, &SolverConfig { seed: 9, ..quick() }).unwrap();
    assert_eq!(gs.model, Model::Nszsl(direct));
}

#[test]
fn trials_report_sample_std_over_seeds() {
    let data = generate(&small()).unwrap();
    let plan = CvPlan {
        grid_exponents: vec![-1, 1],
        num_trials: 3,
        ..CvPlan::default()
    };
    let test: TestSet = data.unseen.clone();
    let gs = run_trials(&data.seen, &test, &plan, &Method::Eszsl).unwrap();
    let summary = gs.result.test.unwrap();
    assert_eq!(summary.scores.len(), 3);
    for (t, s) in summary.scores.iter().enumerate() {
        let trial = grid_search(
            &data.seen,
            &CvPlan {
                seed: t as u64,
                ..plan.clone()
            },
            &Method::Eszsl,
        )
        .unwrap();
        let score = evaluate(&trial.model, &test.x, &test.labels, &test.z, plan.metric).unwrap();
        assert_eq!(*s, score);
    }
}

#[test]
fn too_few_classes_is_reported() {
    let plan = CvPlan::default();
    assert_eq!(split_classes(2, &plan, 0).unwrap_err().category(), "TooFewClasses");
}
