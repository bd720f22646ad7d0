mod common;

use nszsl_core::cvharness::{self, CvPlan, TrialSummary};
use nszsl_core::dataio::{self, MatrixFormat};
use nszsl_core::eszsl::{eszsl_fit, EszslConfig};
use nszsl_core::linsolve::{solve_sylvester_spd, sylvester_residual};
use nszsl_core::nszsl::{self, gini, update_d, SolverConfig};
use nszsl_core::textpipe::{Tokenizer, Weighting};
use nszsl_core::{Compatibility, Matrix, Model, Vector};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "stripes", "horse", "savanna", "grass", "hooves", "mane", "gallop", "herd", "ocean", "whale",
    ])
    .prop_map(str::to_string)
}

fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(prop::collection::vec(word(), 1..12), 2..6).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, words)| (format!("class{i}"), words.join(" ")))
            .collect()
    })
}

fn matrix(max_r: usize, max_c: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_r, 1..=max_c)
        .prop_flat_map(|(r, c)| prop::collection::vec(-1e3f64..1e3, r * c).prop_map(move |v| Matrix::from_vec(r, c, v)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_features_ignore_repetition(docs in corpus(), times in 2usize..4) {
        let tok = Tokenizer::default();
        let vocab = tok.build_vocabulary(&docs).unwrap();
        let repeated: Vec<(String, String)> = docs
            .iter()
            .map(|(id, text)| (id.clone(), vec![text.as_str(); times].join(" ")))
            .collect();
        let a = tok.featurize(&docs, &vocab, Weighting::Binary).unwrap();
        let b = tok.featurize(&repeated, &vocab, Weighting::Binary).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn document_order_permutes_columns_only(docs in corpus(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let tok = Tokenizer::default();
        let mut shuffled = docs.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let vocab = tok.build_vocabulary(&docs).unwrap();
        prop_assert_eq!(&vocab, &tok.build_vocabulary(&shuffled).unwrap());
        for w in [Weighting::Binary, Weighting::TfIdf] {
            // tf-idf rejects a document made only of words every class uses
            let (a, b) = match (tok.featurize(&docs, &vocab, w), tok.featurize(&shuffled, &vocab, w)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(a), Err(b)) => {
                    prop_assert_eq!(a.category(), b.category());
                    continue;
                }
                _ => return Err(TestCaseError::fail("ordering changed featurization outcome")),
            };
            for (j, id) in b.class_ids.iter().enumerate() {
                let i = a.class_index(id).unwrap();
                prop_assert_eq!(a.entries.column(i), b.entries.column(j));
            }
        }
    }

    #[test]
    fn every_term_occurs_in_a_document(docs in corpus()) {
        let tok = Tokenizer::default();
        let vocab = tok.build_vocabulary(&docs).unwrap();
        for term in vocab.terms() {
            prop_assert!(docs.iter().any(|(_, text)| tok.tokenize(text).contains(term)));
        }
    }

    #[test]
    fn sylvester_residual_contract(seed in any::<u64>(), m in 1usize..12, q in 1usize..16, rank in 0usize..16) {
        let mut rng = common::rng(seed);
        let a = common::spd(&mut rng, m);
        let b = common::psd(&mut rng, q, rank.min(q));
        let c = common::uniform(&mut rng, m, q);
        let w = solve_sylvester_spd(&a, &b, &c).unwrap();
        prop_assert!(sylvester_residual(&a, &b, &c, &w) <= 1e-8);
    }

    #[test]
    fn binary_matrix_round_trip_is_bit_exact(m in matrix(6, 6)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        dataio::save_features(&p, &m, MatrixFormat::Binary).unwrap();
        let back = dataio::load_features(&p).unwrap();
        prop_assert_eq!(m.shape(), back.shape());
        for (a, b) in m.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_matrix_round_trip(m in matrix(5, 5)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        dataio::save_features(&p, &m, MatrixFormat::Csv).unwrap();
        prop_assert_eq!(dataio::load_features(&p).unwrap(), m);
    }

    #[test]
    fn saved_models_predict_identically(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let t = common::problem(&mut rng, 4, 5, 3, 9);
        let fitted = nszsl::fit(&t, &SolverConfig { max_outer: 3, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for model in [Model::Nszsl(fitted), Model::Eszsl(eszsl_fit(&t, &EszslConfig::default()).unwrap())] {
            let p = dir.path().join("m.json");
            dataio::save_model(&p, &model).unwrap();
            let back = dataio::load_model(&p).unwrap();
            let x = common::uniform(&mut rng, 4, 7);
            let z = common::uniform(&mut rng, 5, 4);
            let (s1, s2) = (model.score_batch(&x, &z).unwrap(), back.score_batch(&x, &z).unwrap());
            for (a, b) in s1.iter().zip(s2.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn reweighting_is_positive_and_finite(m in matrix(4, 8), sigma in 1e-12f64..1.0) {
        let d = update_d(&m, sigma);
        prop_assert!(d.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn gini_stays_in_unit_interval(v in prop::collection::vec(0.0f64..10.0, 1..40)) {
        let g = gini(&v);
        prop_assert!((-1e-12..1.0).contains(&g));
    }

    #[test]
    fn folds_partition_classes(classes in 5usize..60, seed in any::<u64>(), fold in 0usize..5) {
        let plan = CvPlan { seed, ..CvPlan::default() };
        let (tr, va) = cvharness::split_classes(classes, &plan, fold).unwrap();
        prop_assert_eq!(va.len(), cvharness::validation_size(classes, &plan));
        prop_assert_eq!(tr.len() + va.len(), classes);
        prop_assert!(tr.iter().all(|c| !va.contains(c)));
        prop_assert_eq!(cvharness::split_classes(classes, &plan, fold).unwrap(), (tr, va));
    }

    #[test]
    fn trial_std_is_sample_std(v in prop::collection::vec(0.0f64..1.0, 2..12)) {
        let s = TrialSummary::from_scores(v.clone());
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        prop_assert!((s.mean - mean).abs() < 1e-12);
        prop_assert!((s.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn argmax_ignores_positive_feature_scaling(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let mut rng = common::rng(seed);
        let t = common::problem(&mut rng, 4, 5, 3, 9);
        let m = eszsl_fit(&t, &EszslConfig::default()).unwrap();
        let x = Vector::from_column_slice(common::uniform(&mut rng, 4, 1).as_slice());
        let z = common::uniform(&mut rng, 5, 6);
        let a = nszsl_core::model::predict(&m, &x, &z).unwrap().0;
        let b = nszsl_core::model::predict(&m, &(&x * scale), &z).unwrap().0;
        prop_assert_eq!(a, b);
    }
}
