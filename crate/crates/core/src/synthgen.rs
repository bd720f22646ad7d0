//! Planted-signal synthetic benchmark.
//!
//! Each class gets a random binary pattern over `informative_dims` document
//! dimensions (scattered at random positions) and sparse random noise bits on
//! the rest. Image features depend only on the informative part:
//! `x = M z_informative + noise`, with one fixed random map `M` shared by all
//! classes. A model that suppresses the noise dimensions should therefore
//! place its importance weight on the informative ones.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, DatasetManifest, MatrixFormat, TestSet, MANIFEST_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linsolve::Matrix;
use crate::nszsl::TrainingSet;
use crate::textpipe::Weighting;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_seen: usize,
    pub num_unseen: usize,
    pub feat_dim: usize,
    pub doc_dim: usize,
    pub informative_dims: usize,
    pub samples_per_class: usize,
    pub doc_flip_prob: f64,
    pub feature_noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_seen: 40,
            num_unseen: 10,
            feat_dim: 64,
            doc_dim: 300,
            informative_dims: 50,
            samples_per_class: 30,
            doc_flip_prob: 0.05,
            feature_noise_std: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_seen", self.num_seen),
            ("num_unseen", self.num_unseen),
            ("feat_dim", self.feat_dim),
            ("doc_dim", self.doc_dim),
            ("informative_dims", self.informative_dims),
            ("samples_per_class", self.samples_per_class),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if self.informative_dims > self.doc_dim {
            return Err(Error::InvalidInput("informative_dims exceeds doc_dim".into()));
        }
        if !(0.0..1.0).contains(&self.doc_flip_prob) {
            return Err(Error::InvalidInput("doc_flip_prob must lie in [0, 1)".into()));
        }
        if !(self.feature_noise_std >= 0.0 && self.feature_noise_std.is_finite()) {
            return Err(Error::InvalidInput("feature_noise_std must be non-negative".into()));
        }
        let classes = self.num_seen + self.num_unseen;
        // 2^k - 1 distinct non-zero informative patterns
        if self.informative_dims < 64 && (1u64 << self.informative_dims) - 1 < classes as u64 {
            return Err(Error::InvalidInput(format!(
                "{} informative dims cannot give {classes} distinct patterns",
                self.informative_dims
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub seen: TrainingSet,
    pub unseen: TestSet,
    /// `true` for document dimensions that drive the features.
    pub informative_mask: Vec<bool>,
    pub seen_class_ids: Vec<String>,
    pub unseen_class_ids: Vec<String>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = spec.num_seen + spec.num_unseen;
    let k = spec.informative_dims;

    let mut positions: Vec<usize> = (0..spec.doc_dim).collect();
    positions.shuffle(&mut rng);
    let informative: Vec<usize> = {
        let mut v = positions[..k].to_vec();
        v.sort_unstable();
        v
    };
    let mut informative_mask = vec![false; spec.doc_dim];
    for &i in &informative {
        informative_mask[i] = true;
    }

    let mut patterns: HashSet<Vec<bool>> = HashSet::new();
    let mut z = Matrix::zeros(spec.doc_dim, classes);
    for c in 0..classes {
        let pattern = loop {
            let p: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
            if p.iter().any(|&b| b) && !patterns.contains(&p) {
                break p;
            }
        };
        for (j, &on) in pattern.iter().enumerate() {
            if on {
                z[(informative[j], c)] = 1.0;
            }
        }
        patterns.insert(pattern);
        for i in 0..spec.doc_dim {
            if !informative_mask[i] && rng.random_bool(spec.doc_flip_prob) {
                z[(i, c)] = 1.0;
            }
        }
    }

    let map = Matrix::from_fn(spec.feat_dim, k, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v / (k as f64).sqrt()
    });
    let n_total = classes * spec.samples_per_class;
    let mut x = Matrix::zeros(spec.feat_dim, n_total);
    let mut labels = Vec::with_capacity(n_total);
    for c in 0..classes {
        let z_inf = Matrix::from_fn(k, 1, |j, _| z[(informative[j], c)]);
        let mean = &map * z_inf;
        for s in 0..spec.samples_per_class {
            let n = c * spec.samples_per_class + s;
            for r in 0..spec.feat_dim {
                let noise: f64 = StandardNormal.sample(&mut rng);
                x[(r, n)] = mean[(r, 0)] + spec.feature_noise_std * noise;
            }
            labels.push(c);
        }
    }

    let n_seen = spec.num_seen * spec.samples_per_class;
    let seen = TrainingSet::from_labels(
        x.columns(0, n_seen).into_owned(),
        &labels[..n_seen],
        z.columns(0, spec.num_seen).into_owned(),
    )?;
    let unseen = TestSet {
        x: x.columns(n_seen, n_total - n_seen).into_owned(),
        labels: labels[n_seen..].iter().map(|&l| l - spec.num_seen).collect(),
        z: z.columns(spec.num_seen, spec.num_unseen).into_owned(),
    };
    Ok(SynthData {
        seen,
        unseen,
        informative_mask,
        seen_class_ids: (0..spec.num_seen)
            .map(|c| format!("seen{}", alpha_code(c, 2)))
            .collect(),
        unseen_class_ids: (0..spec.num_unseen)
            .map(|c| format!("unseen{}", alpha_code(c, 2)))
            .collect(),
    })
}

/// Fixed-width base-26 lowercase code, so lexicographic order equals numeric order.
fn alpha_code(mut i: usize, width: usize) -> String {
    let mut chars = vec![b'a'; width];
    for slot in chars.iter_mut().rev() {
        *slot = b'a' + (i % 26) as u8;
        i /= 26;
    }
    String::from_utf8(chars).unwrap()
}

fn code_width(n: usize) -> usize {
    let mut width = 2;
    while 26usize.pow(width as u32) < n {
        width += 1;
    }
    width
}

/// Token standing for document dimension `i` in emitted text corpora. Tokens
/// are purely alphabetic and sort in dimension order.
pub fn word_for_dim(i: usize, doc_dim: usize) -> String {
    format!("zq{}", alpha_code(i, code_width(doc_dim)))
}

#[derive(Debug, Clone, Serialize)]
struct Truth<'a> {
    format_version: u32,
    spec: &'a SynthSpec,
    informative_words: Vec<String>,
    noise_words: Vec<String>,
}

/// Writes the dataset in the regular on-disk layout: `features.{bin,csv}`,
/// `labels.txt`, `docs/<class>.txt`, `manifest.json` plus `truth.json` with
/// the planted informative words.
pub fn write_dataset(
    data: &SynthData,
    spec: &SynthSpec,
    out_dir: impl AsRef<Path>,
    format: MatrixFormat,
) -> Result<()> {
    let out = out_dir.as_ref();
    let docs_dir = out.join("docs");
    std::fs::create_dir_all(&docs_dir).map_err(|e| Error::io(&docs_dir, e))?;

    let features_name = match format {
        MatrixFormat::Binary => "features.bin",
        MatrixFormat::Csv => "features.csv",
    };
    let mut x = data
        .seen
        .x()
        .clone()
        .resize_horizontally(data.seen.num_examples() + data.unseen.x.ncols(), 0.0);
    x.columns_mut(data.seen.num_examples(), data.unseen.x.ncols())
        .copy_from(&data.unseen.x);
    dataio::save_features(out.join(features_name), &x, format)?;

    let mut labels = String::new();
    for &l in data.seen.labels() {
        labels.push_str(&data.seen_class_ids[l]);
        labels.push('\n');
    }
    for &l in &data.unseen.labels {
        labels.push_str(&data.unseen_class_ids[l]);
        labels.push('\n');
    }
    dataio::write_text(out.join("labels.txt"), &labels)?;

    let doc_dim = data.seen.doc_dim();
    let write_docs = |ids: &[String], z: &Matrix| -> Result<()> {
        for (c, id) in ids.iter().enumerate() {
            let words: Vec<String> = (0..doc_dim)
                .filter(|&i| z[(i, c)] != 0.0)
                .map(|i| word_for_dim(i, doc_dim))
                .collect();
            dataio::write_text(docs_dir.join(format!("{id}.txt")), &(words.join(" ") + "\n"))?;
        }
        Ok(())
    };
    write_docs(&data.seen_class_ids, data.seen.z())?;
    write_docs(&data.unseen_class_ids, &data.unseen.z)?;

    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        features: features_name.into(),
        labels: "labels.txt".into(),
        documents: "docs".into(),
        seen_classes: data.seen_class_ids.clone(),
        unseen_classes: data.unseen_class_ids.clone(),
        stopwords: None,
        weighting: Weighting::Binary,
    };
    dataio::write_json(out.join("manifest.json"), &manifest)?;

    let (informative_words, noise_words) = (0..doc_dim).fold((Vec::new(), Vec::new()), |(mut inf, mut noise), i| {
        if data.informative_mask[i] {
            inf.push(word_for_dim(i, doc_dim));
        } else {
            noise.push(word_for_dim(i, doc_dim));
        }
        (inf, noise)
    });
    dataio::write_json(
        out.join("truth.json"),
        &Truth {
            format_version: 1,
            spec,
            informative_words,
            noise_words,
        },
    )
}
