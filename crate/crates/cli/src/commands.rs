use std::path::{Path, PathBuf};

use nszsl_core::cvharness::{self, CvPlan, Method, Metric, TrialSummary};
use nszsl_core::dataio::{self, Dataset, MatrixFormat};
use nszsl_core::eszsl::{eszsl_fit, EszslConfig};
use nszsl_core::nszsl::{self, Regularizer, SolverConfig};
use nszsl_core::synthgen::{self, SynthSpec};
use nszsl_core::textpipe::{self, DocMatrix, Tokenizer, Vocabulary, Weighting};
use nszsl_core::{Error, Model, Result};
use serde::Serialize;

use crate::{AnalyzeArgs, CvArgs, EvalArgs, FeaturizeArgs, MethodName, SolverArgs, SynthArgs, TrainArgs, VocabArgs};

const CONFIG_FORMAT_VERSION: u32 = 1;

pub struct Context {
    pub verbose: bool,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Provenance record written next to every output.
#[derive(Serialize)]
struct ResolvedConfig<'a, T: Serialize> {
    format_version: u32,
    kind: &'static str,
    command: &'static str,
    tool_version: &'static str,
    settings: &'a T,
}

fn write_config<T: Serialize>(path: impl AsRef<Path>, command: &'static str, settings: &T) -> Result<()> {
    dataio::write_json(
        path,
        &ResolvedConfig {
            format_version: CONFIG_FORMAT_VERSION,
            kind: "config",
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            settings,
        },
    )
}

/// `vocab.json` -> `vocab.json.config.json`
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    path.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn tokenizer(stopwords: Option<&Path>) -> Result<Tokenizer> {
    match stopwords {
        Some(p) => Tokenizer::from_stop_word_file(p),
        None => Ok(Tokenizer::default()),
    }
}

fn read_docs(dir: &Path, classes: Option<&[String]>) -> Result<Vec<(String, String)>> {
    let corpus = textpipe::read_corpus_dir(dir)?;
    match classes {
        Some(ids) => textpipe::select_docs(&corpus, ids),
        None => Ok(corpus),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse()
}

pub fn vocab(ctx: &Context, a: &VocabArgs) -> Result<()> {
    let docs = read_docs(&a.docs, a.classes.as_deref())?;
    let vocab = tokenizer(a.stopwords.as_deref())?.build_vocabulary(&docs)?;
    ctx.log(format!("{} terms from {} documents", vocab.len(), docs.len()));
    dataio::save_vocabulary(&a.out, &vocab)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        docs: &'a Path,
        stopwords: Option<&'a Path>,
        classes: Option<&'a [String]>,
        out: &'a Path,
    }
    write_config(
        sidecar(&a.out),
        "vocab",
        &Settings {
            docs: &a.docs,
            stopwords: a.stopwords.as_deref(),
            classes: a.classes.as_deref(),
            out: &a.out,
        },
    )
}

pub fn featurize(ctx: &Context, a: &FeaturizeArgs) -> Result<()> {
    let weighting: Weighting = parse(&a.weighting)?;
    let vocab = dataio::load_vocabulary(&a.vocab)?;
    let docs = read_docs(&a.docs, a.classes.as_deref())?;
    let z = tokenizer(a.stopwords.as_deref())?.featurize(&docs, &vocab, weighting)?;
    ctx.log(format!("{} x {} document matrix", z.vocab_size(), z.num_classes()));
    dataio::save_doc_matrix(&a.out, &z)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        docs: &'a Path,
        vocab: &'a Path,
        vocab_hash: String,
        weighting: Weighting,
        stopwords: Option<&'a Path>,
        classes: Option<&'a [String]>,
        out: &'a Path,
    }
    write_config(
        sidecar(&a.out),
        "featurize",
        &Settings {
            docs: &a.docs,
            vocab: &a.vocab,
            vocab_hash: vocab.content_hash(),
            weighting,
            stopwords: a.stopwords.as_deref(),
            classes: a.classes.as_deref(),
            out: &a.out,
        },
    )
}

/// Solver config from flags, rejecting options that do not apply to eszsl.
fn solver_config(s: &SolverArgs, lambda1: Option<f64>, lambda2: Option<f64>) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        lambda1: lambda1.unwrap_or(d.lambda1),
        lambda2: lambda2.unwrap_or(d.lambda2),
        sigma: s.sigma.unwrap_or(d.sigma),
        max_outer: s.max_outer.unwrap_or(d.max_outer),
        max_inner: s.max_inner.unwrap_or(d.max_inner),
        rel_tol: s.rel_tol.unwrap_or(d.rel_tol),
        seed: s.seed,
        regularizer: match &s.regularizer {
            Some(r) => r.parse::<Regularizer>()?,
            None => d.regularizer,
        },
        epsilon_ridge: s.epsilon_ridge.unwrap_or(d.epsilon_ridge),
        rank: s.rank,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn reject_nszsl_flags(s: &SolverArgs, extra: &[(&str, bool)]) -> Result<()> {
    let flags = [
        ("--regularizer", s.regularizer.is_some()),
        ("--sigma", s.sigma.is_some()),
        ("--max-outer", s.max_outer.is_some()),
        ("--max-inner", s.max_inner.is_some()),
        ("--rel-tol", s.rel_tol.is_some()),
        ("--epsilon-ridge", s.epsilon_ridge.is_some()),
        ("--rank", s.rank.is_some()),
    ];
    if let Some((name, _)) = flags.iter().chain(extra).find(|(_, set)| *set) {
        return Err(Error::InvalidInput(format!("{name} does not apply to --method eszsl")));
    }
    Ok(())
}

fn load_dataset(ctx: &Context, manifest: &Path) -> Result<Dataset> {
    let data = Dataset::load(manifest)?;
    ctx.log(format!(
        "dataset: d = {}, d̂ = {}, {} seen classes, {} training examples",
        data.train.feat_dim(),
        data.train.doc_dim(),
        data.train.num_classes(),
        data.train.num_examples()
    ));
    Ok(data)
}

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let data = load_dataset(ctx, &a.manifest)?;
    create_dir(&a.out)?;

    #[derive(Serialize)]
    #[serde(tag = "method", rename_all = "lowercase")]
    enum Resolved {
        Nszsl { solver: SolverConfig },
        Eszsl { eszsl: EszslConfig },
    }

    let (mut model, resolved) = match a.solver.method {
        MethodName::Nszsl => {
            if a.gamma.is_some() || a.lambda.is_some() {
                return Err(Error::InvalidInput(
                    "--gamma and --lambda apply to --method eszsl only".into(),
                ));
            }
            let cfg = solver_config(&a.solver, a.lambda1, a.lambda2)?;
            let m = nszsl::fit(&data.train, &cfg)?;
            ctx.log(format!(
                "{} outer iterations, converged: {}",
                m.trace.len() / 2,
                m.converged
            ));
            dataio::write_text(a.out.join("trace.csv"), &nszsl::trace_to_csv(&m.trace))?;
            (Model::Nszsl(m), Resolved::Nszsl { solver: cfg })
        }
        MethodName::Eszsl => {
            reject_nszsl_flags(
                &a.solver,
                &[("--lambda1", a.lambda1.is_some()), ("--lambda2", a.lambda2.is_some())],
            )?;
            let d = EszslConfig::default();
            let cfg = EszslConfig {
                gamma: a.gamma.unwrap_or(d.gamma),
                lambda: a.lambda.unwrap_or(d.lambda),
            };
            (
                Model::Eszsl(eszsl_fit(&data.train, &cfg)?),
                Resolved::Eszsl { eszsl: cfg },
            )
        }
    };
    model.set_vocab_hash(Some(data.vocab.content_hash()));
    dataio::save_model(a.out.join("model.json"), &model)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        manifest: &'a Path,
        vocab_hash: String,
        #[serde(flatten)]
        resolved: Resolved,
    }
    write_config(
        a.out.join("config.json"),
        "train",
        &Settings {
            manifest: &a.manifest,
            vocab_hash: data.vocab.content_hash(),
            resolved,
        },
    )
}

pub fn cv(ctx: &Context, a: &CvArgs) -> Result<()> {
    let data = load_dataset(ctx, &a.manifest)?;
    if a.grid_min > a.grid_max {
        return Err(Error::InvalidInput(format!(
            "--grid-min {} exceeds --grid-max {}",
            a.grid_min, a.grid_max
        )));
    }
    let method = match a.solver.method {
        MethodName::Nszsl => Method::Nszsl {
            base: solver_config(&a.solver, None, None)?,
        },
        MethodName::Eszsl => {
            reject_nszsl_flags(&a.solver, &[])?;
            Method::Eszsl
        }
    };
    let plan = CvPlan {
        num_folds: a.folds,
        holdout_fraction: a.holdout,
        grid_exponents: (a.grid_min..=a.grid_max).collect(),
        num_trials: a.trials,
        metric: parse::<Metric>(&a.metric)?,
        seed: a.solver.seed,
    };
    plan.validate()?;
    create_dir(&a.out)?;

    let mut gs = match &data.test {
        Some(test) => cvharness::run_trials(&data.train, test, &plan, &method)?,
        None => cvharness::grid_search(&data.train, &plan, &method)?,
    };
    ctx.log(format!(
        "best {} = 1e{}, {} = 1e{}, validation {} = {}",
        gs.result.param_names.0,
        gs.result.best_exponents.0,
        gs.result.param_names.1,
        gs.result.best_exponents.1,
        plan.metric,
        gs.result.best_score
    ));
    if let Some(t) = &gs.result.test {
        println!(
            "{}: {:.4} ± {:.4} ({} trials)",
            plan.metric,
            t.mean,
            t.std,
            t.scores.len()
        );
    }
    gs.model.set_vocab_hash(Some(data.vocab.content_hash()));

    #[derive(Serialize)]
    struct CvOutput<'a> {
        format_version: u32,
        kind: &'static str,
        #[serde(flatten)]
        result: &'a cvharness::CvResult,
    }
    dataio::write_json(
        a.out.join("cv_result.json"),
        &CvOutput {
            format_version: 1,
            kind: "cv_result",
            result: &gs.result,
        },
    )?;
    dataio::write_text(a.out.join("cv_table.csv"), &cvharness::cells_to_csv(&gs.result))?;
    dataio::save_model(a.out.join("model.json"), &gs.model)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        manifest: &'a Path,
        vocab_hash: String,
        #[serde(flatten)]
        method: &'a Method,
        plan: &'a CvPlan,
    }
    write_config(
        a.out.join("config.json"),
        "cv",
        &Settings {
            manifest: &a.manifest,
            vocab_hash: data.vocab.content_hash(),
            method: &method,
            plan: &plan,
        },
    )
}

fn check_vocab(model: &Model, vocab: &Vocabulary, path: &Path) -> Result<()> {
    match model.vocab_hash() {
        Some(h) if h != vocab.content_hash() => Err(Error::InvalidInput(format!(
            "{} was trained on a different vocabulary",
            path.display()
        ))),
        _ => Ok(()),
    }
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let metric: Metric = parse(&a.metric)?;
    let data = load_dataset(ctx, &a.manifest)?;
    let test = data.test.as_ref().ok_or_else(|| Error::EmptyTestSet)?;
    let mut scores = Vec::with_capacity(a.models.len());
    for path in &a.models {
        let model = dataio::load_model(path)?;
        check_vocab(&model, &data.vocab, path)?;
        let s = cvharness::evaluate(&model, &test.x, &test.labels, &test.z, metric)?;
        ctx.log(format!("{}: {s}", path.display()));
        scores.push(s);
    }
    let summary = TrialSummary::from_scores(scores);
    println!(
        "{metric}: {:.4} ± {:.4} ({} models)",
        summary.mean,
        summary.std,
        a.models.len()
    );

    let Some(out) = &a.out else { return Ok(()) };

    #[derive(Serialize)]
    struct EvalOutput<'a> {
        format_version: u32,
        kind: &'static str,
        metric: Metric,
        models: &'a [PathBuf],
        #[serde(flatten)]
        summary: &'a TrialSummary,
    }
    dataio::write_json(
        out,
        &EvalOutput {
            format_version: 1,
            kind: "eval",
            metric,
            models: &a.models,
            summary: &summary,
        },
    )?;

    #[derive(Serialize)]
    struct Settings<'a> {
        manifest: &'a Path,
        models: &'a [PathBuf],
        metric: Metric,
        out: &'a Path,
    }
    write_config(
        sidecar(out),
        "eval",
        &Settings {
            manifest: &a.manifest,
            models: &a.models,
            metric,
            out,
        },
    )
}

fn concat_docs(a: DocMatrix, b: Option<DocMatrix>) -> DocMatrix {
    let Some(b) = b else { return a };
    let n = a.entries.ncols();
    let mut entries = a.entries.resize_horizontally(n + b.entries.ncols(), 0.0);
    entries.columns_mut(n, b.entries.ncols()).copy_from(&b.entries);
    let mut class_ids = a.class_ids;
    class_ids.extend(b.class_ids);
    DocMatrix {
        entries,
        weighting: a.weighting,
        class_ids,
    }
}

pub fn importance_to_csv(weights: &[f64], vocab: &Vocabulary) -> String {
    let mut out = String::from("# nszsl importance v1\nindex,word,weight\n");
    for (i, w) in weights.iter().enumerate() {
        out.push_str(&format!("{i},{},{w:?}\n", vocab.term(i)));
    }
    out
}

pub fn top_words_to_tsv(rows: &[nszsl::ClassTopWords]) -> String {
    let mut out = String::from("# nszsl top words v1\nclass\trank\tword\tweight\n");
    for r in rows {
        for (rank, (word, w)) in r.words.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{word}\t{w:?}\n", r.class_id, rank + 1));
        }
    }
    out
}

pub fn analyze(ctx: &Context, a: &AnalyzeArgs) -> Result<()> {
    let model = match dataio::load_model(&a.model)? {
        Model::Nszsl(m) => m,
        Model::Eszsl(_) => {
            return Err(Error::InvalidInput(
                "importance weights are defined for nszsl models only".into(),
            ))
        }
    };
    let (vocab, z) = match (&a.manifest, &a.vocab, &a.z) {
        (Some(manifest), _, _) => {
            let data = load_dataset(ctx, manifest)?;
            (data.vocab, concat_docs(data.seen_docs, data.unseen_docs))
        }
        (None, Some(v), Some(z)) => (dataio::load_vocabulary(v)?, dataio::load_doc_matrix(z)?),
        _ => {
            return Err(Error::InvalidInput(
                "analyze needs --manifest, or --vocab together with --z".into(),
            ))
        }
    };
    check_vocab(&Model::Nszsl(model.clone()), &vocab, &a.model)?;
    let weights = nszsl::importance_weights(&model);
    if weights.values.len() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has d̂ = {}, vocabulary has {} terms",
            weights.values.len(),
            vocab.len()
        )));
    }
    let rows = nszsl::top_words_per_class(&model, &vocab, &z, a.top_k)?;
    ctx.log(format!("gini of importance weights: {}", weights.gini()));

    create_dir(&a.out)?;
    dataio::write_text(
        a.out.join("importance.csv"),
        &importance_to_csv(&weights.values, &vocab),
    )?;
    dataio::write_text(a.out.join("top_words.tsv"), &top_words_to_tsv(&rows))?;

    #[derive(Serialize)]
    struct Settings<'a> {
        model: &'a Path,
        manifest: Option<&'a Path>,
        vocab: Option<&'a Path>,
        z: Option<&'a Path>,
        top_k: usize,
        gini: f64,
    }
    write_config(
        a.out.join("config.json"),
        "analyze",
        &Settings {
            model: &a.model,
            manifest: a.manifest.as_deref(),
            vocab: a.vocab.as_deref(),
            z: a.z.as_deref(),
            top_k: a.top_k,
            gini: weights.gini(),
        },
    )
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::parse(p, e.line(), e.to_string()))?
        }
        None => SynthSpec::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = a.$field {
                spec.$field = v;
            }
        )*};
    }
    set!(
        seed,
        num_seen,
        num_unseen,
        feat_dim,
        doc_dim,
        informative_dims,
        samples_per_class,
        doc_flip_prob,
        feature_noise_std
    );
    let format = match a.format.as_str() {
        "bin" => MatrixFormat::Binary,
        "csv" => MatrixFormat::Csv,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown format '{other}', expected bin or csv"
            )))
        }
    };
    let data = synthgen::generate(&spec)?;
    synthgen::write_dataset(&data, &spec, &a.out, format)?;
    ctx.log(format!(
        "{} seen and {} unseen classes written to {}",
        spec.num_seen,
        spec.num_unseen,
        a.out.display()
    ));

    #[derive(Serialize)]
    struct Settings<'a> {
        spec: &'a SynthSpec,
        format: &'a str,
    }
    write_config(
        a.out.join("config.json"),
        "synth",
        &Settings {
            spec: &spec,
            format: &a.format,
        },
    )
}
