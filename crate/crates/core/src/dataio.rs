//! File formats: feature matrices (CSV and binary), label lists, document
//! matrices, vocabularies, models and dataset manifests.
//!
//! CSV matrices carry one header line `#dims d=<rows> n=<cols>` followed by
//! one comma-separated line per row. Values are written in Rust's shortest
//! round-trip decimal form, so a save/load cycle is bit-exact.
//!
//! Binary matrices are little-endian: the magic bytes `NZSL`, a `u32`
//! version, `u64` rows, `u64` cols, then `rows * cols` `f64` values in
//! row-major order.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::Matrix;
use crate::model::Model;
use crate::nszsl::TrainingSet;
use crate::textpipe::{self, DocMatrix, Tokenizer, Vocabulary, Weighting};

pub const BINARY_MAGIC: &[u8; 4] = b"NZSL";
pub const BINARY_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DOCMATRIX_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Serde adapter: a matrix as an array of row arrays.
pub mod rows {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linsolve::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(D::Error::custom("matrix must have at least one row and column"));
        }
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(D::Error::custom("non-finite matrix entry"));
        }
        Ok(Matrix::from_row_slice(nrows, ncols, &flat))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("cannot serialise {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_file(path.as_ref(), text.as_bytes())
}

fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

fn from_value<T: for<'de> Deserialize<'de>>(path: &Path, v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = format!("#dims d={} n={}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse_csv_matrix(path: &Path, text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let header = header.trim();
    let rest = header
        .strip_prefix("#dims")
        .ok_or_else(|| Error::parse(path, 1, "expected header '#dims d=<rows> n=<cols>'"))?;
    let mut rows = None;
    let mut cols = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(path, 1, format!("malformed header field '{field}'")))?;
        let value: usize = value
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("bad dimension '{value}'")))?;
        match key {
            "d" => rows = Some(value),
            "n" => cols = Some(value),
            other => return Err(Error::parse(path, 1, format!("unknown header key '{other}'"))),
        }
    }
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r > 0 && c > 0 => (r, c),
        _ => return Err(Error::parse(path, 1, "header needs positive d and n")),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if seen_rows == rows {
            return Err(Error::parse(path, lineno, format!("more than {rows} data rows")));
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {cols} values, found {}", fields.len()),
            ));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("cannot parse '{f}' as a number")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    path: path.display().to_string(),
                    row: seen_rows,
                    col: c,
                });
            }
            data.push(v);
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("expected {rows} data rows, found {seen_rows}"),
        ));
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

pub fn matrix_to_binary(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn parse_binary_matrix(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    let bad = |msg: &str| Error::parse(path, 0, msg.to_string());
    if bytes.len() < 24 {
        return Err(bad("truncated binary header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(Error::SchemaVersionMismatch(format!(
            "binary matrix version {version}, expected {BINARY_VERSION}"
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(bad("binary matrix has a zero dimension"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| bad("binary matrix dimensions overflow"))?;
    if bytes.len() - 24 != expected {
        return Err(bad(&format!(
            "binary payload is {} bytes, expected {expected}",
            bytes.len() - 24
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[24..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFiniteValue {
                path: path.display().to_string(),
                row: i / cols,
                col: i % cols,
            });
        }
        data.push(v);
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

/// Loads a d x N feature matrix; the binary format is detected by its magic bytes.
pub fn load_features(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary_matrix(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::parse(path, 0, "file is not UTF-8"))?;
        parse_csv_matrix(path, text)
    }
}

pub fn save_features(path: impl AsRef<Path>, m: &Matrix, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Csv => write_file(path, matrix_to_csv(m).as_bytes()),
        MatrixFormat::Binary => write_file(path, &matrix_to_binary(m)),
    }
}

/// Reads one class name per line, skipping blank lines.
pub fn read_label_names(path: impl AsRef<Path>) -> Result<Vec<(usize, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn label_indices(names: &[(usize, String)], class_list: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|(line, name)| {
            class_list
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::UnknownClass {
                    name: name.clone(),
                    line: *line,
                })
        })
        .collect()
}

/// One-hot N x C label matrix for the classes in `class_list`.
pub fn load_labels(path: impl AsRef<Path>, class_list: &[String]) -> Result<Matrix> {
    let names = read_label_names(path)?;
    let idx = label_indices(&names, class_list)?;
    Ok(Matrix::from_fn(idx.len(), class_list.len(), |n, c| {
        if idx[n] == c {
            1.0
        } else {
            0.0
        }
    }))
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    let mut value =
        serde_json::to_value(model).map_err(|e| Error::InvalidInput(format!("cannot serialise model: {e}")))?;
    let (d, doc_dim) = {
        use crate::model::Compatibility;
        (model.feat_dim(), model.doc_dim())
    };
    let obj = value.as_object_mut().expect("model serialises to an object");
    obj.insert("format_version".into(), MODEL_FORMAT_VERSION.into());
    obj.insert("dims".into(), serde_json::json!({ "feat_dim": d, "doc_dim": doc_dim }));
    write_json(path, &value)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let mut value = read_json_value(path)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::parse(path, 1, "model file is not a JSON object"))?;
    let kind = obj
        .get("kind")
        .and_then(|k| k.as_str())
        .unwrap_or("<missing>")
        .to_string();
    if kind != "nszsl" && kind != "eszsl" {
        return Err(Error::SchemaVersionMismatch(format!("unsupported model kind '{kind}'")));
    }
    let version = obj.remove("format_version").and_then(|v| v.as_u64());
    if version != Some(MODEL_FORMAT_VERSION as u64) {
        return Err(Error::SchemaVersionMismatch(format!(
            "model format version {version:?}, expected {MODEL_FORMAT_VERSION}"
        )));
    }
    obj.remove("dims");
    from_value(path, value)
}

#[derive(Serialize, Deserialize)]
struct DocMatrixFile {
    kind: String,
    format_version: u32,
    weighting: Weighting,
    class_ids: Vec<String>,
    #[serde(with = "rows")]
    entries: Matrix,
}

pub fn save_doc_matrix(path: impl AsRef<Path>, z: &DocMatrix) -> Result<()> {
    write_json(
        path,
        &DocMatrixFile {
            kind: "docmatrix".into(),
            format_version: DOCMATRIX_FORMAT_VERSION,
            weighting: z.weighting,
            class_ids: z.class_ids.clone(),
            entries: z.entries.clone(),
        },
    )
}

pub fn load_doc_matrix(path: impl AsRef<Path>) -> Result<DocMatrix> {
    let path = path.as_ref();
    let f: DocMatrixFile = from_value(path, read_json_value(path)?)?;
    if f.kind != "docmatrix" || f.format_version != DOCMATRIX_FORMAT_VERSION {
        return Err(Error::SchemaVersionMismatch(format!(
            "expected docmatrix v{DOCMATRIX_FORMAT_VERSION}, got {} v{}",
            f.kind, f.format_version
        )));
    }
    let z = DocMatrix {
        entries: f.entries,
        weighting: f.weighting,
        class_ids: f.class_ids,
    };
    z.validate()?;
    Ok(z)
}

pub fn save_vocabulary(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    write_json(path, vocab)
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    from_value(path, read_json_value(path)?)
}

/// Dataset description. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub documents: PathBuf,
    pub seen_classes: Vec<String>,
    pub unseen_classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(default)]
    pub weighting: Weighting,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let m: DatasetManifest = from_value(path, read_json_value(path)?)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::SchemaVersionMismatch(format!(
                "manifest version {}, expected {MANIFEST_FORMAT_VERSION}",
                m.format_version
            )));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }

    fn validate_classes(&self) -> Result<()> {
        let seen: HashSet<&String> = self.seen_classes.iter().collect();
        if seen.len() != self.seen_classes.len() {
            return Err(Error::InvalidInput("duplicate seen class".into()));
        }
        let unseen: HashSet<&String> = self.unseen_classes.iter().collect();
        if unseen.len() != self.unseen_classes.len() {
            return Err(Error::InvalidInput("duplicate unseen class".into()));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::InvalidInput(format!("class '{c}' is both seen and unseen")));
        }
        if self.seen_classes.is_empty() {
            return Err(Error::TooFewClasses("manifest lists no seen classes".into()));
        }
        Ok(())
    }
}

/// Unseen-class evaluation data: features, labels indexing `z`'s columns and
/// the unseen class descriptions.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub z: Matrix,
}

/// Everything a manifest resolves to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub vocab: Vocabulary,
    pub seen_docs: DocMatrix,
    pub unseen_docs: Option<DocMatrix>,
    pub train: TrainingSet,
    pub test: Option<TestSet>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Dataset {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let (manifest, base) = DatasetManifest::load(manifest_path)?;
        manifest.validate_classes()?;
        let features_path = resolve(&base, &manifest.features);
        let labels_path = resolve(&base, &manifest.labels);
        let docs_path = resolve(&base, &manifest.documents);
        for p in [&features_path, &labels_path, &docs_path] {
            if !p.exists() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by manifest"),
                ));
            }
        }

        let tokenizer = match &manifest.stopwords {
            Some(p) => Tokenizer::from_stop_word_file(resolve(&base, p))?,
            None => Tokenizer::default(),
        };
        let corpus = textpipe::read_corpus_dir(&docs_path)?;
        let seen_text = textpipe::select_docs(&corpus, &manifest.seen_classes)?;
        let vocab = tokenizer.build_vocabulary(&seen_text)?;
        let seen_docs = tokenizer.featurize(&seen_text, &vocab, manifest.weighting)?;

        let x = load_features(&features_path)?;
        let names = read_label_names(&labels_path)?;
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} feature columns",
                names.len(),
                x.ncols()
            )));
        }
        let mut all_classes = manifest.seen_classes.clone();
        all_classes.extend(manifest.unseen_classes.iter().cloned());
        let idx = label_indices(&names, &all_classes)?;
        let n_seen = manifest.seen_classes.len();

        let seen_cols: Vec<usize> = (0..idx.len()).filter(|&n| idx[n] < n_seen).collect();
        let seen_labels: Vec<usize> = seen_cols.iter().map(|&n| idx[n]).collect();
        let train = TrainingSet::from_labels(
            x.select_columns(seen_cols.iter()),
            &seen_labels,
            seen_docs.entries.clone(),
        )?;

        let (unseen_docs, test) = if manifest.unseen_classes.is_empty() {
            (None, None)
        } else {
            let unseen_text = textpipe::select_docs(&corpus, &manifest.unseen_classes)?;
            let unseen_docs = tokenizer.featurize(&unseen_text, &vocab, manifest.weighting)?;
            let test_cols: Vec<usize> = (0..idx.len()).filter(|&n| idx[n] >= n_seen).collect();
            let test = TestSet {
                x: x.select_columns(test_cols.iter()),
                labels: test_cols.iter().map(|&n| idx[n] - n_seen).collect(),
                z: unseen_docs.entries.clone(),
            };
            (Some(unseen_docs), Some(test))
        };

        Ok(Dataset {
            manifest,
            vocab,
            seen_docs,
            unseen_docs,
            train,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eszsl::{EszslConfig, EszslModel};

    #[test]
    fn csv_example() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "#dims d=2 n=3\n1,2,3\n4,5,6\n").unwrap();
        let m = load_features(&p).unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "").unwrap();
        assert!(matches!(load_features(&p), Err(Error::Parse { .. })));
        fs::write(&p, "#dims d=2 n=2\n1,2\n3,oops\n").unwrap();
        assert!(matches!(load_features(&p), Err(Error::Parse { line: 3, .. })));
        fs::write(&p, "#dims d=1 n=2\n1,NaN\n").unwrap();
        assert!(matches!(
            load_features(&p),
            Err(Error::NonFiniteValue { row: 0, col: 1, .. })
        ));
        fs::write(&p, "#dims d=2 n=2\n1,2\n").unwrap();
        assert!(matches!(load_features(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let m = Matrix::from_row_slice(2, 2, &[0.1, -1e-300, std::f64::consts::PI, 7.0]);
        save_features(&p, &m, MatrixFormat::Binary).unwrap();
        assert_eq!(load_features(&p).unwrap(), m);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_features(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn labels_example() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.txt");
        fs::write(&p, "a\nb\na\n").unwrap();
        let classes = vec!["a".to_string(), "b".to_string()];
        let y = load_labels(&p, &classes).unwrap();
        assert_eq!(y, Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));
        fs::write(&p, "a\nc\n").unwrap();
        assert!(matches!(
            load_labels(&p, &classes),
            Err(Error::UnknownClass { name, line: 2 }) if name == "c"
        ));
        fs::write(&p, "").unwrap();
        assert_eq!(load_labels(&p, &classes).unwrap().nrows(), 0);
    }

    #[test]
    fn model_schema_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        let model = Model::Eszsl(EszslModel {
            v: Matrix::from_row_slice(1, 2, &[0.1, 0.2]),
            config: EszslConfig::default(),
            vocab_hash: Some("abc".into()),
        });
        save_model(&p, &model).unwrap();
        assert_eq!(load_model(&p).unwrap(), model);

        let text = fs::read_to_string(&p).unwrap().replace("\"eszsl\"", "\"svm\"");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_model(&p), Err(Error::SchemaVersionMismatch(_))));

        fs::write(&p, "{\"kind\": \"eszsl\", ").unwrap();
        assert!(matches!(load_model(&p), Err(Error::Parse { .. })));
    }
}
