//! Bag-of-words featurization of class documents.
//!
//! Tokenization lowercases the text, splits on every non-alphabetic character
//! (so digits and punctuation act as separators), drops tokens shorter than two
//! characters and removes stop words. No stemming is applied.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linsolve::Matrix;

pub const MIN_TOKEN_LEN: usize = 2;
pub const VOCAB_FORMAT_VERSION: u32 = 1;

/// Classic English stop-word list. Entries with apostrophes are split the same
/// way documents are, so "don't" contributes "don".
const DEFAULT_STOP_WORDS: &str = "\
a about above after again against all am an and any are aren't as at be because been before being below \
between both but by can't cannot could couldn't did didn't do does doesn't doing don't down during each \
few for from further had hadn't has hasn't have haven't having he he'd he'll he's her here here's hers \
herself him himself his how how's i i'd i'll i'm i've if in into is isn't it it's its itself let's me more \
most mustn't my myself no nor not of off on once only or other ought our ours ourselves out over own same \
shan't she she'd she'll she's should shouldn't so some such than that that's the their theirs them \
themselves then there there's these they they'd they'll they're they've this those through to too under \
until up very was wasn't we we'd we'll we're we've were weren't what what's when when's where where's \
which while who who's whom why why's with won't would wouldn't you you'd you'll you're you've your yours \
yourself yourselves";

fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| t.chars().count() >= MIN_TOKEN_LEN)
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    stop_words: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::with_stop_words(DEFAULT_STOP_WORDS.split_whitespace())
    }
}

impl Tokenizer {
    pub fn with_stop_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let stop_words = words.into_iter().flat_map(split_words).collect();
        Tokenizer { stop_words }
    }

    /// Reads a stop-word file: one entry per line, `#` starts a comment.
    pub fn from_stop_word_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines = text.lines().map(|l| l.split('#').next().unwrap_or("").trim());
        Ok(Self::with_stop_words(lines.filter(|l| !l.is_empty())))
    }

    pub fn is_stop_word(&self, token: &str) -> bool {
        self.stop_words.contains(token)
    }

    pub fn tokenize(&self, document: &str) -> Vec<String> {
        split_words(document).filter(|t| !self.is_stop_word(t)).collect()
    }

    /// Builds the vocabulary from seen-class documents: every surviving token,
    /// sorted lexicographically.
    pub fn build_vocabulary(&self, seen_docs: &[(String, String)]) -> Result<Vocabulary> {
        if seen_docs.is_empty() {
            return Err(Error::InvalidInput("no seen documents".into()));
        }
        let mut ids = HashSet::new();
        for (id, _) in seen_docs {
            if !ids.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate class id '{id}'")));
            }
        }
        let terms: BTreeSet<String> = seen_docs.iter().flat_map(|(_, text)| self.tokenize(text)).collect();
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut source: Vec<String> = ids.into_iter().map(str::to_string).collect();
        source.sort();
        Vocabulary::new(terms.into_iter().collect(), source)
    }

    /// Term counts over `vocab` for one document; out-of-vocabulary tokens are dropped.
    fn counts(&self, text: &str, vocab: &Vocabulary) -> HashMap<usize, f64> {
        let mut counts = HashMap::new();
        for token in self.tokenize(text) {
            if let Some(i) = vocab.position(&token) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        counts
    }

    pub fn featurize(&self, docs: &[(String, String)], vocab: &Vocabulary, weighting: Weighting) -> Result<DocMatrix> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("no documents to featurize".into()));
        }
        let counts: Vec<HashMap<usize, f64>> = docs.iter().map(|(_, t)| self.counts(t, vocab)).collect();
        let num_classes = docs.len();
        let mut entries = Matrix::zeros(vocab.len(), num_classes);
        match weighting {
            Weighting::Binary => {
                for (c, col) in counts.iter().enumerate() {
                    for &w in col.keys() {
                        entries[(w, c)] = 1.0;
                    }
                }
            }
            Weighting::TfIdf => {
                let mut df = vec![0usize; vocab.len()];
                for col in &counts {
                    for &w in col.keys() {
                        df[w] += 1;
                    }
                }
                for (c, col) in counts.iter().enumerate() {
                    for (&w, &tf) in col {
                        entries[(w, c)] = tf * (num_classes as f64 / df[w] as f64).ln();
                    }
                }
            }
        }
        for (c, (id, _)) in docs.iter().enumerate() {
            let norm = entries.column(c).norm();
            if norm == 0.0 {
                return Err(Error::AllZeroColumn(id.clone()));
            }
            if weighting == Weighting::TfIdf {
                entries.column_mut(c).unscale_mut(norm);
            }
        }
        Ok(DocMatrix {
            entries,
            weighting,
            class_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
        })
    }
}

/// Ordered term list for the document representation. Position `i` is
/// dimension `i` of every [`DocMatrix`] column built against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    source: Vec<String>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>, source: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if t.is_empty() || t.to_lowercase() != *t {
                return Err(Error::InvalidInput(format!(
                    "vocabulary term '{t}' is empty or not lowercase"
                )));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary term '{t}'")));
            }
        }
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Vocabulary { terms, index, source })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn source(&self) -> &[String] {
        &self.source
    }

    pub fn position(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    /// SHA-256 over the newline-joined term list, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.terms {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    format_version: u32,
    kind: String,
    terms: Vec<String>,
    source: Vec<String>,
    hash: String,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabularyFile {
            format_version: VOCAB_FORMAT_VERSION,
            kind: "vocabulary".into(),
            terms: self.terms.clone(),
            source: self.source.clone(),
            hash: self.content_hash(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = VocabularyFile::deserialize(d)?;
        if f.kind != "vocabulary" || f.format_version != VOCAB_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "expected vocabulary v{VOCAB_FORMAT_VERSION}, got {} v{}",
                f.kind, f.format_version
            )));
        }
        Vocabulary::new(f.terms, f.source).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Binary,
    TfIdf,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Binary => "binary",
            Weighting::TfIdf => "tfidf",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Weighting::Binary),
            "tfidf" => Ok(Weighting::TfIdf),
            other => Err(Error::InvalidInput(format!("unknown weighting '{other}'"))),
        }
    }
}

/// Class-description matrix: one column per class, one row per vocabulary term.
#[derive(Debug, Clone, PartialEq)]
pub struct DocMatrix {
    pub entries: Matrix,
    pub weighting: Weighting,
    pub class_ids: Vec<String>,
}

impl DocMatrix {
    pub fn vocab_size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.entries.ncols()
    }

    pub fn class_index(&self, id: &str) -> Option<usize> {
        self.class_ids.iter().position(|c| c == id)
    }

    /// Checks the weighting-dependent entry constraints and the no-empty-column rule.
    pub fn validate(&self) -> Result<()> {
        if self.class_ids.len() != self.entries.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} class ids for {} columns",
                self.class_ids.len(),
                self.entries.ncols()
            )));
        }
        for (c, id) in self.class_ids.iter().enumerate() {
            let col = self.entries.column(c);
            let ok = match self.weighting {
                Weighting::Binary => col.iter().all(|&v| v == 0.0 || v == 1.0),
                Weighting::TfIdf => col.iter().all(|&v| v >= 0.0 && v.is_finite()),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "column '{id}' violates {} weighting constraints",
                    self.weighting
                )));
            }
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::AllZeroColumn(id.clone()));
            }
        }
        Ok(())
    }
}

/// Reads a corpus directory: one UTF-8 file per class, the file stem is the
/// class id. Returned sorted by class id.
pub fn read_corpus_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let dir = dir.as_ref();
    let mut docs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.starts_with('.') {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        docs.push((stem.to_string(), text));
    }
    docs.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput(format!("duplicate class document '{}'", w[0].0)));
    }
    Ok(docs)
}

/// Picks the documents for `class_ids`, in that order.
pub fn select_docs(corpus: &[(String, String)], class_ids: &[String]) -> Result<Vec<(String, String)>> {
    class_ids
        .iter()
        .map(|id| {
            corpus
                .iter()
                .find(|(c, _)| c == id)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("no document for class '{id}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn tokenize_examples() {
        let t = Tokenizer::default();
        assert_eq!(
            t.tokenize("The otter swims, swims fast."),
            ["otter", "swims", "swims", "fast"]
        );
        assert!(t.tokenize("").is_empty());
        assert_eq!(
            t.tokenize("A 2nd-stage RUMINANT stomach"),
            ["nd", "stage", "ruminant", "stomach"]
        );
    }

    #[test]
    fn contraction_fragments_are_stop_words() {
        let t = Tokenizer::default();
        assert!(t.tokenize("don't you've they'll").is_empty());
    }

    #[test]
    fn stop_word_file_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stop.txt");
        std::fs::write(&p, "# custom list\notter\n\nfast # trailing\n").unwrap();
        let t = Tokenizer::from_stop_word_file(&p).unwrap();
        assert_eq!(t.tokenize("The otter swims fast"), ["the", "swims"]);
    }

    #[test]
    fn vocabulary_sorted_and_hashed() {
        let t = Tokenizer::default();
        let v = t
            .build_vocabulary(&docs(&[("a", "red fox"), ("b", "red bird")]))
            .unwrap();
        assert_eq!(v.terms(), ["bird", "fox", "red"]);
        assert_eq!(v.position("red"), Some(2));
        assert_eq!(v.content_hash().len(), 64);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vocabulary_errors() {
        let t = Tokenizer::default();
        assert!(matches!(
            t.build_vocabulary(&docs(&[("a", "the the the")])),
            Err(Error::EmptyVocabulary)
        ));
        assert!(t.build_vocabulary(&docs(&[("a", "fox"), ("a", "cat")])).is_err());
        assert!(t.build_vocabulary(&[]).is_err());
    }

    #[test]
    fn featurize_binary() {
        let t = Tokenizer::default();
        let v = Vocabulary::new(vec!["bird".into(), "fox".into(), "red".into()], vec![]).unwrap();
        let z = t
            .featurize(&docs(&[("c1", "red red fox")]), &v, Weighting::Binary)
            .unwrap();
        assert_eq!(z.entries.column(0).as_slice(), &[0.0, 1.0, 1.0]);
        z.validate().unwrap();
    }

    #[test]
    fn featurize_tfidf_single_class_is_all_zero() {
        let t = Tokenizer::default();
        let v = Vocabulary::new(vec!["bird".into(), "fox".into(), "red".into()], vec![]).unwrap();
        let err = t
            .featurize(&docs(&[("c1", "red red fox")]), &v, Weighting::TfIdf)
            .unwrap_err();
        assert!(matches!(err, Error::AllZeroColumn(id) if id == "c1"));
    }

    #[test]
    fn featurize_tfidf_two_docs() {
        let t = Tokenizer::default();
        let v = Vocabulary::new(vec!["bird".into(), "fox".into(), "red".into()], vec![]).unwrap();
        let z = t
            .featurize(&docs(&[("c1", "red fox"), ("c2", "red bird")]), &v, Weighting::TfIdf)
            .unwrap();
        assert_eq!(z.entries.column(0).as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(z.entries.column(1).as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_vocabulary_dropped_and_empty_doc_fails() {
        let t = Tokenizer::default();
        let v = Vocabulary::new(vec!["fox".into()], vec![]).unwrap();
        let z = t
            .featurize(&docs(&[("c", "fox zebra")]), &v, Weighting::Binary)
            .unwrap();
        assert_eq!(z.entries[(0, 0)], 1.0);
        assert!(matches!(
            t.featurize(&docs(&[("u", "zebra okapi")]), &v, Weighting::Binary),
            Err(Error::AllZeroColumn(_))
        ));
    }

    #[test]
    fn corpus_dir_sorted_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("zebra.txt"), "striped").unwrap();
        std::fs::write(dir.path().join("antelope.txt"), "horns").unwrap();
        let corpus = read_corpus_dir(dir.path()).unwrap();
        assert_eq!(corpus[0].0, "antelope");
        assert_eq!(corpus[1].1, "striped");
        let picked = select_docs(&corpus, &["zebra".into()]).unwrap();
        assert_eq!(picked[0].0, "zebra");
        assert!(select_docs(&corpus, &["okapi".into()]).is_err());
    }
}
