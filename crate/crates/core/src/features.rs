//! Code tokenization and fixed-length feature vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::context::{AssembledInput, AssemblyMode};
use crate::io::{self, IoError};
use crate::lexer::{self, TokenKind};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("cannot concatenate vectors of dimension {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding table line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Split code into identifiers, literals and operators. Comments and
/// whitespace are dropped; string and char literals stay whole.
pub fn tokenize(code: &str) -> Vec<String> {
    lexer::scan(code).into_iter().map(|t| t.text).collect()
}

fn is_operator(token: &str) -> bool {
    lexer::scan(token)
        .first()
        .is_some_and(|t| t.kind == TokenKind::Op)
}

/// Character n-grams of one token with lengths in `min_len..=max_len`.
/// Operator tokens are kept whole.
pub fn subtokens(token: &str, min_len: usize, max_len: usize) -> Vec<String> {
    assert!(min_len >= 1 && min_len <= max_len, "invalid n-gram range");
    if is_operator(token) {
        return vec![token.to_string()];
    }
    let chars: Vec<char> = token.chars().collect();
    let mut out = Vec::new();
    for k in min_len..=max_len.min(chars.len()) {
        for w in chars.windows(k) {
            out.push(w.iter().collect());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabSource {
    Tokens,
    Subtokens,
}

impl VocabSource {
    /// The countable units of a text for this source.
    pub fn units(self, text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        match self {
            VocabSource::Tokens => tokens,
            VocabSource::Subtokens => tokens.iter().flat_map(|t| subtokens(t, 2, 6)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    pub min_document_frequency: usize,
    pub source: VocabSource,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    source: VocabSource,
    min_document_frequency: usize,
    terms: Vec<String>,
}

impl From<VocabularyFile> for Vocabulary {
    fn from(f: VocabularyFile) -> Self {
        let index = f
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms: f.terms,
            index,
            min_document_frequency: f.min_document_frequency,
            source: f.source,
        }
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            source: v.source,
            min_document_frequency: v.min_document_frequency,
            terms: v.terms,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Keep the units that occur in at least `min_df` documents, indexed in
/// order of first appearance.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_df: usize,
    source: VocabSource,
) -> Vocabulary {
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for unit in doc {
            let unit = unit.as_ref();
            if seen.insert(unit) {
                let n = df.entry(unit).or_insert_with(|| {
                    order.push(unit);
                    0
                });
                *n += 1;
            }
        }
    }
    let terms: Vec<String> = order
        .into_iter()
        .filter(|u| df[u] >= min_df)
        .map(str::to_string)
        .collect();
    Vocabulary::from(VocabularyFile {
        source,
        min_document_frequency: min_df,
        terms,
    })
}

/// A sparse vector: sorted, strictly increasing indices with nonzero values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dimension: usize,
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn zeros(dimension: usize) -> Self {
        FeatureVector {
            dimension,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dimension: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn from_map(dimension: usize, map: &BTreeMap<usize, f64>) -> Self {
        FeatureVector {
            dimension,
            entries: map
                .iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (*i, *v))
                .collect(),
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn add(&self, other: &FeatureVector) -> FeatureVector {
        let mut map: BTreeMap<usize, f64> = self.entries.iter().copied().collect();
        for &(i, v) in &other.entries {
            *map.entry(i).or_default() += v;
        }
        FeatureVector::from_map(self.dimension.max(other.dimension), &map)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Raw in-vocabulary unit counts.
pub fn bag_features<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary) -> FeatureVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for unit in doc {
        if let Some(i) = vocab.get(unit.as_ref()) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    FeatureVector::from_map(vocab.len(), &counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dimension: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Parse the text format: one `token v1 .. vd` line per token. A leading
    /// `count dimension` header line, as written by word2vec, is accepted.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut dimension = None;
        let mut vectors = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if n == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                dimension = Some(fields[1].parse().unwrap());
                continue;
            }
            let err = |reason: String| FeatureError::Table {
                line: n + 1,
                reason,
            };
            let values = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| err(format!("bad number `{f}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let d = *dimension.get_or_insert(values.len());
            if values.len() != d || d == 0 {
                return Err(err(format!("expected {d} values, found {}", values.len())));
            }
            vectors.insert(fields[0].to_string(), values);
        }
        let dimension = dimension.ok_or(FeatureError::Table {
            line: 0,
            reason: "empty table".into(),
        })?;
        Ok(EmbeddingTable { dimension, vectors })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::parse(&io::read_to_string(path)?)
    }
}

/// Mean of the table vectors of in-table tokens; zero when none is known.
pub fn embedding_average<S: AsRef<str>>(doc: &[S], table: &EmbeddingTable) -> FeatureVector {
    let mut sum = vec![0.0; table.dimension];
    let mut found = 0usize;
    for token in doc {
        if let Some(v) = table.vectors.get(token.as_ref()) {
            found += 1;
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
    }
    if found > 0 {
        for s in &mut sum {
            *s /= found as f64;
        }
    }
    FeatureVector::from_dense(&sum)
}

/// Join two vectors of the same featurizer; `b` is shifted by `a.dimension`.
pub fn concat_features(
    a: &FeatureVector,
    b: &FeatureVector,
) -> Result<FeatureVector, FeatureError> {
    if a.dimension != b.dimension {
        return Err(FeatureError::DimensionMismatch(a.dimension, b.dimension));
    }
    let mut entries = a.entries.clone();
    entries.extend(b.entries.iter().map(|&(i, v)| (i + a.dimension, v)));
    Ok(FeatureVector {
        dimension: a.dimension * 2,
        entries,
    })
}

/// Matrix as `row col value` lines for auditing.
pub fn to_triplets(rows: &[FeatureVector]) -> String {
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in &row.entries {
            writeln!(out, "{r} {c} {v}").unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    BagTokens,
    BagSubtokens,
    EmbeddingAverage(PathBuf),
}

impl FeatureKind {
    pub fn label(&self) -> String {
        match self {
            FeatureKind::BagTokens => "bag_tokens".into(),
            FeatureKind::BagSubtokens => "bag_subtokens".into(),
            FeatureKind::EmbeddingAverage(p) => format!(
                "embedding_average({})",
                p.file_name()
                    .map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into())
            ),
        }
    }
}

/// A featurizer fitted on training inputs.
#[derive(Debug, Clone)]
pub enum Featurizer {
    Bag(Vocabulary),
    Embedding(std::sync::Arc<EmbeddingTable>),
}

fn merged_text(input: &AssembledInput) -> String {
    if input.part_context.is_empty() {
        input.part_vuln.clone()
    } else {
        format!("{}\n{}", input.part_vuln, input.part_context)
    }
}

impl Featurizer {
    /// Fit on training inputs only. Double inputs contribute their merged
    /// text, so both parts share one vocabulary.
    pub fn fit_bag(source: VocabSource, train: &[&AssembledInput]) -> Self {
        let docs: Vec<Vec<String>> = train
            .iter()
            .map(|i| source.units(&merged_text(i)))
            .collect();
        Featurizer::Bag(build_vocabulary(&docs, 2, source))
    }

    /// Width of one part's vector.
    pub fn part_dimension(&self) -> usize {
        match self {
            Featurizer::Bag(v) => v.len(),
            Featurizer::Embedding(t) => t.dimension,
        }
    }

    fn part(&self, text: &str) -> FeatureVector {
        match self {
            Featurizer::Bag(v) => bag_features(&v.source.units(text), v),
            Featurizer::Embedding(t) => embedding_average(&tokenize(text), t),
        }
    }

    pub fn transform(&self, input: &AssembledInput) -> FeatureVector {
        match input.mode {
            AssemblyMode::Single => self.part(&input.part_vuln),
            AssemblyMode::Double => concat_features(
                &self.part(&input.part_vuln),
                &self.part(&input.part_context),
            )
            .expect("parts share one featurizer"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("var++"), strs(&["var", "++"]));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("sb.append(dir);"),
            strs(&["sb", ".", "append", "(", "dir", ")", ";"])
        );
        assert_eq!(tokenize("s = \"a b\";"), strs(&["s", "=", "\"a b\"", ";"]));
    }

    #[test]
    fn subtoken_examples() {
        assert!(subtokens("ThisIsAVeryLongVar", 2, 6).contains(&"Var".to_string()));
        assert!(subtokens("a", 2, 6).is_empty());
        let mut abc = subtokens("abc", 2, 6);
        abc.sort();
        assert_eq!(abc, strs(&["ab", "abc", "bc"]));
        assert_eq!(subtokens("++", 2, 6), strs(&["++"]));
        assert_eq!(subtokens(">>>=", 2, 6), strs(&[">>>="]));
    }

    #[test]
    fn vocabulary_min_df() {
        let docs = vec![strs(&["a", "b"]), strs(&["b", "c"]), strs(&["c"])];
        let v = build_vocabulary(&docs, 2, VocabSource::Tokens);
        assert_eq!(v.terms(), &strs(&["b", "c"])[..]);
        assert_eq!(v.get("b"), Some(0));
        assert!(build_vocabulary::<String>(&[], 2, VocabSource::Tokens).is_empty());
        let repeated = vec![strs(&["a", "a"]), strs(&["b"])];
        assert!(build_vocabulary(&repeated, 2, VocabSource::Tokens).is_empty());
    }

    #[test]
    fn bag_counts() {
        let v = build_vocabulary(
            &[strs(&["a", "b"]), strs(&["a", "b"])],
            2,
            VocabSource::Tokens,
        );
        let f = bag_features(&strs(&["a", "a", "b"]), &v);
        assert_eq!(f.entries, vec![(0, 2.0), (1, 1.0)]);
        assert!(bag_features(&strs(&["z"]), &v).is_zero());
        assert!(bag_features::<String>(&[], &v).is_zero());
        assert_eq!(f.dimension, 2);
    }

    #[test]
    fn embedding_mean() {
        let t = EmbeddingTable::parse("2 2\nx 1 0\ny 0 1\n").unwrap();
        assert_eq!(
            embedding_average(&strs(&["x", "y"]), &t).to_dense(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            embedding_average(&strs(&["x", "x", "q"]), &t).to_dense(),
            vec![1.0, 0.0]
        );
        assert!(embedding_average(&strs(&["q"]), &t).is_zero());
    }

    #[test]
    fn table_errors() {
        assert!(EmbeddingTable::parse("x 1 2\ny 1\n").is_err());
        assert!(EmbeddingTable::parse("x 1 a\n").is_err());
        assert!(EmbeddingTable::parse("").is_err());
        let t = EmbeddingTable::parse("x 1 2 3\n").unwrap();
        assert_eq!(t.dimension, 3);
    }

    #[test]
    fn concatenation() {
        let a = FeatureVector {
            dimension: 2,
            entries: vec![(0, 1.0)],
        };
        let b = FeatureVector {
            dimension: 2,
            entries: vec![(1, 2.0)],
        };
        let c = concat_features(&a, &b).unwrap();
        assert_eq!(c.dimension, 4);
        assert_eq!(c.entries, vec![(0, 1.0), (3, 2.0)]);
        let z = concat_features(&FeatureVector::zeros(3), &FeatureVector::zeros(3)).unwrap();
        assert_eq!(z.dimension, 6);
        assert!(concat_features(&a, &FeatureVector::zeros(3)).is_err());
    }

    #[test]
    fn triplets_and_vocab_file() {
        let rows = vec![
            FeatureVector::from_dense(&[0.0, 2.0]),
            FeatureVector::from_dense(&[1.5, 0.0]),
        ];
        assert_eq!(to_triplets(&rows), "0 1 2\n1 0 1.5\n");
        let v = build_vocabulary(&[strs(&["a"]), strs(&["a"])], 2, VocabSource::Subtokens);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
    }
}
