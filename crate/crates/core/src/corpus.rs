//! Corpus ingestion: tokenization, vocabulary, count / TF-IDF matrices,
//! word co-occurrence statistics and deterministic splits.
//!
//! On-disk layout of a preprocessed corpus directory:
//!
//! | file           | content                                               |
//! |----------------|-------------------------------------------------------|
//! | `vocab.json`   | JSON list of words, index order                       |
//! | `counts.txt`   | docs × vocab term counts, sparse triplets             |
//! | `tfidf.txt`    | docs × vocab TF-IDF weights, sparse triplets          |
//! | `cooccur.txt`  | vocab × vocab co-occurrence counts, sparse triplets   |
//! | `splits.json`  | split label and source line per document              |
//!
//! Sparse triplet files start with a header line `rows cols nnz` followed by
//! one `i j value` line per stored entry, 0-indexed, row-major.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::Matrix;
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Built-in English stopword list.
pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// Lowercases, splits on non-alphanumeric characters and drops tokens made
/// only of digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !t.chars().all(|c| c.is_ascii_digit()))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// Number of documents containing each word (over the documents the
    /// vocabulary was built from).
    pub doc_freq: Vec<usize>,
}

impl Vocab {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let index: HashMap<String, usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        if index.len() != words.len() {
            return Err(Error::Parse("duplicate word in vocabulary".into()));
        }
        let doc_freq = vec![0; words.len()];
        Ok(Self {
            words,
            index,
            doc_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Hex SHA-256 of the JSON word list.
    pub fn hash(&self) -> String {
        vocab_hash(&self.words)
    }
}

pub fn vocab_hash(words: &[String]) -> String {
    let json = serde_json::to_string(words).expect("word list serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Keeps non-stopwords with corpus frequency ≥ `min_count`, then the
/// `max_vocab` most frequent (ties broken lexicographically).
pub fn build_vocab(
    docs: &[Vec<String>],
    stopwords: &HashSet<String>,
    min_count: usize,
    max_vocab: usize,
) -> Result<Vocab> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for t in doc {
            if stopwords.contains(t) {
                continue;
            }
            *freq.entry(t).or_default() += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_vocab);
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut vocab = Vocab::from_words(kept.iter().map(|(w, _)| w.to_string()).collect())?;
    vocab.doc_freq = kept.iter().map(|(w, _)| df[w]).collect();
    Ok(vocab)
}

/// Row-major sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Vec::new(); rows],
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.data[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.data[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.data[i].iter().map(|&(_, v)| v).sum()
    }

    /// Dense `ids.len() × cols` matrix holding the selected rows.
    pub fn dense_rows(&self, ids: &[usize]) -> Matrix {
        let mut m = Matrix::zeros((ids.len(), self.cols));
        for (r, &i) in ids.iter().enumerate() {
            for &(j, v) in &self.data[i] {
                m[[r, j]] = v;
            }
        }
        m
    }

    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz()).unwrap();
        for (i, row) in self.data.iter().enumerate() {
            for &(j, v) in row {
                writeln!(s, "{i} {j} {v}").unwrap();
            }
        }
        s
    }

    pub fn from_triplets(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing triplet header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [rows, cols, nnz] = dims[..] else {
            return Err(Error::Parse(format!("bad header {header:?}")));
        };
        let mut m = Self::new(rows, cols);
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let bad = || Error::Parse(format!("bad triplet line {line:?}"));
            let i: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let j: usize = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let v: f64 = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            if i >= rows || j >= cols {
                return Err(bad());
            }
            m.data[i].push((j, v));
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::Parse(format!("header says {nnz} entries, found {seen}")));
        }
        for row in &mut m.data {
            row.sort_by_key(|&(j, _)| j);
        }
        Ok(m)
    }
}

/// Term counts per document.
pub fn count_matrix(docs: &[Vec<usize>], vocab_size: usize) -> SparseMatrix {
    let mut m = SparseMatrix::new(docs.len(), vocab_size);
    for (i, doc) in docs.iter().enumerate() {
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for &w in doc {
            *row.entry(w).or_default() += 1.0;
        }
        m.data[i] = row.into_iter().collect();
    }
    m
}

/// Document frequency of each word over the selected rows of `counts`.
pub fn document_frequency(counts: &SparseMatrix, rows: &[usize]) -> Vec<usize> {
    let mut df = vec![0; counts.cols];
    for &i in rows {
        for &(j, _) in counts.row(i) {
            df[j] += 1;
        }
    }
    df
}

/// `count · (ln((1 + N) / (1 + df)) + 1)` with `N = n_docs`.
pub fn tfidf(counts: &SparseMatrix, df: &[usize], n_docs: usize) -> SparseMatrix {
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n_docs as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let mut m = counts.clone();
    for row in &mut m.data {
        for (j, v) in row.iter_mut() {
            *v *= idf[*j];
        }
    }
    m
}

/// Symmetric co-occurrence counts and per-word marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Cooccurrence {
    pub counts: SparseMatrix,
    pub marginals: Vec<f64>,
}

impl Cooccurrence {
    pub fn from_counts(counts: SparseMatrix) -> Self {
        let marginals = (0..counts.rows).map(|i| counts.row_sum(i)).collect();
        Self { counts, marginals }
    }

    /// `P(w_i | w_j) = X_ij / X_j`; zero when `X_j = 0`.
    pub fn conditional(&self, i: usize, j: usize) -> f64 {
        let xj = self.marginals[j];
        if xj > 0.0 {
            self.counts.get(i, j) / xj
        } else {
            0.0
        }
    }

    /// Every `(i, j, P(w_i | w_j))` with positive probability.
    pub fn support(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.counts.nnz());
        for (i, row) in self.counts.data.iter().enumerate() {
            for &(j, x) in row {
                if x > 0.0 && self.marginals[j] > 0.0 {
                    out.push((i, j, x / self.marginals[j]));
                }
            }
        }
        out
    }
}

/// Counts every ordered pair of in-vocabulary tokens at distance at most
/// `window` (0 = whole document), skipping same-word pairs.
pub fn cooccurrence(docs: &[Vec<usize>], vocab_size: usize, window: usize) -> Cooccurrence {
    let mut acc: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); vocab_size];
    for doc in docs {
        for (p, &wi) in doc.iter().enumerate() {
            let span = if window == 0 { doc.len() } else { window };
            let end = (p + span + 1).min(doc.len());
            for &wj in &doc[p + 1..end] {
                if wi != wj {
                    *acc[wi].entry(wj).or_default() += 1.0;
                    *acc[wj].entry(wi).or_default() += 1.0;
                }
            }
        }
    }
    let mut counts = SparseMatrix::new(vocab_size, vocab_size);
    counts.data = acc.into_iter().map(|r| r.into_iter().collect()).collect();
    Cooccurrence::from_counts(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Deterministic shuffled assignment of `n` documents to train/valid/test.
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Config(format!("split ratios {ratios:?} must sum to 1")));
    }
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_valid = (ratios[1] * n as f64).round() as usize;
    if n_train == 0 || n_valid == 0 || n_train + n_valid >= n {
        return Err(Error::Precondition(format!(
            "split of {n} documents with ratios {ratios:?} leaves a part empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![Split::Test; n];
    for (rank, &doc) in order.iter().enumerate() {
        labels[doc] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(labels)
}

/// Preprocessing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub min_count: usize,
    pub max_vocab: usize,
    /// Co-occurrence window; 0 means the whole document.
    pub window: usize,
    pub split_ratios: [f64; 3],
    /// Use the built-in English stopword list.
    pub stopwords: bool,
    pub extra_stopwords: Vec<String>,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            min_count: 5,
            max_vocab: 15_000,
            window: 10,
            split_ratios: [0.48, 0.12, 0.40],
            stopwords: true,
            extra_stopwords: Vec::new(),
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if self.max_vocab == 0 {
            return Err(Error::Config("max_vocab must be positive".into()));
        }
        let total: f64 = self.split_ratios.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must sum to 1".into()));
        }
        Ok(())
    }

    fn stopword_set(&self) -> HashSet<String> {
        let mut s = if self.stopwords {
            default_stopwords()
        } else {
            HashSet::new()
        };
        s.extend(self.extra_stopwords.iter().map(|w| w.to_lowercase()));
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct SplitFile {
    /// Source line (0-indexed) of each kept document.
    source_lines: Vec<usize>,
    labels: Vec<Split>,
}

/// A preprocessed corpus. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocab,
    pub counts: SparseMatrix,
    pub tfidf: SparseMatrix,
    pub cooccur: Cooccurrence,
    pub splits: Vec<Split>,
    pub source_lines: Vec<usize>,
}

impl Corpus {
    /// Full pipeline from raw documents (one string per document).
    ///
    /// Documents left without in-vocabulary tokens are dropped. TF-IDF
    /// document frequencies and co-occurrence counts come from the training
    /// split only.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], cfg: &CorpusConfig) -> Result<Self> {
        cfg.validate()?;
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        if tokenized.iter().all(Vec::is_empty) {
            return Err(Error::EmptyCorpus);
        }
        let vocab = build_vocab(&tokenized, &cfg.stopword_set(), cfg.min_count, cfg.max_vocab)?;
        let mut docs = Vec::new();
        let mut source_lines = Vec::new();
        for (line, toks) in tokenized.iter().enumerate() {
            let ids: Vec<usize> = toks.iter().filter_map(|t| vocab.get(t)).collect();
            if !ids.is_empty() {
                docs.push(ids);
                source_lines.push(line);
            }
        }
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Self::from_indexed(vocab, docs, source_lines, cfg)
    }

    /// Builds matrices and splits from documents already mapped to word ids.
    pub fn from_indexed(
        vocab: Vocab,
        docs: Vec<Vec<usize>>,
        source_lines: Vec<usize>,
        cfg: &CorpusConfig,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let splits = split(docs.len(), cfg.split_ratios, cfg.seed)?;
        let counts = count_matrix(&docs, vocab.len());
        let train: Vec<usize> = (0..docs.len()).filter(|&i| splits[i] == Split::Train).collect();
        let df = document_frequency(&counts, &train);
        let tfidf = tfidf(&counts, &df, train.len());
        let train_docs: Vec<Vec<usize>> = train.iter().map(|&i| docs[i].clone()).collect();
        let cooccur = cooccurrence(&train_docs, vocab.len(), cfg.window);
        let mut vocab = vocab;
        vocab.doc_freq = df;
        Ok(Self {
            vocab,
            counts,
            tfidf,
            cooccur,
            splits,
            source_lines,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.counts.rows
    }

    pub fn doc_ids(&self, which: Split) -> Vec<usize> {
        (0..self.n_docs()).filter(|&i| self.splits[i] == which).collect()
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        let mut s = [0; 3];
        for l in &self.splits {
            s[*l as usize] += 1;
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("vocab.json"), serde_json::to_string_pretty(self.vocab.words())?)?;
        fs::write(dir.join("counts.txt"), self.counts.to_triplets())?;
        fs::write(dir.join("tfidf.txt"), self.tfidf.to_triplets())?;
        fs::write(dir.join("cooccur.txt"), self.cooccur.counts.to_triplets())?;
        let splits = SplitFile {
            source_lines: self.source_lines.clone(),
            labels: self.splits.clone(),
        };
        fs::write(dir.join("splits.json"), serde_json::to_string(&splits)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let words: Vec<String> = serde_json::from_str(&fs::read_to_string(dir.join("vocab.json"))?)?;
        let mut vocab = Vocab::from_words(words)?;
        let counts = SparseMatrix::from_triplets(&fs::read_to_string(dir.join("counts.txt"))?)?;
        let tfidf = SparseMatrix::from_triplets(&fs::read_to_string(dir.join("tfidf.txt"))?)?;
        let co = SparseMatrix::from_triplets(&fs::read_to_string(dir.join("cooccur.txt"))?)?;
        let splits: SplitFile = serde_json::from_str(&fs::read_to_string(dir.join("splits.json"))?)?;
        if counts.cols != vocab.len() || tfidf.cols != vocab.len() || co.rows != vocab.len() {
            return Err(Error::Parse("matrix shapes disagree with vocabulary".into()));
        }
        if splits.labels.len() != counts.rows || tfidf.rows != counts.rows {
            return Err(Error::Parse("split file disagrees with document count".into()));
        }
        let train: Vec<usize> = (0..counts.rows)
            .filter(|&i| splits.labels[i] == Split::Train)
            .collect();
        vocab.doc_freq = document_frequency(&counts, &train);
        Ok(Self {
            vocab,
            counts,
            tfidf,
            cooccur: Cooccurrence::from_counts(co),
            splits: splits.labels,
            source_lines: splits.source_lines,
        })
    }
}
