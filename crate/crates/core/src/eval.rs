//! Intrinsic taxonomy metrics over a document-level reference corpus.
//!
//! * C: mean pairwise NPMI among each topic's top-N keywords.
//! * D: TU-style keyword uniqueness within a level.
//! * HC: cross-level NPMI between a parent and a child, with keywords the two
//!   lists share removed first.
//!
//! Each metric is averaged over `N ∈ {5, 10, 15}`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split, Vocab};
use crate::error::{Error, Result};
use crate::model::Taxonomy;

/// Cut-offs every metric is averaged over.
pub const TOP_NS: [usize; 3] = [5, 10, 15];

const EPS: f64 = 1e-12;

/// Document-occurrence statistics used by NPMI.
#[derive(Debug, Clone)]
pub struct Reference {
    pub id: String,
    n_docs: usize,
    /// Sorted ids of the documents containing each word.
    postings: Vec<Vec<u32>>,
}

impl Reference {
    /// Builds postings from documents given as word-id lists (repeats are
    /// allowed and ignored).
    pub fn from_docs(docs: &[Vec<usize>], vocab_size: usize, id: impl Into<String>) -> Self {
        let mut postings = vec![Vec::new(); vocab_size];
        for (d, doc) in docs.iter().enumerate() {
            for &w in doc {
                let list: &mut Vec<u32> = &mut postings[w];
                if list.last() != Some(&(d as u32)) {
                    list.push(d as u32);
                }
            }
        }
        for list in &mut postings {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            id: id.into(),
            n_docs: docs.len(),
            postings,
        }
    }

    /// Training-split documents of `corpus`.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let docs: Vec<Vec<usize>> = corpus
            .doc_ids(Split::Train)
            .into_iter()
            .map(|d| corpus.counts.row(d).iter().map(|&(w, _)| w).collect())
            .collect();
        let id = format!("train-split:{}docs:{}", docs.len(), corpus.vocab.hash());
        Self::from_docs(&docs, corpus.vocab.len(), id)
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn doc_count(&self, w: usize) -> usize {
        self.postings.get(w).map_or(0, Vec::len)
    }

    pub fn joint_count(&self, a: usize, b: usize) -> usize {
        let (x, y) = (&self.postings[a], &self.postings[b]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Normalized PMI of two words.
    pub fn npmi(&self, a: usize, b: usize) -> Result<f64> {
        for w in [a, b] {
            if self.doc_count(w) == 0 {
                return Err(Error::UnknownWord(w));
            }
        }
        Ok(npmi_from_counts(
            self.doc_count(a),
            self.doc_count(b),
            self.joint_count(a, b),
            self.n_docs,
        ))
    }
}

/// NPMI from document counts. Pairs that never co-occur score −1; pairs
/// present in every document score 1.
pub fn npmi_from_counts(n_a: usize, n_b: usize, n_ab: usize, n_docs: usize) -> f64 {
    if n_ab == 0 {
        return -1.0;
    }
    if n_ab == n_docs {
        return 1.0;
    }
    let n = n_docs as f64;
    let (pa, pb, pab) = (n_a as f64 / n, n_b as f64 / n, n_ab as f64 / n);
    let pmi = ((pab + EPS) / (pa * pb + EPS)).ln();
    pmi / -(pab + EPS).ln()
}

fn check_len(lists: &[Vec<usize>], need: usize) -> Result<()> {
    match lists.iter().find(|l| l.len() < need) {
        Some(l) => Err(Error::Precondition(format!(
            "keyword list of length {} is shorter than {need}",
            l.len()
        ))),
        None => Ok(()),
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_pairwise(words: &[usize], r: &Reference) -> Result<f64> {
    let mut vals = Vec::new();
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            vals.push(r.npmi(words[i], words[j])?);
        }
    }
    Ok(mean(vals))
}

/// Topic coherence of keyword lists, averaged over topics and `ns`.
pub fn coherence_c(topics: &[Vec<usize>], r: &Reference, ns: &[usize]) -> Result<f64> {
    let max_n = ns.iter().copied().max().unwrap_or(0);
    check_len(topics, max_n)?;
    if topics.is_empty() {
        return Err(Error::Precondition("no topics".into()));
    }
    let mut per_n = Vec::with_capacity(ns.len());
    for &n in ns {
        let scores = topics
            .iter()
            .map(|t| mean_pairwise(&t[..n], r))
            .collect::<Result<Vec<_>>>()?;
        per_n.push(mean(scores));
    }
    Ok(mean(per_n))
}

/// TU-style uniqueness of keyword lists, averaged over topics and `ns`.
pub fn uniqueness_d(topics: &[Vec<usize>], ns: &[usize]) -> Result<f64> {
    if topics.is_empty() {
        return Err(Error::Precondition("no topics".into()));
    }
    check_len(topics, ns.iter().copied().max().unwrap_or(0))?;
    let mut per_n = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut cnt: HashMap<usize, usize> = HashMap::new();
        for t in topics {
            let mut top = t[..n].to_vec();
            top.sort_unstable();
            top.dedup();
            for w in top {
                *cnt.entry(w).or_default() += 1;
            }
        }
        per_n.push(mean(
            topics
                .iter()
                .map(|t| mean(t[..n].iter().map(|w| 1.0 / cnt[w] as f64))),
        ));
    }
    Ok(mean(per_n))
}

/// Cross-level coherence between one parent and one child.
pub fn clnpmi_hc(parent: &[usize], child: &[usize], r: &Reference, ns: &[usize]) -> Result<f64> {
    let need = ns.iter().copied().max().unwrap_or(0);
    check_len(&[parent.to_vec(), child.to_vec()], need)?;
    let mut per_n = Vec::with_capacity(ns.len());
    for &n in ns {
        let (p, c) = (&parent[..n], &child[..n]);
        let p_only: Vec<usize> = p.iter().copied().filter(|w| !c.contains(w)).collect();
        let c_only: Vec<usize> = c.iter().copied().filter(|w| !p.contains(w)).collect();
        if p_only.is_empty() || c_only.is_empty() {
            per_n.push(0.0);
            continue;
        }
        let mut vals = Vec::with_capacity(p_only.len() * c_only.len());
        for &a in &p_only {
            for &b in &c_only {
                vals.push(r.npmi(a, b)?);
            }
        }
        per_n.push(mean(vals));
    }
    Ok(mean(per_n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    /// 0 = leaves.
    pub level: usize,
    pub topics: usize,
    #[serde(rename = "C")]
    pub coherence: f64,
    #[serde(rename = "D")]
    pub diversity: f64,
    #[serde(rename = "CD")]
    pub cd: f64,
    /// Cross-level coherence of this level's links to its parents.
    #[serde(rename = "HC")]
    pub hc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub reference: String,
    pub top_ns: Vec<usize>,
    pub levels: Vec<LevelMetrics>,
    /// Mean over every topic in the taxonomy.
    #[serde(rename = "C")]
    pub coherence: f64,
    /// Mean of the per-level values.
    #[serde(rename = "D")]
    pub diversity: f64,
    #[serde(rename = "CD")]
    pub cd: f64,
    /// Mean over every parent-child link; `None` for a single-level taxonomy.
    #[serde(rename = "HC")]
    pub hc: Option<f64>,
    pub keywords: Vec<Vec<Vec<String>>>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
        }
        let mut out = String::new();
        let _ = writeln!(out, "reference: {}", self.reference);
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>8} {:>8} {:>8} {:>8}",
            "level", "topics", "C", "D", "C*D", "HC"
        );
        for l in self.levels.iter().rev() {
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8}",
                format!("L{}", l.level),
                l.topics,
                l.coherence,
                l.diversity,
                l.cd,
                opt(l.hc)
            );
        }
        let n: usize = self.levels.iter().map(|l| l.topics).sum();
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8}",
            "overall",
            n,
            self.coherence,
            self.diversity,
            self.cd,
            opt(self.hc)
        );
        out
    }
}

/// Keyword ids and parent links as used by [`report_ids`].
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordTaxonomy {
    pub levels: Vec<Vec<Vec<usize>>>,
    /// `parents[k][i]` = parent of topic `i` of level `k` in level `k + 1`.
    pub parents: Vec<Vec<usize>>,
}

impl KeywordTaxonomy {
    pub fn from_taxonomy(t: &Taxonomy, vocab: &Vocab) -> Result<Self> {
        let levels = t
            .levels
            .iter()
            .map(|topics| {
                topics
                    .iter()
                    .map(|topic| {
                        topic
                            .keywords
                            .iter()
                            .map(|k| {
                                vocab.get(&k.word).ok_or_else(|| {
                                    Error::Parse(format!("keyword {:?} not in vocabulary", k.word))
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let parents = t
            .levels
            .iter()
            .take(t.levels.len().saturating_sub(1))
            .map(|topics| {
                topics
                    .iter()
                    .map(|topic| {
                        topic
                            .parent
                            .ok_or_else(|| Error::Parse(format!("topic {} has no parent", topic.id)))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, parents })
    }

    /// Same shape, with each level's keywords pooled, shuffled (seeded)
    /// and dealt back to the topics in their original list lengths.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = self
            .levels
            .iter()
            .map(|topics| {
                let mut pool: Vec<usize> = topics.iter().flatten().copied().collect();
                pool.shuffle(&mut rng);
                let mut rest = pool.as_slice();
                topics
                    .iter()
                    .map(|t| {
                        let (head, tail) = rest.split_at(t.len());
                        rest = tail;
                        head.to_vec()
                    })
                    .collect()
            })
            .collect();
        Self {
            levels,
            parents: self.parents.clone(),
        }
    }
}

/// Computes all metrics for a taxonomy given as keyword ids.
pub fn report_ids(
    tax: &KeywordTaxonomy,
    vocab: &[String],
    r: &Reference,
    ns: &[usize],
) -> Result<MetricReport> {
    let mut levels = Vec::with_capacity(tax.levels.len());
    let mut all_c = Vec::new();
    let mut all_hc = Vec::new();
    for (k, topics) in tax.levels.iter().enumerate() {
        let per_topic = topics
            .iter()
            .map(|t| coherence_c(std::slice::from_ref(t), r, ns))
            .collect::<Result<Vec<_>>>()?;
        all_c.extend(&per_topic);
        let coherence = mean(per_topic);
        let diversity = uniqueness_d(topics, ns)?;
        let hc = match tax.parents.get(k) {
            Some(links) => {
                let vals = links
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| clnpmi_hc(&tax.levels[k + 1][p], &topics[i], r, ns))
                    .collect::<Result<Vec<_>>>()?;
                all_hc.extend(&vals);
                Some(mean(vals))
            }
            None => None,
        };
        levels.push(LevelMetrics {
            level: k,
            topics: topics.len(),
            coherence,
            diversity,
            cd: coherence * diversity,
            hc,
        });
    }
    let coherence = mean(all_c);
    let diversity = mean(levels.iter().map(|l| l.diversity));
    let keywords = tax
        .levels
        .iter()
        .map(|topics| {
            topics
                .iter()
                .map(|t| t.iter().map(|&w| vocab[w].clone()).collect())
                .collect()
        })
        .collect();
    Ok(MetricReport {
        reference: r.id.clone(),
        top_ns: ns.to_vec(),
        levels,
        coherence,
        diversity,
        cd: coherence * diversity,
        hc: (!all_hc.is_empty()).then(|| mean(all_hc)),
        keywords,
    })
}

/// Computes all metrics for an exported taxonomy.
pub fn report(taxonomy: &Taxonomy, vocab: &Vocab, r: &Reference) -> Result<MetricReport> {
    let tax = KeywordTaxonomy::from_taxonomy(taxonomy, vocab)?;
    report_ids(&tax, vocab.words(), r, &TOP_NS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn npmi_examples() {
        // word 0 and 1 always together, word 2 in half the docs
        let docs = vec![vec![0, 1, 2], vec![0, 1], vec![0, 1, 2], vec![0, 1], vec![3]];
        let r = Reference::from_docs(&docs, 4, "t");
        assert_abs_diff_eq!(r.npmi(0, 1).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.npmi(2, 2).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(r.npmi(2, 3).unwrap(), -1.0);
        assert!(matches!(r.npmi(0, 7), Err(Error::UnknownWord(7)) | Err(_)));
    }

    #[test]
    fn npmi_independent_is_zero() {
        // 0 in docs {0,1}, 1 in docs {0,2}: P = 1/4 = 1/2 · 1/2
        let docs = vec![vec![0, 1], vec![0], vec![1], vec![2]];
        let r = Reference::from_docs(&docs, 3, "t");
        assert_abs_diff_eq!(r.npmi(0, 1).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn word_in_every_document() {
        assert_eq!(npmi_from_counts(3, 3, 3, 3), 1.0);
    }

    #[test]
    fn uniqueness_examples() {
        let ns = [2];
        let disjoint = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        assert_eq!(uniqueness_d(&disjoint, &ns).unwrap(), 1.0);
        let twins = vec![vec![0, 1], vec![0, 1]];
        assert_eq!(uniqueness_d(&twins, &ns).unwrap(), 0.5);
        let same = vec![vec![0, 1]; 4];
        assert_eq!(uniqueness_d(&same, &ns).unwrap(), 0.25);
    }

    #[test]
    fn clnpmi_identical_lists_score_zero() {
        let docs = vec![vec![0, 1], vec![1, 2]];
        let r = Reference::from_docs(&docs, 3, "t");
        assert_eq!(clnpmi_hc(&[0, 1], &[0, 1], &r, &[2]).unwrap(), 0.0);
    }

    #[test]
    fn short_lists_rejected() {
        let docs = vec![vec![0, 1]];
        let r = Reference::from_docs(&docs, 2, "t");
        assert!(coherence_c(&[vec![0, 1]], &r, &TOP_NS).is_err());
    }

    #[test]
    fn shuffling_keeps_each_level_pool() {
        let tax = KeywordTaxonomy {
            levels: vec![vec![vec![0, 1, 2], vec![3, 4, 5]], vec![vec![6, 7, 8]]],
            parents: vec![vec![0, 0]],
        };
        let s = tax.shuffled(3);
        assert_eq!(s.parents, tax.parents);
        assert_eq!(s.levels[1][0].len(), 3);
        let mut pool: Vec<usize> = s.levels[0].iter().flatten().copied().collect();
        pool.sort_unstable();
        assert_eq!(pool, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(s, tax.shuffled(3));
    }
}
