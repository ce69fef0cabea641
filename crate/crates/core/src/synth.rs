//! Planted two-level corpus generator and recovery scores.
//!
//! Vocabulary: `groups × leaves_per_group` leaf clusters of
//! `words_per_leaf` words each, plus `shared_per_group` words per super-group.
//! Each document belongs to one leaf cluster and mixes that cluster's words,
//! its super-group's shared words and uniform noise over the whole
//! vocabulary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub groups: usize,
    pub leaves_per_group: usize,
    pub words_per_leaf: usize,
    pub shared_per_group: usize,
    pub docs: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is drawn uniformly from the vocabulary.
    pub noise: f64,
    /// Probability that a non-noise token comes from the super-group's
    /// shared words rather than the leaf cluster.
    pub shared_rate: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            groups: 2,
            leaves_per_group: 3,
            words_per_leaf: 40,
            shared_per_group: 30,
            docs: 2000,
            min_len: 50,
            max_len: 100,
            noise: 0.1,
            shared_rate: 0.3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub config: PlantedConfig,
    /// One whitespace-joined document per entry.
    pub texts: Vec<String>,
    pub words: Vec<String>,
    /// Leaf cluster of each word; `None` for shared words.
    pub word_leaf: Vec<Option<usize>>,
    /// Super-group of each leaf cluster.
    pub leaf_group: Vec<usize>,
    pub doc_leaf: Vec<usize>,
}

impl PlantedCorpus {
    pub fn n_leaves(&self) -> usize {
        self.leaf_group.len()
    }

    pub fn leaf_of(&self, word: &str) -> Option<usize> {
        self.words
            .iter()
            .position(|w| w == word)
            .and_then(|i| self.word_leaf[i])
    }

    /// Planted leaf cluster best represented among `keywords`, with the
    /// fraction of keywords it covers.
    pub fn dominant_leaf(&self, keywords: &[String]) -> (usize, f64) {
        let mut hits = vec![0usize; self.n_leaves()];
        for w in keywords {
            if let Some(l) = self.leaf_of(w) {
                hits[l] += 1;
            }
        }
        let (best, n) = hits
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (l, &n)| if n > acc.1 { (l, n) } else { acc });
        (best, n as f64 / keywords.len().max(1) as f64)
    }

    /// Mean over topics of the fraction of the top-`n` keywords that belong
    /// to the topic's dominant planted leaf cluster.
    pub fn keyword_purity(&self, topics: &[Vec<String>], n: usize) -> f64 {
        if topics.is_empty() {
            return 0.0;
        }
        topics
            .iter()
            .map(|t| self.dominant_leaf(&t[..n.min(t.len())]).1)
            .sum::<f64>()
            / topics.len() as f64
    }

    /// Fraction of leaf-topic pairs whose learned relation (same parent or
    /// not) matches the planted relation of their dominant clusters.
    pub fn parent_agreement(&self, topics: &[Vec<String>], parents: &[usize], n: usize) -> f64 {
        let groups: Vec<usize> = topics
            .iter()
            .map(|t| self.leaf_group[self.dominant_leaf(&t[..n.min(t.len())]).0])
            .collect();
        let mut agree = 0usize;
        let mut pairs = 0usize;
        for a in 0..topics.len() {
            for b in a + 1..topics.len() {
                pairs += 1;
                if (groups[a] == groups[b]) == (parents[a] == parents[b]) {
                    agree += 1;
                }
            }
        }
        if pairs == 0 {
            1.0
        } else {
            agree as f64 / pairs as f64
        }
    }
}

/// Generates the planted corpus.
pub fn planted_corpus(cfg: &PlantedConfig) -> PlantedCorpus {
    let n_leaves = cfg.groups * cfg.leaves_per_group;
    let mut words = Vec::new();
    let mut word_leaf = Vec::new();
    for l in 0..n_leaves {
        for i in 0..cfg.words_per_leaf {
            words.push(format!("leaf{l}w{i}"));
            word_leaf.push(Some(l));
        }
    }
    let mut shared: Vec<Vec<usize>> = Vec::new();
    for g in 0..cfg.groups {
        let start = words.len();
        for i in 0..cfg.shared_per_group {
            words.push(format!("group{g}w{i}"));
            word_leaf.push(None);
        }
        shared.push((start..words.len()).collect());
    }
    let leaf_group: Vec<usize> = (0..n_leaves).map(|l| l / cfg.leaves_per_group).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut texts = Vec::with_capacity(cfg.docs);
    let mut doc_leaf = Vec::with_capacity(cfg.docs);
    for _ in 0..cfg.docs {
        let leaf = rng.random_range(0..n_leaves);
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut toks = Vec::with_capacity(len);
        for _ in 0..len {
            let w = if rng.random::<f64>() < cfg.noise {
                rng.random_range(0..words.len())
            } else if rng.random::<f64>() < cfg.shared_rate && cfg.shared_per_group > 0 {
                let s = &shared[leaf_group[leaf]];
                s[rng.random_range(0..s.len())]
            } else {
                leaf * cfg.words_per_leaf + rng.random_range(0..cfg.words_per_leaf)
            };
            toks.push(words[w].as_str());
        }
        texts.push(toks.join(" "));
        doc_leaf.push(leaf);
    }
    PlantedCorpus {
        config: cfg.clone(),
        texts,
        words,
        word_leaf,
        leaf_group,
        doc_leaf,
    }
}
