//! Recursive upper-level topic mining.
//!
//! Each level's topic boxes are widened by the boxes of their top keywords,
//! compared with the log containment ratio, and clustered with affinity
//! propagation. The soft union of every cluster seeds one topic of the level
//! above; parents are then read off the hierarchical relation matrix.

use serde::{Deserialize, Serialize};

use crate::boxalg::{
    asym_containment, gumbel_log_volume, sym_affinity, union_box, BoxAlgebraConfig, BoxEmbed,
};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};
use crate::model::top_keywords;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceMode {
    Median,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub damping: f64,
    pub max_iter: usize,
    pub convergence_window: usize,
    pub preference: PreferenceMode,
    /// Keywords merged into each topic box before clustering.
    pub n_expand: usize,
    /// In adaptive mode, stop once a level has at most this many topics.
    pub top_threshold: usize,
    pub adaptive: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            damping: 0.9,
            max_iter: 200,
            convergence_window: 15,
            preference: PreferenceMode::Median,
            n_expand: 5,
            top_threshold: 10,
            adaptive: false,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config("damping must lie in [0.5, 1)".into()));
        }
        if self.max_iter == 0 || self.convergence_window == 0 || self.max_iter < self.convergence_window {
            return Err(Error::Config(
                "need max_iter >= convergence_window >= 1".into(),
            ));
        }
        if self.n_expand == 0 || self.top_threshold == 0 {
            return Err(Error::Config("n_expand and top_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Hard union of a topic box with its keyword boxes.
pub fn expand_topic_box(topic: &BoxEmbed, keywords: &[&BoxEmbed]) -> Result<BoxEmbed> {
    if keywords.is_empty() {
        return Err(Error::Precondition("expansion needs at least one keyword".into()));
    }
    keywords
        .iter()
        .try_fold(topic.clone(), |acc, k| union_box(&acc, k))
}

/// `A[i][j] = log R_a(box_j | box_i)` off the diagonal, 0 on it.
pub fn topic_affinity_matrix(boxes: &[BoxEmbed], cfg: &BoxAlgebraConfig) -> Result<Matrix> {
    let n = boxes.len();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "affinity matrix needs at least 2 boxes, got {n}"
        )));
    }
    let vols: Vec<f64> = boxes.iter().map(|b| gumbel_log_volume(b, cfg)).collect();
    let mut a = Matrix::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[[i, j]] = sym_affinity(&boxes[j], &boxes[i], cfg) - vols[i];
            }
        }
    }
    Ok(a)
}

/// Median or minimum of the off-diagonal entries.
pub fn preference_value(s: &Matrix, mode: PreferenceMode) -> f64 {
    let mut off = off_diagonal(s);
    if off.is_empty() {
        return 0.0;
    }
    off.sort_by(f64::total_cmp);
    match mode {
        PreferenceMode::Min => off[0],
        PreferenceMode::Median => {
            let m = off.len() / 2;
            if off.len() % 2 == 1 {
                off[m]
            } else {
                0.5 * (off[m - 1] + off[m])
            }
        }
    }
}

fn off_diagonal(s: &Matrix) -> Vec<f64> {
    let n = s.nrows();
    let mut v = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                v.push(s[[i, j]]);
            }
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    /// Exemplar indices in increasing order.
    pub exemplars: Vec<usize>,
    /// Exemplar chosen by each item.
    pub assignment: Vec<usize>,
    /// Cluster number (position in `exemplars`) of each item.
    pub labels: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

impl ApResult {
    pub fn n_clusters(&self) -> usize {
        self.exemplars.len()
    }

    /// Members of each cluster, in exemplar order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut c = vec![Vec::new(); self.exemplars.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            c[l].push(i);
        }
        c
    }

    fn from_exemplars(exemplars: Vec<usize>, s: &Matrix, converged: bool, iterations: usize) -> Self {
        let n = s.nrows();
        let assignment: Vec<usize> = (0..n)
            .map(|i| {
                if exemplars.contains(&i) {
                    i
                } else {
                    // exemplars are sorted, so the first maximum is the lowest index
                    exemplars
                        .iter()
                        .copied()
                        .fold(None, |best: Option<usize>, e| match best {
                            Some(b) if s[[i, b]] >= s[[i, e]] => Some(b),
                            _ => Some(e),
                        })
                        .expect("nonempty exemplar set")
                }
            })
            .collect();
        let labels = assignment
            .iter()
            .map(|e| exemplars.binary_search(e).expect("assigned to an exemplar"))
            .collect();
        Self {
            exemplars,
            assignment,
            labels,
            converged,
            iterations,
        }
    }
}

/// Affinity propagation on similarity matrix `s` (`s[i][k]`: how well `k`
/// serves as exemplar for `i`). The diagonal of `s` is ignored and replaced
/// by `preferences`.
pub fn affinity_propagation(s: &Matrix, cfg: &ClusterConfig, preferences: &[f64]) -> ApResult {
    let n = s.nrows();
    assert_eq!(s.ncols(), n, "similarity matrix must be square");
    assert_eq!(preferences.len(), n, "one preference per item");
    if n == 0 {
        return ApResult {
            exemplars: vec![],
            assignment: vec![],
            labels: vec![],
            converged: true,
            iterations: 0,
        };
    }
    if n == 1 {
        return ApResult::from_exemplars(vec![0], s, true, 0);
    }
    let mut sim = s.clone();
    for i in 0..n {
        sim[[i, i]] = preferences[i];
    }

    // Message passing cannot break the symmetry of a constant matrix.
    let off = off_diagonal(s);
    if off.iter().all(|&x| x == off[0]) && preferences.iter().all(|&p| p == preferences[0]) {
        let exemplars = if preferences[0] > off[0] {
            (0..n).collect()
        } else {
            vec![0]
        };
        return ApResult::from_exemplars(exemplars, &sim, true, 0);
    }

    let d = cfg.damping;
    let mut r = Matrix::zeros((n, n));
    let mut a = Matrix::zeros((n, n));
    let mut prev: Vec<bool> = vec![false; n];
    let mut stable = 0;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        for i in 0..n {
            let (mut best, mut first, mut second) = (0, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for k in 0..n {
                let v = a[[i, k]] + sim[[i, k]];
                if v > first {
                    second = first;
                    first = v;
                    best = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == best { second } else { first };
                let fresh = sim[[i, k]] - competitor;
                r[[i, k]] = d * r[[i, k]] + (1.0 - d) * fresh;
            }
        }
        for k in 0..n {
            let pos_sum: f64 = (0..n).filter(|&i| i != k).map(|i| r[[i, k]].max(0.0)).sum();
            for i in 0..n {
                let fresh = if i == k {
                    pos_sum
                } else {
                    (r[[k, k]] + pos_sum - r[[i, k]].max(0.0)).min(0.0)
                };
                a[[i, k]] = d * a[[i, k]] + (1.0 - d) * fresh;
            }
        }
        let current: Vec<bool> = (0..n).map(|k| a[[k, k]] + r[[k, k]] > 0.0).collect();
        if current == prev {
            stable += 1;
        } else {
            stable = 0;
            prev = current;
        }
        if stable + 1 >= cfg.convergence_window && prev.iter().any(|&e| e) {
            converged = true;
            break;
        }
    }

    let mut exemplars: Vec<usize> = (0..n).filter(|&k| prev[k]).collect();
    if exemplars.is_empty() {
        // no item crossed the evidence threshold: fall back to the single
        // most self-confident one
        let best = (0..n)
            .max_by(|&x, &y| {
                (a[[x, x]] + r[[x, x]])
                    .total_cmp(&(a[[y, y]] + r[[y, y]]))
                    .then(y.cmp(&x))
            })
            .unwrap();
        exemplars.push(best);
    }
    ApResult::from_exemplars(exemplars, &sim, converged, iterations)
}

/// `parent[i] = argmax_j theta[i][j]`, lowest `j` on ties.
pub fn assign_parents(theta: &Matrix) -> Result<Vec<usize>> {
    if theta.ncols() == 0 {
        return Err(Error::Precondition("no upper-level topics".into()));
    }
    Ok(theta
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// `Θ[i][j] = log R_a(child_i | parent_j)` from plain boxes.
pub fn hier_relations(children: &[BoxEmbed], parents: &[BoxEmbed], cfg: &BoxAlgebraConfig) -> Matrix {
    let mut m = Matrix::zeros((children.len(), parents.len()));
    for (i, c) in children.iter().enumerate() {
        for (j, p) in parents.iter().enumerate() {
            m[[i, j]] = asym_containment(c, p, cfg);
        }
    }
    m
}

/// Top-`n` words of each topic under the normalized symmetric affinity
/// (the ranking of the topic-word distribution).
pub fn topic_keywords(
    topics: &[BoxEmbed],
    words: &[BoxEmbed],
    n: usize,
    cfg: &BoxAlgebraConfig,
) -> Result<Vec<Vec<usize>>> {
    let word_vols: Vec<f64> = words.iter().map(|w| gumbel_log_volume(w, cfg)).collect();
    topics
        .iter()
        .map(|t| {
            // the topic's own volume is constant along the row
            let scores: Vec<f64> = words
                .iter()
                .zip(&word_vols)
                .map(|(w, v)| sym_affinity(t, w, cfg) - v)
                .collect();
            top_keywords(&scores, n.min(words.len()))
        })
        .collect()
}

/// Result of one recursive clustering pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    /// Boxes of levels above the leaves, bottom-up.
    pub upper: Vec<Vec<BoxEmbed>>,
    /// `parents[k][i]`: parent of topic `i` of level `k` (leaf = 0).
    pub parents: Vec<Vec<usize>>,
    /// Affinity-propagation clusters per clustered level.
    pub clusters: Vec<Vec<Vec<usize>>>,
    /// True if clustering stopped before reaching the requested depth.
    pub topped_out: bool,
}

impl Hierarchy {
    pub fn level_sizes(&self, leaf_count: usize) -> Vec<usize> {
        std::iter::once(leaf_count)
            .chain(self.upper.iter().map(Vec::len))
            .collect()
    }
}

/// Off-diagonal quantiles tried, in order, when the configured preference
/// merges everything into one cluster.
const RETRY_QUANTILES: [f64; 3] = [0.75, 0.9, 1.0];

fn cluster_level(a: &Matrix, cfg: &ClusterConfig) -> ApResult {
    let n = a.nrows();
    let pref = preference_value(a, cfg.preference);
    let result = affinity_propagation(a, cfg, &vec![pref; n]);
    if result.n_clusters() >= 2 || n < 3 {
        return result;
    }
    // A lower preference can only merge clusters further, so the retry
    // walks the preference up through the off-diagonal quantiles and keeps
    // the first split that still groups something.
    let mut off = off_diagonal(a);
    off.sort_by(f64::total_cmp);
    for q in RETRY_QUANTILES {
        let idx = ((off.len() - 1) as f64 * q).round() as usize;
        let p = off[idx];
        let retry = affinity_propagation(a, cfg, &vec![p; n]);
        log::debug!(
            "affinity propagation found 1 cluster among {n}; preference {p} gives {}",
            retry.n_clusters()
        );
        if (2..n).contains(&retry.n_clusters()) {
            return retry;
        }
    }
    result
}

/// Mines up to `depth - 1` levels above `leaves`.
pub fn recur_clus(
    words: &[BoxEmbed],
    leaves: &[BoxEmbed],
    depth: usize,
    cfg: &ClusterConfig,
    boxes: &BoxAlgebraConfig,
) -> Result<Hierarchy> {
    if depth < 2 {
        return Err(Error::Precondition("recursive clustering needs depth >= 2".into()));
    }
    let mut levels: Vec<Vec<BoxEmbed>> = vec![leaves.to_vec()];
    let mut clusters = Vec::new();
    let mut topped_out = false;

    for k in 0..depth - 1 {
        let current = &levels[k];
        if current.len() < 2 {
            topped_out = true;
            break;
        }
        if cfg.adaptive && k > 0 && current.len() <= cfg.top_threshold {
            topped_out = true;
            break;
        }
        let keywords = topic_keywords(current, words, cfg.n_expand, boxes)?;
        let expanded: Vec<BoxEmbed> = current
            .iter()
            .zip(&keywords)
            .map(|(t, kw)| {
                let kb: Vec<&BoxEmbed> = kw.iter().map(|&w| &words[w]).collect();
                expand_topic_box(t, &kb)
            })
            .collect::<Result<_>>()?;
        let a = topic_affinity_matrix(&expanded, boxes)?;
        let ap = cluster_level(&a, cfg);
        let groups = ap.clusters();
        let parents_boxes: Vec<BoxEmbed> = groups
            .iter()
            .map(|g| {
                let members: Vec<BoxEmbed> = g.iter().map(|&i| expanded[i].clone()).collect();
                crate::boxalg::soft_union(&members)
            })
            .collect::<Result<_>>()?;
        clusters.push(groups);
        levels.push(parents_boxes);
    }
    if levels.len() < depth {
        topped_out = true;
    }

    let parents = (0..levels.len() - 1)
        .map(|k| assign_parents(&hier_relations(&levels[k], &levels[k + 1], boxes)))
        .collect::<Result<_>>()?;
    levels.remove(0);
    Ok(Hierarchy {
        upper: levels,
        parents,
        clusters,
        topped_out,
    })
}
