//! The network: encoder, per-level topic proportions, hierarchical relations
//! between adjacent levels, topic-word distributions and the CV-sharpened
//! decoder.
//!
//! Levels are 0-indexed here: level 0 holds the leaf topics and level
//! `depth() - 1` the top. `parents[k][i]` is the level `k + 1` parent of
//! topic `i` at level `k`.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boxalg::{corners_from_params, BoxAlgebraConfig, BoxEmbed};
use crate::diffcore::{AdamState, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

pub const CHECKPOINT_SCHEMA: &str = "boxtm-checkpoint/1";

/// Shapes and numeric settings of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub latent: usize,
    pub leaf_topics: usize,
    /// Maximum number of levels, leaf included.
    pub depth: usize,
    pub boxes: BoxAlgebraConfig,
    /// Added to every CV weight so the reconstruction never vanishes.
    pub cv_eps: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.boxes.validate()?;
        if self.vocab_size == 0 || self.hidden == 0 || self.latent == 0 || self.leaf_topics == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unconstrained parameters of a set of boxes, one box per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub min: Matrix,
    pub size: Matrix,
}

impl BoxParams {
    pub fn len(&self) -> usize {
        self.min.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> BoxEmbed {
        let (min, max) = self
            .min
            .row(i)
            .iter()
            .zip(self.size.row(i))
            .map(|(&a, &b)| corners_from_params(a, b))
            .unzip();
        BoxEmbed { min, max }
    }

    pub fn boxes(&self) -> Vec<BoxEmbed> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn from_boxes(boxes: &[BoxEmbed], dim: usize) -> Self {
        let mut min = Matrix::zeros((boxes.len(), dim));
        let mut size = Matrix::zeros((boxes.len(), dim));
        for (i, b) in boxes.iter().enumerate() {
            let (pm, ps) = b.to_params();
            for d in 0..dim {
                min[[i, d]] = pm[d];
                size[[i, d]] = ps[d];
            }
        }
        Self { min, size }
    }

    fn random(n: usize, dim: usize, size_mean: f64, rng: &mut impl Rng) -> Self {
        let pos = Normal::new(0.0, 0.3).unwrap();
        let size = Normal::new(size_mean, 0.1).unwrap();
        Self {
            min: Array2::from_shape_fn((n, dim), |_| pos.sample(rng)),
            size: Array2::from_shape_fn((n, dim), |_| size.sample(rng)),
        }
    }
}

/// Weights of `f_h`, `f_μ`, `f_σ` and `f_π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub hidden_w: Matrix,
    pub hidden_b: Matrix,
    pub mu_w: Matrix,
    pub mu_b: Matrix,
    pub sigma_w: Matrix,
    pub sigma_b: Matrix,
    pub pi_w: Matrix,
    pub pi_b: Matrix,
}

fn linear_init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> (Matrix, Matrix) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
    let b = Array2::from_shape_fn((1, fan_out), |_| rng.random_range(-bound..bound));
    (w, b)
}

impl Encoder {
    fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (hidden_w, hidden_b) = linear_init(cfg.vocab_size, cfg.hidden, rng);
        let (mu_w, mu_b) = linear_init(cfg.hidden, cfg.latent, rng);
        let (sigma_w, sigma_b) = linear_init(cfg.hidden, cfg.latent, rng);
        let (pi_w, pi_b) = linear_init(cfg.latent, cfg.leaf_topics, rng);
        Self {
            hidden_w,
            hidden_b,
            mu_w,
            mu_b,
            sigma_w,
            sigma_b,
            pi_w,
            pi_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub words: BoxParams,
    /// Topic boxes per level, leaf first.
    pub levels: Vec<BoxParams>,
    pub parents: Vec<Vec<usize>>,
}

/// Number of encoder parameter slots at the front of [`ModelState::params`].
pub const ENCODER_SLOTS: usize = 8;
/// Slot index of the word-box `min` parameters.
pub const WORD_SLOT: usize = ENCODER_SLOTS;

impl ModelState {
    /// Random initialization with only the leaf level populated.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::init(&config, &mut rng);
        let dim = config.boxes.dim;
        let words = BoxParams::random(config.vocab_size, dim, -2.0, &mut rng);
        let leaves = BoxParams::random(config.leaf_topics, dim, -1.0, &mut rng);
        Ok(Self {
            config,
            encoder,
            words,
            levels: vec![leaves],
            parents: Vec::new(),
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(BoxParams::len).collect()
    }

    /// Every trainable matrix in a fixed slot order: encoder, word boxes,
    /// then topic boxes level by level.
    pub fn params(&self) -> Vec<&Matrix> {
        let e = &self.encoder;
        let mut v = vec![
            &e.hidden_w, &e.hidden_b, &e.mu_w, &e.mu_b, &e.sigma_w, &e.sigma_b, &e.pi_w, &e.pi_b,
            &self.words.min, &self.words.size,
        ];
        for l in &self.levels {
            v.push(&l.min);
            v.push(&l.size);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let e = &mut self.encoder;
        let mut v = vec![
            &mut e.hidden_w,
            &mut e.hidden_b,
            &mut e.mu_w,
            &mut e.mu_b,
            &mut e.sigma_w,
            &mut e.sigma_b,
            &mut e.pi_w,
            &mut e.pi_b,
            &mut self.words.min,
            &mut self.words.size,
        ];
        for l in &mut self.levels {
            v.push(&mut l.min);
            v.push(&mut l.size);
        }
        v
    }

    /// Slot index of the `min` parameters of topic level `level`.
    pub fn level_slot(level: usize) -> usize {
        WORD_SLOT + 2 + 2 * level
    }

    /// Θ between `level` and `level + 1`, as a plain matrix.
    pub fn hier_relations(&self, level: usize) -> Result<Matrix> {
        if level + 1 >= self.depth() {
            return Err(Error::Precondition(format!(
                "no level above {level} (depth {})",
                self.depth()
            )));
        }
        let mut g = Graph::new(self, false);
        let child = g.topic_boxes(level)?;
        let parent = g.topic_boxes(level + 1)?;
        let theta = g.theta(&child, &parent)?;
        Ok(g.tape.value(theta).clone())
    }

    /// Φ for `level`: row `i` is topic `i`'s distribution over words.
    pub fn topic_word_dist(&self, level: usize) -> Result<Matrix> {
        if level >= self.depth() {
            return Err(Error::Precondition(format!("no level {level}")));
        }
        let mut g = Graph::new(self, false);
        let words = g.word_boxes()?;
        let topics = g.topic_boxes(level)?;
        let phi = g.phi(&topics, &words)?;
        Ok(g.tape.value(phi).clone())
    }

    pub fn all_topic_word_dists(&self) -> Result<Vec<Matrix>> {
        (0..self.depth()).map(|k| self.topic_word_dist(k)).collect()
    }

    /// Encodes one TF-IDF row with the given latent noise.
    pub fn encode(&self, tfidf_row: &[f64], noise: &[f64]) -> Result<EncodeResult> {
        if tfidf_row.len() != self.config.vocab_size {
            return Err(Error::Dimension {
                expected: self.config.vocab_size,
                got: tfidf_row.len(),
            });
        }
        if noise.len() != self.config.latent {
            return Err(Error::Dimension {
                expected: self.config.latent,
                got: noise.len(),
            });
        }
        let mut g = Graph::new(self, false);
        let x = g.tape.constant(row_matrix(tfidf_row));
        let noise = row_matrix(noise);
        let mut thetas = Vec::new();
        let levels: Vec<BoxVars> = (0..self.depth())
            .map(|k| g.topic_boxes(k))
            .collect::<Result<_>>()?;
        for k in 0..self.depth().saturating_sub(1) {
            thetas.push(g.theta(&levels[k], &levels[k + 1])?);
        }
        let enc = g.encode(x, noise, &thetas)?;
        let row = |v: Var| g.tape.value(v).row(0).to_vec();
        let out = EncodeResult {
            h: row(enc.h),
            mu: row(enc.mu),
            sigma: row(enc.sigma),
            z: row(enc.z),
            proportions: enc.proportions.iter().map(|&p| row(p)).collect(),
        };
        out.check_finite()?;
        Ok(out)
    }

    /// Top `n` words of a topic by Φ weight.
    pub fn top_keywords(&self, level: usize, topic: usize, n: usize) -> Result<Vec<usize>> {
        let phi = self.topic_word_dist(level)?;
        if topic >= phi.nrows() {
            return Err(Error::Precondition(format!("no topic {topic} at level {level}")));
        }
        top_keywords(phi.row(topic).as_slice().unwrap(), n)
    }

    /// Draws a document from the generative process: leaf proportions from
    /// the logistic-normal prior pushed through `f_π`, upper proportions via
    /// Θ, then per word a uniform level, a topic and a word.
    pub fn sample_document(&self, len: usize, seed: u64) -> Result<SampledDocument> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..self.config.latent)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut g = Graph::new(self, false);
        let levels: Vec<BoxVars> = (0..self.depth())
            .map(|k| g.topic_boxes(k))
            .collect::<Result<_>>()?;
        let zv = g.tape.constant(row_matrix(&z));
        let logits = g.tape.affine(zv, g.vars.enc[6], g.vars.enc[7])?;
        let mut pi = g.tape.row_softmax(logits);
        let mut proportions = vec![g.tape.value(pi).row(0).to_vec()];
        for k in 0..self.depth() - 1 {
            let theta = g.theta(&levels[k], &levels[k + 1])?;
            let mixed = g.tape.matmul(pi, theta)?;
            pi = g.tape.row_softmax(mixed);
            proportions.push(g.tape.value(pi).row(0).to_vec());
        }
        let phis = self.all_topic_word_dists()?;
        let words = sample_words(&proportions, &phis, len, &mut rng)?;
        Ok(SampledDocument { words, proportions })
    }

    /// Replaces every level above the leaves and the parent links.
    pub fn set_upper_levels(&mut self, upper: Vec<BoxParams>, parents: Vec<Vec<usize>>) {
        self.levels.truncate(1);
        self.levels.extend(upper);
        self.parents = parents;
    }
}

fn row_matrix(v: &[f64]) -> Matrix {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeResult {
    pub h: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    /// Topic proportions per level, leaf first.
    pub proportions: Vec<Vec<f64>>,
}

impl EncodeResult {
    fn check_finite(&self) -> Result<()> {
        let stages: [(&str, &[f64]); 4] = [
            ("encoder hidden layer", &self.h),
            ("encoder mean", &self.mu),
            ("encoder scale", &self.sigma),
            ("latent sample", &self.z),
        ];
        for (name, v) in stages {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        for (k, p) in self.proportions.iter().enumerate() {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("level {k} proportions")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledDocument {
    pub words: Vec<usize>,
    pub proportions: Vec<Vec<f64>>,
}

/// Per-column coefficient of variation (population std over mean).
pub fn cv_weights(phi: &Matrix) -> Vec<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(phi.clone());
    let cv = tape.column_cv(x, 0.0);
    tape.value(cv).row(0).to_vec()
}

/// Reconstruction distribution from per-level proportions (`B × |T_k|`)
/// and topic-word matrices. Each row of the result sums to one.
pub fn decode(proportions: &[Matrix], phis: &[Matrix], cv_eps: f64) -> Result<Matrix> {
    let mut tape = Tape::new();
    let pis: Vec<Var> = proportions.iter().map(|p| tape.constant(p.clone())).collect();
    let phs: Vec<Var> = phis.iter().map(|p| tape.constant(p.clone())).collect();
    let out = decode_graph(&mut tape, &pis, &phs, cv_eps)?;
    Ok(tape.value(out).clone())
}

pub(crate) fn decode_graph(tape: &mut Tape, pis: &[Var], phis: &[Var], cv_eps: f64) -> Result<Var> {
    if pis.is_empty() || pis.len() != phis.len() {
        return Err(Error::Precondition(format!(
            "decode needs matching levels, got {} proportions and {} distributions",
            pis.len(),
            phis.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&pi, &phi) in pis.iter().zip(phis) {
        let mixed = tape.matmul(pi, phi)?;
        let cv = tape.column_cv(phi, cv_eps);
        let sharpened = tape.mul_row(mixed, cv)?;
        let term = tape.row_l2_normalize(sharpened);
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    Ok(tape.row_sum_normalize(total.expect("at least one level")))
}

/// Indices of the `n` largest entries, ties broken by lower index.
pub fn top_keywords(row: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > row.len() {
        return Err(Error::Precondition(format!(
            "asked for {n} keywords from {} words",
            row.len()
        )));
    }
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(idx)
}

fn draw_categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding left a sliver at the end
    p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1)
}

/// Samples `len` words: uniform level, topic from that level's
/// proportions, word from the topic's row of Φ.
pub fn sample_words(
    proportions: &[Vec<f64>],
    phis: &[Matrix],
    len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if proportions.is_empty() || proportions.len() != phis.len() {
        return Err(Error::Precondition("sample_words needs one Φ per level".into()));
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let k = rng.random_range(0..proportions.len());
        let t = draw_categorical(&proportions[k], rng);
        let row = phis[k].row(t);
        out.push(draw_categorical(row.as_slice().expect("contiguous row"), rng));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Differentiable graph construction

/// Tape variables for every parameter of a [`ModelState`].
#[derive(Debug, Clone)]
pub(crate) struct ParamVars {
    pub enc: [Var; ENCODER_SLOTS],
    pub words: (Var, Var),
    pub levels: Vec<(Var, Var)>,
}

impl ParamVars {
    /// Variables in the same order as [`ModelState::params`].
    pub fn slots(&self) -> Vec<Var> {
        let mut v = self.enc.to_vec();
        v.push(self.words.0);
        v.push(self.words.1);
        for &(a, b) in &self.levels {
            v.push(a);
            v.push(b);
        }
        v
    }
}

/// Corner matrices and per-row log-volumes of a set of boxes on the tape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxVars {
    pub lo: Var,
    pub hi: Var,
    /// `n × 1`
    pub log_vol: Var,
}

pub(crate) struct Graph {
    pub tape: Tape,
    pub vars: ParamVars,
    pub boxes: BoxAlgebraConfig,
    pub cv_eps: f64,
}

pub(crate) struct EncodeVars {
    pub h: Var,
    pub mu: Var,
    pub sigma: Var,
    pub z: Var,
    pub proportions: Vec<Var>,
}

impl Graph {
    pub fn new(state: &ModelState, trainable: bool) -> Self {
        let mut tape = Tape::new();
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let p = state.params();
        let enc: [Var; ENCODER_SLOTS] = std::array::from_fn(|i| leaf(p[i]));
        let words = (leaf(p[WORD_SLOT]), leaf(p[WORD_SLOT + 1]));
        let levels = (0..state.depth())
            .map(|k| {
                let s = ModelState::level_slot(k);
                (leaf(p[s]), leaf(p[s + 1]))
            })
            .collect();
        Self {
            tape,
            vars: ParamVars { enc, words, levels },
            boxes: state.config.boxes,
            cv_eps: state.config.cv_eps,
        }
    }

    fn corners(&mut self, (pmin, psize): (Var, Var)) -> Result<BoxVars> {
        let t = &mut self.tape;
        let lo = t.sigmoid(pmin);
        let frac = t.sigmoid(psize);
        let neg = t.scale(lo, -1.0);
        let room = t.add_scalar(neg, 1.0);
        let side = t.mul(frac, room)?;
        let hi = t.add(lo, side)?;
        let log_vol = t.box_log_volume(lo, hi, self.boxes.vol_temp)?;
        Ok(BoxVars { lo, hi, log_vol })
    }

    pub fn word_boxes(&mut self) -> Result<BoxVars> {
        self.corners(self.vars.words)
    }

    pub fn topic_boxes(&mut self, level: usize) -> Result<BoxVars> {
        self.corners(self.vars.levels[level])
    }

    /// Pairwise log intersection volumes, `a.len() × b.len()`.
    pub fn pairwise(&mut self, a: &BoxVars, b: &BoxVars) -> Result<Var> {
        self.tape.pairwise_intersect_log_volume(
            a.lo,
            a.hi,
            b.lo,
            b.hi,
            self.boxes.int_temp,
            self.boxes.vol_temp,
        )
    }

    /// `Θ[i][j] = log R_a(child_i | parent_j)`.
    pub fn theta(&mut self, child: &BoxVars, parent: &BoxVars) -> Result<Var> {
        let inter = self.pairwise(child, parent)?;
        let neg = self.tape.scale(parent.log_vol, -1.0);
        let row = self.tape.transpose(neg);
        self.tape.add_row(inter, row)
    }

    /// Row-softmax of normalized symmetric affinities between topics and
    /// words.
    pub fn phi(&mut self, topics: &BoxVars, words: &BoxVars) -> Result<Var> {
        let inter = self.pairwise(topics, words)?;
        let neg_t = self.tape.scale(topics.log_vol, -1.0);
        let neg_w = self.tape.scale(words.log_vol, -1.0);
        let neg_w = self.tape.transpose(neg_w);
        let a = self.tape.add_col(inter, neg_t)?;
        let scores = self.tape.add_row(a, neg_w)?;
        Ok(self.tape.row_softmax(scores))
    }

    /// Encoder over a batch of TF-IDF rows (`B × |V|`).
    pub fn encode(&mut self, x: Var, noise: Matrix, thetas: &[Var]) -> Result<EncodeVars> {
        let e = self.vars.enc;
        let t = &mut self.tape;
        let pre = t.affine(x, e[0], e[1])?;
        let h = t.relu(pre);
        let mu = t.affine(h, e[2], e[3])?;
        let s = t.affine(h, e[4], e[5])?;
        let sigma = t.softplus(s);
        let z = t.gaussian_sample(mu, sigma, noise)?;
        let logits = t.affine(z, e[6], e[7])?;
        let mut pi = t.row_softmax(logits);
        let mut proportions = vec![pi];
        for &theta in thetas {
            let mixed = t.matmul(pi, theta)?;
            pi = t.row_softmax(mixed);
            proportions.push(pi);
        }
        Ok(EncodeVars {
            h,
            mu,
            sigma,
            z,
            proportions,
        })
    }

    pub fn decode(&mut self, proportions: &[Var], phis: &[Var]) -> Result<Var> {
        decode_graph(&mut self.tape, proportions, phis, self.cv_eps)
    }
}

// ---------------------------------------------------------------------------
// Taxonomy export and checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub id: usize,
    pub parent: Option<usize>,
    pub keywords: Vec<Keyword>,
}

/// Per-level topics with parent links and keywords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub levels: Vec<Vec<TopicEntry>>,
    pub config: serde_json::Value,
    pub vocab_hash: String,
}

impl Taxonomy {
    pub fn from_state(
        state: &ModelState,
        vocab: &[String],
        top_n: usize,
        config: serde_json::Value,
    ) -> Result<Self> {
        let mut levels = Vec::with_capacity(state.depth());
        for k in 0..state.depth() {
            let phi = state.topic_word_dist(k)?;
            let n = top_n.min(phi.ncols());
            let topics = (0..phi.nrows())
                .map(|i| {
                    let row = phi.row(i);
                    let keywords = top_keywords(row.as_slice().unwrap(), n)?
                        .into_iter()
                        .map(|w| Keyword {
                            word: vocab[w].clone(),
                            weight: row[w],
                        })
                        .collect();
                    Ok(TopicEntry {
                        id: i,
                        parent: state.parents.get(k).map(|p| p[i]),
                        keywords,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            levels.push(topics);
        }
        Ok(Self {
            levels,
            config,
            vocab_hash: crate::corpus::vocab_hash(vocab),
        })
    }

    /// Keyword lists per level, as words.
    pub fn keyword_words(&self, level: usize) -> Vec<Vec<String>> {
        self.levels[level]
            .iter()
            .map(|t| t.keywords.iter().map(|k| k.word.clone()).collect())
            .collect()
    }

    /// Indented plain-text rendering, top level first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let Some(top) = self.levels.len().checked_sub(1) else {
            return out;
        };
        for t in &self.levels[top] {
            self.render(top, t, 0, &mut out);
        }
        out
    }

    fn render(&self, level: usize, topic: &TopicEntry, indent: usize, out: &mut String) {
        let words: Vec<&str> = topic.keywords.iter().map(|k| k.word.as_str()).collect();
        out.push_str(&format!(
            "{}[L{} #{}] {}\n",
            "  ".repeat(indent),
            level + 1,
            topic.id,
            words.join(" ")
        ));
        if level == 0 {
            return;
        }
        for child in self.levels[level - 1]
            .iter()
            .filter(|c| c.parent == Some(topic.id))
        {
            self.render(level - 1, child, indent + 1, out);
        }
    }
}

/// Everything needed to evaluate, export or resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub vocab_hash: String,
    pub vocab: Vec<String>,
    /// Number of completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub state: ModelState,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Parse(format!("unknown checkpoint schema {:?}", ck.schema)));
        }
        Ok(ck)
    }

    pub fn check_vocab(&self, corpus_hash: &str) -> Result<()> {
        if self.vocab_hash != corpus_hash {
            return Err(Error::VocabMismatch {
                checkpoint: self.vocab_hash.clone(),
                corpus: corpus_hash.to_string(),
            });
        }
        Ok(())
    }
}

/// Column sums of a matrix as a vector.
pub fn column_sums(m: &Matrix) -> Vec<f64> {
    m.sum_axis(Axis(0)).to_vec()
}
