//! Losses, schedules and the training loop.
//!
//! Per epoch: while `epoch < gamma` the upper levels are rebuilt by
//! recursive clustering; then every training batch contributes
//! `ELBO + alpha · L_CO + beta(epoch) · L_HT`, gradients are clipped by global
//! norm and applied with Adam; finally parent links are refreshed from the
//! updated boxes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boxalg::{
    gumbel_log_volume, sym_affinity, asym_containment, BoxAlgebraConfig, BoxEmbed,
};
use crate::cluster::{assign_parents, recur_clus, ClusterConfig};
use crate::corpus::{Corpus, Split};
use crate::diffcore::{clip_global_norm, Adam, AdamState, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{
    BoxParams, BoxVars, Checkpoint, Graph, ModelConfig, ModelState, Taxonomy, CHECKPOINT_SCHEMA,
};

/// Keywords kept per topic in exported taxonomies.
pub const DEFAULT_TOP_N: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Taxonomy depth K, leaf level included.
    pub depth: usize,
    pub leaf_topics: usize,
    pub hidden: usize,
    /// Latent width; defaults to `leaf_topics`.
    pub latent: Option<usize>,
    pub learning_rate: f64,
    /// Max-margin between parent and child log-volumes.
    pub margin: f64,
    /// Weight of the co-occurrence loss.
    pub alpha: f64,
    /// Final weight of the hierarchy loss.
    pub beta_max: f64,
    /// Epoch at which recursive clustering stops.
    pub gamma: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub co_batch_size: usize,
    pub clip_norm: f64,
    pub cv_eps: f64,
    pub seed: u64,
    pub boxes: BoxAlgebraConfig,
    pub cluster: ClusterConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            leaf_topics: 50,
            hidden: 256,
            latent: None,
            learning_rate: 5e-3,
            margin: 10.0,
            alpha: 3.0,
            beta_max: 0.005,
            gamma: 100,
            epochs: 300,
            batch_size: 200,
            co_batch_size: 1024,
            clip_norm: 5.0,
            cv_eps: 1e-10,
            seed: 42,
            boxes: BoxAlgebraConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.boxes.validate()?;
        self.cluster.validate()?;
        let positive = [
            ("depth", self.depth),
            ("leaf_topics", self.leaf_topics),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("co_batch_size", self.co_batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.latent == Some(0) {
            return Err(Error::Config("latent must be positive".into()));
        }
        let nonneg = [
            ("learning_rate", self.learning_rate),
            ("margin", self.margin),
            ("alpha", self.alpha),
            ("beta_max", self.beta_max),
            ("clip_norm", self.clip_norm),
            ("cv_eps", self.cv_eps),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if self.learning_rate == 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden: self.hidden,
            latent: self.latent.unwrap_or(self.leaf_topics),
            leaf_topics: self.leaf_topics,
            depth: self.depth,
            boxes: self.boxes,
            cv_eps: self.cv_eps,
        }
    }

    fn adam(&self) -> Adam {
        Adam {
            lr: self.learning_rate,
            ..Adam::default()
        }
    }
}

/// Linear warm-up of the hierarchy-loss weight, reaching `beta_max` at
/// epoch `gamma`.
pub fn beta_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.gamma == 0 {
        return cfg.beta_max;
    }
    cfg.beta_max * (epoch as f64 / cfg.gamma as f64).min(1.0)
}

// ---------------------------------------------------------------------------
// Plain (non-differentiable) loss routes

/// Closed-form `KL(N(mu, diag sigma²) ‖ N(0, I))`.
pub fn gaussian_kl(mu: &[f64], sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| 0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln()))
        .sum()
}

/// Negative ELBO of one document: `-(Σ_j d_j log d̂_j) + KL`.
pub fn elbo_loss(counts: &[f64], recon: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if counts.len() != recon.len() {
        return Err(Error::Dimension {
            expected: counts.len(),
            got: recon.len(),
        });
    }
    let rec: f64 = counts
        .iter()
        .zip(recon)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, p)| c * p.max(1e-300).ln())
        .sum();
    Ok(-rec + gaussian_kl(mu, sigma))
}

/// A sampled co-occurrence pair `(i, j, P(w_i | w_j))`.
pub type CoPair = (usize, usize, f64);

/// Cross-entropy between normalized co-occurrence conditionals and the
/// batch softmax of word-box containment scores.
pub fn co_loss(words: &[BoxEmbed], batch: &[CoPair], cfg: &BoxAlgebraConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty co-occurrence batch".into()));
    }
    let z: f64 = batch.iter().map(|p| p.2).sum();
    let scores: Vec<f64> = batch
        .iter()
        .map(|&(i, j, _)| asym_containment(&words[i], &words[j], cfg))
        .collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    Ok(batch
        .iter()
        .zip(&scores)
        .map(|(p, s)| -(p.2 / z) * (s - lse))
        .sum())
}

/// `Σ [ -log R_s(child, parent) + max(0, m - log Vol(parent) + log Vol(child)) ]`
/// over `(parent, child)` links.
pub fn ht_loss(links: &[(&BoxEmbed, &BoxEmbed)], margin: f64, cfg: &BoxAlgebraConfig) -> f64 {
    links
        .iter()
        .map(|(p, c)| {
            let hinge = (margin - gumbel_log_volume(p, cfg) + gumbel_log_volume(c, cfg)).max(0.0);
            -sym_affinity(c, p, cfg) + hinge
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Differentiable batch loss

/// Inputs of one optimization step.
#[derive(Debug, Clone)]
pub struct BatchInputs {
    /// `B × |V|` encoder input.
    pub tfidf: Matrix,
    /// `B × |V|` reconstruction target.
    pub counts: Matrix,
    /// `B × latent` standard-normal noise.
    pub noise: Matrix,
    pub co_pairs: Vec<CoPair>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
}

/// Values of every loss term for one batch (per-document means for the
/// ELBO parts).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub elbo: f64,
    pub rec: f64,
    pub kl: f64,
    pub co: f64,
    pub ht: f64,
}

struct LossVars {
    total: Var,
    elbo: Var,
    rec: Var,
    kl: Var,
    co: Option<Var>,
    ht: Option<Var>,
}

fn build_loss(
    g: &mut Graph,
    state: &ModelState,
    inputs: &BatchInputs,
    w: &LossWeights,
) -> Result<LossVars> {
    let depth = state.depth();
    let b = inputs.counts.nrows() as f64;
    let words = g.word_boxes()?;
    let levels: Vec<BoxVars> = (0..depth).map(|k| g.topic_boxes(k)).collect::<Result<_>>()?;
    let thetas: Vec<Var> = (0..depth - 1)
        .map(|k| g.theta(&levels[k], &levels[k + 1]))
        .collect::<Result<_>>()?;
    let phis: Vec<Var> = levels
        .iter()
        .map(|t| g.phi(t, &words))
        .collect::<Result<_>>()?;

    let x = g.tape.constant(inputs.tfidf.clone());
    let enc = g.encode(x, inputs.noise.clone(), &thetas)?;
    let recon = g.decode(&enc.proportions, &phis)?;

    let eps = g.boxes.log_eps;
    let t = &mut g.tape;
    let counts = t.constant(inputs.counts.clone());
    let log_recon = t.log(recon, eps);
    let weighted = t.mul(counts, log_recon)?;
    let ll = t.reduce_sum(weighted);
    let rec = t.scale(ll, -1.0 / b);

    let mu2 = t.mul(enc.mu, enc.mu)?;
    let s2 = t.mul(enc.sigma, enc.sigma)?;
    let log_s = t.log(enc.sigma, eps);
    let two_log_s = t.scale(log_s, 2.0);
    let a = t.add(mu2, s2)?;
    let a = t.sub(a, two_log_s)?;
    let a = t.add_scalar(a, -1.0);
    let kl_sum = t.reduce_sum(a);
    let kl = t.scale(kl_sum, 0.5 / b);
    let elbo = t.add(rec, kl)?;

    let mut total = elbo;
    let co = if w.alpha > 0.0 && !inputs.co_pairs.is_empty() {
        let co = co_graph(g, &words, &inputs.co_pairs)?;
        let scaled = g.tape.scale(co, w.alpha);
        total = g.tape.add(total, scaled)?;
        Some(co)
    } else {
        None
    };
    let ht = if w.beta > 0.0 && depth > 1 {
        let ht = ht_graph(g, &levels, &state.parents, w.margin)?;
        let scaled = g.tape.scale(ht, w.beta);
        total = g.tape.add(total, scaled)?;
        Some(ht)
    } else {
        None
    };
    Ok(LossVars {
        total,
        elbo,
        rec,
        kl,
        co,
        ht,
    })
}

fn co_graph(g: &mut Graph, words: &BoxVars, pairs: &[CoPair]) -> Result<Var> {
    let (bi, bj): (Vec<usize>, Vec<usize>) = pairs.iter().map(|p| (p.0, p.1)).unzip();
    let z: f64 = pairs.iter().map(|p| p.2).sum();
    let p = Matrix::from_shape_vec((1, pairs.len()), pairs.iter().map(|p| p.2 / z).collect())
        .expect("row shape");
    let (int_t, vol_t) = (g.boxes.int_temp, g.boxes.vol_temp);
    let t = &mut g.tape;
    let il = t.gather_rows(words.lo, &bi)?;
    let ih = t.gather_rows(words.hi, &bi)?;
    let jl = t.gather_rows(words.lo, &bj)?;
    let jh = t.gather_rows(words.hi, &bj)?;
    let lo = t.smooth_max(il, jl, int_t)?;
    let hi = t.smooth_min(ih, jh, int_t)?;
    let inter = t.box_log_volume(lo, hi, vol_t)?;
    let vol_j = t.gather_rows(words.log_vol, &bj)?;
    let scores = t.sub(inter, vol_j)?;
    let row = t.transpose(scores);
    let lse = t.logsumexp(row);
    let pv = t.constant(p);
    let weighted = t.mul(pv, row)?;
    let expect = t.reduce_sum(weighted);
    t.sub(lse, expect)
}

fn ht_graph(g: &mut Graph, levels: &[BoxVars], parents: &[Vec<usize>], margin: f64) -> Result<Var> {
    let (int_t, vol_t) = (g.boxes.int_temp, g.boxes.vol_temp);
    let t = &mut g.tape;
    let mut total: Option<Var> = None;
    for (k, links) in parents.iter().enumerate() {
        let (child, parent) = (&levels[k], &levels[k + 1]);
        let pl = t.gather_rows(parent.lo, links)?;
        let ph = t.gather_rows(parent.hi, links)?;
        let lo = t.smooth_max(child.lo, pl, int_t)?;
        let hi = t.smooth_min(child.hi, ph, int_t)?;
        let inter = t.box_log_volume(lo, hi, vol_t)?;
        let pv = t.gather_rows(parent.log_vol, links)?;
        let gap = t.sub(child.log_vol, pv)?;
        let shifted = t.add_scalar(gap, margin);
        let hinge = t.relu(shifted);
        let per_link = t.sub(hinge, inter)?;
        let s = t.reduce_sum(per_link);
        total = Some(match total {
            None => s,
            Some(acc) => t.add(acc, s)?,
        });
    }
    Ok(total.unwrap_or_else(|| t.scalar_constant(0.0)))
}

fn breakdown(tape: &Tape, v: &LossVars) -> LossBreakdown {
    LossBreakdown {
        total: tape.scalar(v.total),
        elbo: tape.scalar(v.elbo),
        rec: tape.scalar(v.rec),
        kl: tape.scalar(v.kl),
        co: v.co.map_or(0.0, |c| tape.scalar(c)),
        ht: v.ht.map_or(0.0, |h| tape.scalar(h)),
    }
}

/// Loss values for one batch without building gradients.
pub fn batch_loss(state: &ModelState, inputs: &BatchInputs, w: &LossWeights) -> Result<LossBreakdown> {
    let mut g = Graph::new(state, false);
    let vars = build_loss(&mut g, state, inputs, w)?;
    Ok(breakdown(&g.tape, &vars))
}

/// Loss values and gradients for every slot of [`ModelState::params`].
pub fn loss_and_grads(
    state: &ModelState,
    inputs: &BatchInputs,
    w: &LossWeights,
) -> Result<(LossBreakdown, Vec<Option<Matrix>>)> {
    let mut g = Graph::new(state, true);
    let vars = build_loss(&mut g, state, inputs, w)?;
    let losses = breakdown(&g.tape, &vars);
    let mut grads = g.tape.backward(vars.total)?;
    let slots = g.vars.slots().into_iter().map(|v| grads.take(v)).collect();
    Ok((losses, slots))
}

// ---------------------------------------------------------------------------
// Training loop

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub elbo: f64,
    pub rec: f64,
    pub kl: f64,
    /// Smallest per-batch KL seen during the epoch.
    pub kl_min: f64,
    pub co: f64,
    pub ht: f64,
    pub beta: f64,
    pub cluster_sizes: Vec<usize>,
    pub reclustered: bool,
    pub val_elbo: Option<f64>,
}

/// Mutable training session: model, optimizer and epoch counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub state: ModelState,
    pub optimizer: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    support: Vec<CoPair>,
}

impl Trainer {
    /// Fresh model with upper levels from one clustering pass over the
    /// initial boxes.
    pub fn new(corpus: &Corpus, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut state = ModelState::init(config.model_config(corpus.vocab.len()), config.seed)?;
        if config.depth > 1 {
            rebuild_upper_levels(&mut state, &config)?;
        }
        let optimizer = AdamState::new(&state.params());
        Ok(Self {
            config,
            state,
            optimizer,
            epoch: 0,
            support: corpus.cooccur.support(),
        })
    }

    pub fn from_checkpoint(corpus: &Corpus, ck: Checkpoint) -> Result<Self> {
        ck.check_vocab(&corpus.vocab.hash())?;
        ck.config.validate()?;
        Ok(Self {
            config: ck.config,
            state: ck.state,
            optimizer: ck.optimizer,
            epoch: ck.epoch,
            support: corpus.cooccur.support(),
        })
    }

    pub fn checkpoint(&self, vocab: &[String]) -> Checkpoint {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            vocab_hash: crate::corpus::vocab_hash(vocab),
            vocab: vocab.to_vec(),
            epoch: self.epoch,
            config: self.config.clone(),
            state: self.state.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// Taxonomy of the current state with the training config attached.
    pub fn taxonomy(&self, vocab: &[String], top_n: usize) -> Result<Taxonomy> {
        let config = serde_json::to_value(&self.config)?;
        Taxonomy::from_state(&self.state, vocab, top_n, config)
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        rng
    }

    fn sample_pairs(&self, rng: &mut impl Rng) -> Vec<CoPair> {
        if self.support.is_empty() || self.config.alpha == 0.0 {
            return Vec::new();
        }
        (0..self.config.co_batch_size)
            .map(|_| self.support[rng.random_range(0..self.support.len())])
            .collect()
    }

    fn noise(&self, rows: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_shape_fn((rows, self.state.config.latent), |_| StandardNormal.sample(rng))
    }

    /// Runs one epoch. On a non-finite loss the state is left at its last
    /// good value and an error is returned.
    pub fn train_epoch(&mut self, corpus: &Corpus) -> Result<EpochStats> {
        let epoch = self.epoch;
        let cfg = self.config.clone();
        let mut rng = self.epoch_rng(epoch);

        let reclustered = epoch < cfg.gamma && cfg.depth > 1;
        if reclustered {
            rebuild_upper_levels(&mut self.state, &cfg)?;
            let first_upper = ModelState::level_slot(1);
            self.optimizer.sync(&self.state.params());
            let params = self.state.params();
            for (slot, p) in params.iter().enumerate().skip(first_upper) {
                self.optimizer.reset_slot(slot, p.dim());
            }
        }

        let beta = beta_schedule(epoch, &cfg);
        let weights = LossWeights {
            alpha: cfg.alpha,
            beta,
            margin: cfg.margin,
        };
        let adam = cfg.adam();
        let mut train = corpus.doc_ids(Split::Train);
        train.shuffle(&mut rng);

        let mut sums = LossBreakdown::default();
        let mut kl_min = f64::INFINITY;
        let mut batches = 0usize;
        for (b, ids) in train.chunks(cfg.batch_size).enumerate() {
            let inputs = BatchInputs {
                tfidf: corpus.tfidf.dense_rows(ids),
                counts: corpus.counts.dense_rows(ids),
                noise: self.noise(ids.len(), &mut rng),
                co_pairs: self.sample_pairs(&mut rng),
            };
            let (loss, mut grads) = loss_and_grads(&self.state, &inputs, &weights)?;
            let finite_grads = grads.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()));
            if !loss.total.is_finite() || !finite_grads {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b}: {loss:?}"
                )));
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut self.state.params_mut(), &grads, &mut self.optimizer)?;
            sums.total += loss.total;
            sums.elbo += loss.elbo;
            sums.rec += loss.rec;
            sums.kl += loss.kl;
            sums.co += loss.co;
            sums.ht += loss.ht;
            kl_min = kl_min.min(loss.kl);
            batches += 1;
        }
        refresh_parents(&mut self.state)?;
        self.epoch += 1;

        let n = batches.max(1) as f64;
        Ok(EpochStats {
            epoch,
            total: sums.total / n,
            elbo: sums.elbo / n,
            rec: sums.rec / n,
            kl: sums.kl / n,
            kl_min,
            co: sums.co / n,
            ht: sums.ht / n,
            beta,
            cluster_sizes: self.state.level_sizes(),
            reclustered,
            val_elbo: None,
        })
    }

    /// Mean negative ELBO over a split with zero latent noise.
    pub fn evaluate_elbo(&self, corpus: &Corpus, which: Split) -> Result<Option<f64>> {
        let ids = corpus.doc_ids(which);
        if ids.is_empty() {
            return Ok(None);
        }
        let w = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            margin: self.config.margin,
        };
        let mut total = 0.0;
        for chunk in ids.chunks(self.config.batch_size) {
            let inputs = BatchInputs {
                tfidf: corpus.tfidf.dense_rows(chunk),
                counts: corpus.counts.dense_rows(chunk),
                noise: Matrix::zeros((chunk.len(), self.state.config.latent)),
                co_pairs: Vec::new(),
            };
            total += batch_loss(&self.state, &inputs, &w)?.elbo * chunk.len() as f64;
        }
        Ok(Some(total / ids.len() as f64))
    }
}

/// Rebuilds every level above the leaves by recursive clustering and
/// resets the parent links.
pub fn rebuild_upper_levels(state: &mut ModelState, cfg: &TrainConfig) -> Result<crate::cluster::Hierarchy> {
    let words = state.words.boxes();
    let leaves = state.levels[0].boxes();
    let h = recur_clus(&words, &leaves, cfg.depth, &cfg.cluster, &cfg.boxes)?;
    if h.topped_out {
        log::info!("taxonomy topped out at level sizes {:?}", h.level_sizes(leaves.len()));
    }
    let upper = h
        .upper
        .iter()
        .map(|boxes| BoxParams::from_boxes(boxes, cfg.boxes.dim))
        .collect();
    state.set_upper_levels(upper, h.parents.clone());
    Ok(h)
}

/// Re-derives parent links from the current boxes.
pub fn refresh_parents(state: &mut ModelState) -> Result<()> {
    state.parents = (0..state.depth().saturating_sub(1))
        .map(|k| assign_parents(&state.hier_relations(k)?))
        .collect::<Result<_>>()?;
    Ok(())
}

/// Outcome of [`fit`] and [`fit_from`].
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Model after the last epoch.
    pub state: ModelState,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub best_val_elbo: Option<f64>,
    /// Model with the best validation ELBO seen.
    pub best_state: Option<ModelState>,
    pub taxonomy: Taxonomy,
}

/// Trains for `config.epochs` epochs from scratch.
pub fn fit(corpus: &Corpus, config: TrainConfig) -> Result<FitResult> {
    let mut trainer = Trainer::new(corpus, config)?;
    fit_from(corpus, &mut trainer, |_, _| Ok(()))
}

/// Continues `trainer` until `config.epochs`, calling `on_epoch` after each
/// epoch. On error the trainer holds the last good state.
pub fn fit_from(
    corpus: &Corpus,
    trainer: &mut Trainer,
    mut on_epoch: impl FnMut(&Trainer, &EpochStats) -> Result<()>,
) -> Result<FitResult> {
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ModelState)> = None;
    while trainer.epoch < trainer.config.epochs {
        let mut stats = trainer.train_epoch(corpus)?;
        stats.val_elbo = trainer.evaluate_elbo(corpus, Split::Valid)?;
        if let Some(v) = stats.val_elbo {
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((stats.epoch, v, trainer.state.clone()));
            }
        }
        log::info!(
            "epoch {} total {:.4} elbo {:.4} co {:.4} ht {:.4} sizes {:?}",
            stats.epoch,
            stats.total,
            stats.elbo,
            stats.co,
            stats.ht,
            stats.cluster_sizes
        );
        on_epoch(trainer, &stats)?;
        history.push(stats);
    }
    let taxonomy = trainer.taxonomy(corpus.vocab.words(), DEFAULT_TOP_N)?;
    let (best_epoch, best_val_elbo, best_state) = match best {
        Some((e, v, s)) => (Some(e), Some(v), Some(s)),
        None => (None, None, None),
    };
    Ok(FitResult {
        state: trainer.state.clone(),
        history,
        best_epoch,
        best_val_elbo,
        best_state,
        taxonomy,
    })
}
