//! Training-loop behavior on a small planted corpus.

use boxtm::corpus::CorpusConfig;
use boxtm::synth::{planted_corpus, PlantedConfig};
use boxtm::train::{fit, fit_from, Trainer};
use boxtm::{Checkpoint, Corpus, Error, ModelState, TrainConfig};

fn small_corpus() -> Corpus {
    let p = planted_corpus(&PlantedConfig {
        docs: 300,
        words_per_leaf: 10,
        shared_per_group: 6,
        min_len: 20,
        max_len: 30,
        ..Default::default()
    });
    let cfg = CorpusConfig {
        min_count: 1,
        stopwords: false,
        ..Default::default()
    };
    Corpus::from_texts(&p.texts, &cfg).unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    let mut c = TrainConfig {
        depth: 2,
        leaf_topics: 4,
        hidden: 16,
        epochs,
        batch_size: 50,
        co_batch_size: 64,
        gamma: 2,
        seed: 11,
        ..Default::default()
    };
    c.boxes.dim = 8;
    c
}

fn params_equal(a: &ModelState, b: &ModelState) -> bool {
    a.params().iter().zip(b.params()).all(|(x, y)| *x == y) && a.parents == b.parents
}

#[test]
fn zero_epochs_returns_clustered_initial_state() {
    let corpus = small_corpus();
    let r = fit(&corpus, small_config(0)).unwrap();
    assert!(r.history.is_empty());
    assert_eq!(r.state.depth(), r.taxonomy.levels.len());
    assert!(r.state.depth() >= 2, "one clustering pass builds the upper level");
    let fresh = Trainer::new(&corpus, small_config(0)).unwrap();
    assert!(params_equal(&fresh.state, &r.state));
}

#[test]
fn identical_seeds_give_identical_runs() {
    let corpus = small_corpus();
    let a = fit(&corpus, small_config(3)).unwrap();
    let b = fit(&corpus, small_config(3)).unwrap();
    assert_eq!(a.taxonomy, b.taxonomy);
    assert_eq!(a.history, b.history);
    assert!(params_equal(&a.state, &b.state));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let corpus = small_corpus();
    let straight = fit(&corpus, small_config(4)).unwrap();

    let mut first = Trainer::new(&corpus, small_config(2)).unwrap();
    fit_from(&corpus, &mut first, |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    first.checkpoint(corpus.vocab.words()).save(&path).unwrap();

    let mut ck = Checkpoint::load(&path).unwrap();
    ck.config.epochs = 4;
    let mut resumed = Trainer::from_checkpoint(&corpus, ck).unwrap();
    let r = fit_from(&corpus, &mut resumed, |_, _| Ok(())).unwrap();
    assert!(params_equal(&straight.state, &r.state));
    assert_eq!(straight.taxonomy, r.taxonomy);
}

#[test]
fn unweighted_regularizers_leave_only_the_elbo() {
    let corpus = small_corpus();
    let mut cfg = small_config(2);
    cfg.alpha = 0.0;
    cfg.beta_max = 0.0;
    let r = fit(&corpus, cfg).unwrap();
    for s in &r.history {
        assert_eq!(s.total, s.elbo);
        assert_eq!(s.co, 0.0);
        assert!(s.kl >= 0.0 && s.kl_min >= 0.0);
    }
}

#[test]
fn no_reclustering_after_gamma() {
    let corpus = small_corpus();
    let mut cfg = small_config(1);
    cfg.gamma = 0;
    cfg.learning_rate = 1e-12;
    let mut t = Trainer::new(&corpus, cfg).unwrap();
    let before = t.state.levels[1].clone();
    let stats = t.train_epoch(&corpus).unwrap();
    assert!(!stats.reclustered);
    let after = &t.state.levels[1];
    let moved = (&after.min - &before.min)
        .iter()
        .chain((&after.size - &before.size).iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(moved < 1e-9, "upper boxes moved by {moved}");
}

#[test]
fn non_finite_loss_aborts_and_keeps_last_good_state() {
    let corpus = small_corpus();
    let mut cfg = small_config(1);
    cfg.gamma = 0;
    let mut t = Trainer::new(&corpus, cfg).unwrap();
    t.state.encoder.mu_b[[0, 0]] = f64::NAN;
    let snapshot = t.state.clone();
    let err = t.train_epoch(&corpus).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert_eq!(t.epoch, 0);
    for (a, b) in snapshot.params().iter().zip(t.state.params()) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x == y || (x.is_nan() && y.is_nan())));
    }
}

#[test]
fn checkpoint_rejects_other_vocabulary() {
    let corpus = small_corpus();
    let t = Trainer::new(&corpus, small_config(0)).unwrap();
    let mut ck = t.checkpoint(corpus.vocab.words());
    ck.vocab_hash = "0".repeat(64);
    assert!(matches!(
        Trainer::from_checkpoint(&corpus, ck),
        Err(Error::VocabMismatch { .. })
    ));
}

#[test]
fn sampled_documents_use_the_vocabulary() {
    let corpus = small_corpus();
    let r = fit(&corpus, small_config(1)).unwrap();
    let doc = r.state.sample_document(25, 3).unwrap();
    assert_eq!(doc.words.len(), 25);
    assert!(doc.words.iter().all(|&w| w < corpus.vocab.len()));
    assert_eq!(doc, r.state.sample_document(25, 3).unwrap());
}
