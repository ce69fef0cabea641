use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boxtm::synth::{planted_corpus, PlantedConfig};

const SMALL: &str = r#"
[corpus]
min_count = 2
stopwords = false

[boxalg]
dim = 10

[train]
depth = 2
leaf_topics = 6
hidden = 16
batch_size = 50
co_batch_size = 128
epochs = 2
gamma = 1
"#;

fn boxtm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxtm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = boxtm(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Workspace {
    fn new(docs: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let planted = planted_corpus(&PlantedConfig {
            docs,
            seed,
            ..Default::default()
        });
        fs::write(root.join("docs.txt"), planted.texts.join("\n")).unwrap();
        let config = root.join("run.toml");
        fs::write(&config, SMALL).unwrap();
        Self {
            _dir: dir,
            root,
            config,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn preprocess(&self, out: &str) -> PathBuf {
        let out = self.path(out);
        ok(&[
            "preprocess",
            s(&self.path("docs.txt")),
            "--config",
            s(&self.config),
            "--out-dir",
            s(&out),
        ]);
        out
    }

    fn train(&self, corpus: &Path, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(out);
        let mut args = vec![
            "train",
            "--corpus",
            s(corpus),
            "--config",
            s(&self.config),
            "--out-dir",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn preprocess_reports_summary_and_is_byte_identical() {
    let w = Workspace::new(200, 1);
    let a = w.preprocess("a");
    let b = w.preprocess("b");
    for f in ["vocab.json", "counts.txt", "tfidf.txt", "cooccur.txt", "splits.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = ok(&["preprocess", s(&w.path("docs.txt")), "--config", s(&w.config), "--out-dir", s(&w.path("c"))]);
    assert!(summary.contains("vocabulary") && summary.contains("train"));
}

#[test]
fn empty_input_fails_with_message() {
    let w = Workspace::new(10, 1);
    let empty = w.path("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = boxtm(&["preprocess", s(&empty), "--out-dir", s(&w.path("c"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty corpus"));
}

#[test]
fn train_eval_export_pipeline_is_deterministic() {
    let w = Workspace::new(300, 2);
    let corpus = w.preprocess("corpus");
    let run_a = w.train(&corpus, "run_a", &[]);
    let run_b = w.train(&corpus, "run_b", &[]);
    let tax_a = fs::read_to_string(run_a.join("taxonomy.json")).unwrap();
    assert_eq!(tax_a, fs::read_to_string(run_b.join("taxonomy.json")).unwrap());

    let log = fs::read_to_string(run_a.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["total"].as_f64().unwrap().is_finite());
    }

    let mut reports = Vec::new();
    for run in [&run_a, &run_b] {
        let out = run.join("eval");
        ok(&["eval", "--checkpoint", s(&run.join("checkpoint.json")), "--corpus", s(&corpus), "--out-dir", s(&out)]);
        assert!(out.join("report.txt").exists());
        reports.push(fs::read_to_string(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_str(&reports[0]).unwrap();
    for level in report["levels"].as_array().unwrap() {
        let c = level["C"].as_f64().unwrap();
        let d = level["D"].as_f64().unwrap();
        assert!((level["CD"].as_f64().unwrap() - c * d).abs() < 1e-12);
        assert!(level.get("HC").is_some());
    }
}

#[test]
fn epochs_zero_and_level_counts() {
    let w = Workspace::new(200, 3);
    let corpus = w.preprocess("corpus");
    let run = w.train(&corpus, "run", &["--epochs", "0", "--k", "3", "--leaf-topics", "8"]);
    let tax: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("taxonomy.json")).unwrap()).unwrap();
    let levels = tax["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    assert_eq!(levels[0].as_array().unwrap().len(), 8);
    assert!(tax["vocab_hash"].is_string());
    assert_eq!(fs::read_to_string(run.join("train_log.jsonl")).unwrap(), "");
}

#[test]
fn resume_matches_uninterrupted_run() {
    let w = Workspace::new(200, 4);
    let corpus = w.preprocess("corpus");
    let full = w.train(&corpus, "full", &["--epochs", "3"]);
    let part = w.train(&corpus, "part", &["--epochs", "1"]);
    let ck = part.join("checkpoint.json");
    w.train(&corpus, "part", &["--epochs", "3", "--resume", s(&ck)]);
    for f in ["taxonomy.json", "train_log.jsonl"] {
        assert_eq!(
            fs::read_to_string(full.join(f)).unwrap(),
            fs::read_to_string(part.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_rejects_vocabulary_mismatch() {
    let w = Workspace::new(200, 5);
    let corpus = w.preprocess("corpus");
    let run = w.train(&corpus, "run", &["--epochs", "0"]);
    let other_dir = w.path("other.txt");
    fs::write(&other_dir, "alpha beta gamma\nbeta gamma delta\nalpha delta beta\n".repeat(20)).unwrap();
    let other = w.path("other");
    ok(&["preprocess", s(&other_dir), "--config", s(&w.config), "--out-dir", s(&other)]);
    let o = boxtm(&["eval", "--checkpoint", s(&run.join("checkpoint.json")), "--corpus", s(&other)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("vocabulary mismatch"));
}

#[test]
fn export_formats_and_top_n() {
    let w = Workspace::new(200, 6);
    let corpus = w.preprocess("corpus");
    let run = w.train(&corpus, "run", &["--epochs", "1"]);
    let ck = run.join("checkpoint.json");

    let json: serde_json::Value = serde_json::from_str(&ok(&["export", "--checkpoint", s(&ck)])).unwrap();
    let levels = json["levels"].as_array().unwrap();
    for (k, level) in levels.iter().enumerate() {
        for topic in level.as_array().unwrap() {
            assert_eq!(topic["keywords"].as_array().unwrap().len(), 15);
            if k + 1 < levels.len() {
                let p = topic["parent"].as_u64().unwrap() as usize;
                assert!(p < levels[k + 1].as_array().unwrap().len());
            } else {
                assert!(topic["parent"].is_null());
            }
        }
    }

    let short: serde_json::Value =
        serde_json::from_str(&ok(&["export", "--checkpoint", s(&ck), "--top-n", "4"])).unwrap();
    assert_eq!(short["levels"][0][0]["keywords"].as_array().unwrap().len(), 4);

    let text = ok(&["export", "--checkpoint", s(&ck), "--format", "text"]);
    let roots = text.lines().filter(|l| !l.starts_with(' ')).count();
    assert_eq!(roots, levels.last().unwrap().as_array().unwrap().len());
    assert_eq!(text.lines().count(), levels.iter().map(|l| l.as_array().unwrap().len()).sum::<usize>());

    let out = w.path("exported");
    ok(&["export", "--checkpoint", s(&ck), "--format", "text", "--out-dir", s(&out)]);
    assert_eq!(fs::read_to_string(out.join("taxonomy.txt")).unwrap(), text);

    assert!(!boxtm(&["export", "--checkpoint", s(&ck), "--format", "xml"]).status.success());
}

#[test]
fn sample_is_seeded() {
    let w = Workspace::new(200, 7);
    let corpus = w.preprocess("corpus");
    let run = w.train(&corpus, "run", &["--epochs", "1"]);
    let ck = run.join("checkpoint.json");
    let args = ["sample", "--checkpoint", s(&ck), "--n-docs", "3", "--length", "12", "--seed", "5"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert_eq!(a.lines().count(), 3);
    assert!(a.lines().all(|l| l.split(' ').count() == 12));
}

#[test]
fn missing_corpus_artifacts_fail() {
    let w = Workspace::new(10, 1);
    let o = boxtm(&["train", "--corpus", s(&w.path("nowhere")), "--out-dir", s(&w.path("run"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot load corpus"));
}
