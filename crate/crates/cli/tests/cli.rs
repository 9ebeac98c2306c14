use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hairseg::data::{synth_generate, SynthOptions};
use hairseg::model::{save_weights, ModelConfig, SegFormer};
use hairseg::report::parse_csv;
use hairseg::rng::Rng;
use hairseg::tensor::Tensor;

fn hairseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hairseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(count: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let o = hairseg(&["synth", "--out", s(&data), "--count", count, "--extent", "32", "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn train(&self, config: &Path, out: &str, extra: &[&str]) -> Output {
        let out = self.path(out);
        let data = self.path("data");
        let mut args = vec!["train", "--config", s(config), "--data", s(&data), "--out", s(&out)];
        args.extend_from_slice(extra);
        hairseg(&args)
    }
}

const SMALL: &str = "# two folds, short\nk = 2\nmax_epochs = 2\nbatch_size = 2\n";

#[test]
fn train_emits_checkpoints_metrics_and_report() {
    let ws = Workspace::new("6");
    let cfg = ws.config("c.txt", SMALL);
    let o = ws.train(&cfg, "run", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["metrics.csv", "report.md", "learning_curves.csv", "checkpoints/fold00.ckpt", "weights/fold01.weights"] {
        assert!(ws.path("run").join(f).exists(), "{f} missing");
    }
    let md = std::fs::read_to_string(ws.path("run/report.md")).unwrap();
    let fold_rows = md.lines().filter(|l| l.starts_with("| 0 |") || l.starts_with("| 1 |")).count();
    assert_eq!(fold_rows, 2);
    assert!(md.contains("| Mean ± Std |"));
    let rows = parse_csv(&std::fs::read_to_string(ws.path("run/metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);

    // Reporting the emitted CSV reproduces the same markdown, byte for byte.
    let a = hairseg(&["report", "--csv", s(&ws.path("run/metrics.csv")), "--out", s(&ws.path("rep1"))]);
    let b = hairseg(&["report", "--csv", s(&ws.path("run/metrics.csv")), "--out", s(&ws.path("rep2"))]);
    assert_eq!(code(&a), 0);
    assert_eq!(std::fs::read(ws.path("rep1/report.md")).unwrap(), md.as_bytes());
    assert_eq!(std::fs::read(ws.path("rep1/report.md")).unwrap(), std::fs::read(ws.path("rep2/report.md")).unwrap());
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn interrupted_training_resumes_where_it_stopped() {
    let ws = Workspace::new("6");
    let cfg = ws.config("c.txt", "k = 2\nmax_epochs = 3\nbatch_size = 2\n");
    assert_eq!(code(&ws.train(&cfg, "full", &[])), 0);
    let halted = ws.train(&cfg, "part", &["--halt-after", "0:2"]);
    assert_eq!(code(&halted), 0);
    assert!(stdout(&halted).contains("halted after fold 0 epoch 2"));
    assert!(!ws.path("part/metrics.csv").exists());
    let resumed = ws.train(&cfg, "part", &["--resume"]);
    assert_eq!(code(&resumed), 0, "{}", stderr(&resumed));
    assert_eq!(
        std::fs::read(ws.path("full/metrics.csv")).unwrap(),
        std::fs::read(ws.path("part/metrics.csv")).unwrap()
    );

    let changed = ws.config("c2.txt", "k = 2\nmax_epochs = 3\nbatch_size = 2\nlr = 0.002\n");
    let o = ws.train(&changed, "part", &["--resume"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config mismatch"), "{}", stderr(&o));
}

#[test]
fn ablation_report_has_three_variants() {
    let ws = Workspace::new("4");
    let cfg = ws.config("c.txt", "k = 2\nmax_epochs = 1\nbatch_size = 2\n");
    let o = ws.train(&cfg, "abl", &["--ablation"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let md = std::fs::read_to_string(ws.path("abl/report.md")).unwrap();
    let table = md.split("## Ablation").nth(1).expect("ablation section");
    for v in ["| Full |", "| No Dropout |", "| No Pretraining |"] {
        assert!(table.contains(v), "{v} missing in\n{table}");
    }
    assert!(ws.path("abl/checkpoints/no_dropout/fold01.ckpt").exists());
}

#[test]
fn config_errors_are_usage_errors() {
    let ws = Workspace::new("4");
    let o = ws.train(&ws.path("missing.txt"), "x", &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.txt"), "{}", stderr(&o));

    let bad = ws.config("bad.txt", "k = 2\nlearning_rate = 0.1\n");
    let o = ws.train(&bad, "x", &[]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("learning_rate") && err.contains("max_epochs") && err.contains("lpips_every"), "{err}");

    let o = hairseg(&["train", "--config"]);
    assert_eq!(code(&o), 1);
    let cfg = ws.config("c.txt", SMALL);
    let o = hairseg(&["train", "--config", s(&cfg), "--data", s(&ws.path("nowhere")), "--out", s(&ws.path("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_prints_metrics_matching_its_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let no_hair = SynthOptions {
        max_strokes: 0,
        ..SynthOptions::default()
    };
    synth_generate(&data, 3, 32, 1, &no_hair).unwrap();

    // A classifier that always answers "background".
    let config = ModelConfig::tiny();
    let model = SegFormer::new(config.clone()).unwrap();
    let mut params = model.init_params::<f32>(&mut Rng::new(0));
    let names = params.names().to_vec();
    for (n, t) in names.iter().zip(params.tensors_mut()) {
        if n == "head.weight" {
            *t = Tensor::zeros(t.shape());
        } else if n == "head.bias" {
            *t = Tensor::from_f64(&[2], &[10.0, -10.0]).unwrap();
        }
    }
    let weights = dir.path().join("w.bin");
    save_weights(&weights, &config, &params).unwrap();

    let csv = dir.path().join("eval.csv");
    let o = hairseg(&["eval", "--weights", s(&weights), "--data", s(&data), "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("dice     1.000"), "{out}");
    assert!(out.contains("lpips    n/a"), "{out}");
    let rows = parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    let r = &rows[0].record;
    for (label, v, d) in [("iou", r.iou, 3), ("dice", r.dice, 3), ("psnr_db", r.psnr_db, 1), ("ssim", r.ssim, 3), ("loss", r.val_loss, 3)] {
        let line = out.lines().find(|l| l.starts_with(label)).unwrap();
        assert_eq!(line.split_whitespace().nth(1).unwrap(), format!("{v:.d$}"), "{label}");
    }
    assert_eq!(r.lpips, None);

    let o = hairseg(&["eval", "--weights", s(&weights), "--data", s(&data), "--preset", "b2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config mismatch"));
}

#[test]
fn malformed_report_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    std::fs::write(&csv, "fold,epoch,train_loss,val_loss,iou,dice,psnr_db,ssim,lpips\n0,1,0.5,0.4,0.9,0.9,30,0.9,n/a\n1,1,0.5\n").unwrap();
    let o = hairseg(&["report", "--csv", s(&csv), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn gradcheck_exit_codes() {
    let ok = hairseg(&["gradcheck", "--preset", "tiny"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert!(stdout(&ok).contains("0 failed"));
    let bad = hairseg(&["gradcheck", "--preset", "tiny", "--corrupt-backward"]);
    assert_eq!(code(&bad), 3);
    assert!(stdout(&bad).contains("FAIL"));
    let big = hairseg(&["gradcheck", "--preset", "b2"]);
    assert_eq!(code(&big), 1);
    assert!(stderr(&big).contains("tiny"));
    assert_eq!(code(&hairseg(&["gradcheck", "--preset", "huge"])), 1);
}
