//! Drives the `swie` binary on a shrunken copy of the toy configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn small_config(dir: &Path) -> PathBuf {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let toml = std::fs::read_to_string(format!("{data}/toy.toml"))
        .unwrap()
        .replace("corpus = \"toy_corpus.tsv\"", &format!("corpus = \"{data}/toy_corpus.tsv\""))
        .replace("steps = 400", "steps = 6")
        .replace("n_layers = 4", "n_layers = 3")
        .replace("model_dim = 32", "model_dim = 16")
        .replace("max_new_tokens = 32", "max_new_tokens = 6");
    let path = dir.join("small.toml");
    std::fs::write(&path, toml).unwrap();
    path
}

struct Run {
    _tmp: TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Run {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let config = small_config(tmp.path());
        let out = tmp.path().join("run");
        Self { _tmp: tmp, config, out }
    }

    fn swie(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_swie"))
            .arg("--config")
            .arg(&self.config)
            .arg("--out-dir")
            .arg(&self.out)
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.swie(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).into_owned()
    }

    fn path(&self, name: &str) -> String {
        self.out.join(name).display().to_string()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap()
    }
}

#[test]
fn dry_run_writes_nothing() {
    let run = Run::new();
    run.ok(&["--dry-run", "synth"]);
    assert!(!run.out.exists());
    run.ok(&["synth"]);
    let before: Vec<_> = std::fs::read_dir(&run.out).unwrap().map(|e| e.unwrap().file_name()).collect();
    run.ok(&["--dry-run", "train"]);
    let after: Vec<_> = std::fs::read_dir(&run.out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(before.len(), after.len());
}

#[test]
fn synth_is_deterministic_and_reports_coverage() {
    let (a, b) = (Run::new(), Run::new());
    let report = a.ok(&["synth"]);
    assert!(report.contains("miss") && report.contains("over"), "{report}");
    b.ok(&["synth"]);
    for f in ["negatives.jsonl", "plain.jsonl", "hinted.jsonl", "test.tsv", "synth_report.json"] {
        assert_eq!(a.read(f), b.read(f), "{f}");
    }
    let c = Run::new();
    c.ok(&["--seed", "99", "synth"]);
    assert_ne!(a.read("negatives.jsonl"), c.read("negatives.jsonl"));
}

#[test]
fn interrupted_training_resumes_exactly() {
    let (full, split) = (Run::new(), Run::new());
    full.ok(&["synth"]);
    split.ok(&["synth"]);
    full.ok(&["train"]);
    split.ok(&["train", "--max-steps", "4"]);
    assert!(!split.out.join("model.json").exists());
    split.ok(&["train", "--resume"]);
    assert_eq!(full.read("model.log.jsonl"), split.read("model.log.jsonl"));
    assert_eq!(full.read("model.json"), split.read("model.json"));
}

#[test]
fn single_stage_writes_its_checkpoint() {
    let run = Run::new();
    run.ok(&["synth"]);
    let o = run.swie(&["train", "--stage", "2"]);
    assert!(!o.status.success());
    run.ok(&["train", "--stage", "1"]);
    assert!(run.out.join("model.stage1.json").exists());
    run.ok(&["train", "--stage", "2"]);
    assert!(run.out.join("model.stage2.json").exists());
}

#[test]
fn translate_eval_probe_and_concat() {
    let run = Run::new();
    run.ok(&["synth"]);
    run.ok(&["train"]);
    run.ok(&["train", "--no-swie", "--name", "baseline"]);
    let src = run.path("test.en-de.src");
    run.ok(&["translate", "--input", &src, "--hint", "no-over/miss"]);
    let hyps = run.read("hyp.en-de.no-over-miss.txt");
    assert_eq!(hyps.lines().count(), run.read("test.en-de.src").lines().count());

    let hyp = run.path("hyp.en-de.no-over-miss.txt");
    let refs = run.path("test.en-de.ref");
    run.ok(&["eval", "--hyps", &hyp, "--refs", &refs, "--sources", &src]);
    let metrics: serde_json::Value = serde_json::from_str(&run.read("hyp.en-de.no-over-miss.metrics.json")).unwrap();
    assert!(metrics["bleu"].as_f64().is_some() && metrics["faithfulness"].as_f64().is_some());

    let short = run.path("short.ref");
    std::fs::write(&short, "one line\n").unwrap();
    let o = run.swie(&["eval", "--hyps", &hyp, "--refs", &short, "--sources", &src]);
    assert!(!o.status.success());

    let swie = format!("swie={}", run.path("model.json"));
    let baseline = format!("baseline={}", run.path("baseline.json"));
    run.ok(&["probe", "--checkpoint", &swie, "--checkpoint", &baseline]);
    let csv = run.read("probe.csv");
    assert!(csv.lines().any(|l| l.contains("swie")) && csv.lines().any(|l| l.contains("baseline")), "{csv}");

    let merged = run.path("concat.tsv");
    run.ok(&["concat", "--input", &run.path("test.tsv"), "--output", &merged, "--k-min", "2", "--k-max", "3"]);
    let rows = |t: &str| t.lines().filter(|l| !l.starts_with('#')).count();
    let n = rows(&run.read("concat.tsv"));
    assert!(n > 0 && n < rows(&run.read("test.tsv")));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\n[model]\nlayers = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_swie")).arg("--config").arg(&path).arg("synth").output().unwrap();
    assert!(!o.status.success());
}
