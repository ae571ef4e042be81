use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn revsent(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_revsent"));
    cmd.args(args).env_remove("REVSENT_OUT");
    cmd
}

fn fixture_args(out: &Path) -> Vec<String> {
    vec![
        "--input".into(),
        fixture("chatgpt.csv").display().to_string(),
        "--input".into(),
        fixture("deepseek.csv").display().to_string(),
        "--lexicon".into(),
        fixture("starter_lexicon.tsv").display().to_string(),
        "--out".into(),
        out.display().to_string(),
        "--max-length".into(),
        "20".into(),
        "--epochs".into(),
        "2".into(),
    ]
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_all_on_fixtures_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(revsent(&["run-all"]).args(fixture_args(&out)));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "labeled.csv",
        "split_manifest.tsv",
        "models/cnn.ckpt",
        "models/bilstm.ckpt",
        "reports/report.txt",
        "reports/report.json",
        "eda/top_words.tsv",
        "eda/rating_distribution.tsv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("Accuracy%"));
}

#[test]
fn evaluate_without_checkpoint_names_train() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(revsent(&["evaluate", "--out"]).arg(dir.path()));
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("evaluate") && err.contains("`train`"), "{err}");
}

#[test]
fn stages_chain_individually_and_match_run_all() {
    let dir = tempfile::tempdir().unwrap();
    let staged = dir.path().join("staged");
    for stage in [
        "ingest", "label", "balance", "split", "encode", "train", "evaluate", "eda",
    ] {
        let o = run(revsent(&[stage]).args(fixture_args(&staged)));
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let whole = dir.path().join("whole");
    assert!(run(revsent(&["run-all"]).args(fixture_args(&whole)))
        .status
        .success());
    for f in ["reports/report.txt", "models/cnn.ckpt", "manifest.jsonl"] {
        assert_eq!(
            fs::read(staged.join(f)).unwrap(),
            fs::read(whole.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "input = {}\nseed = 1\nout = {}\n",
            fixture("chatgpt.csv").display(),
            out.display()
        ),
    )
    .unwrap();
    let o = run(revsent(&["ingest", "--seed", "2", "--config"]).arg(&conf));
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert!(manifest.contains("\"seed\":2"), "{manifest}");
}

#[test]
fn env_var_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let o = run(revsent(&["ingest", "--input"])
        .arg(fixture("deepseek.csv"))
        .env("REVSENT_OUT", &out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("reviews.csv").is_file());
}

#[test]
fn rejects_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(revsent(&["train", "--model", "transformer", "--out"]).arg(dir.path()));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("transformer"));
    let o = run(revsent(&["ingest", "--out"]).arg(dir.path()));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no input files"));
}

#[test]
fn synth_writes_one_file_per_app() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(revsent(&["synth", "--reviews", "30", "--lexicon"])
        .arg(fixture("starter_lexicon.tsv"))
        .arg("--out")
        .arg(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("chatgpt.csv")).unwrap();
    assert_eq!(text.lines().count(), 16);
}
