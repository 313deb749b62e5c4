use std::path::Path;
use std::process::{Command, Output};

fn csa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csa"))
        .args(args)
        .output()
        .expect("run csa")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
name = "tiny"
output_dir = "out"

[dataset]
kind = "synthetic-blobs"
n_train = 64
n_test = 32
classes = 3
noise = 0.3
seed = 1

[train]
epochs = 2
batch_size = 32
seed = 4

[train.model]
kind = "mlp"
hidden = [8]
embedding = 4

[train.eval]
every = 1
severities = [2]

[study]
seeds = [0, 1]
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn gradcheck_exit_codes() {
    let ok = csa(&["gradcheck", "--instances", "2"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("all checks passed"));
    let bad = csa(&["gradcheck", "--instances", "2", "--mutation", "flip-separation-grad"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("FAIL separation_loss"));
    let unknown = csa(&["gradcheck", "--mutation", "nope"]);
    assert!(!unknown.status.success());
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = csa(&["train", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("out/tiny");
    for f in ["config.toml", "metrics.csv", "corruption.csv", "tiny-s4/plot.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let snapshot = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.starts_with("# config_hash = "));
    assert!(stdout(&out).contains("SA"));

    let corruption = std::fs::read_to_string(run.join("corruption.csv")).unwrap();
    let again = csa(&["train", &config]);
    assert!(again.status.success());
    assert_eq!(std::fs::read_to_string(run.join("corruption.csv")).unwrap(), corruption);
    assert_eq!(std::fs::read_to_string(run.join("config.toml")).unwrap(), snapshot);
}

#[test]
fn study_subcommands_override_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let sweep = csa(&["sweep-gamma", &config, "--gammas", "0.1,0.5", "--seeds", "0"]);
    assert!(sweep.status.success(), "{}", stderr(&sweep));
    let study = std::fs::read_to_string(dir.path().join("out/tiny/study.csv")).unwrap();
    assert_eq!(study.lines().count(), 3);
    assert!(study.starts_with("x,epochs,sa,ra,baseline_sa,baseline_ra,delta_sa,delta_ra"));

    let budget = csa(&["epoch-budget", &config, "--fractions", "0.5", "--seeds", "0"]);
    assert!(budget.status.success(), "{}", stderr(&budget));
    let ablate = csa(&["ablate", &config, "--variant", "sa-only,supcon", "--seeds", "0"]);
    assert!(ablate.status.success(), "{}", stderr(&ablate));
    assert!(stdout(&ablate).contains("sa-only"));
}

#[test]
fn bad_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[train]\nepochs = -1\n");
    let out = csa(&["train", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let missing = csa(&["train", &dir.path().join("nope.toml").display().to_string()]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("nope.toml"));
}

#[test]
fn corrupt_preview_lists_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY);
    let out = csa(&["corrupt-preview", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 35);
    assert!(text.starts_with("kind,severity,parameter,mse"));
}
