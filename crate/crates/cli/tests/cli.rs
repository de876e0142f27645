use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfc"))
        .args(args)
        .env_remove("QFC_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn eval_basic_prints_summary_and_is_reproducible() {
    let args = [
        "eval", "--policy", "basic", "--noise", "depolarizing", "--alpha", "0", "--epsilon", "0", "--episodes", "300",
        "--seed", "4",
    ];
    let a = qfc(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let text = stdout(&a);
    let f: f64 = field(&text, "mean_fidelity").parse().unwrap();
    assert!(f > 0.99, "{f}");
    assert_eq!(field(&text, "scenario"), "basic");
    assert_eq!(stdout(&qfc(&args)), text);
}

#[test]
fn exit_codes_follow_error_class() {
    let missing = qfc(&[
        "eval", "--policy", "/nonexistent/agent.ckpt", "--noise", "depolarizing", "--alpha", "0", "--epsilon", "0.1",
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_alpha = qfc(&["eval", "--policy", "basic", "--noise", "depolarizing", "--alpha", "2", "--epsilon", "0.1"]);
    assert_eq!(bad_alpha.status.code(), Some(1));

    assert_eq!(qfc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qfc(&["--help"]).status.code(), Some(0));

    let threads = Command::new(env!("CARGO_BIN_EXE_qfc"))
        .args(["eval", "--policy", "basic", "--noise", "depolarizing", "--alpha", "0", "--epsilon", "0.1"])
        .env("QFC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("sweep.cfg");
    fs::write(
        &path,
        "[sweep]\nscenarios = basic\nnoises = depolarizing, amplitude_damping\nalphas = 0, 0.5\nepsilons = 0.1\nepisodes = 20\nseed = 3\n\n[output]\ndir = out\n",
    )
    .unwrap();
    path
}

#[test]
fn sweep_then_report_regenerates_the_same_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let s = qfc(&["sweep", "--config", config.to_str().unwrap()]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let out = dir.path().join("out");
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 5);
    for name in ["thresholds.csv", "curves.csv", "fidelity_depolarizing.svg", "steps_amplitude_damping.svg"] {
        assert!(out.join(name).exists(), "{name}");
    }

    let again = dir.path().join("again");
    let r = qfc(&["report", "--results", out.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for name in ["results.csv", "thresholds.csv", "curves.csv"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn sweep_without_checkpoints_reports_missing_policy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rl.cfg");
    fs::write(
        &path,
        "[sweep]\nscenarios = mbs\nnoises = depolarizing\nalphas = 0\nepsilons = 0.1\nepisodes = 5\n\n[training]\ntrain_on_demand = false\ncheckpoints = ck\n",
    )
    .unwrap();
    assert_eq!(qfc(&["sweep", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn train_writes_checkpoint_usable_by_eval() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("agent.ckpt");
    let t = qfc(&[
        "train", "--scenario", "mbs", "--epsilon", "0.1", "--timesteps", "256", "--seed", "2", "--out",
        ck.to_str().unwrap(),
    ]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    assert!(ck.exists());
    assert!(dir.path().join("agent.curve.csv").exists());
    let e = qfc(&[
        "eval", "--policy", ck.to_str().unwrap(), "--noise", "random_permutation", "--alpha", "0.2", "--epsilon", "0.1",
        "--episodes", "20",
    ]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    assert_eq!(field(&stdout(&e), "scenario"), "mbs");
}
