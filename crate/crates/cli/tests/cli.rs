use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use albench_core::io::write_csv;
use albench_core::orchestrator::Summary;
use albench_core::synthetic::two_moons;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_albench")
}

fn albench(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn moons_csv(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let p = dir.join(name);
    write_csv(&two_moons(n, 0.15, seed), fs::File::create(&p).unwrap()).unwrap();
    p
}

const BUILTIN: &str = r#"
[learner]
kind = "builtin"
model = { kind = "mlp", hidden = [16, 16] }
[learner.train]
epochs = 15
"#;

fn write_config(dir: &Path, dataset: &str, learner: &str, roster: &[&str]) -> PathBuf {
    let mut text = format!(
        r#"seed = 4
[dataset]
{dataset}
[preset]
name = "cifar10-low"
initial = 10
per_cycle = 10
cycles = 2
trials = 2
mode = "supervised"
{learner}
[output]
dir = "out"
"#
    );
    for r in roster {
        text.push_str(&format!("[[roster]]\nkind = \"{r}\"\n"));
    }
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_summarize_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kind = \"two_moons\"\nn = 120",
        BUILTIN,
        &["random", "entropy"],
    );
    let o = albench(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("entropy"));
    let out = tmp.path().join("out");
    assert!(out.join("records/random-trial1.json").exists());
    let before = fs::read(out.join("summary.csv")).unwrap();

    let o = albench(&["summarize", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), before);

    let o = albench(&["plot-data", out.to_str().unwrap()]);
    assert!(o.status.success());
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.starts_with("strategy,learner,trial,cycle,spent,labeled,value"));
    assert_eq!(curves.lines().count(), 1 + 4 * 3);
}

#[test]
fn trials_and_seed_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"two_moons\"\nn = 120", BUILTIN, &["random"]);
    let o = albench(&["run", "--config", cfg.to_str().unwrap(), "--trials", "1", "--seed", "77"]);
    assert!(o.status.success());
    let s: Summary =
        serde_json::from_slice(&fs::read(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(s.strategies[0].trials, 1);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[dataset]\nkind = \"two_moons\"\n[preset]\nname = \"nope\"\n").unwrap();
    assert_eq!(albench(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(albench(&["run", "--config", "/does/not/exist.toml"]).status.code(), Some(2));
    assert_eq!(albench(&["run"]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "kind = \"two_moons\"\nn = 120", BUILTIN, &["d_score"]);
    assert_eq!(albench(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_tolerance_csv() {
    let o = albench(&["sweep-tolerance", "--synthetic", "6", "--tolerances", "0,2,10"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tolerance,mean_clicks,miou");
    assert_eq!(lines.len(), 4);
    let clicks: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(clicks.windows(2).all(|w| w[1] <= w[0]));
    let miou0: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(miou0, 1.0);
}

#[test]
fn reference_adapter_is_compliant() {
    let tmp = tempfile::tempdir().unwrap();
    let o = albench(&[
        "adapter-check",
        "--workdir",
        tmp.path().to_str().unwrap(),
        bin(),
        "serve-adapter",
        "--epochs",
        "20",
    ]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.contains("PASS deterministic_replay"));
}

#[test]
fn echo_process_is_not_compliant() {
    let tmp = tempfile::tempdir().unwrap();
    let o = albench(&["adapter-check", "--workdir", tmp.path().to_str().unwrap(), "cat"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn serve_adapter_refuses_wrong_version() {
    let mut child = Command::new(bin())
        .arg("serve-adapter")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"kind":"hello","id":1,"payload":{{"version":99,"dataset":"x","num_classes":2,"seed":0}}}}"#).unwrap();
    writeln!(stdin, r#"{{"kind":"shutdown","id":2,"payload":{{}}}}"#).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with(r#"{"kind":"error","id":1,"payload":{"code":"version""#));
    assert_eq!(lines[1], r#"{"kind":"ack","id":2,"payload":{}}"#);
}

fn adapter_learner(command: &[&str]) -> String {
    let cmd: Vec<String> = command.iter().map(|s| format!("{s:?}")).collect();
    format!("[learner]\nkind = \"adapter\"\ncommand = [{}]\n", cmd.join(", "))
}

#[test]
fn run_through_adapter_matches_shape() {
    let tmp = tempfile::tempdir().unwrap();
    moons_csv(tmp.path(), "moons.csv", 120, 3);
    moons_csv(tmp.path(), "moons-test.csv", 40, 4);
    let learner = adapter_learner(&[bin(), "serve-adapter", "--epochs", "15"]);
    let cfg = write_config(
        tmp.path(),
        "kind = \"csv\"\npath = \"moons.csv\"\ntest_path = \"moons-test.csv\"\nnum_classes = 2",
        &learner,
        &["random", "entropy", "coreset"],
    );
    let o = albench(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Summary =
        serde_json::from_slice(&fs::read(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(s.strategies.len(), 3);
    assert!(s.strategies.iter().all(|st| st.mean_labeled == vec![10.0, 20.0, 30.0]));

    // same data through a pool/test split of a single file
    let cfg = write_config(
        tmp.path(),
        "kind = \"csv\"\npath = \"moons.csv\"\nnum_classes = 2",
        &learner,
        &["random", "entropy"],
    );
    let o = albench(&["run", "--config", cfg.to_str().unwrap(), "--trials", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn adapter_crash_fails_only_its_trial() {
    let tmp = tempfile::tempdir().unwrap();
    moons_csv(tmp.path(), "moons.csv", 120, 3);
    let script = format!(
        r#"if [ "$ALBENCH_ARM" = entropy ] && [ "$ALBENCH_TRIAL" = 1 ]; then exec {b} serve-adapter --epochs 10 --crash-on-train "$@"; fi; exec {b} serve-adapter --epochs 10 "$@""#,
        b = bin()
    );
    let learner = adapter_learner(&["sh", "-c", &script, "adapter"]);
    let cfg = write_config(
        tmp.path(),
        "kind = \"csv\"\npath = \"moons.csv\"\nnum_classes = 2",
        &learner,
        &["random", "entropy"],
    );
    let o = albench(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let s: Summary =
        serde_json::from_slice(&fs::read(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(s.failures.len(), 1);
    assert_eq!((s.failures[0].strategy.as_str(), s.failures[0].trial), ("entropy", 1));
    assert_eq!(s.strategy("random").unwrap().trials, 2);
    assert_eq!(s.strategy("entropy").unwrap().trials, 1);
}
