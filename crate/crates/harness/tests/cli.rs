use std::path::Path;
use std::process::{Command, Output};

fn minimax(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minimax")).args(args).current_dir(cwd).output().unwrap()
}

const LINEAR: &str = r#"{"experiment":"linear_gaussian_singletons","n":3,"m":2,"I":2,"epsilon":0.05,
    "k_grid":[1],"instances":2,"trials":20,"seed":4}"#;

#[test]
fn linear_run_writes_stable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), LINEAR).unwrap();
    let a = minimax(&["linear", "--config", "c.json", "--out", "a", "--threads", "2"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = minimax(&["--threads", "1", "linear", "--config", "c.json", "--out", "b"], dir.path());
    assert!(b.status.success());
    for f in ["linear.csv", "linear_summary.csv", "linear.svg"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    assert!(dir.path().join("a/linear_timing.json").exists());
    let c = minimax(&["linear", "--config", "c.json", "--out", "c", "--seed", "5"], dir.path());
    assert!(c.status.success());
    assert_ne!(std::fs::read(dir.path().join("a/linear.csv")).unwrap(), std::fs::read(dir.path().join("c/linear.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("unknown.json"), LINEAR.replace("\"seed\":4", "\"seed\":4,\"extra\":1")).unwrap();
    assert_eq!(minimax(&["linear", "--config", "unknown.json"], dir.path()).status.code(), Some(2));
    assert_eq!(minimax(&["linear", "--config", "missing.json"], dir.path()).status.code(), Some(2));
    assert_eq!(minimax(&["hazard", "--config", "unknown.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.csv"), "instance,K\n1,2\n").unwrap();
    assert_eq!(minimax(&["boxplot", "bad.csv"], dir.path()).status.code(), Some(2));
    // a Discrete problem whose set leaves the probability simplex
    let outside = r#"{"experiment":"custom","trials":5,"problem":{"scheme":{"kind":"discrete","dim":2},"K":1,
        "regions":[{"set":{"dim":2,"lo":[0.5,0.6],"hi":[0.5,0.6]},"map":{"matrix":[[1,0],[0,1]]}}],
        "g":[1,0],"epsilon":0.1}}"#;
    std::fs::write(dir.path().join("outside.json"), outside).unwrap();
    assert_eq!(minimax(&["linear", "--config", "outside.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn boxplot_subcommand_renders_runner_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), LINEAR).unwrap();
    assert!(minimax(&["linear", "--config", "c.json", "--out", "o"], dir.path()).status.success());
    let r = minimax(&["boxplot", "o/linear.csv", "--out", "plots", "--value", "error"], dir.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let svg = std::fs::read_to_string(dir.path().join("plots/linear.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("error by K"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let r = minimax(&["selftest"], dir.path());
    let out = String::from_utf8_lossy(&r.stdout);
    assert!(r.status.success(), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
