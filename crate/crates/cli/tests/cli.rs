use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn axechain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axechain")).args(args).output().unwrap()
}

fn corpus(name: &str) -> String {
    format!("{}/../core/corpus/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(axechain(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(axechain(&["--help"]).status.code(), Some(0));
    assert_eq!(axechain(&["package-check", "/nonexistent/x.axe"]).status.code(), Some(4));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "[sim]\nsede = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = axechain(&["sim-run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn package_check_reports_fields() {
    let o = axechain(&["package-check", &corpus("subset_sum.axe")]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "times = 2"));
}

#[test]
fn pvm_run_on_a_known_solution() {
    // {1, 3, 5}: mask 0b10101
    let o = axechain(&["pvm-run", &corpus("subset_sum.axe"), "--input", "21"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("true"));
}

#[test]
fn security_curve_passes_the_half_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = axechain(&["security-curve", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("security_curve.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("0.5,0.333333333333")));
}

#[test]
fn proof_vectors_match_the_committed_file() {
    let o = axechain(&["proof-vectors"]);
    assert!(o.status.success());
    let committed = fs::read_to_string(format!("{}/../core/tests/data/proof_vectors.txt", env!("CARGO_MANIFEST_DIR"))).unwrap();
    assert_eq!(stdout(&o), committed);
}

fn digest_run(out: &Path) {
    let o = axechain(&[
        "exp-digest", "--seed", "5", "--n", "10000", "--modes", "add,constant", "--freqs", "10,40", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn digest_experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    digest_run(&a);
    digest_run(&b);
    for f in ["digest.csv", "digest_counts.csv", "manifest.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("digest.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
}

#[test]
fn sim_run_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = axechain(&["sim-run", "--seed", "2", "--max-ticks", "200", "--trace", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.txt", "scenario.csv", "audit.txt", "trace.txt", "manifest.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 2"));
}
