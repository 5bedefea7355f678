use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    p.display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnet-infer")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pr_with_evidence() {
    let (m, e) = (fixture("n1.uai"), fixture("n1.evid"));
    assert_eq!(stdout(&["pr", "--model", &m, "--evidence", &e]), "PR\n-0.318759\n");
}

#[test]
fn every_task_writes_its_result() {
    let (m, e, q) = (fixture("n1.uai"), fixture("n1.evid"), fixture("n1.query"));
    assert_eq!(stdout(&["mar", "--model", &m, "--evidence", &e]), "MAR\n1 2 0.375000 0.625000\n");
    assert_eq!(stdout(&["mar", "--model", &m]), "MAR\n2 2 0.600000 0.400000 2 0.520000 0.480000\n");
    assert_eq!(stdout(&["mpe", "--model", &m]), "MPE\n2 0 0\n");
    assert_eq!(stdout(&["mpe", "--model", &m, "--evidence", &e, "--order", "exhaustive"]), "MPE\n1 1\n");
    assert_eq!(stdout(&["mmap", "--model", &m, "--query", &q]), "MMAP\n1 0\n");
    let samples = stdout(&["sample", "--model", &m, "--num-samples", "5", "--seed", "3"]);
    assert_eq!(samples.lines().count(), 5);
    assert!(samples.lines().all(|l| l.split(' ').count() == 2));
}

#[test]
fn stats_reports_complexity() {
    let out = stdout(&["stats", "--model", &fixture("n1.uai")]);
    assert!(out.starts_with("space=2.0 time=2.0 rw="), "{out}");
}

#[test]
fn output_file_and_determinism() {
    let m = fixture("n1.uai");
    let dir = std::env::temp_dir().join(format!("tnet-infer-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let a = dir.join("a.txt");
    let args = |p: &str| vec!["sample".to_string(), "--model".into(), m.clone(), "--num-samples".into(), "200".into(), "--seed".into(), "9".into(), "--output".into(), p.to_string()];
    let first = args(&a.display().to_string());
    let first: Vec<&str> = first.iter().map(String::as_str).collect();
    assert!(run(&first).status.success());
    let one = std::fs::read(&a).unwrap();
    assert!(run(&first).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), one);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn category(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    err.split(']').next().unwrap().trim_start_matches("error[").to_string()
}

#[test]
fn failures_report_one_category_line() {
    let (m, e) = (fixture("n1.uai"), fixture("n1.evid"));
    assert_eq!(category(&["pr", "--model", &e]), "parse");
    assert_eq!(category(&["pr", "--model", "/nonexistent/model.uai"]), "parse");
    assert_eq!(category(&["pr", "--model", &m, "--space-cap", "0.5"]), "capacity");
    let dir = std::env::temp_dir().join(format!("tnet-infer-cli-err-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let zero = dir.join("zero.uai");
    std::fs::write(&zero, "MARKOV 2 2 2 1 2 0 1 4 1 0 1 0").unwrap();
    let z = zero.display().to_string();
    assert_eq!(category(&["mar", "--model", &z, "--evidence", &e]), "inconsistent-evidence");
    let empty = dir.join("empty.query");
    std::fs::write(&empty, "0").unwrap();
    assert_eq!(category(&["mmap", "--model", &m, "--query", &empty.display().to_string()]), "shape");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn mmap_requires_a_query_file() {
    let out = run(&["mmap", "--model", &fixture("n1.uai")]);
    assert!(!out.status.success());
    let out = run(&["sample", "--model", &fixture("n1.uai"), "--num-samples", "0"]);
    assert!(!out.status.success());
}
