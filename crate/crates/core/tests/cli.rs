use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rideshare"))
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let Output { status, stdout, stderr } = bin().args(args).output().expect("binary runs");
    (
        status.code().expect("exit code"),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

#[test]
fn allocate_threshold_truthful() {
    let (code, out, _) = run(&["allocate", &scenario("threshold-truthful.json")]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().next().unwrap(), "all travel alone, welfare 0");
}

#[test]
fn allocate_single_is_one_line() {
    let (code, out, _) = run(&["allocate", &scenario("single.json")]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1, "{out}");
}

#[test]
fn allocate_rejects_bad_probability() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = fs::read_to_string(scenario("single.json")).unwrap().replace("\"p_commit\": 0.7", "\"p_commit\": 1.5");
    fs::write(&path, text).unwrap();
    let (code, _, err) = run(&["allocate", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("p_commit"), "{err}");
}

#[test]
fn missing_file_is_io_error() {
    let (code, _, _) = run(&["allocate", "/nonexistent/scenario.json"]);
    assert_eq!(code, 3);
}

#[test]
fn pay_examples() {
    let (code, out, _) = run(&["pay", &scenario("linear-pair.json"), "--mechanism", "commit"]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l == "0: (-4, 0)"), "{out}");

    let (_, out, _) = run(&["pay", &scenario("single.json"), "--mechanism", "groves-clarke"]);
    assert!(out.lines().any(|l| l == "0: 0"), "{out}");

    let (_, out, _) = run(&["pay", &scenario("linear-pair.json"), "--mechanism", "groves-clarke", "--public-p"]);
    assert!(out.lines().any(|l| l == "0: -2"), "{out}");

    let (code, _, _) = run(&["pay", &scenario("linear-pair.json"), "--mechanism", "vcg"]);
    assert_eq!(code, 2);
}

fn mean_and_se(csv_text: &str, commuter: &str) -> (f64, f64) {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let mut mean = None;
    let mut se = None;
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[1] != commuter {
            continue;
        }
        match &rec[0] {
            "mean" => mean = Some(rec[5].parse().unwrap()),
            "se" => se = Some(rec[5].parse().unwrap()),
            _ => {}
        }
    }
    (mean.unwrap(), se.unwrap())
}

#[test]
fn simulate_misreport_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let file = scenario("threshold-misreport.json");
    for path in [&a, &b] {
        let (code, out, err) = run(&[
            "simulate", &file, "--trials", "200000", "--seed", "7", "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{out}{err}");
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let (mean, se) = mean_and_se(std::str::from_utf8(&bytes).unwrap(), "0");
    assert!((mean - 1.2).abs() <= 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn simulate_input_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let (code, _, _) = run(&["simulate", &scenario("linear-pair.json"), "--trials", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["simulate", &scenario("linear-pair.json"), "--trials", "10", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(code, 3);
}

#[test]
fn audit_examples() {
    let (code, out, _) = run(&["audit", &scenario("threshold-truthful.json"), "--mechanism", "commit", "--notion", "expost"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("gain 1.2"), "{out}");
    assert!(out.contains("replayed"), "{out}");

    let (code, out, _) = run(&["audit", &scenario("linear-pair.json"), "--mechanism", "commit", "--notion", "expost"]);
    assert_eq!(code, 0, "{out}");

    let (code, out, _) = run(&["audit", &scenario("linear-pair.json"), "--mechanism", "groves-clarke", "--notion", "expost"]);
    assert_eq!(code, 1, "{out}");
}

#[test]
fn suite_passes() {
    let (code, out, _) = run(&["suite", "--grid", "11"]);
    assert_eq!(code, 0, "{out}");
    assert!(!out.contains("FAIL"));
}

#[test]
fn thread_cap_is_honoured_and_validated() {
    let out = bin()
        .env("RIDESHARE_THREADS", "1")
        .args(["allocate", &scenario("linear-pair.json")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .env("RIDESHARE_THREADS", "many")
        .args(["allocate", &scenario("linear-pair.json")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
