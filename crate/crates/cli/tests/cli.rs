#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rankone::tensor::{outer_entry, PartialTensor};
use serde_json::Value;
use tempfile::TempDir;

fn r1c(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r1c"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_tensor(dir: &TempDir, name: &str, a: &PartialTensor) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string(a).unwrap()).unwrap();
    p
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn factors(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v["factors"].clone()).unwrap()
}

#[test]
fn analyze_seven_row() {
    let dir = TempDir::new().unwrap();
    let p = write_tensor(&dir, "a.json", &common::seven_row());
    let out = r1c(&["analyze", s(&p)]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["determinable"], true);
    assert_eq!(v["witness_chain"][0]["mode"], 3);
}

#[test]
fn analyze_stalled_pattern() {
    let dir = TempDir::new().unwrap();
    let p = write_tensor(&dir, "a.json", &common::stalled_pattern());
    let out = r1c(&["analyze", s(&p)]);
    assert!(out.status.success());
    assert_eq!(json(&out)["determinable"], false);
}

#[test]
fn schema_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("empty.json", r#"{"dims":[2,2],"entries":[]}"#),
        (
            "range.json",
            r#"{"dims":[2,2],"entries":[{"idx":[3,1],"val":1}]}"#,
        ),
        (
            "dup.json",
            r#"{"dims":[2,2],"entries":[{"idx":[1,1],"val":1},{"idx":[1,1],"val":2}]}"#,
        ),
        (
            "extra.json",
            r#"{"dims":[2,2],"entries":[{"idx":[1,1],"val":1,"w":0}]}"#,
        ),
        ("broken.json", r#"{"dims":[2,2],"#),
    ];
    for (name, text) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        for cmd in ["analyze", "complete"] {
            let out = r1c(&[cmd, s(&p)]);
            assert_eq!(out.status.code(), Some(2), "{cmd} {name}");
            assert!(out.stdout.is_empty());
        }
    }
    assert_eq!(
        r1c(&["analyze", "/nonexistent/file.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn complete_exact_order4() {
    let dir = TempDir::new().unwrap();
    let p = write_tensor(&dir, "a.json", &common::exact_order4());
    let out = r1c(&["complete", s(&p)]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["status"], "ok");
    assert!(v["fit_residual"].as_f64().unwrap() <= 1e-9);
    let f = factors(&v);
    let s1 = rankone::metrics::sin_angle(&f[0], &[1.0, 2.0, 3.0]).unwrap();
    assert!(s1 <= 1e-8);
}

#[test]
fn complete_noisy_order5_to_file() {
    let dir = TempDir::new().unwrap();
    let a = common::noisy_order5();
    let p = write_tensor(&dir, "a.json", &a);
    let res = dir.path().join("out.json");
    let out = r1c(&["complete", s(&p), "--output", s(&res)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&res).unwrap();
    assert!(text.ends_with('\n'));
    let v: Value = serde_json::from_str(&text).unwrap();
    let d = common::distance_to_ones(&a, &factors(&v));
    assert!((d - 2.2e-3).abs() <= 5e-4, "{d}");
}

#[test]
fn complete_single_entry_matrix() {
    let dir = TempDir::new().unwrap();
    let p = write_tensor(&dir, "a.json", &common::tensor(&[1, 1], "11=5"));
    let out = r1c(&["complete", s(&p)]);
    assert!(out.status.success());
    let f = factors(&json(&out));
    assert!((outer_entry(&f, &[1, 1].into()) - 5.0).abs() < 1e-12);
}

#[test]
fn generate_is_deterministic_and_exact_at_eps_zero() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for prefix in [&a, &b] {
        assert!(r1c(&[
            "generate",
            "--dims",
            "3,3,3",
            "--seed",
            "9",
            "--eps",
            "0",
            "-o",
            s(prefix)
        ])
        .status
        .success());
    }
    for suffix in [".exact.json", ".noisy.json", ".factors.json"] {
        let x = std::fs::read(format!("{}{suffix}", a.display())).unwrap();
        let y = std::fs::read(format!("{}{suffix}", b.display())).unwrap();
        assert_eq!(x, y, "{suffix}");
    }
    let exact = std::fs::read(format!("{}.exact.json", a.display())).unwrap();
    let noisy = std::fs::read(format!("{}.noisy.json", a.display())).unwrap();
    assert_eq!(exact, noisy);

    let t: PartialTensor = serde_json::from_slice(&exact).unwrap();
    for mode in 1..=3 {
        assert!(rankone::analysis::is_mod_full(&t, mode));
    }
    // Round trip through the file format is the identity.
    let again: PartialTensor = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(again, t);
}

#[test]
fn bench_exact_trial_has_no_error() {
    let out = r1c(&[
        "bench", "--dims", "5,6,7", "--eps", "0", "--trials", "1", "--format", "json",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["trials"][0]["metrics"]["err_ab"].as_f64().unwrap() <= 1e-9);
    assert_eq!(v["summary"]["trials"], 1);
}

#[test]
fn bench_csv_has_trial_and_mean_rows() {
    let out = r1c(&[
        "bench",
        "--dims",
        "10,12,14",
        "--trials",
        "4",
        "--seed",
        "3",
        "--compare-nls",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("row,trial,seed,dims"));
    assert!(lines[0].contains("nls_err_rt"));
    assert!(lines[1..5].iter().all(|l| l.starts_with("trial,")));
    assert!(lines[5].starts_with("mean,"));
    // Algorithm beats the baseline in most trials.
    let col = lines[0]
        .split(',')
        .position(|c| c == "alg_more_accurate")
        .unwrap();
    let wins: u32 = lines[1..5]
        .iter()
        .map(|l| l.split(',').nth(col).unwrap().parse::<u32>().unwrap())
        .sum();
    assert!(wins >= 3, "{wins}");
}

#[test]
fn bench_results_do_not_depend_on_worker_count() {
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_r1c"))
            .args([
                "bench", "--dims", "8,9,10", "--trials", "6", "--seed", "5", "--format", "json",
            ])
            .env("R1C_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        let mut v = json(&out);
        // Wall times differ between runs; everything else must not.
        for t in v["trials"].as_array_mut().unwrap() {
            t["metrics"]["runtime_seconds"] = Value::Null;
        }
        v["summary"]["runtime_seconds"] = Value::Null;
        v
    };
    assert_eq!(run("1"), run("3"));
    let bad = Command::new(env!("CARGO_BIN_EXE_r1c"))
        .args(["bench", "--dims", "3,3", "--trials", "1"])
        .env("R1C_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
