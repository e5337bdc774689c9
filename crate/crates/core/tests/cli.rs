//! End-to-end tests of the `sqcp` binary: exit-code contract over the
//! golden corpus, report determinism, and the --report flag.

use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/corpus")
        .join(name)
}

fn sqcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqcp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(file: &str, args: &[&str]) -> Output {
    let path = corpus(file);
    let mut full: Vec<&str> = vec![args[0], path.to_str().unwrap()];
    full.extend_from_slice(&args[1..]);
    sqcp(&full)
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn exit_code_contract_on_corpus() {
    let table: &[(&str, &[&str], i32)] = &[
        ("log_concave_pair.sqcp", &["check"], 0),
        ("one_exceptional_yes.sqcp", &["check"], 0),
        ("not_quasiconcave.sqcp", &["check"], 1),
        ("two_negative_factors.sqcp", &["check"], 1),
        ("gaussian_kernels.sqcp", &["check"], 0),
        (
            "exp_factor.sqcp",
            &["check", "--property", "log-concave"],
            0,
        ),
        ("malformed.sqcp", &["check"], 2),
        ("cobb_douglas_budget.sqcp", &["index"], 0),
        ("exp_factor.sqcp", &["index"], 0),
        ("cobb_douglas_budget.sqcp", &["solve"], 0),
        ("gaussian_kernels.sqcp", &["solve"], 0),
        ("kinked_budget.sqcp", &["solve"], 0),
        ("boundary_supremum.sqcp", &["solve"], 2),
        ("infeasible.sqcp", &["solve"], 2),
        (
            "cobb_douglas_symmetric.sqcp",
            &["verify", "--point", "1,1", "--lambda", "1"],
            0,
        ),
        (
            "cobb_douglas_symmetric.sqcp",
            &["verify", "--point", "1,1", "--lambda", "-1"],
            1,
        ),
        (
            "cobb_douglas_symmetric.sqcp",
            &["verify", "--point", "0.5,0.5", "--lambda", "1"],
            1,
        ),
    ];
    for (file, args, expected) in table {
        let out = run(file, args);
        assert_eq!(
            exit_code(&out),
            *expected,
            "{file} {args:?}: stdout = {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
}

#[test]
fn reports_carry_schema_version() {
    for (file, args) in [
        ("log_concave_pair.sqcp", vec!["check"]),
        ("cobb_douglas_budget.sqcp", vec!["index"]),
        ("malformed.sqcp", vec!["check"]),
    ] {
        let out = run(file, &args);
        let text = String::from_utf8_lossy(&out.stdout);
        let v: serde_json::Value = serde_json::from_str(&text).expect("JSON report");
        assert_eq!(v["schema_version"], 1, "{file}");
    }
}

#[test]
fn reports_are_deterministic_given_file_and_seed() {
    for (file, args) in [
        ("one_exceptional_yes.sqcp", vec!["check", "--seed", "11"]),
        ("cobb_douglas_budget.sqcp", vec!["index", "--seed", "11"]),
        ("cobb_douglas_budget.sqcp", vec!["solve", "--seed", "11"]),
        (
            "kinked_budget.sqcp",
            vec![
                "verify", "--point", "1,0.5", "--lambda", "1", "--seed", "11",
            ],
        ),
    ] {
        let a = run(file, &args);
        let b = run(file, &args);
        assert_eq!(a.stdout, b.stdout, "{file} {args:?}");
        assert_eq!(exit_code(&a), exit_code(&b));
    }
}

#[test]
fn report_flag_writes_stdout_copy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let file = corpus("log_concave_pair.sqcp");
    let out = sqcp(&[
        "check",
        file.to_str().unwrap(),
        "--report",
        path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        written.trim_end(),
        String::from_utf8_lossy(&out.stdout).trim_end()
    );
}

#[test]
fn malformed_file_reports_position() {
    let out = run("malformed.sqcp", &["check"]);
    assert_eq!(exit_code(&out), 2);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("offset") || text.contains("line"), "{text}");
}

#[test]
fn no_decision_comes_with_witness_pair() {
    let out = run("not_quasiconcave.sqcp", &["check"]);
    assert_eq!(exit_code(&out), 1);
    let v: serde_json::Value = serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert!(v["witness"]["x"].is_array(), "{v}");
    assert!(v["witness"]["y"].is_array(), "{v}");
}

#[test]
fn index_reports_exp_factor_as_log_concave_with_zero_index() {
    let out = run("exp_factor.sqcp", &["index"]);
    let v: serde_json::Value = serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let f = &v["factors"][0];
    assert_eq!(f["log_concave"], true, "{v}");
    let idx = f["index"].as_f64().unwrap();
    assert!(idx.abs() <= 5e-3, "{v}");
}

#[test]
fn solve_report_names_the_certification() {
    let out = run("cobb_douglas_budget.sqcp", &["solve"]);
    let v: serde_json::Value = serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(v["certification"], "global-constrained-smooth", "{v}");
    let out = run("kinked_budget.sqcp", &["solve"]);
    let v: serde_json::Value = serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(v["certification"], "global-constrained-nonsmooth", "{v}");
}
