use std::path::PathBuf;
use std::process::{Command, Output};

use cbd::cli::witness::{parse_witness, witness_residual};
use cbd::lp::EPS_LP;
use cbd::system::parse_system;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/v1")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

fn cbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbd"))
        .args(args)
        .output()
        .expect("spawn cbd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1/golden.txt");
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| {
            let parts: Vec<&str> = l.split_whitespace().collect();
            (parts.first() == Some(&name)).then(|| parts[2].to_string())
        })
        .unwrap()
}

#[test]
fn analyze_pr_box_reports_golden_degree() {
    let o = cbd(&["analyze", &fixture("pr-box")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(
        out.contains(&format!("degree               {}\n", golden("pr-box"))),
        "{out}"
    );
    assert!(out.contains("contextual           true\n"));
}

#[test]
fn analyze_deterministic_is_zero() {
    let o = cbd(&["analyze", &fixture("deterministic")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("degree               0.000000000000\n"));
    assert!(stdout(&o).contains("contextual           false\n"));
}

#[test]
fn assert_noncontextual_exit_codes() {
    let o = cbd(&["analyze", &fixture("pr-box"), "--assert-noncontextual"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("contextual"));
    let o = cbd(&[
        "analyze",
        &fixture("paper-matrix-coins"),
        "--assert-noncontextual",
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn tolerance_moves_the_verdict() {
    let o = cbd(&[
        "analyze",
        &fixture("tsirelson"),
        "--tolerance",
        "0.2",
        "--assert-noncontextual",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("contextual           false\n"));
    let o = cbd(&["analyze", &fixture("tsirelson"), "--tolerance", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_error_exit_codes() {
    let o = cbd(&["analyze", &fixture("pr-box"), "--max-cells", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("capacity"));

    let o = cbd(&["analyze", "/nonexistent/system.json"]);
    assert_eq!(o.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"contents\": [}").unwrap();
    let o = cbd(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("parse error"));

    let o = cbd(&["analyze"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn witness_dump_reparses_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    let o = cbd(&[
        "analyze",
        &fixture("tsirelson"),
        "--witness",
        w.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let system = parse_system(&std::fs::read_to_string(fixture("tsirelson")).unwrap()).unwrap();
    let q = parse_witness(&std::fs::read_to_string(&w).unwrap(), &system).unwrap();
    assert!(witness_residual(&system, &q).unwrap() <= EPS_LP);
    assert!(
        (q.total_variation() - 1.0 - golden("tsirelson").parse::<f64>().unwrap()).abs() <= 1e-7
    );
}

#[test]
fn json_report_mirrors_table() {
    let o = cbd(&["analyze", &fixture("pr-box"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["contextual"], true);
    assert_eq!(v["system"]["measured_cells"], 8);
    assert_eq!(v["connections"].as_array().unwrap().len(), 4);
    let d = v["degree"].as_f64().unwrap();
    assert!((d - golden("pr-box").parse::<f64>().unwrap()).abs() <= 1e-12);
}

#[test]
fn augment_paper_matrix_fills_four_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("aug.json");
    let o = cbd(&[
        "augment",
        &fixture("paper-matrix"),
        "--fill",
        "+1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "cells filled: 4\n");
    let s = parse_system(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(s.empty_cells().is_empty());
    assert_eq!(s.measured_count(), 12);
}

#[test]
fn augment_full_system_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.json");
    let o = cbd(&[
        "augment",
        &fixture("paper-matrix"),
        "--fill",
        "-1",
        "--out",
        full.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = cbd(&["augment", full.to_str().unwrap(), "--fill", "+1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stderr(&o), "cells filled: 0\n");
    assert_eq!(stdout(&o), std::fs::read_to_string(&full).unwrap());
}

#[test]
fn per_cell_map_must_match_empty_cells() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.json");
    // q1 is measured in c1.
    std::fs::write(
        &map,
        r#"{"fills": [{"content": "q1", "context": "c1", "value": 1}]}"#,
    )
    .unwrap();
    let o = cbd(&[
        "augment",
        &fixture("paper-matrix"),
        "--per-cell",
        map.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not empty"), "{}", stderr(&o));

    std::fs::write(
        &map,
        r#"{"fills": [
            {"content": "q3", "context": "c1", "value": 1},
            {"content": "q3", "context": "c2", "value": -1},
            {"content": "q2", "context": "c3", "value": -1},
            {"content": "q1", "context": "c4", "value": 1}]}"#,
    )
    .unwrap();
    let o = cbd(&[
        "augment",
        &fixture("paper-matrix"),
        "--per-cell",
        map.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stderr(&o), "cells filled: 4\n");
}

#[test]
fn augment_requires_a_policy() {
    let o = cbd(&["augment", &fixture("paper-matrix")]);
    assert_eq!(o.status.code(), Some(1));
    let o = cbd(&["augment", &fixture("paper-matrix"), "--fill", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn couple_shows_table_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    // q1 has P[+1] = 0.2, 0.5, 0.9 in c1, c2, c3.
    std::fs::write(
        &path,
        r#"{"contents": ["q1"], "contexts": ["c1", "c2", "c3"], "bunches": [
            {"context": "c1", "contents": ["q1"], "pmf": [{"outcome": [1], "p": 0.2}, {"outcome": [-1], "p": 0.8}]},
            {"context": "c2", "contents": ["q1"], "pmf": [{"outcome": [1], "p": 0.5}, {"outcome": [-1], "p": 0.5}]},
            {"context": "c3", "contents": ["q1"], "pmf": [{"outcome": [1], "p": 0.9}, {"outcome": [-1], "p": 0.1}]}]}"#,
    )
    .unwrap();
    let o = cbd(&["couple", path.to_str().unwrap(), "--content", "q1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for row in [
        "(+1, +1, +1)  0.200000000000",
        "(-1, +1, +1)  0.300000000000",
        "(-1, -1, +1)  0.400000000000",
        "(-1, -1, -1)  0.100000000000",
    ] {
        assert!(out.contains(row), "missing `{row}` in\n{out}");
    }
    assert_eq!(out.matches("(").count() - 1, 4, "{out}");
    assert!(!out.contains(" no\n"));

    let o = cbd(&["couple", path.to_str().unwrap(), "--content", "q9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown content"));
}

#[test]
fn couple_single_context_and_dummy_content() {
    let o = cbd(&["couple", &fixture("pr-box-extended"), "--content", "q3"]);
    assert_eq!(o.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let aug = dir.path().join("aug.json");
    let single = dir.path().join("single.json");
    std::fs::write(
        &single,
        r#"{"contents": ["q1", "q2"], "contexts": ["c1", "c2"], "bunches": [
            {"context": "c1", "contents": ["q1", "q2"], "pmf": [{"outcome": [1, 1], "p": 0.5}, {"outcome": [-1, -1], "p": 0.5}]},
            {"context": "c2", "contents": ["q1"], "pmf": [{"outcome": [1], "p": 0.5}, {"outcome": [-1], "p": 0.5}]}]}"#,
    )
    .unwrap();
    let o = cbd(&["couple", single.to_str().unwrap(), "--content", "q2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with('(')).collect();
    assert_eq!(rows.len(), 2, "{out}");
    assert!(rows.iter().all(|r| r.ends_with("0.500000000000")), "{out}");

    cbd(&[
        "augment",
        single.to_str().unwrap(),
        "--fill",
        "-1",
        "--out",
        aug.to_str().unwrap(),
    ]);
    let o = cbd(&["couple", aug.to_str().unwrap(), "--content", "q2"]);
    let out = stdout(&o);
    // The filled cell is constantly -1.
    assert!(out.contains("c2       0.000000000000"), "{out}");
    assert!(out.contains("(+1, -1)  0.500000000000"), "{out}");
}

#[test]
fn invariance_on_coins_passes() {
    let o = cbd(&[
        "invariance",
        &fixture("paper-matrix-coins"),
        "--fills",
        "both",
        "--trials",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("all 2 policies pass"));
}

#[test]
fn invariance_on_extended_pr_box_passes() {
    let o = cbd(&[
        "invariance",
        &fixture("pr-box-extended"),
        "--trials",
        "20",
        "--seed",
        "7",
        "--jobs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("all 22 policies pass"));
}

#[test]
fn invariance_capacity_after_augmentation() {
    // 8 measured cells fit, the 12 of the filled system do not.
    let o = cbd(&["invariance", &fixture("paper-matrix"), "--max-cells", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_pr_box_matches_fixture() {
    let o = cbd(&["generate", "cyclic", "--n", "4", "--preset", "pr-box"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(fixture("pr-box")).unwrap()
    );
    let o = cbd(&["generate", "paper-matrix"]);
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(fixture("paper-matrix")).unwrap()
    );
    let o = cbd(&[
        "generate",
        "random",
        "--seed",
        "0",
        "--pattern",
        "paper-matrix",
    ]);
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(fixture("random-paper-matrix-s0")).unwrap()
    );
}

#[test]
fn generate_rejects_bad_specs() {
    let o = cbd(&["generate", "cyclic", "--n", "1", "--preset", "pr-box"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cbd(&["generate", "cyclic", "--n", "3", "--correlations", "1,1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cbd(&[
        "generate",
        "cyclic",
        "--n",
        "2",
        "--correlations",
        "1,1",
        "--marginals",
        "0.9,0.1,0.5,0.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = cbd(&[
        "generate",
        "random",
        "--seed",
        "1",
        "--pattern",
        "random",
        "--empty",
        "9",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_writes_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = cbd(&[
        "generate",
        "cyclic",
        "--n",
        "4",
        "--preset",
        "tsirelson",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        std::fs::read_to_string(fixture("tsirelson")).unwrap()
    );
}

#[test]
fn help_lists_subcommands() {
    let o = cbd(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for cmd in ["analyze", "augment", "couple", "invariance", "generate"] {
        assert!(out.contains(cmd), "{out}");
    }
}
