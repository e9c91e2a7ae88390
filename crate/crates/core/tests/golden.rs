//! Fixture files and golden degrees. Run with `UPDATE_GOLDEN=1` to rewrite
//! them from the catalog.

use std::fmt::Write;
use std::path::PathBuf;

use cbd::catalog::{fixtures, oracle_degree, RationalDegree, ORACLE_MAX_CELLS};
use cbd::cli::report::fixed;
use cbd::lp::contextuality_degree;
use cbd::system::{parse_system, serialize_system};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1")
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

fn golden_table() -> String {
    let mut out = String::new();
    out.push_str("# name  exact degree  decimal\n");
    out.push_str("# tsirelson uses 169/239 in place of 1/sqrt(2) in every correlation.\n");
    for f in fixtures().unwrap() {
        if f.system.measured_count() > ORACLE_MAX_CELLS {
            continue;
        }
        let d = oracle_degree(&f.system).unwrap();
        let _ = writeln!(out, "{}  {}  {}", f.name, d, fixed(d.to_f64()));
    }
    out
}

/// `(name, degree)` rows of the golden table.
fn read_golden() -> Vec<(String, RationalDegree)> {
    let text = std::fs::read_to_string(fixture_dir().join("golden.txt")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let parts: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(parts.len(), 3, "bad golden line `{l}`");
            let d = RationalDegree::parse(parts[1]).unwrap();
            assert_eq!(
                fixed(d.to_f64()),
                parts[2],
                "decimal disagrees with ratio in `{l}`"
            );
            (parts[0].to_string(), d)
        })
        .collect()
}

#[test]
fn fixture_files_match_catalog() {
    let dir = fixture_dir();
    if updating() {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for f in fixtures().unwrap() {
        let path = dir.join(format!("{}.json", f.name));
        let text = serialize_system(&f.system);
        if updating() {
            std::fs::write(&path, &text).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDEN=1", path.display()));
        assert_eq!(on_disk, text, "{} is stale", path.display());
        assert_eq!(parse_system(&on_disk).unwrap(), f.system);
    }
}

#[test]
fn golden_table_matches_oracle() {
    let path = fixture_dir().join("golden.txt");
    let table = golden_table();
    if updating() {
        std::fs::create_dir_all(fixture_dir()).unwrap();
        std::fs::write(&path, &table).unwrap();
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), table);
}

#[test]
fn float_degrees_match_golden() {
    for (name, golden) in read_golden() {
        let text = std::fs::read_to_string(fixture_dir().join(format!("{name}.json"))).unwrap();
        let s = parse_system(&text).unwrap();
        let d = contextuality_degree(&s).unwrap().degree;
        assert!(
            (d - golden.to_f64()).abs() <= 1e-7,
            "{name}: float {d} vs golden {golden}"
        );
    }
}

#[test]
fn pr_box_golden_is_positive() {
    let golden = read_golden();
    let (_, pr) = golden
        .iter()
        .find(|(n, _)| n == "pr-box")
        .expect("pr-box row");
    assert!(pr.to_f64() > 0.0);
}
