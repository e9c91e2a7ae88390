//! JSON text format for systems.
//!
//! ```text
//! {"contents": [..], "contexts": [..],
//!  "bunches": [{"context": c, "contents": [..], "pmf": [{"outcome": [1, -1], "p": 0.25}, ..]}]}
//! ```
//!
//! Omitted outcomes have mass zero. Serialization is canonical: bunches in
//! context order, contents in system order, outcomes in index order, zero
//! masses omitted, numbers in shortest round-trip form.

use std::collections::HashSet;
use std::fmt::Write;

use serde::Deserialize;

use super::{outcome_index, outcome_vector, Bunch, ContentId, ContextId, Outcome, System};
use crate::error::{Error, Result};

/// Largest bunch arity accepted from text.
const MAX_BUNCH_ARITY: usize = 24;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    contents: Vec<ContentId>,
    contexts: Vec<ContextId>,
    bunches: Vec<BunchFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BunchFile {
    context: ContextId,
    contents: Vec<ContentId>,
    pmf: Vec<PmfEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PmfEntry {
    outcome: Vec<Outcome>,
    p: f64,
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    Error::parse(
        format!("line {}, column {}", e.line(), e.column()),
        e.to_string(),
    )
}

pub fn parse_system(text: &str) -> Result<System> {
    let file: SystemFile = serde_json::from_str(text).map_err(json_error)?;
    let mut bunches = Vec::with_capacity(file.bunches.len());
    for (bi, b) in file.bunches.into_iter().enumerate() {
        let k = b.contents.len();
        if k > MAX_BUNCH_ARITY {
            return Err(Error::parse(
                format!("bunches[{bi}].contents"),
                format!("bunch arity {k} exceeds {MAX_BUNCH_ARITY}"),
            ));
        }
        let mut pmf = vec![0.0; 1 << k];
        let mut seen = HashSet::new();
        for (ei, entry) in b.pmf.iter().enumerate() {
            if entry.outcome.len() != k {
                return Err(Error::parse(
                    format!("bunches[{bi}].pmf[{ei}].outcome"),
                    format!(
                        "outcome has {} values, bunch `{}` has {k} contents",
                        entry.outcome.len(),
                        b.context
                    ),
                ));
            }
            let idx = outcome_index(&entry.outcome);
            if !seen.insert(idx) {
                return Err(Error::parse(
                    format!("bunches[{bi}].pmf[{ei}].outcome"),
                    "outcome listed twice",
                ));
            }
            pmf[idx] = entry.p;
        }
        bunches.push(Bunch::new(b.context, b.contents, pmf)?);
    }
    System::new(file.contents, file.contexts, bunches)
}

pub(crate) fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub(crate) fn json_num(x: f64) -> String {
    serde_json::to_string(&x).expect("finite numbers serialize")
}

fn label_list<'a>(labels: impl Iterator<Item = &'a str>) -> String {
    let parts: Vec<String> = labels.map(json_str).collect();
    format!("[{}]", parts.join(", "))
}

pub(crate) fn outcome_list(outcome: &[Outcome]) -> String {
    let parts: Vec<String> = outcome.iter().map(|o| o.value().to_string()).collect();
    format!("[{}]", parts.join(", "))
}

pub fn serialize_system(system: &System) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(
        out,
        "  \"contents\": {},",
        label_list(system.contents.iter().map(ContentId::as_str))
    );
    let _ = writeln!(
        out,
        "  \"contexts\": {},",
        label_list(system.contexts.iter().map(ContextId::as_str))
    );
    out.push_str("  \"bunches\": [");
    for (bi, b) in system.bunches.iter().enumerate() {
        out.push_str(if bi == 0 { "\n" } else { ",\n" });
        out.push_str("    {\n");
        let _ = writeln!(out, "      \"context\": {},", json_str(b.context.as_str()));
        let _ = writeln!(
            out,
            "      \"contents\": {},",
            label_list(b.contents.iter().map(ContentId::as_str))
        );
        out.push_str("      \"pmf\": [");
        let mut first = true;
        for (idx, &p) in b.pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            out.push_str(if first { "\n" } else { ",\n" });
            first = false;
            let _ = write!(
                out,
                "        {{\"outcome\": {}, \"p\": {}}}",
                outcome_list(&outcome_vector(idx, b.arity())),
                json_num(p)
            );
        }
        out.push_str(if first { "]\n" } else { "\n      ]\n" });
        out.push_str("    }");
    }
    out.push_str(if system.bunches.is_empty() {
        "]\n"
    } else {
        "\n  ]\n"
    });
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PR_BOX: &str = r#"{
  "contents": ["q1", "q2", "q3", "q4"],
  "contexts": ["c1", "c2", "c3", "c4"],
  "bunches": [
    {"context": "c1", "contents": ["q1", "q2"], "pmf": [
      {"outcome": [1, 1], "p": 0.5}, {"outcome": [-1, -1], "p": 0.5}]},
    {"context": "c2", "contents": ["q2", "q3"], "pmf": [
      {"outcome": [1, 1], "p": 0.5}, {"outcome": [-1, -1], "p": 0.5}]},
    {"context": "c3", "contents": ["q3", "q4"], "pmf": [
      {"outcome": [1, 1], "p": 0.5}, {"outcome": [-1, -1], "p": 0.5}]},
    {"context": "c4", "contents": ["q4", "q1"], "pmf": [
      {"outcome": [1, -1], "p": 0.5}, {"outcome": [-1, 1], "p": 0.5}]}
  ]
}"#;

    #[test]
    fn pr_box_round_trip() {
        let s = parse_system(PR_BOX).unwrap();
        let text = serialize_system(&s);
        let back = parse_system(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(serialize_system(&back), text);
        // c4 is stored in content order (q1, q4)
        assert_eq!(
            s.bunches()[3].contents(),
            &[ContentId::from("q1"), ContentId::from("q4")]
        );
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let text = PR_BOX.replacen("\"contexts\"", "\"colour\": 3, \"contexts\"", 1);
        match parse_system(&text) {
            Err(Error::Parse { locus, message }) => {
                assert!(locus.starts_with("line 3"), "{locus}");
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn negative_mass_is_a_validation_error() {
        let text = PR_BOX.replacen(
            r#"{"outcome": [1, 1], "p": 0.5}, {"outcome": [-1, -1], "p": 0.5}]},"#,
            r#"{"outcome": [1, 1], "p": -0.1}, {"outcome": [-1, -1], "p": 1.1}]},"#,
            1,
        );
        assert!(matches!(parse_system(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn non_binary_values_are_rejected() {
        let text = PR_BOX.replacen("[1, 1], \"p\": 0.5", "[1, 2], \"p\": 0.5", 1);
        match parse_system(&text) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("+1 or -1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn arity_and_duplicates() {
        let text = PR_BOX.replacen("[1, 1], \"p\": 0.5", "[1], \"p\": 0.5", 1);
        match parse_system(&text) {
            Err(Error::Parse { locus, .. }) => assert_eq!(locus, "bunches[0].pmf[0].outcome"),
            other => panic!("{other:?}"),
        }
        let text = PR_BOX.replacen("[-1, -1], \"p\": 0.5", "[1, 1], \"p\": 0.5", 1);
        assert!(matches!(parse_system(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(
            parse_system("{\"contents\": ["),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn masses_round_trip_bit_exactly() {
        let a = 102.0 / 239.0;
        let b = 0.5 - a;
        let s = parse_system(PR_BOX).unwrap();
        let pmf = vec![a, b, b, a];
        let bunch = Bunch::new(
            s.contexts[0].clone(),
            s.bunches[0].contents.clone(),
            pmf.clone(),
        )
        .unwrap();
        let mut bunches = s.bunches.clone();
        bunches[0] = bunch;
        let s = System::new(s.contents.clone(), s.contexts.clone(), bunches).unwrap();
        let back = parse_system(&serialize_system(&s)).unwrap();
        assert_eq!(back.bunches[0].pmf, pmf);
    }
}
