//! Text and JSON renderings of analysis results.

use std::fmt::Write;

use serde::Serialize;

use crate::augment::InvarianceReport;
use crate::coupling::{verify_coupling, Coupling};
use crate::error::Result;
use crate::lp::ContextualityReport;
use crate::system::{ConnectionView, Outcome, System};

/// Decimal places of every rendered probability and degree.
pub const DIGITS: usize = 12;

pub fn fixed(x: f64) -> String {
    let s = format!("{x:.DIGITS$}");
    // Never print a negative zero.
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// `x` rounded to [`DIGITS`] decimals, for JSON output.
fn rounded(x: f64) -> f64 {
    fixed(x).parse().expect("formatted float")
}

fn tuple(outcome: &[Outcome]) -> String {
    let parts: Vec<String> = outcome.iter().map(|o| o.to_string()).collect();
    format!("({})", parts.join(", "))
}

fn values(outcome: &[Outcome]) -> Vec<i64> {
    outcome.iter().map(|o| o.value()).collect()
}

#[derive(Serialize)]
struct SystemIdentity<'a> {
    file: &'a str,
    contents: usize,
    contexts: usize,
    measured_cells: usize,
    empty_cells: usize,
}

#[derive(Serialize)]
struct MarginalEntry {
    context: String,
    p_plus: f64,
}

#[derive(Serialize)]
struct PmfEntry {
    outcome: Vec<i64>,
    p: f64,
}

#[derive(Serialize)]
struct ConnectionEntry {
    content: String,
    marginals: Vec<MarginalEntry>,
    coupling: Vec<PmfEntry>,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    system: SystemIdentity<'a>,
    consistent: bool,
    connections: Vec<ConnectionEntry>,
    min_total_variation: f64,
    degree: f64,
    contextual: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a str>,
}

fn connection_entry(view: &ConnectionView, coupling: &Coupling) -> ConnectionEntry {
    ConnectionEntry {
        content: view.content.to_string(),
        marginals: view
            .entries
            .iter()
            .map(|(c, p)| MarginalEntry {
                context: c.to_string(),
                p_plus: rounded(*p),
            })
            .collect(),
        coupling: coupling
            .support()
            .iter()
            .map(|(o, p)| PmfEntry {
                outcome: values(o),
                p: rounded(*p),
            })
            .collect(),
    }
}

fn identity<'a>(file: &'a str, system: &System) -> SystemIdentity<'a> {
    SystemIdentity {
        file,
        contents: system.contents().len(),
        contexts: system.contexts().len(),
        measured_cells: system.measured_count(),
        empty_cells: system.empty_cells().len(),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

/// Marginals and support of one coupling, indented by `pad`.
fn coupling_table(out: &mut String, view: &ConnectionView, coupling: &Coupling, pad: &str) {
    let width = view
        .entries
        .iter()
        .map(|(c, _)| c.as_str().len())
        .max()
        .unwrap_or(0)
        .max("context".len());
    let _ = writeln!(out, "{pad}{:<width$}  P[+1]", "context");
    for (c, p) in &view.entries {
        let _ = writeln!(out, "{pad}{:<width$}  {}", c.as_str(), fixed(*p));
    }
    let labels: Vec<&str> = coupling.contexts().iter().map(|c| c.as_str()).collect();
    let _ = writeln!(out, "{pad}coupling over ({})", labels.join(", "));
    let rows: Vec<(String, f64)> = coupling
        .support()
        .iter()
        .map(|(o, p)| (tuple(o), *p))
        .collect();
    let width = rows
        .iter()
        .map(|(t, _)| t.len())
        .max()
        .unwrap_or(0)
        .max("outcome".len());
    let _ = writeln!(out, "{pad}{:<width$}  p", "outcome");
    for (t, p) in rows {
        let _ = writeln!(out, "{pad}{t:<width$}  {}", fixed(p));
    }
}

pub fn analysis_table(
    file: &str,
    system: &System,
    report: &ContextualityReport,
    witness: Option<&str>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system      {file}");
    let _ = writeln!(out, "contents    {}", system.contents().len());
    let _ = writeln!(out, "contexts    {}", system.contexts().len());
    let _ = writeln!(
        out,
        "cells       {} measured, {} empty",
        system.measured_count(),
        system.empty_cells().len()
    );
    let _ = writeln!(out, "consistent  {}", report.consistent);
    for (view, coupling) in system.connections().iter().zip(&report.couplings) {
        let _ = writeln!(out);
        let _ = writeln!(out, "connection {}", view.content);
        coupling_table(&mut out, view, coupling, "  ");
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "min total variation  {}",
        fixed(report.min_total_variation)
    );
    let _ = writeln!(out, "degree               {}", fixed(report.degree));
    let _ = writeln!(out, "contextual           {}", report.contextual);
    if let Some(w) = witness {
        let _ = writeln!(out, "witness              {w}");
    }
    out
}

pub fn analysis_json(
    file: &str,
    system: &System,
    report: &ContextualityReport,
    witness: Option<&str>,
) -> String {
    let doc = ReportDocument {
        system: identity(file, system),
        consistent: report.consistent,
        connections: system
            .connections()
            .iter()
            .zip(&report.couplings)
            .map(|(v, c)| connection_entry(v, c))
            .collect(),
        min_total_variation: rounded(report.min_total_variation),
        degree: rounded(report.degree),
        contextual: report.contextual,
        witness,
    };
    to_json(&doc)
}

#[derive(Serialize)]
struct PairEntry {
    contexts: [String; 2],
    achieved: f64,
    bound: f64,
}

#[derive(Serialize)]
struct CouplingDocument {
    #[serde(flatten)]
    connection: ConnectionEntry,
    pairs: Vec<PairEntry>,
}

fn pair_entries(view: &ConnectionView, coupling: &Coupling) -> Result<Vec<PairEntry>> {
    let audit = verify_coupling(coupling, view)?;
    Ok(audit
        .pairs
        .iter()
        .map(|p| PairEntry {
            contexts: [
                coupling.contexts()[p.i].to_string(),
                coupling.contexts()[p.j].to_string(),
            ],
            achieved: p.achieved,
            bound: p.bound,
        })
        .collect())
}

pub fn coupling_text(view: &ConnectionView, coupling: &Coupling) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "content {}", view.content);
    coupling_table(&mut out, view, coupling, "");
    let pairs = pair_entries(view, coupling)?;
    if !pairs.is_empty() {
        let labels: Vec<String> = pairs
            .iter()
            .map(|p| format!("{}, {}", p.contexts[0], p.contexts[1]))
            .collect();
        let width = labels
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(0)
            .max("pair".len());
        let _ = writeln!(out, "pairwise maximality");
        let _ = writeln!(
            out,
            "{:<width$}  {:<14}  {:<14}  maximal",
            "pair", "P[equal]", "bound"
        );
        for (l, p) in labels.iter().zip(&pairs) {
            let ok = (p.achieved - p.bound).abs() <= 1e-12;
            let _ = writeln!(
                out,
                "{l:<width$}  {:<14}  {:<14}  {}",
                fixed(p.achieved),
                fixed(p.bound),
                if ok { "yes" } else { "no" }
            );
        }
    }
    Ok(out)
}

pub fn coupling_json(view: &ConnectionView, coupling: &Coupling) -> Result<String> {
    let mut pairs = pair_entries(view, coupling)?;
    for p in &mut pairs {
        p.achieved = rounded(p.achieved);
        p.bound = rounded(p.bound);
    }
    Ok(to_json(&CouplingDocument {
        connection: connection_entry(view, coupling),
        pairs,
    }))
}

#[derive(Serialize)]
struct InvarianceEntry {
    policy: String,
    degree_after: f64,
    delta: f64,
    pass: bool,
}

#[derive(Serialize)]
struct InvarianceDocument<'a> {
    system: SystemIdentity<'a>,
    degree_before: f64,
    rows: Vec<InvarianceEntry>,
    all_pass: bool,
}

pub fn invariance_table(file: &str, system: &System, report: &InvarianceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system         {file}");
    let _ = writeln!(out, "cells filled   {}", system.empty_cells().len());
    let _ = writeln!(out, "degree before  {}", fixed(report.degree_before));
    let labels: Vec<String> = report.rows.iter().map(|r| r.policy.to_string()).collect();
    let width = labels
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(0)
        .max("policy".len());
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<width$}  {:<14}  {:<9}  result",
        "policy", "degree after", "delta"
    );
    for (l, r) in labels.iter().zip(&report.rows) {
        let _ = writeln!(
            out,
            "{l:<width$}  {:<14}  {:<9.1e}  {}",
            fixed(r.degree_after),
            r.delta,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let _ = writeln!(out);
    let failed = report.rows.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        let _ = writeln!(out, "all {} policies pass", report.rows.len());
    } else {
        let _ = writeln!(out, "{failed} of {} policies fail", report.rows.len());
    }
    out
}

pub fn invariance_json(file: &str, system: &System, report: &InvarianceReport) -> String {
    to_json(&InvarianceDocument {
        system: identity(file, system),
        degree_before: rounded(report.degree_before),
        rows: report
            .rows
            .iter()
            .map(|r| InvarianceEntry {
                policy: r.policy.to_string(),
                degree_after: rounded(r.degree_after),
                delta: r.delta,
                pass: r.pass,
            })
            .collect(),
        all_pass: report.all_pass(),
    })
}
