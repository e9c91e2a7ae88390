//! JSON dump of a minimizing signed joint distribution.
//!
//! ```text
//! {"cells": [{"content": "q1", "context": "c1"}, ..],
//!  "masses": [{"outcome": [1, -1, ..], "q": -0.25}, ..],
//!  "total_variation": 1.5}
//! ```
//!
//! Outcomes list one value per cell in `cells` order; omitted outcomes
//! carry zero mass.

use std::fmt::Write;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lp::{
    build_constraints, couplings_of, JointOutcomeSpace, LpOptions, QuasiDistribution, EPS_LP,
};
use crate::system::{outcome_index, ContentId, ContextId, Outcome, System};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WitnessFile {
    cells: Vec<CellFile>,
    masses: Vec<MassFile>,
    total_variation: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFile {
    content: ContentId,
    context: ContextId,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MassFile {
    outcome: Vec<Outcome>,
    q: f64,
}

fn json(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

pub fn serialize_witness(q: &QuasiDistribution) -> String {
    let mut out = String::from("{\n  \"cells\": [");
    for (i, cell) in q.space.cells().iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(
            out,
            "    {{\"content\": {}, \"context\": {}}}",
            json(cell.content.as_str()),
            json(cell.context.as_str())
        );
    }
    out.push_str("\n  ],\n  \"masses\": [");
    for (i, (outcome, m)) in q.support().iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        let values: Vec<String> = outcome.iter().map(|o| o.value().to_string()).collect();
        let _ = write!(
            out,
            "    {{\"outcome\": [{}], \"q\": {}}}",
            values.join(", "),
            serde_json::to_string(m).expect("finite mass")
        );
    }
    let _ = write!(
        out,
        "\n  ],\n  \"total_variation\": {}\n}}\n",
        serde_json::to_string(&q.total_variation()).expect("finite total")
    );
    out
}

/// Reads a dump back over the joint space of `system`.
pub fn parse_witness(text: &str, system: &System) -> Result<QuasiDistribution> {
    let file: WitnessFile = serde_json::from_str(text).map_err(crate::system::file::json_error)?;
    let space = JointOutcomeSpace::of(system);
    let cells = space.cells();
    if file.cells.len() != cells.len()
        || file
            .cells
            .iter()
            .zip(cells)
            .any(|(a, b)| a.content != b.content || a.context != b.context)
    {
        return Err(Error::parse(
            "cells",
            "cells differ from the measured cells of the system",
        ));
    }
    let mut masses = vec![0.0; space.size()];
    for (i, m) in file.masses.iter().enumerate() {
        if m.outcome.len() != cells.len() {
            return Err(Error::parse(
                format!("masses[{i}].outcome"),
                format!("{} values for {} cells", m.outcome.len(), cells.len()),
            ));
        }
        masses[outcome_index(&m.outcome)] += m.q;
    }
    let q = QuasiDistribution { space, masses };
    let tv = q.total_variation();
    if (tv - file.total_variation).abs() > EPS_LP {
        return Err(Error::parse(
            "total_variation",
            format!("stated {} but masses sum to {tv}", file.total_variation),
        ));
    }
    Ok(q)
}

/// Largest constraint residual of `q` against the constraints of `system`.
pub fn witness_residual(system: &System, q: &QuasiDistribution) -> Result<f64> {
    let couplings = couplings_of(system)?;
    let constraints = build_constraints(
        system,
        &couplings,
        &LpOptions {
            max_cells: q.space.dimension(),
            ..LpOptions::default()
        },
    )?;
    Ok(constraints.max_residual(&q.masses))
}
