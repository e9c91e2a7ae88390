//! Filling empty cells with deterministic variables.
//!
//! An empty cell `(q, c)` becomes a measured cell whose variable always takes
//! the fill value. The degree of contextuality is unchanged: every signed
//! joint distribution of the original cells extends, by the fixed values, to
//! one of the augmented cells with the same total variation
//! ([`bijection_map`]), and conversely.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp::{contextuality_degree_with, JointOutcomeSpace, LpOptions, QuasiDistribution};
use crate::system::{Bunch, ContentId, ContextId, Outcome, System, EPS_MASS};

/// Largest `|degree after - degree before|` counted as a pass.
pub const INVARIANCE_TOLERANCE: f64 = 1e-7;

/// How empty cells are filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FillPolicy {
    Uniform(Outcome),
    /// Must cover exactly the empty cells of the system it is applied to.
    PerCell(BTreeMap<(ContentId, ContextId), Outcome>),
}

impl FillPolicy {
    /// A per-cell policy with independent fair-coin fills, seeded.
    pub fn random(system: &System, seed: u64) -> FillPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FillPolicy::PerCell(
            system
                .empty_cells()
                .into_iter()
                .map(|cell| {
                    let v = if rng.gen_bool(0.5) {
                        Outcome::Minus
                    } else {
                        Outcome::Plus
                    };
                    ((cell.content, cell.context), v)
                })
                .collect(),
        )
    }

    fn fill(&self, content: &ContentId, context: &ContextId) -> Outcome {
        match self {
            FillPolicy::Uniform(v) => *v,
            FillPolicy::PerCell(map) => map[&(content.clone(), context.clone())],
        }
    }
}

impl fmt::Display for FillPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FillPolicy::Uniform(v) => write!(f, "uniform {v}"),
            FillPolicy::PerCell(map) => {
                write!(f, "per-cell {{")?;
                for (i, ((q, c), v)) in map.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{q}@{c}={v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

fn check_policy(system: &System, policy: &FillPolicy) -> Result<()> {
    let FillPolicy::PerCell(map) = policy else {
        return Ok(());
    };
    let empty: BTreeSet<(ContentId, ContextId)> = system
        .empty_cells()
        .into_iter()
        .map(|c| (c.content, c.context))
        .collect();
    let given: BTreeSet<_> = map.keys().cloned().collect();
    let missing: Vec<String> = empty
        .difference(&given)
        .map(|(q, c)| format!("({q}, {c})"))
        .collect();
    let extra: Vec<String> = given
        .difference(&empty)
        .map(|(q, c)| {
            let what = if system.content_index(q).is_none() || system.context_index(c).is_none() {
                "unknown"
            } else {
                "measured"
            };
            format!("({q}, {c}) [{what}]")
        })
        .collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing empty cells {}", missing.join(", ")));
    }
    if !extra.is_empty() {
        parts.push(format!(
            "lists cells that are not empty {}",
            extra.join(", ")
        ));
    }
    Err(Error::domain(format!("fill map {}", parts.join("; "))))
}

/// Fills every empty cell of `system` according to `policy`.
pub fn augment(system: &System, policy: &FillPolicy) -> Result<System> {
    check_policy(system, policy)?;
    if system.empty_cells().is_empty() {
        return Ok(system.clone());
    }
    let mut bunches = Vec::with_capacity(system.bunches().len());
    for b in system.bunches() {
        let ctx = b.context();
        let contents: Vec<ContentId> = system.contents().to_vec();
        // Source coordinate per new coordinate, or the fill value.
        let sources: Vec<std::result::Result<usize, Outcome>> = contents
            .iter()
            .map(|q| b.position(q).ok_or_else(|| policy.fill(q, ctx)))
            .collect();
        let k = contents.len();
        let old_k = b.arity();
        let mut pmf = vec![0.0; 1 << k];
        for (old_idx, &p) in b.pmf().iter().enumerate() {
            let mut idx = 0;
            for src in &sources {
                let bit = match src {
                    Ok(i) => (old_idx >> (old_k - 1 - i)) & 1,
                    Err(v) => v.bit(),
                };
                idx = (idx << 1) | bit;
            }
            pmf[idx] = p;
        }
        bunches.push(Bunch::new(ctx.clone(), contents, pmf)?);
    }
    System::new(
        system.contents().to_vec(),
        system.contexts().to_vec(),
        bunches,
    )
}

/// Number of cells `augment` fills.
pub fn cells_filled(system: &System) -> usize {
    system.empty_cells().len()
}

#[derive(Debug, Clone)]
pub struct InvarianceRow {
    pub policy: FillPolicy,
    pub degree_after: f64,
    pub delta: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub degree_before: f64,
    pub rows: Vec<InvarianceRow>,
}

impl InvarianceReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Compares the degree of `system` with that of each augmentation.
pub fn check_invariance(
    system: &System,
    policies: &[FillPolicy],
    options: &LpOptions,
) -> Result<InvarianceReport> {
    let before = contextuality_degree_with(system, options)?.degree;
    let rows = policies
        .iter()
        .map(|policy| invariance_row(system, before, policy, options))
        .collect::<Result<_>>()?;
    Ok(InvarianceReport {
        degree_before: before,
        rows,
    })
}

/// One row of [`check_invariance`], given the degree of the original.
pub fn invariance_row(
    system: &System,
    degree_before: f64,
    policy: &FillPolicy,
    options: &LpOptions,
) -> Result<InvarianceRow> {
    let augmented = augment(system, policy)?;
    let after = contextuality_degree_with(&augmented, options)?.degree;
    let delta = (after - degree_before).abs();
    Ok(InvarianceRow {
        policy: policy.clone(),
        degree_after: after,
        delta,
        pass: delta <= INVARIANCE_TOLERANCE,
    })
}

/// For each augmented cell, the original cell it copies or its fixed value.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSource {
    Original(usize),
    Fixed(Outcome),
}

/// Injection of the original joint outcome space into the augmented one.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeEmbedding {
    pub original: JointOutcomeSpace,
    pub augmented: JointOutcomeSpace,
    pub sources: Vec<CellSource>,
}

impl OutcomeEmbedding {
    /// Augmented index of original outcome `s`.
    pub fn map(&self, s: usize) -> usize {
        let n = self.original.dimension();
        self.sources.iter().fold(0, |idx, src| {
            let bit = match src {
                CellSource::Original(i) => (s >> (n - 1 - i)) & 1,
                CellSource::Fixed(v) => v.bit(),
            };
            (idx << 1) | bit
        })
    }

    pub fn push_forward(&self, q: &QuasiDistribution) -> Result<QuasiDistribution> {
        if q.space != self.original {
            return Err(Error::domain("distribution is not over the original space"));
        }
        let mut masses = vec![0.0; self.augmented.size()];
        for (s, &m) in q.masses.iter().enumerate() {
            masses[self.map(s)] = m;
        }
        Ok(QuasiDistribution {
            space: self.augmented.clone(),
            masses,
        })
    }
}

/// Recovers the correspondence between `system` and an augmentation of it.
pub fn bijection_map(system: &System, augmented: &System) -> Result<OutcomeEmbedding> {
    if system.contents() != augmented.contents() || system.contexts() != augmented.contexts() {
        return Err(Error::domain("systems have different contents or contexts"));
    }
    let original = JointOutcomeSpace::of(system);
    let target = JointOutcomeSpace::of(augmented);
    let mut sources = Vec::with_capacity(target.dimension());
    for cell in target.cells() {
        if let Some(i) = original.position(&cell.content, &cell.context) {
            sources.push(CellSource::Original(i));
            continue;
        }
        let b = augmented.bunch(&cell.context).expect("measured cell");
        let p = b.marginal_plus(b.position(&cell.content).expect("measured cell"));
        let fixed = if (p - 1.0).abs() <= EPS_MASS {
            Outcome::Plus
        } else if p.abs() <= EPS_MASS {
            Outcome::Minus
        } else {
            return Err(Error::domain(format!(
                "cell ({}, {}) is new but not deterministic",
                cell.content, cell.context
            )));
        };
        sources.push(CellSource::Fixed(fixed));
    }
    if original
        .cells()
        .iter()
        .any(|c| target.position(&c.content, &c.context).is_none())
    {
        return Err(Error::domain("augmentation drops a measured cell"));
    }
    // The original bunches must be the marginals of the augmented ones.
    for (b, a) in system.bunches().iter().zip(augmented.bunches()) {
        let positions: Vec<usize> = b
            .contents()
            .iter()
            .map(|q| a.position(q).expect("checked above"))
            .collect();
        let mut marginal = vec![0.0; b.pmf().len()];
        for (idx, &p) in a.pmf().iter().enumerate() {
            let local = positions
                .iter()
                .fold(0, |l, &i| (l << 1) | ((idx >> (a.arity() - 1 - i)) & 1));
            marginal[local] += p;
        }
        if marginal
            .iter()
            .zip(b.pmf())
            .any(|(x, y)| (x - y).abs() > EPS_MASS)
        {
            return Err(Error::domain(format!(
                "bunch `{}` does not restrict to the original",
                b.context()
            )));
        }
    }
    Ok(OutcomeEmbedding {
        original,
        augmented: target,
        sources,
    })
}
