//! Exact minimum total variation, with self-checking certificates.
//!
//! Builds the full (unpresolved) constraint matrix in rational arithmetic
//! and solves it with [`super::exact`]. The result carries a primal witness
//! and a dual vector `y`; [`verify_certificate`] recomputes every constraint
//! and the weak-duality bound `b.y <= sum|q|` from scratch.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::exact::{ExactLp, ExactOutcome};
use crate::coupling::nested_pmf;
use crate::error::{Error, Result};
use crate::system::System;

type Q = BigRational;

/// Largest system the oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 10;
/// Masses must be ratios with denominators up to this bound.
pub const MAX_DENOMINATOR: u64 = 1 << 26;

/// An exact degree of contextuality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RationalDegree(Q);

impl RationalDegree {
    pub fn new(value: Q) -> Result<Self> {
        if value.is_negative() {
            return Err(Error::domain(format!("negative degree {value}")));
        }
        Ok(RationalDegree(value))
    }

    pub fn value(&self) -> &Q {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `p/q` or an integer.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let value = match text.split_once('/') {
            Some((n, d)) => {
                let d: BigInt = d.trim().parse().ok()?;
                if d.is_zero() {
                    return None;
                }
                Q::new(n.trim().parse().ok()?, d)
            }
            None => Q::from_integer(text.parse().ok()?),
        };
        RationalDegree::new(value).ok()
    }
}

impl fmt::Display for RationalDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

/// The simplest ratio `p/q` with `q <= MAX_DENOMINATOR` whose nearest double
/// is exactly `x`, if any.
pub fn rational_from_f64(x: f64) -> Option<Q> {
    if !x.is_finite() {
        return None;
    }
    let exact = Q::from_float(x)?;
    // Walk the continued-fraction convergents of the exact binary value.
    let (mut num, mut den) = (exact.numer().clone(), exact.denom().clone());
    let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    let limit = BigInt::from(MAX_DENOMINATOR);
    while !den.is_zero() {
        let (a, r) = num.div_mod_floor(&den);
        let p2 = &a * &p1 + &p0;
        let q2 = &a * &q1 + &q0;
        if q2 > limit {
            return None;
        }
        let candidate = p2.to_f64()? / q2.to_f64()?;
        if candidate == x {
            return Some(Q::new(p2, q2));
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        (num, den) = (den, r);
    }
    None
}

/// Bunch pmfs as exact rationals, each summing to exactly one.
pub fn rational_pmfs(system: &System) -> Result<Vec<Vec<Q>>> {
    system
        .bunches()
        .iter()
        .map(|b| {
            let pmf: Vec<Q> = b
                .pmf()
                .iter()
                .map(|&p| {
                    rational_from_f64(p).ok_or_else(|| {
                        Error::domain(format!(
                            "mass {p} in bunch `{}` is not a ratio with denominator <= {MAX_DENOMINATOR}; \
                             replace it with a rational approximation",
                            b.context()
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let total: Q = pmf.iter().cloned().sum();
            if !total.is_one() {
                return Err(Error::domain(format!(
                    "bunch `{}` sums to {total} in exact arithmetic",
                    b.context()
                )));
            }
            Ok(pmf)
        })
        .collect()
}

/// Exact marginal problem: row groups and their targets.
#[derive(Debug, Clone)]
struct ExactConstraints {
    n_cells: usize,
    /// Per group, cell positions (most significant coordinate first).
    scopes: Vec<Vec<usize>>,
    targets: Vec<Vec<Q>>,
}

impl ExactConstraints {
    fn of(system: &System) -> Result<Self> {
        let cells = system.measured_cells();
        let n_cells = cells.len();
        if n_cells > ORACLE_MAX_CELLS {
            return Err(Error::Capacity {
                cells: n_cells,
                limit: ORACLE_MAX_CELLS,
            });
        }
        let pos = |q: &crate::system::ContentId, c: &crate::system::ContextId| {
            cells
                .iter()
                .position(|x| &x.content == q && &x.context == c)
                .expect("measured cell")
        };
        let pmfs = rational_pmfs(system)?;
        let mut scopes = Vec::new();
        let mut targets = Vec::new();
        for (b, pmf) in system.bunches().iter().zip(&pmfs) {
            scopes.push(b.contents().iter().map(|q| pos(q, b.context())).collect());
            targets.push(pmf.clone());
        }
        for q in system.contents() {
            let mut scope = Vec::new();
            let mut marginals = Vec::new();
            for (b, pmf) in system.bunches().iter().zip(&pmfs) {
                if let Some(i) = b.position(q) {
                    let shift = b.arity() - 1 - i;
                    let p: Q = pmf
                        .iter()
                        .enumerate()
                        .filter(|(idx, _)| (idx >> shift) & 1 == 0)
                        .map(|(_, p)| p.clone())
                        .sum();
                    scope.push(pos(q, b.context()));
                    marginals.push(p);
                }
            }
            targets.push(nested_pmf(&marginals)?);
            scopes.push(scope);
        }
        Ok(ExactConstraints {
            n_cells,
            scopes,
            targets,
        })
    }

    /// Local index of joint outcome `s` within `scope`.
    fn local(&self, scope: &[usize], s: usize) -> usize {
        scope
            .iter()
            .fold(0, |a, &c| (a << 1) | ((s >> (self.n_cells - 1 - c)) & 1))
    }

    /// Full row indices hit by outcome `s`.
    fn rows_of(&self, s: usize) -> Vec<usize> {
        let mut offset = 0;
        let mut rows = Vec::with_capacity(self.scopes.len());
        for scope in &self.scopes {
            rows.push(offset + self.local(scope, s));
            offset += 1 << scope.len();
        }
        rows
    }

    fn flat_targets(&self) -> Vec<Q> {
        self.targets.iter().flatten().cloned().collect()
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub degree: RationalDegree,
    pub min_total_variation: Q,
    /// Signed mass per joint outcome.
    pub witness: Vec<Q>,
    /// One dual per constraint row (bunch groups, then connection groups).
    pub dual: Vec<Q>,
}

/// Exact `min V - 1` via rational simplex.
pub fn oracle_degree(system: &System) -> Result<RationalDegree> {
    Ok(oracle_solve(system)?.degree)
}

pub fn oracle_solve(system: &System) -> Result<OracleResult> {
    let ec = ExactConstraints::of(system)?;
    let rhs = ec.flat_targets();
    let mut lp = ExactLp::new(rhs.len(), rhs);
    let n_outcomes = 1usize << ec.n_cells;
    for s in 0..n_outcomes {
        let rows = ec.rows_of(s);
        lp.add_column(Q::one(), rows.iter().map(|&r| (r, Q::one())).collect());
        lp.add_column(Q::one(), rows.iter().map(|&r| (r, -Q::one())).collect());
    }
    match lp.solve() {
        ExactOutcome::Optimal { x, y, value } => {
            let witness = (0..n_outcomes).map(|s| &x[2 * s] - &x[2 * s + 1]).collect();
            Ok(OracleResult {
                degree: RationalDegree::new(&value - Q::one())?,
                min_total_variation: value,
                witness,
                dual: y,
            })
        }
        ExactOutcome::Infeasible => Err(Error::Numerical {
            message: "exact marginal constraints are inconsistent".into(),
            best_bound: f64::NAN,
        }),
        ExactOutcome::Unbounded => Err(Error::Numerical {
            message: "exact program unbounded".into(),
            best_bound: f64::NEG_INFINITY,
        }),
    }
}

/// Re-derives the constraints of `system` and checks, in exact arithmetic:
/// the witness meets every constraint; `|y.A_s| <= 1` for every outcome;
/// `b.y` equals the witness's total variation, which equals
/// `degree + 1`.
pub fn verify_certificate(
    system: &System,
    result: &OracleResult,
) -> std::result::Result<(), String> {
    let ec = ExactConstraints::of(system).map_err(|e| e.to_string())?;
    let n_outcomes = 1usize << ec.n_cells;
    if result.witness.len() != n_outcomes {
        return Err(format!(
            "witness has {} masses, expected {n_outcomes}",
            result.witness.len()
        ));
    }
    let targets = ec.flat_targets();
    if result.dual.len() != targets.len() {
        return Err("dual has the wrong length".into());
    }

    // Primal: recompute each marginal by direct summation.
    for (g, scope) in ec.scopes.iter().enumerate() {
        let mut acc = vec![Q::zero(); 1 << scope.len()];
        for (s, q) in result.witness.iter().enumerate() {
            if !q.is_zero() {
                acc[ec.local(scope, s)] += q;
            }
        }
        if acc != ec.targets[g] {
            return Err(format!("witness violates constraint group {g}"));
        }
    }
    let tv: Q = result.witness.iter().map(|q| q.abs()).sum();
    if tv != result.min_total_variation {
        return Err(format!(
            "witness total variation {tv} differs from reported {}",
            result.min_total_variation
        ));
    }

    // Dual: |y.A_s| <= 1 makes b.y a lower bound on sum|q| for every
    // feasible q.
    for s in 0..n_outcomes {
        let dot: Q = ec.rows_of(s).iter().map(|&r| result.dual[r].clone()).sum();
        if dot.abs() > Q::one() {
            return Err(format!(
                "dual infeasible at outcome {s}: |y.A| = {}",
                dot.abs()
            ));
        }
    }
    let bound: Q = targets.iter().zip(&result.dual).map(|(b, y)| b * y).sum();
    if bound != tv {
        return Err(format!("dual bound {bound} differs from primal value {tv}"));
    }
    if result.degree.value() != &(tv - Q::one()) {
        return Err("degree is not min V - 1".into());
    }
    Ok(())
}
