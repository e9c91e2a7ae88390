//! The quasi-probability program and the degree of contextuality.
//!
//! Variables are signed masses `q(s)` over the joint outcomes `s` of all
//! measured cells. A feasible `q` reproduces every bunch pmf on the cells of
//! its context and every multimaximal coupling on the cells of its content.
//! The degree of contextuality is `min sum|q(s)| - 1`; it is zero exactly
//! when a proper joint distribution with these marginals exists.

mod presolve;
mod simplex;

use crate::coupling::{multimaximal_coupling, Coupling};
use crate::error::{Error, Result};
use crate::system::{outcome_vector, Cell, ContentId, ContextId, Outcome, System};

use presolve::EventRow;
use simplex::{Mode, RowLayout};

/// Residual tolerance for constraint satisfaction.
pub const EPS_LP: f64 = 1e-9;
/// Degrees above this are reported as contextual.
pub const EPS_DEGREE: f64 = 1e-7;
/// Default limit on measured cells (the joint space has `2^cells` outcomes).
pub const DEFAULT_MAX_CELLS: usize = 20;

/// Ordered measured cells; outcome `s` assigns cell `i` the value in bit
/// `len - 1 - i` of its index.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcomeSpace {
    cells: Vec<Cell>,
}

impl JointOutcomeSpace {
    pub fn of(system: &System) -> Self {
        JointOutcomeSpace {
            cells: system.measured_cells(),
        }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn dimension(&self) -> usize {
        self.cells.len()
    }

    pub fn size(&self) -> usize {
        1usize << self.cells.len()
    }

    pub fn position(&self, content: &ContentId, context: &ContextId) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| &c.content == content && &c.context == context)
    }

    pub fn outcome(&self, index: usize) -> Vec<Outcome> {
        outcome_vector(index, self.cells.len())
    }

    fn bit(&self, cell: usize) -> usize {
        self.cells.len() - 1 - cell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Bunch,
    Connection,
    /// The explicit `sum q = 1` row (implied by any bunch group).
    Normalization,
}

/// All constraints sharing one scope: one target per assignment of the
/// scope, in outcome-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintGroup {
    pub kind: ConstraintKind,
    /// Context label for bunch groups, content label for connection groups.
    pub owner: String,
    /// Cell positions in the joint outcome space.
    pub scope: Vec<usize>,
    pub targets: Vec<f64>,
}

/// One equation: the marginal of `q` on `scope` at `assignment` equals
/// `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalConstraint {
    pub kind: ConstraintKind,
    pub scope: Vec<usize>,
    pub assignment: Vec<Outcome>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub space: JointOutcomeSpace,
    pub groups: Vec<ConstraintGroup>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.targets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.groups
            .iter()
            .filter(|g| g.kind == kind)
            .map(|g| g.targets.len())
            .sum()
    }

    pub fn constraints(&self) -> Vec<MarginalConstraint> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.targets
                    .iter()
                    .enumerate()
                    .map(|(l, &target)| MarginalConstraint {
                        kind: g.kind,
                        scope: g.scope.clone(),
                        assignment: outcome_vector(l, g.scope.len()),
                        target,
                    })
            })
            .collect()
    }

    /// Marginal of `masses` on a group's scope, by local index.
    pub fn marginal(&self, group: &ConstraintGroup, masses: &[f64]) -> Vec<f64> {
        let k = group.scope.len();
        let bits: Vec<usize> = group.scope.iter().map(|&c| self.space.bit(c)).collect();
        let mut acc = vec![0.0; 1 << k];
        for (s, &q) in masses.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let local = bits.iter().fold(0, |a, &b| (a << 1) | ((s >> b) & 1));
            acc[local] += q;
        }
        acc
    }

    /// Largest `|marginal - target|` over all constraints, plus `|sum - 1|`.
    pub fn max_residual(&self, masses: &[f64]) -> f64 {
        let mut worst = (masses.iter().sum::<f64>() - 1.0).abs();
        for g in &self.groups {
            for (m, t) in self.marginal(g, masses).iter().zip(&g.targets) {
                worst = worst.max((m - t).abs());
            }
        }
        worst
    }

    fn event_rows(&self) -> (Vec<Vec<usize>>, Vec<EventRow>, Vec<f64>) {
        let mut group_bits = Vec::with_capacity(self.groups.len());
        let mut rows = Vec::with_capacity(self.len());
        let mut targets = Vec::with_capacity(self.len());
        for g in &self.groups {
            let bits: Vec<usize> = g.scope.iter().map(|&c| self.space.bit(c)).collect();
            let mask = bits.iter().fold(0u64, |m, &b| m | 1 << b);
            let k = bits.len();
            for (l, &t) in g.targets.iter().enumerate() {
                let mut pattern = 0u64;
                for (i, &b) in bits.iter().enumerate() {
                    pattern |= (((l >> (k - 1 - i)) & 1) as u64) << b;
                }
                rows.push(EventRow { mask, pattern });
                targets.push(t);
            }
            group_bits.push(bits);
        }
        (group_bits, rows, targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiDistribution {
    pub space: JointOutcomeSpace,
    /// Dense signed masses by outcome index.
    pub masses: Vec<f64>,
}

impl QuasiDistribution {
    pub fn total_variation(&self) -> f64 {
        self.masses.iter().map(|q| q.abs()).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Nonzero masses with their outcomes, in index order.
    pub fn support(&self) -> Vec<(Vec<Outcome>, f64)> {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, q)| **q != 0.0)
            .map(|(s, q)| (self.space.outcome(s), *q))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub max_cells: usize,
    /// Adds the (redundant) explicit `sum q = 1` row.
    pub normalization_row: bool,
    /// Defaults to a cap that grows with the program size.
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            max_cells: DEFAULT_MAX_CELLS,
            normalization_row: false,
            max_iterations: None,
        }
    }
}

/// Bunch and connection constraints of `system` over its joint space.
/// `couplings` are the C-couplings of the connections in content order.
pub fn build_constraints(
    system: &System,
    couplings: &[Coupling],
    options: &LpOptions,
) -> Result<ConstraintSet> {
    let space = JointOutcomeSpace::of(system);
    if space.dimension() > options.max_cells {
        return Err(Error::Capacity {
            cells: space.dimension(),
            limit: options.max_cells,
        });
    }
    if couplings.len() != system.contents().len() {
        return Err(Error::domain(format!(
            "{} couplings for {} contents",
            couplings.len(),
            system.contents().len()
        )));
    }

    let mut groups = Vec::new();
    for b in system.bunches() {
        let scope = b
            .contents()
            .iter()
            .map(|q| space.position(q, b.context()).expect("measured cell"))
            .collect();
        groups.push(ConstraintGroup {
            kind: ConstraintKind::Bunch,
            owner: b.context().to_string(),
            scope,
            targets: b.pmf().to_vec(),
        });
    }
    for (q, coupling) in system.contents().iter().zip(couplings) {
        let contexts: Vec<ContextId> = system
            .bunches()
            .iter()
            .filter(|b| b.position(q).is_some())
            .map(|b| b.context().clone())
            .collect();
        if coupling.content() != q || coupling.contexts() != contexts.as_slice() {
            return Err(Error::domain(format!(
                "coupling for `{}` does not match the connection of `{q}`",
                coupling.content()
            )));
        }
        let scope = contexts
            .iter()
            .map(|c| space.position(q, c).expect("measured cell"))
            .collect();
        groups.push(ConstraintGroup {
            kind: ConstraintKind::Connection,
            owner: q.to_string(),
            scope,
            targets: coupling.pmf().to_vec(),
        });
    }
    if options.normalization_row {
        groups.push(ConstraintGroup {
            kind: ConstraintKind::Normalization,
            owner: String::new(),
            scope: Vec::new(),
            targets: vec![1.0],
        });
    }
    Ok(ConstraintSet { space, groups })
}

#[derive(Debug, Clone)]
pub struct MinTvSolution {
    pub min_total_variation: f64,
    pub witness: QuasiDistribution,
    /// Lower bound on the optimum certified by the scaled final duals.
    pub dual_bound: f64,
    pub max_residual: f64,
    pub iterations: usize,
}

struct Prepared {
    layout: RowLayout,
    rhs: Vec<f64>,
    bits: Vec<Vec<usize>>,
    cap: usize,
}

fn prepare(constraints: &ConstraintSet, options: &LpOptions) -> Prepared {
    let (bits, rows, targets) = constraints.event_rows();
    let keep = presolve::independent_rows(&rows);
    let layout = RowLayout::new(constraints.space.dimension(), &bits, &keep);
    let rhs: Vec<f64> = targets
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(t, _)| *t)
        .collect();
    let cap = options
        .max_iterations
        .unwrap_or(20_000 + 200 * layout.n_reduced());
    Prepared {
        layout,
        rhs,
        bits,
        cap,
    }
}

/// `max_j |y . A_j|` over all outcomes, for duals indexed by full row.
fn max_column_dot(bits: &[Vec<usize>], dual: &[f64], n_outcomes: usize) -> f64 {
    let mut offsets = Vec::with_capacity(bits.len());
    let mut off = 0;
    for b in bits {
        offsets.push(off);
        off += 1 << b.len();
    }
    (0..n_outcomes)
        .map(|s| {
            bits.iter()
                .zip(&offsets)
                .map(|(b, &o)| dual[o + b.iter().fold(0, |a, &x| (a << 1) | ((s >> x) & 1))])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Minimizes the total variation over all signed mass functions meeting
/// `constraints`.
pub fn solve_min_tv(constraints: &ConstraintSet, options: &LpOptions) -> Result<MinTvSolution> {
    let p = prepare(constraints, options);
    let sol = simplex::solve(&p.layout, &p.rhs, Mode::MinTotalVariation, p.cap)?;
    let witness = QuasiDistribution {
        space: constraints.space.clone(),
        masses: sol.primal,
    };
    let max_residual = constraints.max_residual(&witness.masses);
    if max_residual > EPS_LP {
        return Err(Error::Numerical {
            message: format!("witness residual {max_residual:e} exceeds {EPS_LP:e}"),
            best_bound: sol.objective,
        });
    }
    let tv = witness.total_variation();
    if tv < 1.0 - 1e-8 {
        return Err(Error::Numerical {
            message: format!("total variation {tv} below 1"),
            best_bound: tv,
        });
    }
    let targets: Vec<f64> = constraints
        .groups
        .iter()
        .flat_map(|g| g.targets.iter().cloned())
        .collect();
    let dual_value: f64 = targets.iter().zip(&sol.dual).map(|(t, y)| t * y).sum();
    let scale = max_column_dot(&p.bits, &sol.dual, p.layout.n_outcomes()).max(1.0);
    Ok(MinTvSolution {
        min_total_variation: tv.max(1.0),
        witness,
        dual_bound: dual_value / scale,
        max_residual,
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct ContextualityReport {
    /// `min V`, at least 1.
    pub min_total_variation: f64,
    /// `min V - 1`.
    pub degree: f64,
    pub contextual: bool,
    pub consistent: bool,
    pub witness: QuasiDistribution,
    /// Multimaximal couplings of the connections, in content order.
    pub couplings: Vec<Coupling>,
    pub dual_bound: f64,
    pub max_residual: f64,
}

pub fn couplings_of(system: &System) -> Result<Vec<Coupling>> {
    system
        .connections()
        .iter()
        .map(multimaximal_coupling)
        .collect()
}

pub fn contextuality_degree(system: &System) -> Result<ContextualityReport> {
    contextuality_degree_with(system, &LpOptions::default())
}

pub fn contextuality_degree_with(
    system: &System,
    options: &LpOptions,
) -> Result<ContextualityReport> {
    let couplings = couplings_of(system)?;
    let constraints = build_constraints(system, &couplings, options)?;
    let sol = solve_min_tv(&constraints, options)?;
    let degree = sol.min_total_variation - 1.0;
    Ok(ContextualityReport {
        min_total_variation: sol.min_total_variation,
        degree,
        contextual: degree > EPS_DEGREE,
        consistent: system.is_consistently_connected(),
        witness: sol.witness,
        couplings,
        dual_bound: sol.dual_bound,
        max_residual: sol.max_residual,
    })
}

/// True iff a proper (nonnegative) joint distribution meets every bunch and
/// connection constraint to within [`EPS_DEGREE`] in `l1` distance, decided
/// by a program over nonnegative masses alone.
pub fn feasibility_check(system: &System) -> Result<bool> {
    feasibility_check_with(system, &LpOptions::default())
}

pub fn feasibility_check_with(system: &System, options: &LpOptions) -> Result<bool> {
    let couplings = couplings_of(system)?;
    let constraints = build_constraints(system, &couplings, options)?;
    let p = prepare(&constraints, options);
    let sol = simplex::solve(&p.layout, &p.rhs, Mode::Feasibility, p.cap)?;
    Ok(sol.objective <= EPS_DEGREE)
}
