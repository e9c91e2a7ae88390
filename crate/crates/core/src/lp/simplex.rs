//! Revised simplex specialised to marginal-constraint programs.
//!
//! Columns are indexed by joint outcomes: outcome `j` has a `+1` in exactly
//! one row of every constraint group, so a column is never materialised and
//! pricing costs one table lookup per group. In total-variation mode each
//! outcome contributes two columns, `+A_j` and `-A_j`, the positive and
//! negative parts of its signed mass. The basis inverse is kept dense and
//! refactorised periodically.
//!
//! Pricing is Dantzig's rule with a Harris ratio test; after a run of
//! degenerate pivots the solver switches to Bland's rule until the
//! objective moves again.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const HARRIS_DELTA: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 40;
const NO_ROW: u32 = u32::MAX;
/// Slack on the bound `sum|q| >= 1` at which phase two stops.
const LOWER_BOUND_TOL: f64 = 1e-12;
/// Columns remembered between full pricing passes.
const CANDIDATES: usize = 48;
/// Scale of the right-hand-side perturbation used against stalling.
const PERTURBATION: f64 = 1e-8;
/// Basic variables below this after removing the perturbation are repaired.
const FEAS_TOL: f64 = 1e-13;
/// Scale of the cost perturbation in the dual phase.
const COST_PERTURBATION: f64 = 1e-7;
/// Harris tolerance on reduced costs in the dual ratio test.
const HARRIS_DUAL: f64 = 1e-12;

/// Maps joint outcomes to the constraint rows they belong to.
pub(crate) struct RowLayout {
    n_outcomes: usize,
    /// Per group, per byte of the outcome index: contribution to the full
    /// row number (the group offset is folded into chunk 0).
    tables: Vec<Vec<[u32; 256]>>,
    /// Full row -> reduced row, `NO_ROW` for rows dropped by presolve.
    reduced: Vec<u32>,
    n_reduced: usize,
    group_sizes: Vec<usize>,
    /// Groups by where their bits lie relative to the low byte.
    low_groups: Vec<usize>,
    high_groups: Vec<usize>,
    mixed_groups: Vec<usize>,
}

impl RowLayout {
    /// `groups[g]` lists, for each scope coordinate in order, the bit of the
    /// outcome index that carries it (coordinate 0 is the most significant
    /// bit of the group's local index).
    pub(crate) fn new(n_bits: usize, groups: &[Vec<usize>], keep: &[bool]) -> Self {
        let n_chunks = n_bits.div_ceil(8).max(1);
        let mut tables = Vec::with_capacity(groups.len());
        let mut offset = 0u32;
        for bits in groups {
            let k = bits.len();
            let mut chunks = vec![[0u32; 256]; n_chunks];
            for (c, table) in chunks.iter_mut().enumerate() {
                for (v, slot) in table.iter_mut().enumerate() {
                    let mut local = 0u32;
                    for (t, &bit) in bits.iter().enumerate() {
                        if bit / 8 == c && (v >> (bit % 8)) & 1 == 1 {
                            local |= 1 << (k - 1 - t);
                        }
                    }
                    *slot = local + if c == 0 { offset } else { 0 };
                }
            }
            tables.push(chunks);
            offset += 1 << k;
        }
        assert_eq!(offset as usize, keep.len(), "one keep flag per row");
        let mut reduced = vec![NO_ROW; keep.len()];
        let mut n_reduced = 0;
        for (r, &k) in keep.iter().enumerate() {
            if k {
                reduced[r] = n_reduced as u32;
                n_reduced += 1;
            }
        }
        let (mut low_groups, mut high_groups, mut mixed_groups) =
            (Vec::new(), Vec::new(), Vec::new());
        for (g, bits) in groups.iter().enumerate() {
            if bits.iter().all(|&b| b < 8) {
                low_groups.push(g);
            } else if bits.iter().all(|&b| b >= 8) {
                high_groups.push(g);
            } else {
                mixed_groups.push(g);
            }
        }
        RowLayout {
            n_outcomes: 1 << n_bits,
            tables,
            reduced,
            n_reduced,
            group_sizes: groups.iter().map(|b| 1 << b.len()).collect(),
            low_groups,
            high_groups,
            mixed_groups,
        }
    }

    pub(crate) fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub(crate) fn n_reduced(&self) -> usize {
        self.n_reduced
    }

    #[inline]
    fn full_row(&self, g: usize, j: usize) -> usize {
        let mut row = 0u32;
        for (c, table) in self.tables[g].iter().enumerate() {
            row += table[(j >> (8 * c)) & 0xff];
        }
        row as usize
    }

    /// Reduced rows hit by outcome `j`.
    #[inline]
    fn rows_of(&self, j: usize, out: &mut Vec<usize>) {
        out.clear();
        for g in 0..self.tables.len() {
            let r = self.reduced[self.full_row(g, j)];
            if r != NO_ROW {
                out.push(r as usize);
            }
        }
    }

    /// `y . A_j` for `y` indexed by full row.
    #[inline]
    fn dot_full(&self, j: usize, y_full: &[f64]) -> f64 {
        (0..self.tables.len())
            .map(|g| y_full[self.full_row(g, j)])
            .sum()
    }

    /// `out[j] = y . A_j` for every outcome, `y` indexed by full row. The
    /// row of outcome `j` in group `g` is `T0[low byte] + base(high part)`,
    /// so each block of 256 outcomes is a gather through one small table.
    /// Groups confined to the low byte add the same vector to every block,
    /// and groups confined to the high part add one scalar per block.
    fn accumulate(&self, y_full: &[f64], out: &mut [f64]) {
        assert_eq!(y_full.len(), self.reduced.len());
        let block = self.n_outcomes.min(256);
        let mut low = vec![0.0; block];
        for &g in &self.low_groups {
            for (x, &t0) in low.iter_mut().zip(&self.tables[g][0][..block]) {
                *x += y_full[t0 as usize];
            }
        }
        let base = |g: usize, h: usize| -> usize {
            self.tables[g][1..]
                .iter()
                .enumerate()
                .map(|(c, t)| t[(h >> (8 * c)) & 0xff])
                .sum::<u32>() as usize
        };
        for (h, chunk) in out.chunks_mut(block).enumerate() {
            let high: f64 = self
                .high_groups
                .iter()
                .map(|&g| y_full[base(g, h) + self.tables[g][0][0] as usize])
                .sum();
            for (x, l) in chunk.iter_mut().zip(&low) {
                *x = high + l;
            }
            for &g in &self.mixed_groups {
                let y = &y_full[base(g, h)..];
                for (x, &t0) in chunk.iter_mut().zip(&self.tables[g][0][..block]) {
                    // SAFETY: `base + t0` is the full row of an outcome, and
                    // full rows index `y_full` (length checked above).
                    *x += unsafe { *y.get_unchecked(t0 as usize) };
                }
            }
        }
    }

    pub(crate) fn n_full(&self) -> usize {
        self.reduced.len()
    }

    /// Full rows of group `g`.
    pub(crate) fn group_rows(&self, g: usize) -> std::ops::Range<usize> {
        let start = self.full_row(g, 0);
        start..start + self.group_sizes[g]
    }

    pub(crate) fn expand(&self, y_reduced: &[f64]) -> Vec<f64> {
        self.reduced
            .iter()
            .map(|&r| {
                if r == NO_ROW {
                    0.0
                } else {
                    y_reduced[r as usize]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// `min sum(a + b)` over `A(a - b) = rhs`, `a, b >= 0`.
    MinTotalVariation,
    /// Whether `A x = rhs` has a solution `x >= 0`.
    Feasibility,
}

/// How the dual phase ended.
#[derive(Debug, Clone, PartialEq)]
enum DualEnd {
    /// An artificial was still basic; nothing was done.
    Skipped,
    Optimal,
    /// Only in nonnegative mode: the `l1` distance bound from `rhs` to the
    /// cone of the columns, with the row of `B^-1` proving it (full rows).
    Infeasible {
        distance: f64,
        certificate: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    /// Phase-two objective; in feasibility mode, a distance from `rhs` to
    /// the nonnegative span of the columns (zero when feasible).
    pub objective: f64,
    /// Signed mass per outcome.
    pub primal: Vec<f64>,
    /// Duals indexed by full row (zero on dropped rows).
    pub dual: Vec<f64>,
    pub iterations: usize,
}

struct Revised<'a> {
    layout: &'a RowLayout,
    mode: Mode,
    m: usize,
    n_struct: usize,
    /// Right-hand side in use, possibly perturbed.
    rhs: Vec<f64>,
    perturbed: bool,
    /// Phase-two cost per structural variable (1, or 1 plus a small
    /// perturbation during the dual phase).
    costs: Vec<f64>,
    basis: Vec<usize>,
    /// Basis position of each variable, `NO_ROW` if nonbasic.
    position: Vec<u32>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    phase: u8,
    iterations: usize,
    max_iterations: usize,
    scratch: Vec<usize>,
    /// Attractive columns from the last full pricing pass.
    candidates: Vec<usize>,
    /// Scratch for `y . A_j` over all outcomes.
    dots: Vec<f64>,
}

impl<'a> Revised<'a> {
    fn new(layout: &'a RowLayout, rhs: &[f64], mode: Mode, max_iterations: usize) -> Self {
        let m = layout.n_reduced();
        let n_struct = match mode {
            Mode::MinTotalVariation => 2 * layout.n_outcomes(),
            Mode::Feasibility => layout.n_outcomes(),
        };
        let mut position = vec![NO_ROW; n_struct + m];
        let basis: Vec<usize> = (0..m).map(|i| n_struct + i).collect();
        for (i, &v) in basis.iter().enumerate() {
            position[v] = i as u32;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Revised {
            layout,
            mode,
            m,
            n_struct,
            rhs: rhs.to_vec(),
            perturbed: false,
            costs: vec![1.0; n_struct],
            basis,
            position,
            binv,
            xb: rhs.to_vec(),
            phase: 1,
            iterations: 0,
            max_iterations,
            scratch: Vec::new(),
            candidates: Vec::new(),
            dots: vec![0.0; layout.n_outcomes()],
        }
    }

    fn is_artificial(&self, v: usize) -> bool {
        v >= self.n_struct
    }

    /// `(outcome, sign)` of a structural variable.
    fn decode(&self, v: usize) -> (usize, f64) {
        match self.mode {
            Mode::MinTotalVariation => (v / 2, if v % 2 == 0 { 1.0 } else { -1.0 }),
            Mode::Feasibility => (v, 1.0),
        }
    }

    fn cost(&self, v: usize) -> f64 {
        match (self.phase, self.is_artificial(v)) {
            (1, true) => 1.0,
            (1, false) => 0.0,
            (_, true) => 0.0,
            (_, false) => self.costs[v],
        }
    }

    fn objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .map(|(&v, &x)| self.cost(v) * x)
            .sum()
    }

    /// Dense column of variable `v` in reduced row space.
    fn dense_column(&mut self, v: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        if self.is_artificial(v) {
            out[v - self.n_struct] = 1.0;
            return;
        }
        let (j, sign) = self.decode(v);
        let mut rows = std::mem::take(&mut self.scratch);
        self.layout.rows_of(j, &mut rows);
        for &r in &rows {
            out[r] += sign;
        }
        self.scratch = rows;
    }

    /// `B^-1 a_v`.
    fn ftran(&mut self, v: usize, w: &mut [f64]) {
        let m = self.m;
        w.iter_mut().for_each(|x| *x = 0.0);
        if self.is_artificial(v) {
            let r = v - self.n_struct;
            for i in 0..m {
                w[i] = self.binv[i * m + r];
            }
            return;
        }
        let (j, sign) = self.decode(v);
        let mut rows = std::mem::take(&mut self.scratch);
        self.layout.rows_of(j, &mut rows);
        for &r in &rows {
            for i in 0..m {
                w[i] += sign * self.binv[i * m + r];
            }
        }
        self.scratch = rows;
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &v) in self.basis.iter().enumerate() {
            let c = self.cost(v);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
        y
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        // Augmented [B | I], Gauss-Jordan with partial pivoting.
        let w = 2 * m;
        let mut a = vec![0.0; m * w];
        let mut col = vec![0.0; m];
        for i in 0..m {
            let v = self.basis[i];
            self.dense_column(v, &mut col);
            for r in 0..m {
                a[r * w + i] = col[r];
            }
            a[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, a[r * w + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-12 {
                return Err(Error::Numerical {
                    message: "singular basis during refactorisation".into(),
                    best_bound: self.objective(),
                });
            }
            if p != c {
                for k in 0..w {
                    a.swap(p * w + k, c * w + k);
                }
            }
            let inv = 1.0 / a[c * w + c];
            for k in 0..w {
                a[c * w + k] *= inv;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * w + c];
                    if f != 0.0 {
                        for k in 0..w {
                            a[r * w + k] -= f * a[c * w + k];
                        }
                    }
                }
            }
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&a[i * w + m..(i + 1) * w]);
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let x: f64 = row.iter().zip(&self.rhs).map(|(b, r)| b * r).sum();
            self.xb[i] = if x.abs() < 1e-13 { 0.0 } else { x };
        }
        Ok(())
    }

    fn pivot(&mut self, entering: usize, r: usize, w: &[f64]) {
        let m = self.m;
        let theta = (self.xb[r] / w[r]).max(0.0);
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * w[i];
            }
        }
        self.xb[r] = theta;

        let inv = 1.0 / w[r];
        for k in 0..m {
            self.binv[r * m + k] *= inv;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for (i, row) in before.chunks_mut(m).chain(after.chunks_mut(m)).enumerate() {
            let wi = w[if i < r { i } else { i + 1 }];
            if wi != 0.0 {
                for (x, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *x -= wi * p;
                }
            }
        }

        let leaving = self.basis[r];
        self.position[leaving] = NO_ROW;
        self.basis[r] = entering;
        self.position[entering] = r as u32;
        self.iterations += 1;
    }

    fn reduced_cost(&self, v: usize, y_full: &[f64]) -> f64 {
        let (j, sign) = self.decode(v);
        self.cost(v) - sign * self.layout.dot_full(j, y_full)
    }

    /// Chooses an entering variable, or `None` at optimality. Outside
    /// Bland mode, columns kept from the last full pass are priced first;
    /// a full pass runs only when none of them is attractive any more.
    fn price(&mut self, y_full: &[f64], bland: bool) -> Option<(usize, f64)> {
        if !bland {
            let mut best: Option<(usize, f64)> = None;
            let mut kept = std::mem::take(&mut self.candidates);
            kept.retain(|&v| {
                if self.position[v] != NO_ROW {
                    return false;
                }
                let rc = self.reduced_cost(v, y_full);
                if rc >= -OPT_TOL {
                    return false;
                }
                if best.is_none_or(|(_, b)| rc < b) {
                    best = Some((v, rc));
                }
                true
            });
            self.candidates = kept;
            if best.is_some() {
                return best;
            }
        }
        let mut dots = std::mem::take(&mut self.dots);
        self.layout.accumulate(y_full, &mut dots);
        let mut found: Vec<(f64, usize)> = Vec::new();
        for (j, &d) in dots.iter().enumerate() {
            let candidates: &[(usize, f64)] = match self.mode {
                Mode::MinTotalVariation => &[
                    (2 * j, self.cost(2 * j) - d),
                    (2 * j + 1, self.cost(2 * j + 1) + d),
                ],
                Mode::Feasibility => &[(j, -d)],
            };
            for &(v, rc) in candidates {
                if rc >= -OPT_TOL || self.position[v] != NO_ROW {
                    continue;
                }
                if bland {
                    self.dots = dots;
                    return Some((v, rc));
                }
                found.push((rc, v));
            }
        }
        self.dots = dots;
        if found.len() > CANDIDATES {
            found.select_nth_unstable_by(CANDIDATES, |a, b| a.0.total_cmp(&b.0));
            found.truncate(CANDIDATES);
        }
        let best = found
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|&(rc, v)| (v, rc));
        self.candidates = found.into_iter().map(|(_, v)| v).collect();
        best
    }

    /// Leaving row for entering column `w`.
    fn ratio_test(&self, w: &[f64], bland: bool) -> Option<usize> {
        // An artificial left in the basis after phase one must stay at zero:
        // any column touching its row pushes it out with a degenerate step.
        if self.phase == 2 {
            let stuck = w
                .iter()
                .enumerate()
                .filter(|&(i, wi)| wi.abs() > PIVOT_TOL && self.is_artificial(self.basis[i]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            if let Some((i, _)) = stuck {
                return Some(i);
            }
        }
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for (i, &wi) in w.iter().enumerate() {
                if wi > PIVOT_TOL {
                    let t = self.xb[i].max(0.0) / wi;
                    let better = match best {
                        None => true,
                        Some((b, bt)) => {
                            t < bt - 1e-14 || (t <= bt + 1e-14 && self.basis[i] < self.basis[b])
                        }
                    };
                    if better {
                        best = Some((i, t));
                    }
                }
            }
            return best.map(|(i, _)| i);
        }
        let mut bound = f64::INFINITY;
        for (i, &wi) in w.iter().enumerate() {
            if wi > PIVOT_TOL {
                bound = bound.min((self.xb[i].max(0.0) + HARRIS_DELTA) / wi);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi > PIVOT_TOL && self.xb[i].max(0.0) / wi <= bound && best.is_none_or(|b| wi > w[b])
            {
                best = Some(i);
            }
        }
        best
    }

    /// Runs one phase to optimality. In phase two of total-variation mode,
    /// returns early with `true` once the objective reaches its a priori
    /// lower bound of 1 (every feasible point has total mass 1).
    fn run_phase(&mut self) -> Result<bool> {
        let m = self.m;
        let mut w = vec![0.0; m];
        let mut degenerate = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Numerical {
                    message: format!("iteration cap {} reached", self.max_iterations),
                    best_bound: self.objective(),
                });
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            if self.phase == 2 && !self.perturbed && self.objective() <= 1.0 + LOWER_BOUND_TOL {
                return Ok(true);
            }
            let y = self.layout.expand(&self.duals());
            let bland = degenerate >= DEGENERATE_RUN;
            let Some((entering, rc)) = self.price(&y, bland) else {
                return Ok(false);
            };
            self.ftran(entering, &mut w);
            let Some(r) = self.ratio_test(&w, bland) else {
                return Err(Error::Numerical {
                    message: "unbounded direction in a bounded program".into(),
                    best_bound: self.objective(),
                });
            };
            if self.phase == 2 && self.is_artificial(self.basis[r]) {
                self.xb[r] = 0.0;
            }
            let theta = self.xb[r].max(0.0) / w[r];
            if theta * rc.abs() <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(entering, r, &w);
            since_refactor += 1;
        }
    }

    /// Replaces artificials still basic (at zero) by structural columns
    /// wherever the row allows it.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        let mut w = vec![0.0; m];
        for i in 0..m {
            if !self.is_artificial(self.basis[i]) {
                continue;
            }
            let row: Vec<f64> = self.binv[i * m..(i + 1) * m].to_vec();
            let row_full = self.layout.expand(&row);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.layout.n_outcomes() {
                let v = match self.mode {
                    Mode::MinTotalVariation => 2 * j,
                    Mode::Feasibility => j,
                };
                if self.position[v] != NO_ROW {
                    continue;
                }
                let d = self.layout.dot_full(j, &row_full);
                if d.abs() > 1e-7 && best.is_none_or(|(_, b)| d.abs() > b.abs()) {
                    best = Some((v, d));
                }
            }
            if let Some((v, _)) = best {
                self.xb[i] = 0.0;
                self.ftran(v, &mut w);
                self.pivot(v, i, &w);
            }
        }
        self.refactor()
    }

    /// Phase two by the dual simplex method, from the phase-one basis with
    /// every column replaced by its `+A_j` variant. Reduced costs of such a
    /// basis are 0 and 2, so it is dual feasible; nonbasic costs get a small
    /// positive perturbation so that ratio tests rarely tie. Leaving rows
    /// are chosen by `x_r^2 / |e_r B^-1|^2` (exact dual steepest edge).
    /// Leaves the basis untouched if phase one left an artificial basic.
    ///
    /// With `nonnegative` only the `+A_j` columns may enter, which solves
    /// `min sum x` over `A x = rhs, x >= 0` instead; a pivot row without an
    /// entering column is then a Farkas certificate of infeasibility.
    fn dual_phase(&mut self, nonnegative: bool) -> Result<DualEnd> {
        if self.basis.iter().any(|&v| self.is_artificial(v)) {
            return Ok(DualEnd::Skipped);
        }
        let m = self.m;
        for i in 0..m {
            let v = self.basis[i];
            if v % 2 == 1 {
                self.position[v] = NO_ROW;
                self.basis[i] = v - 1;
                self.position[v - 1] = i as u32;
                self.xb[i] = -self.xb[i];
                for x in &mut self.binv[i * m..(i + 1) * m] {
                    *x = -*x;
                }
            }
        }
        let mut state = 0x2545_f491_4f6c_dd1du64;
        for v in 0..self.n_struct {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            self.costs[v] = if self.position[v] == NO_ROW {
                1.0 + COST_PERTURBATION * (0.5 + u)
            } else {
                1.0
            };
        }
        let n = self.layout.n_outcomes();
        let mut rc = vec![0.0; self.n_struct];
        let mut alpha = vec![0.0; n];
        let mut w = vec![0.0; m];
        let mut since_refactor = REFACTOR_EVERY;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Numerical {
                    message: format!("iteration cap {} reached", self.max_iterations),
                    best_bound: self.objective(),
                });
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                let y = self.layout.expand(&self.duals());
                self.layout.accumulate(&y, &mut alpha);
                for (j, &d) in alpha.iter().enumerate() {
                    rc[2 * j] = self.costs[2 * j] - d;
                    rc[2 * j + 1] = self.costs[2 * j + 1] + d;
                }
                for &v in &self.basis {
                    rc[v] = 0.0;
                }
                since_refactor = 0;
            }
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let x = self.xb[i];
                if x >= -FEAS_TOL {
                    continue;
                }
                let norm: f64 = self.binv[i * m..(i + 1) * m].iter().map(|b| b * b).sum();
                let score = x * x / norm;
                if leaving.is_none_or(|(_, s)| score > s) {
                    leaving = Some((i, score));
                }
            }
            let Some((r, _)) = leaving else {
                return Ok(DualEnd::Optimal);
            };
            let rho = self.layout.expand(&self.binv[r * m..(r + 1) * m]);
            // Harris two-pass ratio test. Of the two columns of outcome `j`
            // only the one whose pivot row entry is negative qualifies.
            let candidate = |j: usize, a: f64| {
                if a < -PIVOT_TOL {
                    Some((2 * j, a))
                } else if a > PIVOT_TOL && !nonnegative {
                    Some((2 * j + 1, -a))
                } else {
                    None
                }
            };
            let mut bound = f64::INFINITY;
            self.layout.accumulate(&rho, &mut alpha);
            for (j, &a) in alpha.iter().enumerate() {
                let Some((v, al)) = candidate(j, a) else {
                    continue;
                };
                if self.position[v] == NO_ROW {
                    bound = bound.min((rc[v].max(0.0) + HARRIS_DUAL) / -al);
                }
            }
            if !bound.is_finite() {
                if nonnegative {
                    // rho . A_j >= 0 for every column, yet rho . rhs < 0: no
                    // nonnegative x comes closer than this in l1 distance.
                    let scale = rho.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                    return Ok(DualEnd::Infeasible {
                        distance: -self.xb[r] / scale,
                        certificate: rho,
                    });
                }
                return Err(Error::Numerical {
                    message: "dual unbounded: marginal constraints are inconsistent".into(),
                    best_bound: f64::NAN,
                });
            }
            let mut entering: Option<(usize, f64)> = None;
            for (j, &a) in alpha.iter().enumerate() {
                if entering.is_some_and(|(_, b)| a.abs() <= b) {
                    continue;
                }
                let Some((v, al)) = candidate(j, a) else {
                    continue;
                };
                if self.position[v] == NO_ROW && rc[v].max(0.0) / -al <= bound {
                    entering = Some((v, -al));
                }
            }
            let (q, aq) = entering.expect("bound is attained");
            let t = rc[q].max(0.0) / aq;
            for (r2, &a) in rc.chunks_exact_mut(2).zip(alpha.iter()) {
                r2[0] += t * a;
                r2[1] -= t * a;
            }
            let leaving_var = self.basis[r];
            self.ftran(q, &mut w);
            self.pivot(q, r, &w);
            rc[q] = 0.0;
            rc[leaving_var] = rc[leaving_var].max(0.0);
            since_refactor += 1;
        }
    }

    /// Sets every phase-two cost back to exactly 1.
    fn clear_cost_perturbation(&mut self) {
        self.costs.iter_mut().for_each(|c| *c = 1.0);
        self.candidates.clear();
    }

    /// Shifts every right-hand side up by a small, deterministic,
    /// row-dependent amount so that few basic variables sit at zero.
    fn perturb(&mut self) {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        for (i, b) in self.rhs.iter_mut().enumerate() {
            state ^= (i as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            *b += PERTURBATION * (0.5 + u) * (1.0 + b.abs());
        }
        self.xb.copy_from_slice(&self.rhs);
        self.perturbed = true;
    }

    /// Restores the true right-hand side and repairs the basic variables
    /// that turn negative with dual simplex steps, which keep the reduced
    /// costs nonnegative.
    fn remove_perturbation(&mut self, rhs: &[f64]) -> Result<()> {
        self.rhs.copy_from_slice(rhs);
        self.perturbed = false;
        self.refactor()?;
        let m = self.m;
        let mut w = vec![0.0; m];
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Numerical {
                    message: format!("iteration cap {} reached", self.max_iterations),
                    best_bound: self.objective(),
                });
            }
            let leaving = (0..m)
                .filter(|&i| self.xb[i] < -FEAS_TOL)
                .min_by(|&a, &b| self.xb[a].total_cmp(&self.xb[b]));
            let Some(r) = leaving else {
                return Ok(());
            };
            let rho = self.layout.expand(&self.binv[r * m..(r + 1) * m]);
            let y = self.layout.expand(&self.duals());
            // (variable, ratio, |alpha|)
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.layout.n_outcomes() {
                let a = self.layout.dot_full(j, &rho);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let d = self.layout.dot_full(j, &y);
                let columns: &[(usize, f64)] = match self.mode {
                    Mode::MinTotalVariation => &[(2 * j, 1.0), (2 * j + 1, -1.0)],
                    Mode::Feasibility => &[(j, 1.0)],
                };
                for &(v, sign) in columns {
                    let alpha = sign * a;
                    if alpha >= -PIVOT_TOL || self.position[v] != NO_ROW {
                        continue;
                    }
                    let ratio = (self.cost(v) - sign * d).max(0.0) / -alpha;
                    let better = match best {
                        None => true,
                        Some((_, br, ba)) => {
                            ratio < br - 1e-15 || (ratio <= br + 1e-15 && -alpha > ba)
                        }
                    };
                    if better {
                        best = Some((v, ratio, -alpha));
                    }
                }
            }
            let Some((entering, _, _)) = best else {
                return Err(Error::Numerical {
                    message: "no dual step removes the perturbation".into(),
                    best_bound: self.objective(),
                });
            };
            self.ftran(entering, &mut w);
            self.pivot(entering, r, &w);
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.layout.n_outcomes()];
        for (&v, &x) in self.basis.iter().zip(&self.xb) {
            if !self.is_artificial(v) {
                let (j, sign) = self.decode(v);
                q[j] += sign * x;
            }
        }
        q
    }
}

pub(crate) fn solve(
    layout: &RowLayout,
    rhs: &[f64],
    mode: Mode,
    max_iterations: usize,
) -> Result<Solution> {
    assert_eq!(rhs.len(), layout.n_reduced());
    // Both modes start from a basis of the signed program, found by a
    // perturbed phase one.
    let mut s = Revised::new(layout, rhs, Mode::MinTotalVariation, max_iterations);
    s.perturb();
    s.run_phase()?;
    s.refactor()?;
    let infeasibility = s.objective();
    let scale = rhs.iter().map(|x| x.abs()).fold(1.0, f64::max);
    if infeasibility > 1e-8 * scale {
        return Err(Error::Numerical {
            message: format!(
                "marginal constraints are inconsistent (phase-one residual {infeasibility:e})"
            ),
            best_bound: f64::NAN,
        });
    }
    s.drive_out_artificials()?;
    s.phase = 2;
    s.rhs.copy_from_slice(rhs);
    s.perturbed = false;
    s.refactor()?;

    if mode == Mode::Feasibility {
        return match s.dual_phase(true)? {
            DualEnd::Optimal => {
                s.refactor()?;
                let worst = s.xb.iter().fold(0.0f64, |a, &x| a.max(-x));
                Ok(Solution {
                    objective: worst,
                    primal: s.primal(),
                    dual: layout.expand(&s.duals()),
                    iterations: s.iterations,
                })
            }
            DualEnd::Infeasible {
                distance,
                certificate,
            } => Ok(Solution {
                objective: distance,
                primal: s.primal(),
                dual: certificate,
                iterations: s.iterations,
            }),
            DualEnd::Skipped => primal_phase_one(layout, rhs, max_iterations),
        };
    }

    if s.dual_phase(false)? == DualEnd::Optimal {
        s.clear_cost_perturbation();
        s.refactor()?;
    }
    // Primal steps finish the job: they remove any negative basic values
    // left (only possible on the fallback path) and any negative reduced
    // cost left by the cost perturbation.
    s.remove_perturbation(rhs)?;
    let at_bound = s.run_phase()?;
    s.refactor()?;
    let dual = if at_bound {
        // Ones on the rows of the first group: y . A_j = 1 for every
        // outcome and b . y = 1, certifying the bound directly.
        let first = layout.group_rows(0);
        (0..layout.n_full())
            .map(|r| if first.contains(&r) { 1.0 } else { 0.0 })
            .collect()
    } else {
        layout.expand(&s.duals())
    };
    Ok(Solution {
        objective: s.objective(),
        primal: s.primal(),
        dual,
        iterations: s.iterations,
    })
}

/// Phase one over `A x = rhs, x >= 0` by primal steps alone; the residual
/// is the objective.
fn primal_phase_one(layout: &RowLayout, rhs: &[f64], max_iterations: usize) -> Result<Solution> {
    let mut s = Revised::new(layout, rhs, Mode::Feasibility, max_iterations);
    s.perturb();
    s.run_phase()?;
    s.refactor()?;
    // The perturbed basis is optimal for the phase-one costs; dual steps
    // restore the true right-hand side without losing that.
    s.remove_perturbation(rhs)?;
    s.run_phase()?;
    s.refactor()?;
    Ok(Solution {
        objective: s.objective(),
        primal: s.primal(),
        dual: layout.expand(&s.duals()),
        iterations: s.iterations,
    })
}
