//! Exact rational simplex for small standard-form programs
//! `min c.x  s.t.  A x = b, x >= 0`.
//!
//! Two phases with one artificial per row, Bland's rule throughout, an exact
//! dense basis inverse. Rows found to be redundant at the end of phase one
//! keep their artificial basic at zero.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

type Q = BigRational;

/// Sparse column-wise program.
#[derive(Debug, Clone, Default)]
pub struct ExactLp {
    pub n_rows: usize,
    pub columns: Vec<Vec<(usize, Q)>>,
    pub costs: Vec<Q>,
    pub rhs: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExactOutcome {
    Optimal {
        x: Vec<Q>,
        /// Equality duals: `c_j - y.A_j >= 0` for every column.
        y: Vec<Q>,
        value: Q,
    },
    Infeasible,
    Unbounded,
}

impl ExactLp {
    pub fn new(n_rows: usize, rhs: Vec<Q>) -> Self {
        ExactLp {
            n_rows,
            columns: Vec::new(),
            costs: Vec::new(),
            rhs,
        }
    }

    pub fn add_column(&mut self, cost: Q, entries: Vec<(usize, Q)>) -> usize {
        self.columns.push(entries);
        self.costs.push(cost);
        self.columns.len() - 1
    }

    pub fn solve(&self) -> ExactOutcome {
        Solver::new(self).run()
    }
}

struct Solver<'a> {
    lp: &'a ExactLp,
    m: usize,
    n: usize,
    /// Rows multiplied by -1 so that the right-hand side is nonnegative.
    flipped: Vec<bool>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<Vec<Q>>,
    xb: Vec<Q>,
    phase_one: bool,
}

impl<'a> Solver<'a> {
    fn new(lp: &'a ExactLp) -> Self {
        let m = lp.n_rows;
        let n = lp.columns.len();
        let flipped: Vec<bool> = lp.rhs.iter().map(|b| b.is_negative()).collect();
        let rhs: Vec<Q> = lp.rhs.iter().map(|b| b.abs()).collect();
        let mut binv = vec![vec![Q::zero(); m]; m];
        for (i, row) in binv.iter_mut().enumerate() {
            row[i] = Q::one();
        }
        let mut is_basic = vec![false; n + m];
        for b in is_basic.iter_mut().skip(n) {
            *b = true;
        }
        Solver {
            lp,
            m,
            n,
            flipped,
            xb: rhs,
            basis: (n..n + m).collect(),
            is_basic,
            binv,
            phase_one: true,
        }
    }

    fn cost(&self, v: usize) -> Q {
        match (self.phase_one, v >= self.n) {
            (true, true) => Q::one(),
            (true, false) | (false, true) => Q::zero(),
            (false, false) => self.lp.costs[v].clone(),
        }
    }

    /// Structural column with row signs applied.
    fn entries(&self, v: usize) -> impl Iterator<Item = (usize, Q)> + '_ {
        self.lp.columns[v].iter().map(move |(r, a)| {
            (
                *r,
                if self.flipped[*r] {
                    -a.clone()
                } else {
                    a.clone()
                },
            )
        })
    }

    fn duals(&self) -> Vec<Q> {
        let mut y = vec![Q::zero(); self.m];
        for (i, &v) in self.basis.iter().enumerate() {
            let c = self.cost(v);
            if c.is_zero() {
                continue;
            }
            for (yk, b) in y.iter_mut().zip(&self.binv[i]) {
                if !b.is_zero() {
                    *yk += &c * b;
                }
            }
        }
        y
    }

    fn ftran(&self, v: usize) -> Vec<Q> {
        let mut w = vec![Q::zero(); self.m];
        if v >= self.n {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = self.binv[i][v - self.n].clone();
            }
            return w;
        }
        for (r, a) in self.entries(v) {
            for (i, wi) in w.iter_mut().enumerate() {
                let b = &self.binv[i][r];
                if !b.is_zero() {
                    *wi += b * &a;
                }
            }
        }
        w
    }

    fn pivot(&mut self, entering: usize, r: usize, w: &[Q]) {
        let theta = &self.xb[r] / &w[r];
        for i in 0..self.m {
            if i != r && !w[i].is_zero() {
                let d = &theta * &w[i];
                self.xb[i] -= d;
            }
        }
        self.xb[r] = theta;
        let inv = Q::one() / &w[r];
        for b in self.binv[r].iter_mut() {
            if !b.is_zero() {
                *b *= &inv;
            }
        }
        let pivot_row = self.binv[r].clone();
        for i in 0..self.m {
            if i == r || w[i].is_zero() {
                continue;
            }
            for (b, p) in self.binv[i].iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *b -= &w[i] * p;
                }
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[entering] = true;
        self.basis[r] = entering;
    }

    /// One phase of Bland's rule. Returns false if unbounded.
    fn iterate(&mut self) -> bool {
        loop {
            let y = self.duals();
            let entering = (0..self.n).find(|&j| {
                if self.is_basic[j] {
                    return false;
                }
                let mut rc = self.cost(j);
                for (r, a) in self.entries(j) {
                    if !y[r].is_zero() {
                        rc -= &y[r] * a;
                    }
                }
                rc.is_negative()
            });
            let Some(e) = entering else {
                return true;
            };
            let w = self.ftran(e);
            let mut leave: Option<(usize, Q)> = None;
            for (i, wi) in w.iter().enumerate() {
                if wi.is_positive() {
                    let t = &self.xb[i] / wi;
                    let better = match &leave {
                        None => true,
                        Some((b, bt)) => t < *bt || (t == *bt && self.basis[i] < self.basis[*b]),
                    };
                    if better {
                        leave = Some((i, t));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return false;
            };
            self.pivot(e, r, &w);
        }
    }

    fn run(mut self) -> ExactOutcome {
        self.iterate();
        let infeasibility: Q = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(v, _)| **v >= self.n)
            .map(|(_, x)| x.clone())
            .sum();
        if infeasibility.is_positive() {
            return ExactOutcome::Infeasible;
        }
        // Drive basic artificials out where some structural column has a
        // nonzero entry in their row of B^-1 A.
        for i in 0..self.m {
            if self.basis[i] < self.n {
                continue;
            }
            let candidate = (0..self.n).find(|&j| {
                !self.is_basic[j]
                    && !self
                        .entries(j)
                        .fold(Q::zero(), |acc, (r, a)| acc + &self.binv[i][r] * a)
                        .is_zero()
            });
            if let Some(j) = candidate {
                let w = self.ftran(j);
                self.pivot(j, i, &w);
            }
        }
        self.phase_one = false;
        if !self.iterate() {
            return ExactOutcome::Unbounded;
        }
        let mut x = vec![Q::zero(); self.n];
        for (&v, xv) in self.basis.iter().zip(&self.xb) {
            if v < self.n {
                x[v] = xv.clone();
            }
        }
        let value = x.iter().zip(&self.lp.costs).map(|(a, c)| a * c).sum();
        let y = self
            .duals()
            .into_iter()
            .zip(&self.flipped)
            .map(|(y, &f)| if f { -y } else { y })
            .collect();
        ExactOutcome::Optimal { x, y, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n.into(), d.into())
    }

    fn check_optimal(lp: &ExactLp, expected: Q) {
        let ExactOutcome::Optimal { x, y, value } = lp.solve() else {
            panic!("not optimal");
        };
        assert_eq!(value, expected);
        // primal feasibility
        for r in 0..lp.n_rows {
            let lhs: Q = lp
                .columns
                .iter()
                .zip(&x)
                .flat_map(|(col, xj)| {
                    col.iter()
                        .filter(|(i, _)| *i == r)
                        .map(move |(_, a)| a * xj)
                })
                .sum();
            assert_eq!(lhs, lp.rhs[r]);
        }
        // dual feasibility and strong duality
        for (col, c) in lp.columns.iter().zip(&lp.costs) {
            let ya: Q = col.iter().map(|(r, a)| &y[*r] * a).sum();
            assert!(c - ya >= Q::zero());
        }
        let by: Q = lp.rhs.iter().zip(&y).map(|(b, y)| b * y).sum();
        assert_eq!(by, expected);
    }

    #[test]
    fn small_program() {
        // min x1 + 2 x2 + 3 x3  s.t.  x1 + x2 + x3 = 1, x2 - x3 = 1/2
        let mut lp = ExactLp::new(2, vec![q(1, 1), q(1, 2)]);
        lp.add_column(q(1, 1), vec![(0, q(1, 1))]);
        lp.add_column(q(2, 1), vec![(0, q(1, 1)), (1, q(1, 1))]);
        lp.add_column(q(3, 1), vec![(0, q(1, 1)), (1, q(-1, 1))]);
        // x2 = 1/2, x1 = 1/2 -> 3/2
        check_optimal(&lp, q(3, 2));
    }

    #[test]
    fn redundant_and_negative_rows() {
        // x1 + x2 = 1 stated twice, once negated; min x1 - x2 ... bounded by x>=0
        let mut lp = ExactLp::new(3, vec![q(1, 1), q(-1, 1), q(1, 3)]);
        lp.add_column(q(1, 1), vec![(0, q(1, 1)), (1, q(-1, 1))]);
        lp.add_column(q(-1, 1), vec![(0, q(1, 1)), (1, q(-1, 1)), (2, q(1, 1))]);
        // x2 = 1/3, x1 = 2/3 -> 1/3
        check_optimal(&lp, q(1, 3));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = ExactLp::new(1, vec![q(-1, 1)]);
        lp.add_column(q(1, 1), vec![(0, q(1, 1))]);
        assert_eq!(lp.solve(), ExactOutcome::Infeasible);

        let mut lp = ExactLp::new(1, vec![q(1, 1)]);
        lp.add_column(q(0, 1), vec![(0, q(1, 1))]);
        lp.add_column(q(-1, 1), vec![(0, q(1, 1)), (0, q(-1, 1))]);
        assert_eq!(lp.solve(), ExactOutcome::Unbounded);
    }
}
