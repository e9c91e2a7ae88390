//! Multimaximal couplings of binary connections.
//!
//! For binary variables the coupling in which every pair is equal with the
//! largest possible probability exists, is unique, and is the nested
//! (comonotone) one: draw a single uniform `U` and set `T_i = +1` iff
//! `U < p_i`. Its support is a chain of at most `m + 1` outcomes.
//!
//! The construction is generic over the mass type so the exact oracle can
//! use it with rationals.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_traits::Num;

use crate::error::{Error, Result};
use crate::system::{outcome_vector, ConnectionView, ContentId, ContextId, Outcome};

/// Scalar usable as a probability mass.
pub trait Mass: Num + Clone + PartialOrd + Debug {}

impl<T: Num + Clone + PartialOrd + Debug> Mass for T {}

/// The multimaximal coupling of one connection. `pmf` is dense over
/// `{+1,-1}^m`, indexed like bunch pmfs with the contexts as coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling<T = f64> {
    content: ContentId,
    contexts: Vec<ContextId>,
    pmf: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMaximality {
    pub i: usize,
    pub j: usize,
    /// `Pr[T_i = T_j]` under the audited coupling.
    pub achieved: f64,
    /// `1 - |p_i - p_j|`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingAudit {
    pub pairs: Vec<PairMaximality>,
    /// Coupling marginal minus connection marginal, per coordinate.
    pub marginal_residuals: Vec<f64>,
    /// `sum(pmf) - 1`.
    pub mass_residual: f64,
    pub min_mass: f64,
}

impl CouplingAudit {
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.min_mass < -tol {
            out.push(format!("negative mass {}", self.min_mass));
        }
        if self.mass_residual.abs() > tol {
            out.push(format!("pmf sums to 1{:+e}", self.mass_residual));
        }
        for (i, r) in self.marginal_residuals.iter().enumerate() {
            if r.abs() > tol {
                out.push(format!("marginal {i} off by {r:e}"));
            }
        }
        for p in &self.pairs {
            if (p.achieved - p.bound).abs() > tol {
                out.push(format!(
                    "pair ({}, {}) equal with probability {} < {}",
                    p.i, p.j, p.achieved, p.bound
                ));
            }
        }
        out
    }

    pub fn is_c_coupling(&self, tol: f64) -> bool {
        self.violations(tol).is_empty()
    }
}

impl<T: Mass> Coupling<T> {
    pub fn from_parts(content: ContentId, contexts: Vec<ContextId>, pmf: Vec<T>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::domain("coupling over zero variables"));
        }
        if pmf.len() != 1usize << contexts.len() {
            return Err(Error::domain(format!(
                "coupling of {} variables needs {} masses, got {}",
                contexts.len(),
                1usize << contexts.len(),
                pmf.len()
            )));
        }
        Ok(Coupling {
            content,
            contexts,
            pmf,
        })
    }

    pub fn content(&self) -> &ContentId {
        &self.content
    }

    pub fn contexts(&self) -> &[ContextId] {
        &self.contexts
    }

    pub fn arity(&self) -> usize {
        self.contexts.len()
    }

    pub fn pmf(&self) -> &[T] {
        &self.pmf
    }

    /// The outcomes carrying nonzero mass, in index order.
    pub fn support(&self) -> Vec<(Vec<Outcome>, T)> {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(idx, p)| (outcome_vector(idx, self.arity()), p.clone()))
            .collect()
    }

    /// `Pr[T_i = +1]`.
    pub fn marginal_plus(&self, i: usize) -> T {
        let shift = self.arity() - 1 - i;
        self.pmf
            .iter()
            .enumerate()
            .filter(|(idx, _)| (idx >> shift) & 1 == 0)
            .fold(T::zero(), |acc, (_, p)| acc + p.clone())
    }

    /// `Pr[T_i = T_j]`.
    pub fn agreement(&self, i: usize, j: usize) -> T {
        let m = self.arity();
        let (si, sj) = (m - 1 - i, m - 1 - j);
        self.pmf
            .iter()
            .enumerate()
            .filter(|(idx, _)| (idx >> si) & 1 == (idx >> sj) & 1)
            .fold(T::zero(), |acc, (_, p)| acc + p.clone())
    }
}

fn check_marginal<T: Mass>(p: &T) -> Result<()> {
    if *p < T::zero() || *p > T::one() {
        return Err(Error::domain(format!("marginal {p:?} outside [0, 1]")));
    }
    Ok(())
}

/// `max Pr[X = Y]` over all couplings of two binary variables with
/// `Pr[X = +1] = p`, `Pr[Y = +1] = q`.
pub fn maximal_pair_probability(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!(
            "marginals ({p}, {q}) outside [0, 1]"
        )));
    }
    Ok(p.min(q) + (1.0 - p).min(1.0 - q))
}

/// Dense pmf of the nested coupling of `marginals` (`Pr[+1]` per coordinate).
pub fn nested_pmf<T: Mass>(marginals: &[T]) -> Result<Vec<T>> {
    if marginals.is_empty() {
        return Err(Error::domain("empty connection"));
    }
    for p in marginals {
        check_marginal(p)?;
    }
    let m = marginals.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Stable: ties keep context order.
    order.sort_by(|&a, &b| {
        marginals[b]
            .partial_cmp(&marginals[a])
            .unwrap_or(Ordering::Equal)
    });

    let mut pmf = vec![T::zero(); 1 << m];
    // Start with every coordinate at -1, then turn them to +1 one by one in
    // order of decreasing marginal.
    let mut idx = (1usize << m) - 1;
    let mut upper = T::one();
    for &i in &order {
        pmf[idx] = upper.clone() - marginals[i].clone();
        upper = marginals[i].clone();
        idx &= !(1 << (m - 1 - i));
    }
    pmf[idx] = upper;
    Ok(pmf)
}

/// The unique C-coupling of a connection: all marginals preserved and
/// every pair equal with maximal probability.
pub fn multimaximal_coupling(view: &ConnectionView) -> Result<Coupling<f64>> {
    multimaximal_coupling_of(view.content.clone(), view.contexts(), &view.marginals())
}

pub fn multimaximal_coupling_of<T: Mass>(
    content: ContentId,
    contexts: Vec<ContextId>,
    marginals: &[T],
) -> Result<Coupling<T>> {
    if contexts.len() != marginals.len() {
        return Err(Error::domain("one marginal per context required"));
    }
    let pmf = nested_pmf(marginals)?;
    Coupling::from_parts(content, contexts, pmf)
}

/// Audits a coupling against a connection: marginal residuals and the
/// achieved-versus-maximal agreement of every pair.
pub fn verify_coupling(c: &Coupling<f64>, view: &ConnectionView) -> Result<CouplingAudit> {
    if c.content != view.content || c.contexts != view.contexts() {
        return Err(Error::domain(format!(
            "coupling of `{}` does not match the connection of `{}`",
            c.content, view.content
        )));
    }
    let ps = view.marginals();
    let m = ps.len();
    let marginal_residuals = (0..m).map(|i| c.marginal_plus(i) - ps[i]).collect();
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            pairs.push(PairMaximality {
                i,
                j,
                achieved: c.agreement(i, j),
                bound: maximal_pair_probability(ps[i], ps[j])?,
            });
        }
    }
    Ok(CouplingAudit {
        pairs,
        marginal_residuals,
        mass_residual: c.pmf.iter().sum::<f64>() - 1.0,
        min_mass: c.pmf.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// Marginalizes a coupling onto the coordinates `subset` (in that order).
pub fn restrict_coupling<T: Mass>(c: &Coupling<T>, subset: &[usize]) -> Result<Coupling<T>> {
    if subset.is_empty() {
        return Err(Error::domain("empty index subset"));
    }
    let m = c.arity();
    let mut seen = vec![false; m];
    for &i in subset {
        if i >= m {
            return Err(Error::domain(format!(
                "index {i} out of range for {m} variables"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::domain(format!("index {i} repeated")));
        }
    }
    let k = subset.len();
    let mut pmf = vec![T::zero(); 1 << k];
    for (idx, p) in c.pmf.iter().enumerate() {
        if p.is_zero() {
            continue;
        }
        let sub = subset
            .iter()
            .fold(0, |acc, &i| (acc << 1) | ((idx >> (m - 1 - i)) & 1));
        pmf[sub] = pmf[sub].clone() + p.clone();
    }
    Coupling::from_parts(
        c.content.clone(),
        subset.iter().map(|&i| c.contexts[i].clone()).collect(),
        pmf,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;
    use Outcome::{Minus as M, Plus as P};

    fn view(ps: &[f64]) -> ConnectionView {
        ConnectionView {
            content: ContentId::from("q"),
            entries: ps
                .iter()
                .enumerate()
                .map(|(i, &p)| (ContextId::new(format!("c{}", i + 1)), p))
                .collect(),
        }
    }

    /// Brute force over the one-parameter family of couplings of two
    /// binary variables, parametrized by t = Pr[+,+].
    fn max_agreement_oracle(p: f64, q: f64) -> f64 {
        let lo = (p + q - 1.0).max(0.0);
        let hi = p.min(q);
        let steps = 100_000;
        (0..=steps)
            .map(|s| {
                let t = lo + (hi - lo) * s as f64 / steps as f64;
                // Pr[+,+] + Pr[-,-]
                t + (1.0 - p - q + t)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn pair_bound_examples() {
        assert_eq!(maximal_pair_probability(0.5, 0.5).unwrap(), 1.0);
        for (p, q, expected) in [(0.3, 0.8, 0.5), (1.0, 0.4, 0.4)] {
            let oracle = max_agreement_oracle(p, q);
            assert!((oracle - expected).abs() < 1e-12);
            assert!((maximal_pair_probability(p, q).unwrap() - expected).abs() < 1e-12);
        }
        assert!(maximal_pair_probability(1.2, 0.4).is_err());
        assert!(maximal_pair_probability(0.2, -0.1).is_err());
    }

    #[test]
    fn three_variable_example() {
        let c = multimaximal_coupling(&view(&[0.2, 0.5, 0.9])).unwrap();
        let support = c.support();
        let expected = [
            (vec![P, P, P], 0.2),
            (vec![M, P, P], 0.3),
            (vec![M, M, P], 0.4),
            (vec![M, M, M], 0.1),
        ];
        assert_eq!(support.len(), 4);
        for (o, p) in expected {
            let got = support.iter().find(|(x, _)| *x == o).unwrap().1;
            assert!((got - p).abs() < 1e-15, "{o:?}: {got}");
        }
        let audit = verify_coupling(&c, &view(&[0.2, 0.5, 0.9])).unwrap();
        assert!(audit.is_c_coupling(1e-12), "{:?}", audit.violations(1e-12));
        for pair in &audit.pairs {
            assert!((pair.achieved - pair.bound).abs() < 1e-12);
        }
    }

    #[test]
    fn single_and_deterministic() {
        let c = multimaximal_coupling(&view(&[0.37])).unwrap();
        assert_eq!(c.pmf(), &[0.37, 1.0 - 0.37]);

        let c = multimaximal_coupling(&view(&[1.0, 1.0, 0.3])).unwrap();
        let s = c.support();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].0, vec![P, P, P]);
        assert!((s[0].1 - 0.3).abs() < 1e-15);
        assert_eq!(s[1].0, vec![P, P, M]);
        assert!((s[1].1 - 0.7).abs() < 1e-15);
        assert!(multimaximal_coupling(&view(&[])).is_err());
        assert!(multimaximal_coupling(&view(&[0.4, 1.5])).is_err());
    }

    #[test]
    fn product_coupling_is_not_maximal() {
        let v = view(&[0.5, 0.5]);
        let c = Coupling::from_parts(v.content.clone(), v.contexts(), vec![0.25; 4]).unwrap();
        let audit = verify_coupling(&c, &v).unwrap();
        assert_eq!(audit.pairs[0].achieved, 0.5);
        assert_eq!(audit.pairs[0].bound, 1.0);
        assert!(!audit.is_c_coupling(1e-9));
        assert!(audit.marginal_residuals.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn marginal_violation_is_flagged() {
        let v = view(&[0.5, 0.5]);
        let c = Coupling::from_parts(v.content.clone(), v.contexts(), vec![0.6, 0.0, 0.0, 0.4])
            .unwrap();
        let audit = verify_coupling(&c, &v).unwrap();
        assert!((audit.marginal_residuals[0] - 0.1).abs() < 1e-12);
        assert!(!audit.is_c_coupling(1e-9));
        let other = view(&[0.5]);
        assert!(verify_coupling(&c, &other).is_err());
    }

    #[test]
    fn restriction_examples() {
        let c = multimaximal_coupling(&view(&[0.2, 0.5, 0.9])).unwrap();
        let r = restrict_coupling(&c, &[0, 2]).unwrap();
        let expected = [0.2, 0.0, 0.7, 0.1];
        for (a, b) in r.pmf().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let direct = multimaximal_coupling(&view(&[0.2, 0.5, 0.9]).restricted(&[0, 2])).unwrap();
        assert_eq!(direct.contexts(), r.contexts());
        assert_eq!(restrict_coupling(&c, &[0, 1, 2]).unwrap(), c);
        let one = multimaximal_coupling(&view(&[0.3])).unwrap();
        assert_eq!(restrict_coupling(&one, &[0]).unwrap(), one);
        assert!(restrict_coupling(&c, &[]).is_err());
        assert!(restrict_coupling(&c, &[3]).is_err());
        assert!(restrict_coupling(&c, &[1, 1]).is_err());
    }

    #[test]
    fn rational_construction_is_exact() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        let ps = [r(1, 5), r(1, 2), r(9, 10)];
        let pmf = nested_pmf(&ps).unwrap();
        assert_eq!(pmf[0b000], r(1, 5));
        assert_eq!(pmf[0b100], r(3, 10));
        assert_eq!(pmf[0b110], r(2, 5));
        assert_eq!(pmf[0b111], r(1, 10));
    }

    fn marginals() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.0..=1.0f64],
            1..=5,
        )
    }

    proptest! {
        #[test]
        fn support_is_a_chain(ps in marginals()) {
            let c = multimaximal_coupling(&view(&ps)).unwrap();
            prop_assert!(c.support().len() <= ps.len() + 1);
            prop_assert!(c.pmf().iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn permutation_equivariance(ps in marginals(), seed in any::<u64>()) {
            let m = ps.len();
            let mut perm: Vec<usize> = (0..m).collect();
            // Fisher-Yates driven by the seed.
            let mut s = seed;
            for i in (1..m).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let v = view(&ps);
            let c = multimaximal_coupling(&v).unwrap();
            let permuted = multimaximal_coupling(&v.restricted(&perm)).unwrap();
            let moved = restrict_coupling(&c, &perm).unwrap();
            for (a, b) in permuted.pmf().iter().zip(moved.pmf()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
