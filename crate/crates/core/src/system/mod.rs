//! Content-context systems of binary random variables.
//!
//! A [`System`] is a matrix whose rows are contexts and whose columns are
//! contents. Each row is a [`Bunch`]: a joint distribution over the contents
//! measured in that context. Variables in different rows are never jointly
//! distributed, so the only cross-row objects are the per-column marginal
//! summaries exposed as [`ConnectionView`]s.
//!
//! Outcomes of a `k`-variable bunch are indexed by `k`-bit integers, first
//! variable in the most significant bit, with bit value 0 for `+1` and 1 for
//! `-1`. Increasing index is therefore lexicographic order with `+1 < -1`.

pub(crate) mod file;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{parse_system, serialize_system};

/// Tolerance for pmf sums and marginal comparisons.
pub const EPS_MASS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentId(String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(String);

macro_rules! label_impls {
    ($t:ident) => {
        impl $t {
            pub fn new(label: impl Into<String>) -> Self {
                $t(label.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $t {
            fn from(s: &str) -> Self {
                $t(s.to_owned())
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

label_impls!(ContentId);
label_impls!(ContextId);

/// A value of a binary random variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> i64 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }

    /// Bit used in outcome indices.
    pub fn bit(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Self {
        if bit & 1 == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        })
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.value())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Outcome::from_value(v).ok_or_else(|| {
            serde::de::Error::custom(format!("outcome value must be +1 or -1, found {v}"))
        })
    }
}

/// Index of an outcome vector (first coordinate most significant).
pub fn outcome_index(outcome: &[Outcome]) -> usize {
    outcome.iter().fold(0, |acc, o| (acc << 1) | o.bit())
}

/// Inverse of [`outcome_index`] for vectors of length `len`.
pub fn outcome_vector(index: usize, len: usize) -> Vec<Outcome> {
    (0..len)
        .map(|i| Outcome::from_bit(index >> (len - 1 - i)))
        .collect()
}

pub(crate) fn render_outcome(outcome: &[Outcome]) -> String {
    let parts: Vec<String> = outcome.iter().map(|o| o.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Joint distribution of the variables measured in one context.
#[derive(Debug, Clone, PartialEq)]
pub struct Bunch {
    context: ContextId,
    contents: Vec<ContentId>,
    pmf: Vec<f64>,
}

impl Bunch {
    /// `pmf` is dense, indexed by [`outcome_index`] over `contents`.
    pub fn new(context: ContextId, contents: Vec<ContentId>, pmf: Vec<f64>) -> Result<Self> {
        if contents.len() >= usize::BITS as usize - 1 {
            return Err(Error::domain("bunch arity too large"));
        }
        if pmf.len() != 1usize << contents.len() {
            return Err(Error::domain(format!(
                "bunch `{context}` has {} contents but {} pmf entries; expected {}",
                contents.len(),
                pmf.len(),
                1usize << contents.len()
            )));
        }
        Ok(Bunch {
            context,
            contents,
            pmf,
        })
    }

    /// Builds a bunch from sparse `(outcome, mass)` entries; omitted outcomes
    /// get mass zero.
    pub fn from_entries(
        context: ContextId,
        contents: Vec<ContentId>,
        entries: &[(Vec<Outcome>, f64)],
    ) -> Result<Self> {
        let k = contents.len();
        let mut pmf = vec![0.0; 1 << k];
        let mut seen = HashSet::new();
        for (outcome, p) in entries {
            if outcome.len() != k {
                return Err(Error::domain(format!(
                    "outcome {} has arity {}, bunch `{context}` has {k} contents",
                    render_outcome(outcome),
                    outcome.len()
                )));
            }
            let idx = outcome_index(outcome);
            if !seen.insert(idx) {
                return Err(Error::domain(format!(
                    "outcome {} listed twice in bunch `{context}`",
                    render_outcome(outcome)
                )));
            }
            pmf[idx] = *p;
        }
        Bunch::new(context, contents, pmf)
    }

    pub fn context(&self) -> &ContextId {
        &self.context
    }

    pub fn contents(&self) -> &[ContentId] {
        &self.contents
    }

    pub fn arity(&self) -> usize {
        self.contents.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn position(&self, content: &ContentId) -> Option<usize> {
        self.contents.iter().position(|c| c == content)
    }

    pub fn mass(&self, outcome: &[Outcome]) -> f64 {
        self.pmf[outcome_index(outcome)]
    }

    /// `Pr[content i = +1]`, clamped to `[0, 1]` against rounding.
    pub fn marginal_plus(&self, i: usize) -> f64 {
        let shift = self.arity() - 1 - i;
        self.pmf
            .iter()
            .enumerate()
            .filter(|(idx, _)| (idx >> shift) & 1 == 0)
            .map(|(_, p)| p)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Reorders the bunch's contents, permuting the pmf coordinates to match.
    pub(crate) fn reordered(&self, order: &[ContentId]) -> Bunch {
        let k = self.arity();
        let src: Vec<usize> = order
            .iter()
            .map(|c| self.position(c).expect("reorder keeps the content set"))
            .collect();
        let mut pmf = vec![0.0; 1 << k];
        for (idx, p) in self.pmf.iter().enumerate() {
            let mut new_idx = 0;
            for &s in &src {
                new_idx = (new_idx << 1) | ((idx >> (k - 1 - s)) & 1);
            }
            pmf[new_idx] = *p;
        }
        Bunch {
            context: self.context.clone(),
            contents: order.to_vec(),
            pmf,
        }
    }
}

/// A rule broken by a system. Returned as data by [`System::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyContentLabel {
        index: usize,
    },
    EmptyContextLabel {
        index: usize,
    },
    DuplicateContentLabel {
        content: ContentId,
    },
    DuplicateContextLabel {
        context: ContextId,
    },
    EmptyBunch {
        context: ContextId,
    },
    DuplicateContentInBunch {
        context: ContextId,
        content: ContentId,
    },
    UnknownContentInBunch {
        context: ContextId,
        content: ContentId,
    },
    UnknownBunchContext {
        context: ContextId,
    },
    /// Two bunches for one context: its cells would be measured twice.
    DuplicateBunch {
        context: ContextId,
    },
    MissingBunch {
        context: ContextId,
    },
    PmfShape {
        context: ContextId,
        expected: usize,
        found: usize,
    },
    NonFiniteMass {
        context: ContextId,
        outcome: Vec<Outcome>,
    },
    NegativeMass {
        context: ContextId,
        outcome: Vec<Outcome>,
        mass: f64,
    },
    MassAboveOne {
        context: ContextId,
        outcome: Vec<Outcome>,
        mass: f64,
    },
    MassSum {
        context: ContextId,
        sum: f64,
    },
    UnmeasuredContent {
        content: ContentId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyContentLabel { index } => write!(f, "content #{index} has an empty label"),
            EmptyContextLabel { index } => write!(f, "context #{index} has an empty label"),
            DuplicateContentLabel { content } => write!(f, "content `{content}` declared twice"),
            DuplicateContextLabel { context } => write!(f, "context `{context}` declared twice"),
            EmptyBunch { context } => write!(f, "bunch `{context}` measures no contents"),
            DuplicateContentInBunch { context, content } => {
                write!(f, "bunch `{context}` lists content `{content}` twice")
            }
            UnknownContentInBunch { context, content } => {
                write!(
                    f,
                    "bunch `{context}` measures undeclared content `{content}`"
                )
            }
            UnknownBunchContext { context } => {
                write!(f, "bunch for undeclared context `{context}`")
            }
            DuplicateBunch { context } => write!(f, "context `{context}` has two bunches"),
            MissingBunch { context } => write!(f, "context `{context}` has no bunch"),
            PmfShape {
                context,
                expected,
                found,
            } => write!(
                f,
                "bunch `{context}` pmf has {found} entries, expected {expected}"
            ),
            NonFiniteMass { context, outcome } => write!(
                f,
                "bunch `{context}` outcome {} has a non-finite mass",
                render_outcome(outcome)
            ),
            NegativeMass {
                context,
                outcome,
                mass,
            } => write!(
                f,
                "bunch `{context}` outcome {} has negative mass {mass}",
                render_outcome(outcome)
            ),
            MassAboveOne {
                context,
                outcome,
                mass,
            } => write!(
                f,
                "bunch `{context}` outcome {} has mass {mass} > 1",
                render_outcome(outcome)
            ),
            MassSum { context, sum } => {
                write!(f, "bunch `{context}` pmf sums to {sum}, not 1")
            }
            UnmeasuredContent { content } => {
                write!(f, "content `{content}` is not measured in any context")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Measured,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub content: ContentId,
    pub context: ContextId,
    pub status: CellStatus,
}

/// The marginals of one content across the contexts that measure it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionView {
    pub content: ContentId,
    /// `(context, Pr[value = +1])` in system context order.
    pub entries: Vec<(ContextId, f64)>,
}

impl ConnectionView {
    pub fn marginals(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }

    pub fn contexts(&self) -> Vec<ContextId> {
        self.entries.iter().map(|(c, _)| c.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The view restricted to the given entry positions, in the given order.
    pub fn restricted(&self, indices: &[usize]) -> ConnectionView {
        ConnectionView {
            content: self.content.clone(),
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }
}

/// A content-context system. Always valid once constructed through
/// [`System::new`]; bunches are stored in context order with their contents
/// in system content order.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    contents: Vec<ContentId>,
    contexts: Vec<ContextId>,
    bunches: Vec<Bunch>,
}

impl System {
    pub fn new(
        contents: Vec<ContentId>,
        contexts: Vec<ContextId>,
        bunches: Vec<Bunch>,
    ) -> Result<Self> {
        let raw = System {
            contents,
            contexts,
            bunches,
        };
        let violations = raw.validate();
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(raw.canonicalized())
    }

    /// Assembles a system without checking it. Only useful for exercising
    /// [`System::validate`]; every other operation assumes a valid system.
    pub fn from_parts_unchecked(
        contents: Vec<ContentId>,
        contexts: Vec<ContextId>,
        bunches: Vec<Bunch>,
    ) -> Self {
        System {
            contents,
            contexts,
            bunches,
        }
    }

    fn canonicalized(self) -> System {
        let System {
            contents,
            contexts,
            bunches,
        } = self;
        let mut ordered = Vec::with_capacity(bunches.len());
        for ctx in &contexts {
            let b = bunches
                .iter()
                .find(|b| &b.context == ctx)
                .expect("validated: one bunch per context");
            let order: Vec<ContentId> = contents
                .iter()
                .filter(|q| b.position(q).is_some())
                .cloned()
                .collect();
            ordered.push(b.reordered(&order));
        }
        System {
            contents,
            contexts,
            bunches: ordered,
        }
    }

    /// Lists every broken rule. Empty iff the system is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let mut seen = HashSet::new();
        for (index, q) in self.contents.iter().enumerate() {
            if q.0.is_empty() {
                out.push(Violation::EmptyContentLabel { index });
            }
            if !seen.insert(q) {
                out.push(Violation::DuplicateContentLabel { content: q.clone() });
            }
        }
        let mut seen = HashSet::new();
        for (index, c) in self.contexts.iter().enumerate() {
            if c.0.is_empty() {
                out.push(Violation::EmptyContextLabel { index });
            }
            if !seen.insert(c) {
                out.push(Violation::DuplicateContextLabel { context: c.clone() });
            }
        }

        let declared_contents: HashSet<&ContentId> = self.contents.iter().collect();
        let declared_contexts: HashSet<&ContextId> = self.contexts.iter().collect();
        let mut bunch_contexts = HashSet::new();
        let mut measured: HashSet<&ContentId> = HashSet::new();

        for b in &self.bunches {
            let ctx = &b.context;
            if !declared_contexts.contains(ctx) {
                out.push(Violation::UnknownBunchContext {
                    context: ctx.clone(),
                });
            }
            if !bunch_contexts.insert(ctx) {
                out.push(Violation::DuplicateBunch {
                    context: ctx.clone(),
                });
            }
            if b.contents.is_empty() {
                out.push(Violation::EmptyBunch {
                    context: ctx.clone(),
                });
            }
            let mut in_bunch = HashSet::new();
            for q in &b.contents {
                if !in_bunch.insert(q) {
                    out.push(Violation::DuplicateContentInBunch {
                        context: ctx.clone(),
                        content: q.clone(),
                    });
                }
                if declared_contents.contains(q) {
                    measured.insert(q);
                } else {
                    out.push(Violation::UnknownContentInBunch {
                        context: ctx.clone(),
                        content: q.clone(),
                    });
                }
            }
            let expected = 1usize << b.contents.len().min(usize::BITS as usize - 2);
            if b.pmf.len() != expected {
                out.push(Violation::PmfShape {
                    context: ctx.clone(),
                    expected,
                    found: b.pmf.len(),
                });
                continue;
            }
            let k = b.contents.len();
            for (idx, &p) in b.pmf.iter().enumerate() {
                let outcome = || outcome_vector(idx, k);
                if !p.is_finite() {
                    out.push(Violation::NonFiniteMass {
                        context: ctx.clone(),
                        outcome: outcome(),
                    });
                } else if p < 0.0 {
                    out.push(Violation::NegativeMass {
                        context: ctx.clone(),
                        outcome: outcome(),
                        mass: p,
                    });
                } else if p > 1.0 + EPS_MASS {
                    out.push(Violation::MassAboveOne {
                        context: ctx.clone(),
                        outcome: outcome(),
                        mass: p,
                    });
                }
            }
            let sum: f64 = b.pmf.iter().sum();
            if sum.is_finite() && (sum - 1.0).abs() > EPS_MASS {
                out.push(Violation::MassSum {
                    context: ctx.clone(),
                    sum,
                });
            }
        }

        for c in &self.contexts {
            if !bunch_contexts.contains(c) {
                out.push(Violation::MissingBunch { context: c.clone() });
            }
        }
        // Report each missing content once even if the label is duplicated.
        let mut reported = BTreeSet::new();
        for q in &self.contents {
            if !measured.contains(q) && reported.insert(q) {
                out.push(Violation::UnmeasuredContent { content: q.clone() });
            }
        }
        out
    }

    pub fn contents(&self) -> &[ContentId] {
        &self.contents
    }

    pub fn contexts(&self) -> &[ContextId] {
        &self.contexts
    }

    pub fn bunches(&self) -> &[Bunch] {
        &self.bunches
    }

    pub fn content_index(&self, content: &ContentId) -> Option<usize> {
        self.contents.iter().position(|q| q == content)
    }

    pub fn context_index(&self, context: &ContextId) -> Option<usize> {
        self.contexts.iter().position(|c| c == context)
    }

    pub fn bunch(&self, context: &ContextId) -> Option<&Bunch> {
        self.bunches.iter().find(|b| &b.context == context)
    }

    pub fn is_measured(&self, content: &ContentId, context: &ContextId) -> bool {
        self.bunch(context)
            .map(|b| b.position(content).is_some())
            .unwrap_or(false)
    }

    /// Every cell of the matrix, by context then content.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.contents.len() * self.contexts.len());
        for (ctx, b) in self.contexts.iter().zip(&self.bunches) {
            for q in &self.contents {
                let status = if b.position(q).is_some() {
                    CellStatus::Measured
                } else {
                    CellStatus::Empty
                };
                out.push(Cell {
                    content: q.clone(),
                    context: ctx.clone(),
                    status,
                });
            }
        }
        out
    }

    /// Measured cells in canonical order.
    pub fn measured_cells(&self) -> Vec<Cell> {
        self.cells()
            .into_iter()
            .filter(|c| c.status == CellStatus::Measured)
            .collect()
    }

    pub fn empty_cells(&self) -> Vec<Cell> {
        self.cells()
            .into_iter()
            .filter(|c| c.status == CellStatus::Empty)
            .collect()
    }

    pub fn measured_count(&self) -> usize {
        self.bunches.iter().map(Bunch::arity).sum()
    }

    pub fn connection(&self, content: &ContentId) -> Result<ConnectionView> {
        if self.content_index(content).is_none() {
            return Err(Error::UnknownContent(content.to_string()));
        }
        let entries = self
            .bunches
            .iter()
            .filter_map(|b| {
                b.position(content)
                    .map(|i| (b.context.clone(), b.marginal_plus(i)))
            })
            .collect();
        Ok(ConnectionView {
            content: content.clone(),
            entries,
        })
    }

    /// One view per content, in content order.
    pub fn connections(&self) -> Vec<ConnectionView> {
        self.contents
            .iter()
            .map(|q| self.connection(q).expect("declared content"))
            .collect()
    }

    /// True iff within every connection all marginals agree within
    /// [`EPS_MASS`].
    pub fn is_consistently_connected(&self) -> bool {
        self.connections().iter().all(|view| {
            let ps = view.marginals();
            let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ps.is_empty() || hi - lo <= EPS_MASS
        })
    }

    /// Swaps `+1` and `-1` for every variable of `content`.
    pub fn flip_content(&self, content: &ContentId) -> Result<System> {
        if self.content_index(content).is_none() {
            return Err(Error::UnknownContent(content.to_string()));
        }
        let bunches = self
            .bunches
            .iter()
            .map(|b| match b.position(content) {
                None => b.clone(),
                Some(i) => {
                    let mask = 1usize << (b.arity() - 1 - i);
                    let mut pmf = vec![0.0; b.pmf.len()];
                    for (idx, p) in b.pmf.iter().enumerate() {
                        pmf[idx ^ mask] = *p;
                    }
                    Bunch {
                        context: b.context.clone(),
                        contents: b.contents.clone(),
                        pmf,
                    }
                }
            })
            .collect();
        Ok(System {
            contents: self.contents.clone(),
            contexts: self.contexts.clone(),
            bunches,
        })
    }

    /// The same system with contents and contexts listed in a new order.
    pub fn reordered(&self, contents: &[ContentId], contexts: &[ContextId]) -> Result<System> {
        let same_set = |a: &[ContentId], b: &[ContentId]| {
            a.len() == b.len() && a.iter().collect::<HashSet<_>>() == b.iter().collect()
        };
        if !same_set(contents, &self.contents) {
            return Err(Error::domain("content order is not a permutation"));
        }
        if contexts.len() != self.contexts.len()
            || contexts.iter().collect::<HashSet<_>>() != self.contexts.iter().collect()
        {
            return Err(Error::domain("context order is not a permutation"));
        }
        System::new(contents.to_vec(), contexts.to_vec(), self.bunches.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> ContentId {
        ContentId::from(s)
    }
    fn c(s: &str) -> ContextId {
        ContextId::from(s)
    }

    fn coins(ctx: &str, contents: &[&str]) -> Bunch {
        let k = contents.len();
        let n = 1 << k;
        Bunch::new(
            c(ctx),
            contents.iter().map(|s| q(s)).collect(),
            vec![1.0 / n as f64; n],
        )
        .unwrap()
    }

    fn paper_shape() -> (Vec<ContentId>, Vec<ContextId>, Vec<Bunch>) {
        (
            vec![q("q1"), q("q2"), q("q3")],
            vec![c("c1"), c("c2"), c("c3"), c("c4")],
            vec![
                coins("c1", &["q1", "q2"]),
                coins("c2", &["q1", "q2"]),
                coins("c3", &["q1", "q3"]),
                coins("c4", &["q2", "q3"]),
            ],
        )
    }

    #[test]
    fn paper_shape_is_valid() {
        let (qs, cs, bs) = paper_shape();
        let s = System::from_parts_unchecked(qs, cs, bs);
        assert!(s.validate().is_empty());
        assert_eq!(s.validate(), s.validate());
    }

    #[test]
    fn mass_sum_violation_names_context() {
        let (qs, cs, mut bs) = paper_shape();
        bs[2] = Bunch::new(
            c("c3"),
            vec![q("q1"), q("q3")],
            vec![0.25, 0.25, 0.25, 0.23],
        )
        .unwrap();
        let v = System::from_parts_unchecked(qs, cs, bs).validate();
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::MassSum { context, sum } => {
                assert_eq!(context, &c("c3"));
                assert!((sum - 0.98).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_content_in_bunch() {
        let (qs, cs, mut bs) = paper_shape();
        bs[3] = Bunch::new(c("c4"), vec![q("q3"), q("q3")], vec![0.25; 4]).unwrap();
        let v = System::from_parts_unchecked(qs, cs, bs).validate();
        assert!(v.contains(&Violation::DuplicateContentInBunch {
            context: c("c4"),
            content: q("q3")
        }));
    }

    #[test]
    fn structural_violations() {
        let (qs, mut cs, mut bs) = paper_shape();
        cs.push(c("c5"));
        bs.push(coins("c1", &["q1"]));
        bs[0] = Bunch::new(c("c1"), vec![q("q1"), q("q9")], vec![0.25; 4]).unwrap();
        let mut qs = qs;
        qs.push(q("q4"));
        let v = System::from_parts_unchecked(qs, cs, bs).validate();
        assert!(v.contains(&Violation::MissingBunch { context: c("c5") }));
        assert!(v.contains(&Violation::DuplicateBunch { context: c("c1") }));
        assert!(v.contains(&Violation::UnknownContentInBunch {
            context: c("c1"),
            content: q("q9")
        }));
        assert!(v.contains(&Violation::UnmeasuredContent { content: q("q4") }));
    }

    #[test]
    fn negative_mass_is_reported() {
        let (qs, cs, mut bs) = paper_shape();
        bs[0] = Bunch::new(c("c1"), vec![q("q1"), q("q2")], vec![0.6, 0.25, 0.25, -0.1]).unwrap();
        let v = System::from_parts_unchecked(qs, cs, bs).validate();
        assert!(matches!(v[0], Violation::NegativeMass { .. }), "{v:?}");
    }

    #[test]
    fn connection_marginals() {
        let (qs, cs, mut bs) = paper_shape();
        bs[0] = Bunch::new(c("c1"), vec![q("q1"), q("q2")], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = System::new(qs, cs, bs).unwrap();
        let v = s.connection(&q("q1")).unwrap();
        assert_eq!(v.contexts(), vec![c("c1"), c("c2"), c("c3")]);
        assert!((v.marginals()[0] - 0.3).abs() < 1e-15);
        assert_eq!(&v.marginals()[1..], &[0.5, 0.5]);
        let v3 = s.connection(&q("q3")).unwrap();
        assert_eq!(v3.len(), 2);
        let v2 = s.connection(&q("q2")).unwrap();
        assert!((v2.marginals()[0] - 0.4).abs() < 1e-15);
        assert!(matches!(
            s.connection(&q("nope")),
            Err(Error::UnknownContent(_))
        ));
        assert!(!s.is_consistently_connected());
    }

    #[test]
    fn single_context_content() {
        let s = System::new(vec![q("a")], vec![c("x")], vec![coins("x", &["a"])]).unwrap();
        let v = s.connection(&q("a")).unwrap();
        assert_eq!(v.entries, vec![(c("x"), 0.5)]);
        assert!(s.is_consistently_connected());
    }

    #[test]
    fn fair_coins_are_consistent() {
        let (qs, cs, bs) = paper_shape();
        let s = System::new(qs, cs, bs).unwrap();
        assert!(s.is_consistently_connected());
        assert_eq!(s.measured_count(), 8);
        assert_eq!(s.empty_cells().len(), 4);
    }

    #[test]
    fn canonicalization_reorders_bunch_contents() {
        // (q2, q1) with Pr[q2=+1, q1=-1] = 0.7
        let b = Bunch::from_entries(
            c("x"),
            vec![q("q2"), q("q1")],
            &[
                (vec![Outcome::Plus, Outcome::Minus], 0.7),
                (vec![Outcome::Minus, Outcome::Minus], 0.3),
            ],
        )
        .unwrap();
        let s = System::new(vec![q("q1"), q("q2")], vec![c("x")], vec![b]).unwrap();
        let b = &s.bunches()[0];
        assert_eq!(b.contents(), &[q("q1"), q("q2")]);
        assert_eq!(b.mass(&[Outcome::Minus, Outcome::Plus]), 0.7);
        assert_eq!(b.mass(&[Outcome::Minus, Outcome::Minus]), 0.3);
    }

    #[test]
    fn flip_swaps_marginal() {
        let (qs, cs, mut bs) = paper_shape();
        bs[0] = Bunch::new(c("c1"), vec![q("q1"), q("q2")], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = System::new(qs, cs, bs).unwrap();
        let f = s.flip_content(&q("q1")).unwrap();
        assert!(f.validate().is_empty());
        let p = f.connection(&q("q1")).unwrap().marginals()[0];
        assert!((p - 0.7).abs() < 1e-15);
        assert_eq!(f.flip_content(&q("q1")).unwrap(), s);
    }

    #[test]
    fn outcome_indexing_is_lexicographic() {
        use Outcome::*;
        assert_eq!(outcome_index(&[Plus, Plus]), 0);
        assert_eq!(outcome_index(&[Plus, Minus]), 1);
        assert_eq!(outcome_index(&[Minus, Plus]), 2);
        for i in 0..8 {
            assert_eq!(outcome_index(&outcome_vector(i, 3)), i);
        }
    }
}
