//! Fixture generators and the exact-arithmetic oracle.

pub mod exact;
pub mod oracle;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::system::{Bunch, ContentId, ContextId, System};

pub use oracle::{
    oracle_degree, oracle_solve, rational_from_f64, verify_certificate, OracleResult,
    RationalDegree, ORACLE_MAX_CELLS,
};

fn content(i: usize) -> ContentId {
    ContentId::new(format!("q{}", i + 1))
}

fn context(i: usize) -> ContextId {
    ContextId::new(format!("c{}", i + 1))
}

fn to_f64(x: Rational64) -> f64 {
    // Both parts are small, so this division is correctly rounded.
    *x.numer() as f64 / *x.denom() as f64
}

/// Parses `p/q`, an integer or a finite decimal such as `-0.75`.
pub fn parse_rational(text: &str) -> Option<Rational64> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let d: i64 = d.trim().parse().ok()?;
        let n: i64 = n.trim().parse().ok()?;
        return (d != 0).then(|| Rational64::new(n, d));
    }
    let (sign, body) = match text.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty()
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
        || frac.len() > 15
    {
        return None;
    }
    let digits: i64 = format!("{int}{frac}").parse().ok()?;
    Some(Rational64::new(sign * digits, 10i64.pow(frac.len() as u32)))
}

/// A cyclic system of rank `n`: context `c_i` measures `q_i` and
/// `q_{i+1 mod n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicSpec {
    pub n: usize,
    /// `E[q_i q_{i+1}]` in context `c_i`.
    pub correlations: Vec<Rational64>,
    /// `P(q = +1)` for the two cells of each context, in `(q_i, q_{i+1})`
    /// order.
    pub marginals: Vec<(Rational64, Rational64)>,
}

impl CyclicSpec {
    /// Uniform marginals.
    pub fn new(correlations: Vec<Rational64>) -> Self {
        let half = Rational64::new(1, 2);
        CyclicSpec {
            n: correlations.len(),
            marginals: vec![(half, half); correlations.len()],
            correlations,
        }
    }

    /// Named correlation patterns: `pr-box` (all `+1` but the last `-1`),
    /// `tsirelson` (`169/239` standing in for `1/sqrt 2`, last negated) and
    /// `coins` (all zero).
    pub fn preset(name: &str, n: usize) -> Result<Self> {
        let with_last_negated = |e: Rational64| {
            let mut v = vec![e; n];
            if let Some(last) = v.last_mut() {
                *last = -e;
            }
            v
        };
        let correlations = match name {
            "pr-box" => with_last_negated(Rational64::one()),
            "tsirelson" => with_last_negated(Rational64::new(169, 239)),
            "coins" => vec![Rational64::zero(); n],
            other => {
                return Err(Error::domain(format!(
                    "unknown preset `{other}`; expected pr-box, tsirelson or coins"
                )))
            }
        };
        Ok(CyclicSpec::new(correlations))
    }

    /// The four masses of context `i` in outcome order `++, +-, -+, --`.
    pub fn bunch_pmf(&self, i: usize) -> Result<[Rational64; 4]> {
        let e = self.correlations[i];
        let (p, r) = self.marginals[i];
        let a = p * 2 - 1;
        let b = r * 2 - 1;
        let four = Rational64::from_integer(4);
        let one = Rational64::one();
        let pmf = [
            (one + a + b + e) / four,
            (one + a - b - e) / four,
            (one - a + b - e) / four,
            (one - a - b + e) / four,
        ];
        if pmf.iter().any(|m| m.is_negative() || *m > one) {
            return Err(Error::domain(format!(
                "context c{}: correlation {e} is incompatible with marginals {p}, {r}",
                i + 1
            )));
        }
        Ok(pmf)
    }
}

pub fn generate_cyclic(spec: &CyclicSpec) -> Result<System> {
    let n = spec.n;
    if n < 2 {
        return Err(Error::domain(format!(
            "cyclic rank must be at least 2, got {n}"
        )));
    }
    if spec.correlations.len() != n || spec.marginals.len() != n {
        return Err(Error::domain(format!(
            "rank {n} needs {n} correlations and {n} marginal pairs, got {} and {}",
            spec.correlations.len(),
            spec.marginals.len()
        )));
    }
    for (i, (e, (p, r))) in spec.correlations.iter().zip(&spec.marginals).enumerate() {
        let unit = |x: &Rational64| x.abs() <= Rational64::one();
        let prob = |x: &Rational64| !x.is_negative() && *x <= Rational64::one();
        if !unit(e) || !prob(p) || !prob(r) {
            return Err(Error::domain(format!(
                "context c{}: correlation must lie in [-1, 1] and marginals in [0, 1]",
                i + 1
            )));
        }
    }
    let mut bunches = Vec::with_capacity(n);
    for i in 0..n {
        let pmf = spec.bunch_pmf(i)?;
        bunches.push(Bunch::new(
            context(i),
            vec![content(i), content((i + 1) % n)],
            pmf.iter().map(|&m| to_f64(m)).collect(),
        )?);
    }
    System::new(
        (0..n).map(content).collect(),
        (0..n).map(context).collect(),
        bunches,
    )
}

/// Contents measured in each context of the three-content, four-context
/// pattern: `q3` is missing from `c1` and `c2`, `q2` from `c3`, `q1` from
/// `c4`.
pub const PAPER_MATRIX_PATTERN: [[usize; 2]; 4] = [[0, 1], [0, 1], [0, 2], [1, 2]];

/// Builds the three-content, four-context pattern from one four-entry pmf
/// per context, over the two contents it measures.
pub fn generate_paper_matrix(bunch_pmfs: &[Vec<f64>]) -> Result<System> {
    if bunch_pmfs.len() != 4 {
        return Err(Error::domain(format!(
            "expected 4 bunch pmfs, got {}",
            bunch_pmfs.len()
        )));
    }
    let mut bunches = Vec::with_capacity(4);
    for (c, (pmf, pair)) in bunch_pmfs.iter().zip(PAPER_MATRIX_PATTERN).enumerate() {
        if pmf.len() != 4 {
            return Err(Error::domain(format!(
                "bunch c{} needs 4 masses over two contents, got {}",
                c + 1,
                pmf.len()
            )));
        }
        bunches.push(Bunch::new(
            context(c),
            pair.iter().map(|&q| content(q)).collect(),
            pmf.clone(),
        )?);
    }
    System::new(
        (0..3).map(content).collect(),
        (0..4).map(context).collect(),
        bunches,
    )
}

/// Shape of a random system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// The three-content, four-context pattern (ignores the counts).
    PaperMatrix,
    /// `empty` cells left out at random, every content and every context
    /// keeping at least one measured cell.
    Random { empty: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomShape {
    pub contents: usize,
    pub contexts: usize,
    pub pattern: Pattern,
}

/// Largest integer weight drawn per outcome.
const MAX_WEIGHT: u32 = 6;

fn random_pattern(rng: &mut ChaCha8Rng, shape: &RandomShape) -> Result<Vec<Vec<usize>>> {
    let (nq, nc) = (shape.contents, shape.contexts);
    match shape.pattern {
        Pattern::PaperMatrix => Ok(PAPER_MATRIX_PATTERN.iter().map(|p| p.to_vec()).collect()),
        Pattern::Random { empty } => {
            if nq == 0 || nc == 0 {
                return Err(Error::domain(
                    "random systems need at least one content and one context",
                ));
            }
            if empty + nq.max(nc) > nq * nc {
                return Err(Error::domain(format!(
                    "{empty} empty cells leave some content or context unmeasured in a {nq}x{nc} system"
                )));
            }
            let mut cells: Vec<(usize, usize)> =
                (0..nc).flat_map(|c| (0..nq).map(move |q| (c, q))).collect();
            loop {
                cells.shuffle(rng);
                let hole = &cells[..empty];
                let covered_c = (0..nc).all(|c| (0..nq).any(|q| !hole.contains(&(c, q))));
                let covered_q = (0..nq).all(|q| (0..nc).any(|c| !hole.contains(&(c, q))));
                if covered_c && covered_q {
                    return Ok((0..nc)
                        .map(|c| (0..nq).filter(|&q| !hole.contains(&(c, q))).collect())
                        .collect());
                }
            }
        }
    }
}

/// A reproducible random system. Masses are integer weights over their
/// total, so every pmf is an exact small-denominator ratio.
pub fn random_system(seed: u64, shape: &RandomShape) -> Result<System> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nq, nc) = match shape.pattern {
        Pattern::PaperMatrix => (3, 4),
        Pattern::Random { .. } => (shape.contents, shape.contexts),
    };
    let pattern = random_pattern(&mut rng, shape)?;
    let mut bunches = Vec::with_capacity(nc);
    for (c, members) in pattern.iter().enumerate() {
        let size = 1usize << members.len();
        let mut weights: Vec<u32> = (0..size).map(|_| rng.gen_range(0..=MAX_WEIGHT)).collect();
        if weights.iter().all(|&w| w == 0) {
            let i = rng.gen_range(0..size);
            weights[i] = 1;
        }
        let total: u32 = weights.iter().sum();
        bunches.push(Bunch::new(
            context(c),
            members.iter().map(|&q| content(q)).collect(),
            weights
                .iter()
                .map(|&w| to_f64(Rational64::new(w.into(), total.into())))
                .collect(),
        )?);
    }
    System::new(
        (0..nq).map(content).collect(),
        (0..nc).map(context).collect(),
        bunches,
    )
}

/// Rank-4 cyclic PR correlations in four contexts over four contents, where
/// each context also measures the other contents as independent fair coins,
/// except `q3` which is left out of `c1`.
pub fn pr_box_extended() -> Result<System> {
    let pr = CyclicSpec::preset("pr-box", 4)?;
    let mut bunches = Vec::with_capacity(4);
    for i in 0..4 {
        let pair = [i, (i + 1) % 4];
        let pair_pmf = pr.bunch_pmf(i)?;
        let others: Vec<usize> = (0..4)
            .filter(|q| !pair.contains(q) && !(i == 0 && *q == 2))
            .collect();
        let mut members: Vec<usize> = pair.to_vec();
        members.extend(&others);
        let coin = Rational64::new(1, 1 << others.len());
        // Pair bits are the two most significant; the coins fill the rest.
        let pmf: Vec<f64> = (0..1usize << members.len())
            .map(|idx| to_f64(pair_pmf[idx >> others.len()] * coin))
            .collect();
        bunches.push(Bunch::new(
            context(i),
            members.iter().map(|&q| content(q)).collect(),
            pmf,
        )?);
    }
    System::new(
        (0..4).map(content).collect(),
        (0..4).map(context).collect(),
        bunches,
    )
}

/// One named catalog system.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub system: System,
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / (1 << k) as f64; 1 << k]
}

/// Every bunch deterministic at all `+1`, over `pattern`.
pub fn deterministic_system(nq: usize, pattern: &[Vec<usize>]) -> Result<System> {
    shaped(nq, pattern, |k| {
        let mut pmf = vec![0.0; 1 << k];
        pmf[0] = 1.0;
        pmf
    })
}

/// Every bunch a product of fair coins, over `pattern`.
pub fn fair_coins_system(nq: usize, pattern: &[Vec<usize>]) -> Result<System> {
    shaped(nq, pattern, uniform)
}

fn shaped(nq: usize, pattern: &[Vec<usize>], pmf: impl Fn(usize) -> Vec<f64>) -> Result<System> {
    let bunches = pattern
        .iter()
        .enumerate()
        .map(|(c, members)| {
            Bunch::new(
                context(c),
                members.iter().map(|&q| content(q)).collect(),
                pmf(members.len()),
            )
        })
        .collect::<Result<_>>()?;
    System::new(
        (0..nq).map(content).collect(),
        (0..pattern.len()).map(context).collect(),
        bunches,
    )
}

/// Content count and measured pattern of every catalog shape.
pub fn catalog_shapes() -> Vec<(&'static str, usize, Vec<Vec<usize>>)> {
    let cyclic = |n: usize| (0..n).map(|i| vec![i, (i + 1) % n]).collect::<Vec<_>>();
    let extended = pr_box_extended().expect("valid fixture");
    let ext_pattern = extended
        .bunches()
        .iter()
        .map(|b| {
            b.contents()
                .iter()
                .map(|q| extended.content_index(q).expect("declared"))
                .collect()
        })
        .collect();
    vec![
        (
            "paper-matrix",
            3,
            PAPER_MATRIX_PATTERN.iter().map(|p| p.to_vec()).collect(),
        ),
        ("cyclic-2", 2, cyclic(2)),
        ("cyclic-3", 3, cyclic(3)),
        ("cyclic-4", 4, cyclic(4)),
        ("pr-box-extended", 4, ext_pattern),
    ]
}

/// Rank-3 cycle with one anticorrelated context. Its three empty cells fill
/// up to a full three-by-three grid.
fn cyclic3_odd() -> Result<System> {
    generate_cyclic(&CyclicSpec::new(vec![
        Rational64::one(),
        Rational64::one(),
        -Rational64::one(),
    ]))
}

/// All catalog fixtures, in a fixed order.
pub fn fixtures() -> Result<Vec<Fixture>> {
    let half = 0.5;
    let correlated = vec![vec![half, 0.0, 0.0, half]; 4];
    let random = RandomShape {
        contents: 3,
        contexts: 4,
        pattern: Pattern::PaperMatrix,
    };
    let random_4x4 = RandomShape {
        contents: 4,
        contexts: 3,
        pattern: Pattern::Random { empty: 3 },
    };
    let paper = PAPER_MATRIX_PATTERN.map(|p| p.to_vec());
    Ok(vec![
        Fixture {
            name: "deterministic",
            system: deterministic_system(3, &paper)?,
        },
        Fixture {
            name: "paper-matrix",
            system: generate_paper_matrix(&correlated)?,
        },
        Fixture {
            name: "paper-matrix-coins",
            system: generate_paper_matrix(&vec![uniform(2); 4])?,
        },
        Fixture {
            name: "pr-box",
            system: generate_cyclic(&CyclicSpec::preset("pr-box", 4)?)?,
        },
        Fixture {
            name: "tsirelson",
            system: generate_cyclic(&CyclicSpec::preset("tsirelson", 4)?)?,
        },
        Fixture {
            name: "cyclic2",
            system: generate_cyclic(&CyclicSpec::new(vec![
                Rational64::one(),
                -Rational64::one(),
            ]))?,
        },
        Fixture {
            name: "cyclic3-odd",
            system: cyclic3_odd()?,
        },
        Fixture {
            name: "pr-box-extended",
            system: pr_box_extended()?,
        },
        Fixture {
            name: "random-paper-matrix-s0",
            system: random_system(0, &random)?,
        },
        Fixture {
            name: "random-4x3-s1",
            system: random_system(1, &random_4x4)?,
        },
    ])
}

/// `E[q_i q_{i+1}]` recomputed from a two-content bunch pmf.
pub fn pair_correlation(pmf: &[f64]) -> Option<Rational64> {
    if pmf.len() != 4 {
        return None;
    }
    let mut e = Rational64::zero();
    for (idx, &p) in pmf.iter().enumerate() {
        let p = rational_from_f64(p)?;
        let p = Rational64::new(p.numer().to_i64()?, p.denom().to_i64()?);
        // Same bits means product +1.
        if idx == 0 || idx == 3 {
            e += p;
        } else {
            e -= p;
        }
    }
    Some(e)
}
