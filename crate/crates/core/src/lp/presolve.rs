//! Removal of linearly dependent marginal constraints.
//!
//! Every constraint row is the indicator of an event "the cells in `mask`
//! take the values in `pattern`" over the joint outcome space. The Gram
//! matrix of two such rows is a count of outcomes, available in closed
//! form, so dependencies are found by eliminating on the (small) Gram matrix
//! instead of the (huge) constraint matrix. Rows are scanned in order and a
//! row is kept iff its Schur complement against the rows kept so far is
//! nonzero, i.e. incremental pivoted Cholesky.

/// An event row: cells at the set bits of `mask` equal the bits of
/// `pattern` (1 meaning `-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EventRow {
    pub mask: u64,
    pub pattern: u64,
}

/// Relative Schur-complement threshold below which a row counts as
/// dependent.
const RANK_TOL: f64 = 1e-10;

/// `<row_a, row_b> / 2^N`.
fn gram(a: EventRow, b: EventRow) -> f64 {
    if (a.pattern ^ b.pattern) & a.mask & b.mask != 0 {
        0.0
    } else {
        (-((a.mask | b.mask).count_ones() as f64)).exp2()
    }
}

/// Returns `keep[r]`, true for a maximal independent subset of `rows`
/// chosen greedily in order.
pub(crate) fn independent_rows(rows: &[EventRow]) -> Vec<bool> {
    let mut keep = vec![false; rows.len()];
    let mut kept: Vec<EventRow> = Vec::new();
    // Lower-triangular factor of the Gram matrix of the kept rows.
    let mut factor: Vec<Vec<f64>> = Vec::new();
    let mut z = Vec::new();

    for (r, &row) in rows.iter().enumerate() {
        let diag = gram(row, row);
        z.clear();
        let mut schur = diag;
        for (t, l) in factor.iter().enumerate() {
            let mut v = gram(row, kept[t]);
            for (u, zu) in z.iter().enumerate() {
                v -= l[u] * zu;
            }
            let zt = v / l[t];
            schur -= zt * zt;
            z.push(zt);
        }
        if schur > RANK_TOL * diag {
            let mut l = z.clone();
            l.push(schur.sqrt());
            factor.push(l);
            kept.push(row);
            keep[r] = true;
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_of(n_bits: u32, scopes: &[u64]) -> Vec<EventRow> {
        let _ = n_bits;
        let mut out = Vec::new();
        for &mask in scopes {
            // enumerate all patterns over mask
            let bits: Vec<u32> = (0..64).filter(|b| mask >> b & 1 == 1).collect();
            for v in 0..(1u64 << bits.len()) {
                let mut pattern = 0;
                for (t, b) in bits.iter().enumerate() {
                    pattern |= ((v >> t) & 1) << b;
                }
                out.push(EventRow { mask, pattern });
            }
        }
        out
    }

    #[test]
    fn single_scope_is_full_rank() {
        let rows = rows_of(2, &[0b11]);
        assert_eq!(independent_rows(&rows), vec![true; 4]);
    }

    #[test]
    fn duplicate_scope_is_dropped() {
        let rows = rows_of(1, &[0b1, 0b1]);
        assert_eq!(independent_rows(&rows), vec![true, true, false, false]);
    }

    #[test]
    fn two_overlapping_pairs() {
        // Scopes {0,1} and {1,2} over 3 bits: 4 + 4 rows sharing the
        // two-dimensional marginal of bit 1 plus the constant, rank 6.
        let rows = rows_of(3, &[0b011, 0b110]);
        let rank = independent_rows(&rows).iter().filter(|k| **k).count();
        assert_eq!(rank, 6);
    }

    #[test]
    fn chsh_rank() {
        // Four pair scopes around a 4-cycle of single bits: dimension of
        // span = 1 + 4 + 4 = 9.
        let rows = rows_of(4, &[0b0011, 0b0110, 0b1100, 0b1001]);
        let rank = independent_rows(&rows).iter().filter(|k| **k).count();
        assert_eq!(rank, 9);
    }
}
