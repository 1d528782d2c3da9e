//! Small numerical helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result};

/// Compensated (Kahan) accumulator for fixed-order reductions. Reductions
/// over observations go through [`stable_sum`] / [`stable_matrix_sum`] on top
/// of this, making them exactly invariant to observation order.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Kahan sum of an iterator of f64.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sum that is invariant to the order of its terms: the summands are sorted
/// by IEEE total order before a compensated reduction, so any permutation of
/// the same multiset of values yields a bit-identical result.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut terms: Vec<f64> = values.into_iter().collect();
    terms.sort_by(f64::total_cmp);
    kahan_sum(terms)
}

/// Componentwise order-invariant sum of equally shaped matrices.
pub fn stable_matrix_sum(terms: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (nrows, ncols) = match terms.first() {
        Some(first) => first.shape(),
        None => return DMatrix::zeros(0, 0),
    };
    let mut column = Vec::with_capacity(terms.len());
    DMatrix::from_fn(nrows, ncols, |r, c| {
        column.clear();
        column.extend(terms.iter().map(|t| t[(r, c)]));
        column.sort_by(f64::total_cmp);
        kahan_sum(column.iter().copied())
    })
}

/// Checks symmetry of a square matrix to the given absolute tolerance.
pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Cholesky factorization of an SPD matrix with a single jitter retry:
/// if the first attempt fails, 1e-10 * tr(m)/dim is added to the diagonal
/// and the factorization is attempted once more. `which` names the matrix
/// in the error on a second failure.
pub fn cholesky_spd(m: &DMatrix<f64>, which: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let dim = m.nrows();
    let jitter = 1e-10 * m.trace() / dim as f64;
    let mut jittered = m.clone();
    for i in 0..dim {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered).ok_or_else(|| Error::Factorization {
        which: which.to_string(),
    })
}

/// Log-determinant of the factored matrix, read off the Cholesky diagonal.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].ln();
    }
    2.0 * acc
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_recovers_cancellation() {
        let mut acc = KahanSum::new();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 10.0);
    }

    #[test]
    fn stable_sum_is_order_invariant() {
        let values = vec![1e15, 3.1, -1e15, 2.2e-8, 7.0, -4.4, 1e-20, 5.5e7];
        let forward = stable_sum(values.iter().copied());
        let backward = stable_sum(values.iter().rev().copied());
        let rotated = stable_sum(values[3..].iter().chain(&values[..3]).copied());
        assert_eq!(forward.to_bits(), backward.to_bits());
        assert_eq!(forward.to_bits(), rotated.to_bits());
    }

    #[test]
    fn stable_matrix_sum_is_order_invariant() {
        let terms: Vec<DMatrix<f64>> = (0..9)
            .map(|k| {
                DMatrix::from_fn(2, 3, |r, c| {
                    ((k * 7 + r * 3 + c) as f64).sin() * 10f64.powi((k % 5) as i32 * 3 - 6)
                })
            })
            .collect();
        let reversed: Vec<DMatrix<f64>> = terms.iter().rev().cloned().collect();
        let a = stable_matrix_sum(&terms);
        let b = stable_matrix_sum(&reversed);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn cholesky_names_offending_matrix() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = cholesky_spd(&bad, "row_scale").unwrap_err();
        assert!(err.to_string().contains("row_scale"));
    }

    #[test]
    fn log_add_exp_matches_direct() {
        let v = log_add_exp(1.0, 2.0);
        assert!((v - (1.0f64.exp() + 2.0f64.exp()).ln()).abs() < 1e-14);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
