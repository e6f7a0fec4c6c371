//! Dense exact linear solves by fraction-free (Bareiss) elimination.
//!
//! Each equation is first scaled to integer coefficients; elimination then
//! stays in the integers, and only the final back substitution produces
//! rationals.

use num::{BigInt, BigRational, One, Zero};

use crate::rational::common_denominator;

/// Solve `matrix * x = rhs`. Returns `None` when the system is singular.
pub fn solve(matrix: &[Vec<BigRational>], rhs: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = matrix.len();
    assert_eq!(rhs.len(), n, "rhs length must match the number of equations");
    if n == 0 {
        return Some(Vec::new());
    }

    let mut m: Vec<Vec<BigInt>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            assert_eq!(row.len(), n, "matrix must be square");
            let scale = common_denominator(row.iter().chain(std::iter::once(b)));
            row.iter()
                .chain(std::iter::once(b))
                .map(|r| r.numer() * (&scale / r.denom()))
                .collect()
        })
        .collect();

    let mut prev = BigInt::one();
    for k in 0..n {
        let pivot = (k..n).find(|&i| !m[i][k].is_zero())?;
        m.swap(k, pivot);
        let (upper, lower) = m.split_at_mut(k + 1);
        let pivot_row = &upper[k];
        for row in lower.iter_mut() {
            let factor = row[k].clone();
            for j in (k + 1)..=n {
                let value = &row[j] * &pivot_row[k] - &factor * &pivot_row[j];
                row[j] = value / &prev;
            }
            row[k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }

    let mut x = vec![BigRational::zero(); n];
    for i in (0..n).rev() {
        let mut acc = BigRational::from_integer(m[i][n].clone());
        for j in (i + 1)..n {
            if !m[i][j].is_zero() {
                acc -= &x[j] * BigRational::from_integer(m[i][j].clone());
            }
        }
        x[i] = acc / BigRational::from_integer(m[i][i].clone());
    }
    Some(x)
}
