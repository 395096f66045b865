//! Matrix permanents for the detector-mode interference calculus.
//!
//! Click-pattern amplitudes of indistinguishable photons routed through the
//! balanced detector network are permanents of submatrices of the network
//! matrix, so these only ever run on tiny inputs. Two independent algorithms
//! are kept on purpose: the O(n!) permutation sum is the obviously-correct
//! reference, Ryser's inclusion-exclusion formula covers sizes where n! starts
//! to sting, and the tests hold them against each other.

use num_complex::Complex64;

use super::{HilbertError, MAX_PERMANENT_SIZE};

/// Permanent of a dense row-major `n x n` complex matrix.
///
/// Dispatches to the permutation sum for `n <= 4` and to Ryser's formula for
/// `5 <= n <= 6`; larger inputs are refused rather than silently slow.
pub fn permanent(matrix: &[Complex64], n: usize) -> Result<Complex64, HilbertError> {
    check_shape(matrix.len(), n)?;
    if n <= 4 {
        Ok(permanent_permutation_sum(matrix, n))
    } else {
        Ok(permanent_ryser(matrix, n))
    }
}

/// Exact permanent of an integer matrix, used for the ±1 sign submatrices of
/// the detector network where float rounding would be an embarrassment.
pub fn permanent_int(matrix: &[i64], n: usize) -> Result<i64, HilbertError> {
    check_shape(matrix.len(), n)?;
    let mut cols = [0usize; MAX_PERMANENT_SIZE];
    for (i, c) in cols.iter_mut().take(n).enumerate() {
        *c = i;
    }
    let mut total = 0i64;
    permute_int(matrix, n, &mut cols, 0, &mut total);
    Ok(total)
}

fn permute_int(matrix: &[i64], n: usize, cols: &mut [usize; MAX_PERMANENT_SIZE], row: usize, total: &mut i64) {
    if row == n {
        let mut product = 1i64;
        for (r, &c) in cols.iter().take(n).enumerate() {
            product *= matrix[r * n + c];
        }
        *total += product;
        return;
    }
    for swap in row..n {
        cols.swap(row, swap);
        permute_int(matrix, n, cols, row + 1, total);
        cols.swap(row, swap);
    }
}

/// Direct sum over all column permutations; reference implementation.
pub fn permanent_permutation_sum(matrix: &[Complex64], n: usize) -> Complex64 {
    if n == 0 {
        return Complex64::ONE;
    }
    let mut cols: Vec<usize> = (0..n).collect();
    let mut total = Complex64::ZERO;
    permute_c64(matrix, n, &mut cols, 0, &mut total);
    total
}

fn permute_c64(matrix: &[Complex64], n: usize, cols: &mut Vec<usize>, row: usize, total: &mut Complex64) {
    if row == n {
        let mut product = Complex64::ONE;
        for (r, &c) in cols.iter().enumerate() {
            product *= matrix[r * n + c];
        }
        *total += product;
        return;
    }
    for swap in row..n {
        cols.swap(row, swap);
        permute_c64(matrix, n, cols, row + 1, total);
        cols.swap(row, swap);
    }
}

/// Ryser's inclusion-exclusion formula,
/// `per(A) = (-1)^n Σ_{∅≠S⊆[n]} (-1)^{|S|} Π_i Σ_{j∈S} a_ij`.
pub fn permanent_ryser(matrix: &[Complex64], n: usize) -> Complex64 {
    if n == 0 {
        return Complex64::ONE;
    }
    let mut total = Complex64::ZERO;
    for subset in 1u32..(1 << n) {
        let mut product = Complex64::ONE;
        for row in 0..n {
            let mut row_sum = Complex64::ZERO;
            for col in 0..n {
                if subset & (1 << col) != 0 {
                    row_sum += matrix[row * n + col];
                }
            }
            product *= row_sum;
        }
        if (n as u32 - subset.count_ones()) % 2 == 0 {
            total += product;
        } else {
            total -= product;
        }
    }
    total
}

fn check_shape(len: usize, n: usize) -> Result<(), HilbertError> {
    if n > MAX_PERMANENT_SIZE {
        return Err(HilbertError::PermanentTooLarge { n, max: MAX_PERMANENT_SIZE });
    }
    if len != n * n {
        return Err(HilbertError::MatrixShape { n, expected: n * n, got: len });
    }
    Ok(())
}
