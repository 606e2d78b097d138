//! Dense linear algebra used by the kernel and ridge fits.

use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a square row-major matrix,
/// reusable across right-hand sides.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a` (consumed as scratch space) as `P a = L U`.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Lu> {
        if a.len() != n * n {
            return Err(Error::ShapeError(format!(
                "matrix of {} entries cannot be {n}x{n}",
                a.len()
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot = col;
            for row in col + 1..n {
                if a[row * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = row;
                }
            }
            if a[pivot * n + col].abs() < 1e-300 {
                return Err(Error::ShapeError("singular system in surrogate fit".into()));
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                perm.swap(col, pivot);
            }
            let inv = 1.0 / a[col * n + col];
            for row in col + 1..n {
                let factor = a[row * n + col] * inv;
                a[row * n + col] = factor;
                if factor == 0.0 {
                    continue;
                }
                for k in col + 1..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    /// Solves `a x = b` using the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::ShapeError(format!(
                "right-hand side has {} entries, expected {n}",
                b.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for col in 0..n {
            for row in col + 1..n {
                x[row] -= self.lu[row * n + col] * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for k in col + 1..n {
                acc -= self.lu[col * n + k] * x[k];
            }
            x[col] = acc / self.lu[col * n + col];
        }
        Ok(x)
    }
}

/// One-shot solve of `a x = b` for square row-major `a`.
pub fn solve(a: Vec<f64>, b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    Lu::factor(a, n)?.solve(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_small_system() {
        // [2 1; 1 3] x = [5; 10] has solution [1; 3].
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![5.0, 10.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let x = solve(vec![0.0, 1.0, 1.0, 0.0], vec![2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_singular_matrix() {
        assert!(solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn factorization_reusable_across_right_hand_sides() {
        let lu = Lu::factor(vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0], 3).unwrap();
        let x = lu.solve(&[5.0, 5.0, 3.0]).unwrap();
        let y = lu.solve(&[4.0, 1.0, 0.0]).unwrap();
        // Verify by substitution.
        assert_abs_diff_eq!(4.0 * x[0] + x[1], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0] + 3.0 * x[1] + x[2], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1] + 2.0 * x[2], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(4.0 * y[0] + y[1], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[0] + 3.0 * y[1] + y[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1] + 2.0 * y[2], 0.0, epsilon = 1e-12);
    }
}
