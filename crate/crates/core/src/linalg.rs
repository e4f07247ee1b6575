//! Dense solves for `(I - γ M) x = b` with `M` row-stochastic (or its
//! transpose). Direct LU up to [`DIRECT_SOLVE_LIMIT`] unknowns, fixed-point
//! iteration above it. Both are well posed for `γ < 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DIRECT_SOLVE_LIMIT: usize = 2000;
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Solves `x = b + γ M x` (or `x = b + γ Mᵀ x` when `transpose`), where `m`
/// is an `n × n` row-major matrix.
pub fn solve_discounted(m: &[f64], n: usize, gamma: f64, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
    if m.len() != n * n || b.len() != n {
        return Err(Error::Dimension(format!(
            "system of size {n} with matrix len {} and rhs len {}",
            m.len(),
            b.len()
        )));
    }
    if n <= DIRECT_SOLVE_LIMIT {
        solve_direct(m, n, gamma, b, transpose)
    } else {
        solve_fixed_point(m, n, gamma, b, transpose, FIXED_POINT_TOL)
    }
}

fn solve_direct(m: &[f64], n: usize, gamma: f64, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let a = DMatrix::from_fn(n, n, |i, j| {
        let mij = if transpose { m[j * n + i] } else { m[i * n + j] };
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * mij
    });
    let rhs = DVector::from_column_slice(b);
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular (I - γP) system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite solution".into()));
    }
    Ok(x.iter().copied().collect())
}

pub fn solve_fixed_point(
    m: &[f64],
    n: usize,
    gamma: f64,
    b: &[f64],
    transpose: bool,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut x = b.to_vec();
    let mut next = vec![0.0; n];
    // contraction factor γ: the iterate error after k steps is ≤ γ^k ‖b‖/(1-γ)
    let max_iter = if gamma == 0.0 {
        1
    } else {
        ((tol.ln() - 8.0 * std::f64::consts::LN_10) / gamma.ln()).ceil() as usize + 10
    };
    for _ in 0..max_iter {
        next.copy_from_slice(b);
        if transpose {
            for i in 0..n {
                let xi = gamma * x[i];
                if xi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    next[j] += xi * m[i * n + j];
                }
            }
        } else {
            for i in 0..n {
                let row = &m[i * n..(i + 1) * n];
                next[i] += gamma * row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let diff = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if diff <= tol {
            return Ok(x);
        }
    }
    Err(Error::Numerical("fixed-point iteration did not converge".into()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_and_fixed_point_agree() {
        let m = [0.2, 0.8, 0.0, 0.5, 0.0, 0.5, 0.1, 0.1, 0.8];
        let b = [0.3, 0.1, 0.6];
        for transpose in [false, true] {
            let d = solve_direct(&m, 3, 0.9, &b, transpose).unwrap();
            let f = solve_fixed_point(&m, 3, 0.9, &b, transpose, 1e-14).unwrap();
            assert!(max_abs_diff(&d, &f) < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            solve_discounted(&[1.0; 3], 2, 0.5, &[1.0, 1.0], false),
            Err(Error::Dimension(_))
        ));
    }
}
