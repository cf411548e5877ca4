//! Dense helpers for the small row-major matrices used throughout (d ≤ 6).

use crate::error::{Error, Result};

/// In-place lower Cholesky factor of a symmetric positive definite `n×n`
/// matrix. The strict upper triangle of the result is zeroed.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= a[j * n + k] * a[j * n + k];
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: s });
        }
        let l = s.sqrt();
        a[j * n + j] = l;
        for i in (j + 1)..n {
            let mut t = a[i * n + j];
            for k in 0..j {
                t -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = t / l;
        }
        for k in (j + 1)..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = a.to_vec();
    cholesky_in_place(&mut l, n)?;
    Ok(l)
}

/// Solves `L z = b` in place.
pub fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ z = b` in place.
pub fn backward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `A z = b` in place given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    forward_solve(l, n, b);
    backward_solve(l, n, b);
}

/// `log det A` from its Cholesky factor.
pub fn cholesky_logdet(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| l[i * n + i].ln()).sum::<f64>() * 2.0
}

/// `A⁻¹` from its Cholesky factor, exactly symmetrised.
pub fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        cholesky_solve(l, n, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    inv
}

/// `bᵀ A⁻¹ b` given the Cholesky factor of `A`; `work` has length `n`.
pub fn cholesky_quad_form(l: &[f64], n: usize, b: &[f64], work: &mut [f64]) -> f64 {
    work[..n].copy_from_slice(&b[..n]);
    forward_solve(l, n, work);
    work[..n].iter().map(|z| z * z).sum()
}

/// `y = A x` for `A` of shape `r×c`.
pub fn mat_vec(a: &[f64], r: usize, c: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..r {
        y[i] = (0..c).map(|j| a[i * c + j] * x[j]).sum();
    }
}

/// `A B` for `A` of shape `r×k` and `B` of shape `k×c`.
pub fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let a_il = a[i * k + l];
            if a_il == 0.0 {
                continue;
            }
            for j in 0..c {
                out[i * c + j] += a_il * b[l * c + j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut t = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            t[j * r + i] = a[i * c + j];
        }
    }
    t
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_sdhs_unit_covariance() {
        let a = [1.0, 0.5, 0.5, 1.0 / 3.0];
        let l = cholesky(&a, 2).unwrap();
        let inv = cholesky_inverse(&l, 2);
        let expect = [4.0, -6.0, -6.0, 12.0];
        assert!(max_abs_diff(&inv, &expect) < 1e-12);
        assert!((cholesky_logdet(&l, 2) + 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let a = [1.0, 2.0, 2.0, 1.0];
        match cholesky(&a, 2) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quad_form_matches_inverse() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let l = cholesky(&a, 3).unwrap();
        let b = [0.3, -1.2, 0.7];
        let mut w = [0.0; 3];
        let q = cholesky_quad_form(&l, 3, &b, &mut w);
        let inv = cholesky_inverse(&l, 3);
        let mut ib = [0.0; 3];
        mat_vec(&inv, 3, 3, &b, &mut ib);
        let q2: f64 = b.iter().zip(&ib).map(|(x, y)| x * y).sum();
        assert!((q - q2).abs() < 1e-12);
    }
}
