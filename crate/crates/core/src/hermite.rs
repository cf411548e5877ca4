//! Hermite polynomials of the unit-time local Gaussian law, up to order 3.
//!
//! `H_α(ξ) = (−1)^{|α|} ∂_α p(ξ) / p(ξ)` for `p` the `N(0, Σ₁)` density,
//! evaluated at the normalised residual `ξ = m`.

/// Inverse unit-time covariance and normalised residual.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteContext {
    pub d: usize,
    /// `Σ₁⁻¹`, row-major.
    pub sigma1_inv: Vec<f64>,
    pub m: Vec<f64>,
    h1: Vec<f64>,
}

impl HermiteContext {
    pub fn new(sigma1_inv: &[f64], m: &[f64]) -> Self {
        let d = m.len();
        assert_eq!(sigma1_inv.len(), d * d, "Σ₁⁻¹ must be d × d");
        let h1 = (0..d).map(|i| (0..d).map(|j| sigma1_inv[i * d + j] * m[j]).sum()).collect();
        HermiteContext { d, sigma1_inv: sigma1_inv.to_vec(), m: m.to_vec(), h1 }
    }

    #[inline]
    pub fn inv(&self, i: usize, j: usize) -> f64 {
        self.sigma1_inv[i * self.d + j]
    }

    /// `H_(i)`.
    #[inline]
    pub fn h1(&self, i: usize) -> f64 {
        self.h1[i]
    }

    /// `H_(i,j)`.
    #[inline]
    pub fn h2(&self, i: usize, j: usize) -> f64 {
        self.h1[i] * self.h1[j] - self.inv(i, j)
    }

    /// `H_(i,j,k)`.
    #[inline]
    pub fn h3(&self, i: usize, j: usize, k: usize) -> f64 {
        let h = &self.h1;
        h[i] * h[j] * h[k] - self.inv(i, j) * h[k] - self.inv(i, k) * h[j] - self.inv(j, k) * h[i]
    }
}

/// All first-order polynomials.
pub fn hermite1(ctx: &HermiteContext) -> Vec<f64> {
    ctx.h1.clone()
}

/// All second-order polynomials, row-major `d × d`.
pub fn hermite2(ctx: &HermiteContext) -> Vec<f64> {
    let d = ctx.d;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = ctx.h2(i, j);
        }
    }
    out
}

/// All third-order polynomials at `[(i*d + j)*d + k]`.
pub fn hermite3(ctx: &HermiteContext) -> Vec<f64> {
    let d = ctx.d;
    let mut out = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                out[(i * d + j) * d + k] = ctx.h3(i, j, k);
            }
        }
    }
    out
}
