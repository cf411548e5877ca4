//! Local Gaussian moments and log-density.
//!
//! `Σ(Δ) = D_Δ Σ₁ D_Δ` with `D_Δ = diag(√Δ·I_{d_R}, √Δ³·I_{d_S})`, so every
//! factorisation is done once on the unit-time covariance `Σ₁`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{check_finite, Dims, LocalTerms, Model};

/// Options for building [`GaussianMoments`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussOptions {
    /// Added to the diagonal of `Σ₁` before factorising. Zero means a
    /// non-positive-definite covariance is a hard error.
    pub jitter: f64,
    /// Use the closed-form inverse for stochastic damping Hamiltonian models.
    pub sdhs_fast_path: bool,
}

impl Default for GaussOptions {
    fn default() -> Self {
        GaussOptions { jitter: 0.0, sdhs_fast_path: true }
    }
}

/// Mean and covariance of one local Gaussian step from `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMoments {
    pub dims: Dims,
    pub delta: f64,
    /// `μ(Δ, x; θ)`.
    pub mu: Vec<f64>,
    /// `Σ(Δ, x; θ)`, row-major.
    pub sigma: Vec<f64>,
    /// `Σ₁(x; θ) = Σ(1, x; θ)`.
    pub sigma1: Vec<f64>,
    pub sigma1_inv: Vec<f64>,
    pub logdet_sigma1: f64,
    /// Lower Cholesky factor of `Σ₁`.
    pub chol1: Vec<f64>,
    /// Lower Cholesky factor of `Σ`.
    pub chol: Vec<f64>,
}

/// Unit-time covariance with its factorisation.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitCovariance {
    pub dims: Dims,
    pub sigma1: Vec<f64>,
    pub chol1: Vec<f64>,
    pub inv: Vec<f64>,
    pub logdet: f64,
}

impl UnitCovariance {
    /// Factorises `Σ₁` assembled from first-level coefficients.
    pub fn from_local_terms(lt: &LocalTerms, jitter: f64) -> Result<Self> {
        let dims = lt.dims;
        let d = if dims.is_elliptic() { dims.rough } else { dims.total() };
        let mut sigma1 = vec![0.0; d * d];
        if dims.is_elliptic() {
            sigma1.copy_from_slice(&lt.a_r());
        } else {
            lt.sigma1(&mut sigma1);
        }
        for i in 0..d {
            sigma1[i * d + i] += jitter;
        }
        let chol1 = linalg::cholesky(&sigma1, d)?;
        let inv = linalg::cholesky_inverse(&chol1, d);
        let logdet = linalg::cholesky_logdet(&chol1, d);
        Ok(UnitCovariance { dims, sigma1, chol1, inv, logdet })
    }

    /// Closed form for a damping Hamiltonian model with noise scales `σ`:
    /// per channel `Σ₁ = σ²[[1, ½], [½, ⅓]]` and `Σ₁⁻¹ = σ⁻²[[4, −6], [−6, 12]]`.
    pub fn sdhs(noise: &[f64], jitter: f64) -> Result<Self> {
        if jitter != 0.0 {
            return Err(Error::InvalidArgument("jitter is not supported by the closed-form covariance".into()));
        }
        let h = noise.len();
        let d = 2 * h;
        let dims = Dims::new(h, h);
        let mut sigma1 = vec![0.0; d * d];
        let mut chol1 = vec![0.0; d * d];
        let mut inv = vec![0.0; d * d];
        let mut logdet = 0.0;
        for (i, &s) in noise.iter().enumerate() {
            let s2 = s * s;
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: s2 });
            }
            let (r, q) = (i, h + i);
            sigma1[r * d + r] = s2;
            sigma1[r * d + q] = 0.5 * s2;
            sigma1[q * d + r] = 0.5 * s2;
            sigma1[q * d + q] = s2 / 3.0;
            chol1[r * d + r] = s.abs();
            chol1[q * d + r] = 0.5 * s.abs();
            chol1[q * d + q] = s.abs() / (2.0 * 3f64.sqrt());
            inv[r * d + r] = 4.0 / s2;
            inv[r * d + q] = -6.0 / s2;
            inv[q * d + r] = -6.0 / s2;
            inv[q * d + q] = 12.0 / s2;
            logdet += (s2 * s2 / 12.0).ln();
        }
        Ok(UnitCovariance { dims, sigma1, chol1, inv, logdet })
    }

    fn dim(&self) -> usize {
        if self.dims.is_elliptic() {
            self.dims.rough
        } else {
            self.dims.total()
        }
    }
}

/// `√Δ` on rough and `√Δ³` on smooth coordinates.
pub fn scaling(dims: Dims, delta: f64) -> Vec<f64> {
    let sd = delta.sqrt();
    let mut s = vec![sd; dims.rough];
    s.extend(std::iter::repeat_n(sd * delta, dims.smooth));
    s
}

impl GaussianMoments {
    /// Local Gaussian mean and covariance from precomputed coefficients.
    pub fn new(lt: &LocalTerms, unit: UnitCovariance, x: &[f64], delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {delta}")));
        }
        let dims = lt.dims;
        let d = unit.dim();
        if x.len() != d {
            return Err(Error::Dimension(format!("state has length {}, expected {d}", x.len())));
        }
        let dr = dims.rough;
        let mut mu = vec![0.0; d];
        for i in 0..d {
            mu[i] = x[i] + lt.drift[i] * delta;
        }
        for s in 0..dims.smooth {
            mu[dr + s] += lt.hat0_vs0[s] * 0.5 * delta * delta;
        }
        let sc = scaling(dims, delta);
        let mut sigma = vec![0.0; d * d];
        let mut chol = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                sigma[i * d + j] = sc[i] * unit.sigma1[i * d + j] * sc[j];
                chol[i * d + j] = sc[i] * unit.chol1[i * d + j];
            }
        }
        check_finite("local Gaussian mean", &mu)?;
        Ok(GaussianMoments {
            dims,
            delta,
            mu,
            sigma,
            sigma1: unit.sigma1,
            sigma1_inv: unit.inv,
            logdet_sigma1: unit.logdet,
            chol1: unit.chol1,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `log |Σ(Δ)| = log |Σ₁| + (d_R + 3 d_S) log Δ`.
    pub fn logdet_sigma(&self) -> f64 {
        self.logdet_sigma1 + (self.dims.rough + 3 * self.dims.smooth) as f64 * self.delta.ln()
    }
}

/// Local Gaussian moments with default options.
pub fn lg_moments<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64) -> Result<GaussianMoments> {
    lg_moments_with(model, x, theta, delta, &GaussOptions::default())
}

pub fn lg_moments_with<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    theta: &[f64],
    delta: f64,
    opts: &GaussOptions,
) -> Result<GaussianMoments> {
    let dims = model.dims();
    if x.len() != dims.total() {
        return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), dims.total())));
    }
    check_finite("state", x)?;
    let mut lt = LocalTerms::zeros(dims);
    model.local_terms(x, theta, &mut lt)?;
    let unit = unit_covariance(model, &lt, theta, opts)?;
    GaussianMoments::new(&lt, unit, x, delta)
}

/// `Σ₁` for `model`, through the closed form when allowed and available.
pub fn unit_covariance<M: Model + ?Sized>(
    model: &M,
    lt: &LocalTerms,
    theta: &[f64],
    opts: &GaussOptions,
) -> Result<UnitCovariance> {
    match model.sdhs() {
        Some(form) if opts.sdhs_fast_path && opts.jitter == 0.0 => {
            let mut noise = vec![0.0; form.half_dim()];
            form.noise_at(theta, &mut noise);
            UnitCovariance::sdhs(&noise, 0.0)
        }
        _ => UnitCovariance::from_local_terms(lt, opts.jitter),
    }
}

/// `m = D_Δ⁻¹ (y − μ)`: rough coordinates scaled by `√Δ`, smooth by `√Δ³`.
pub fn normalized_residual(m: &GaussianMoments, y: &[f64]) -> Vec<f64> {
    let sc = scaling(m.dims, m.delta);
    y.iter().zip(&m.mu).zip(&sc).map(|((y, mu), s)| (y - mu) / s).collect()
}

/// Log-density of `N(μ, Σ)` at `y`, evaluated through `Σ₁`.
pub fn lg_logdensity(m: &GaussianMoments, y: &[f64]) -> f64 {
    let d = m.dim();
    let r = normalized_residual(m, y);
    let mut work = vec![0.0; d];
    let q = linalg::cholesky_quad_form(&m.chol1, d, &r, &mut work);
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + m.logdet_sigma() + q)
}

/// Same density evaluated directly with the factor of `Σ(Δ)`.
pub fn lg_logdensity_direct(m: &GaussianMoments, y: &[f64]) -> f64 {
    let d = m.dim();
    let r: Vec<f64> = y.iter().zip(&m.mu).map(|(y, mu)| y - mu).collect();
    let mut work = vec![0.0; d];
    let q = linalg::cholesky_quad_form(&m.chol, d, &r, &mut work);
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + linalg::cholesky_logdet(&m.chol, d) + q)
}
