//! Density-expansion corrections around the local Gaussian density and the
//! transition-density approximations built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{self, GaussianMoments};
use crate::hermite::HermiteContext;
use crate::model::{derived_coefficients, eval_coefficients, DerivedCoefficients, Model, Order};
use crate::par::{self, Execution};

/// Writes `G(x; θ)` (row-major `d × d`, `d = d_R` for elliptic models).
///
/// Elliptic models need second-order compositions; hypo-elliptic models
/// also need the third-order `V̂_0 V̂_k V_{S,0}` and `V̂_k V̂_0 V_{S,0}`.
pub fn g_matrix_from_derived(dc: &DerivedCoefficients<f64>, out: &mut [f64]) {
    let (dr, ds) = (dc.dims.rough, dc.dims.smooth);
    let d = dr + ds;
    out[..d * d].iter_mut().for_each(|v| *v = 0.0);
    let vr = |i: usize, k: usize| dc.field(k, i);
    for i1 in 0..dr {
        for i2 in 0..dr {
            let mut g = 0.0;
            for k in 1..=dr {
                g += 0.5 * (dc.hat_vr(k, 0, i1) + dc.hat_vr(0, k, i1)) * vr(i2, k);
                for k2 in 1..=dr {
                    g += 0.25 * dc.hat_vr(k, k2, i1) * dc.hat_vr(k, k2, i2);
                }
            }
            out[i1 * d + i2] = g;
        }
    }
    for i in 0..dr {
        for s in 0..ds {
            let mut g = 0.0;
            for k in 1..=dr {
                g += 0.5 * (dc.hat_vr(k, 0, i) / 3.0 + dc.hat_vr(0, k, i) / 6.0) * dc.hat_vs0(k, s);
                g += vr(i, k) * (dc.hathat_vs0(k, 0, s) + dc.hathat_vs0(0, k, s)) / 12.0;
                for k2 in 1..=dr {
                    g += dc.hat_vr(k, k2, i) * dc.hathat_vs0(k, k2, s) / 12.0;
                }
            }
            out[i * d + dr + s] = g;
            out[(dr + s) * d + i] = g;
        }
    }
    for s in 0..ds {
        for t in 0..ds {
            let mut g = 0.0;
            for k in 1..=dr {
                g += dc.hat_vs0(k, s) * (dc.hathat_vs0(0, k, t) / 6.0 + dc.hathat_vs0(k, 0, t) / 8.0);
                for k2 in 1..=dr {
                    g += dc.hathat_vs0(k, k2, s) * dc.hathat_vs0(k, k2, t) / 24.0;
                }
            }
            out[(dr + s) * d + dr + t] = g;
        }
    }
}

/// `Σ_{i,j} G_ij H_(i,j)`.
pub fn phi2_from_g(g: &[f64], h: &HermiteContext) -> f64 {
    let d = h.d;
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += g[i * d + j] * h.h2(i, j);
        }
    }
    s
}

/// Truncated `log(1 + z)`: `Σ_{l=1}^{6} (−1)^{l+1} z^l / l`.
pub fn k_trunc(z: f64) -> f64 {
    let mut p = 1.0;
    let mut s = 0.0;
    for l in 1..=6 {
        p *= z;
        let term = p / l as f64;
        s += if l % 2 == 1 { term } else { -term };
    }
    s
}

/// The three correction terms at one `(x, y)` together with `G`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectionTerms {
    pub psi1: f64,
    pub phi2: f64,
    pub psi_weak: f64,
    pub g_matrix: Vec<f64>,
}

/// Everything about the source point `x` needed to evaluate corrections and
/// densities at many targets `y`.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub moments: GaussianMoments,
    pub dc: DerivedCoefficients<f64>,
}

impl Prepared {
    pub fn new<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64) -> Result<Self> {
        let moments = gauss::lg_moments(model, x, theta, delta)?;
        let dc = derived_coefficients(model, x, theta, Order::Second)?;
        Ok(Prepared { moments, dc })
    }

    pub fn delta(&self) -> f64 {
        self.moments.delta
    }

    pub fn hermite(&self, y: &[f64]) -> HermiteContext {
        HermiteContext::new(&self.moments.sigma1_inv, &gauss::normalized_residual(&self.moments, y))
    }

    /// `Ψ₁` of the weak second-order scheme's density expansion.
    pub fn psi1(&self, h: &HermiteContext) -> f64 {
        let dc = &self.dc;
        let (dr, ds) = (dc.dims.rough, dc.dims.smooth);
        let d = dr + ds;
        // `V_j` on rough rows, `V̂_j V_{S,0}` on smooth rows.
        let v = |j: usize, i: usize| -> f64 {
            if i < dr {
                dc.field(j, i)
            } else {
                dc.hat_vs0(j, i - dr)
            }
        };
        let weight = |i2: usize, i3: usize| -> f64 {
            match (i2 < dr, i3 < dr) {
                (true, true) => 0.5,
                (false, true) => 1.0 / 3.0,
                (true, false) => 1.0 / 6.0,
                (false, false) => 0.125,
            }
        };
        let mut total = 0.0;
        for j1 in 1..=dr {
            for j2 in 1..=dr {
                for i1 in 0..d {
                    let coef = if i1 < dr { dc.hat_vr(j1, j2, i1) } else { dc.hathat_vs0(j1, j2, i1 - dr) / 3.0 };
                    if coef == 0.0 {
                        continue;
                    }
                    let mut tilde = 0.0;
                    for i2 in 0..d {
                        let a = v(j1, i2);
                        if a == 0.0 {
                            continue;
                        }
                        for i3 in 0..d {
                            tilde += weight(i2, i3) * a * v(j2, i3) * h.h3(i1, i2, i3);
                        }
                    }
                    total += coef * tilde;
                }
            }
        }
        total
    }

    /// `Ψ^weak = √Δ Ψ₁^weak + Δ Ψ₂^weak + √Δ³ Ψ₃^weak`, every sum over rough
    /// indices only.
    pub fn psi_weak(&self, h: &HermiteContext) -> f64 {
        let dc = &self.dc;
        let dr = dc.dims.rough;
        let delta = self.delta();
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        let mut p3 = 0.0;
        for i1 in 0..dr {
            for k1 in 1..=dr {
                for k2 in 1..=dr {
                    let c = dc.hat_vr(k1, k2, i1);
                    if c == 0.0 {
                        continue;
                    }
                    for i2 in 0..dr {
                        for i3 in 0..dr {
                            p1 += c * dc.field(k1, i2) * dc.field(k2, i3) * h.h3(i1, i2, i3);
                        }
                    }
                }
            }
            for i2 in 0..dr {
                let mut g = 0.0;
                for k in 1..=dr {
                    g += 0.5 * (dc.hat_vr(k, 0, i1) + dc.hat_vr(0, k, i1)) * dc.field(k, i2);
                    for k2 in 1..=dr {
                        g += 0.25 * dc.hat_vr(k, k2, i1) * dc.hat_vr(k, k2, i2);
                    }
                }
                p2 += g * h.h2(i1, i2);
            }
            p3 += 0.5 * dc.hat_vr(0, 0, i1) * h.h1(i1);
        }
        delta.sqrt() * 0.5 * p1 + delta * p2 + delta * delta.sqrt() * p3
    }

    /// Local Gaussian log-density at `y`.
    pub fn lg_logdensity(&self, y: &[f64]) -> f64 {
        gauss::lg_logdensity(&self.moments, y)
    }

    /// `p^LG (1 + Ψ^weak)`; may be negative.
    pub fn density_i(&self, y: &[f64]) -> f64 {
        let h = self.hermite(y);
        self.lg_logdensity(y).exp() * (1.0 + self.psi_weak(&h))
    }

    /// `log p^LG + K(Ψ^weak)`.
    pub fn log_density_ii(&self, y: &[f64]) -> f64 {
        let h = self.hermite(y);
        self.lg_logdensity(y) + k_trunc(self.psi_weak(&h))
    }

    pub fn density_ii(&self, y: &[f64]) -> f64 {
        self.log_density_ii(y).exp()
    }

    pub fn density(&self, base: DensityBase, y: &[f64]) -> f64 {
        match base {
            DensityBase::Em => self.lg_logdensity(y).exp(),
            DensityBase::I => self.density_i(y),
            DensityBase::II => self.density_ii(y),
        }
    }
}

/// `Ψ₁(Δ, x, y; θ)`.
pub fn psi1<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64, y: &[f64]) -> Result<f64> {
    let p = Prepared::new(model, x, theta, delta)?;
    Ok(p.psi1(&p.hermite(y)))
}

/// `G(x; θ)` through the model's closed form when it has one.
pub fn g_matrix<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let dims = model.dims();
    let d = dims.total();
    let mut g = vec![0.0; d * d];
    model.g_matrix(x, theta, &mut g)?;
    Ok(g)
}

/// `Φ₂(Δ, x, y; θ) = Σ G_ij H_(i,j)`.
pub fn phi2<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64, y: &[f64]) -> Result<f64> {
    let m = gauss::lg_moments(model, x, theta, delta)?;
    let g = g_matrix(model, x, theta)?;
    let h = HermiteContext::new(&m.sigma1_inv, &gauss::normalized_residual(&m, y));
    Ok(phi2_from_g(&g, &h))
}

/// `Φ₂` from the damping-matrix form of a stochastic damping Hamiltonian
/// system: `−Σ c_{i₁i₂} σ_{i₂}² {½H_(i₁,i₂) + ⅓H_(i₁,i₂+d̄) + ⅙H_(i₁+d̄,i₂) + ⅛H_(i₁+d̄,i₂+d̄)}`.
pub fn phi2_sdhs<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64, y: &[f64]) -> Result<f64> {
    let form = model
        .sdhs()
        .ok_or_else(|| Error::Capability(format!("model '{}' has no damping Hamiltonian form", model.name())))?;
    let h = form.half_dim();
    let m = gauss::lg_moments(model, x, theta, delta)?;
    let hc = HermiteContext::new(&m.sigma1_inv, &gauss::normalized_residual(&m, y));
    let mut c = vec![0.0; h * h];
    let mut s = vec![0.0; h];
    form.damping_at(&x[h..], theta, &mut c);
    form.noise_at(theta, &mut s);
    let mut total = 0.0;
    for i1 in 0..h {
        for i2 in 0..h {
            let w = c[i1 * h + i2] * s[i2] * s[i2];
            total -= w
                * (0.5 * hc.h2(i1, i2) + hc.h2(i1, i2 + h) / 3.0 + hc.h2(i1 + h, i2) / 6.0 + 0.125 * hc.h2(i1 + h, i2 + h));
        }
    }
    Ok(total)
}

/// `Ψ^weak(Δ, x, y; θ)`.
pub fn psi_weak<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64, y: &[f64]) -> Result<f64> {
    let p = Prepared::new(model, x, theta, delta)?;
    Ok(p.psi_weak(&p.hermite(y)))
}

pub fn correction_terms<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64, y: &[f64]) -> Result<CorrectionTerms> {
    let p = Prepared::new(model, x, theta, delta)?;
    let h = p.hermite(y);
    let g = g_matrix(model, x, theta)?;
    Ok(CorrectionTerms { psi1: p.psi1(&h), phi2: phi2_from_g(&g, &h), psi_weak: p.psi_weak(&h), g_matrix: g })
}

/// `p̄^I_Δ(x, y; θ) = p^LG (1 + Ψ^weak)`, returned as is even when negative.
pub fn density_scheme_i<M: Model + ?Sized>(model: &M, x: &[f64], y: &[f64], theta: &[f64], delta: f64) -> Result<f64> {
    Ok(Prepared::new(model, x, theta, delta)?.density_i(y))
}

/// `p̄^II_Δ(x, y; θ) = p^LG exp(K(Ψ^weak))`.
pub fn density_scheme_ii<M: Model + ?Sized>(model: &M, x: &[f64], y: &[f64], theta: &[f64], delta: f64) -> Result<f64> {
    Ok(Prepared::new(model, x, theta, delta)?.density_ii(y))
}

/// `log p̄^II_Δ(x, y; θ)`, without exponentiating the base density.
pub fn log_density_scheme_ii<M: Model + ?Sized>(model: &M, x: &[f64], y: &[f64], theta: &[f64], delta: f64) -> Result<f64> {
    Ok(Prepared::new(model, x, theta, delta)?.log_density_ii(y))
}

/// One-step density used inside the iterated convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DensityBase {
    /// Gaussian Euler–Maruyama density.
    #[serde(rename = "em")]
    Em,
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    II,
}

impl std::str::FromStr for DensityBase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" | "euler" => Ok(DensityBase::Em),
            "i" | "1" => Ok(DensityBase::I),
            "ii" | "2" => Ok(DensityBase::II),
            _ => Err(Error::Unknown { kind: "density base", name: s.to_string() }),
        }
    }
}

/// Quadrature settings of [`iterated_density`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterOptions {
    /// Grid points per stage.
    pub grid_points: usize,
    /// Half-width of each stage grid in marginal standard deviations.
    pub width_sd: f64,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions { grid_points: 2001, width_sd: 8.0 }
    }
}

/// Uniform grid with its trapezoid weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo);
        let h = (hi - lo) / (n - 1) as f64;
        let points = (0..n).map(|i| lo + h * i as f64).collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Grid { points, weights }
    }

    /// Trapezoid integral of sampled values.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let terms: Vec<f64> = self.weights.iter().zip(f).map(|(w, v)| w * v).collect();
        par::pairwise_sum(&terms)
    }
}

/// An `M`-fold iterated density on the final-stage grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IteratedDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
}

fn scalar_check<M: Model + ?Sized>(model: &M) -> Result<()> {
    let dims = model.dims();
    if dims.total() != 1 {
        return Err(Error::Dimension(format!("iterated densities need a scalar model, '{}' has d = {}", model.name(), dims.total())));
    }
    Ok(())
}

/// Grid covering the next stage: centre `m + δ V_0(m)`, half-width
/// `width · √(v + δ a(m))`.
fn next_grid<M: Model + ?Sized>(model: &M, theta: &[f64], m: f64, v: f64, step: f64, opts: &IterOptions) -> Result<Grid> {
    let (v0, vr) = eval_coefficients(model, &[m], theta)?;
    let centre = m + step * v0[0];
    let sd = (v + step * vr[0] * vr[0]).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::NonFinite { what: "stage spread", index: 0 });
    }
    Ok(Grid::uniform(centre - opts.width_sd * sd, centre + opts.width_sd * sd, opts.grid_points))
}

/// Convolution of `M` one-step densities of step `Δ/M` started at `x`,
/// returned on the last stage grid. Scalar models only.
#[allow(clippy::too_many_arguments)]
pub fn iterated_density_grid<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    x: f64,
    theta: &[f64],
    delta: f64,
    m_steps: usize,
    base: DensityBase,
    opts: &IterOptions,
) -> Result<IteratedDensity> {
    scalar_check(model)?;
    if m_steps == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let step = delta / m_steps as f64;
    let first = Prepared::new(model, &[x], theta, step)?;
    let mut grid = next_grid(model, theta, x, 0.0, step, opts)?;
    let mut values: Vec<f64> = grid.points.iter().map(|&z| first.density(base, &[z])).collect();
    for _ in 1..m_steps {
        let mass = grid.integrate(&values);
        let mean = grid.integrate(&grid.points.iter().zip(&values).map(|(z, f)| z * f).collect::<Vec<_>>()) / mass;
        let var = grid
            .integrate(&grid.points.iter().zip(&values).map(|(z, f)| (z - mean) * (z - mean) * f).collect::<Vec<_>>())
            / mass;
        let next = next_grid(model, theta, mean, var.max(0.0), step, opts)?;
        let sources = par::try_map(exec, grid.points.len(), |j| Prepared::new(model, &[grid.points[j]], theta, step))?;
        let coef: Vec<f64> = grid.weights.iter().zip(&values).map(|(w, f)| w * f).collect();
        let new_values = par::map(exec, next.points.len(), |i| {
            let y = [next.points[i]];
            let terms: Vec<f64> = sources.iter().zip(&coef).map(|(p, c)| c * p.density(base, &y)).collect();
            par::pairwise_sum(&terms)
        });
        grid = next;
        values = new_values;
    }
    Ok(IteratedDensity { grid, values })
}

/// `p̄^(M)_Δ(x, y; θ)` at a single `y`.
#[allow(clippy::too_many_arguments)]
pub fn iterated_density<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    x: f64,
    y: f64,
    theta: &[f64],
    delta: f64,
    m_steps: usize,
    base: DensityBase,
    opts: &IterOptions,
) -> Result<f64> {
    scalar_check(model)?;
    if m_steps == 1 {
        return Ok(Prepared::new(model, &[x], theta, delta)?.density(base, &[y]));
    }
    let prev = iterated_density_grid(exec, model, x, theta, delta * (m_steps - 1) as f64 / m_steps as f64, m_steps - 1, base, opts)?;
    let step = delta / m_steps as f64;
    let terms = par::try_map(exec, prev.grid.points.len(), |j| {
        let p = Prepared::new(model, &[prev.grid.points[j]], theta, step)?;
        Ok::<f64, Error>(prev.grid.weights[j] * prev.values[j] * p.density(base, &[y]))
    })?;
    Ok(par::pairwise_sum(&terms))
}

/// Exact OU transition `dX = −κX dt + σ dB`: mean and variance after `t`.
pub fn ou_transition_moments(kappa: f64, sigma: f64, x: f64, t: f64) -> (f64, f64) {
    let mean = x * (-kappa * t).exp();
    let var = if kappa.abs() < 1e-12 { sigma * sigma * t } else { sigma * sigma * (1.0 - (-2.0 * kappa * t).exp()) / (2.0 * kappa) };
    (mean, var)
}

/// Exact OU transition density.
pub fn ou_transition_density(kappa: f64, sigma: f64, x: f64, y: f64, t: f64) -> f64 {
    let (m, v) = ou_transition_moments(kappa, sigma, x, t);
    (-(y - m) * (y - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Row of the bias study: sup-grid error of each base against the exact
/// OU density.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasRow {
    pub m: usize,
    pub sup_error_i: f64,
    pub sup_error_ii: f64,
    pub sup_error_em: f64,
}

/// Sup-grid errors of the iterated densities of an OU model against its
/// exact transition, for each `M`.
#[allow(clippy::too_many_arguments)]
pub fn ou_bias_study<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    kappa: f64,
    sigma: f64,
    x: f64,
    delta: f64,
    ms: &[usize],
    opts: &IterOptions,
) -> Result<Vec<BiasRow>> {
    let theta = [kappa, sigma];
    let sup = |base: DensityBase, m: usize| -> Result<f64> {
        let it = iterated_density_grid(exec, model, x, &theta, delta, m, base, opts)?;
        Ok(it
            .grid
            .points
            .iter()
            .zip(&it.values)
            .map(|(&y, &v)| (v - ou_transition_density(kappa, sigma, x, y, delta)).abs())
            .fold(0.0, f64::max))
    };
    ms.iter()
        .map(|&m| {
            Ok(BiasRow { m, sup_error_i: sup(DensityBase::I, m)?, sup_error_ii: sup(DensityBase::II, m)?, sup_error_em: sup(DensityBase::Em, m)? })
        })
        .collect()
}

/// Least-squares slope of `log e` against `log M`, negated, so a bias of
/// order `M^{−p}` gives `p`.
pub fn decay_order(ms: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    -ls_slope(&xs, &ys)
}

/// Least-squares slope of `ys` on `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinModel};
    use std::collections::BTreeMap;

    fn model(name: &str) -> BuiltinModel {
        builtin_model(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn k_values() {
        assert_eq!(k_trunc(0.0), 0.0);
        assert!((k_trunc(1.0) - 0.616_666_666_666_666_7).abs() < 1e-15);
        assert!((k_trunc(2.0) + 5.6).abs() < 1e-12);
    }

    #[test]
    fn ou_psi3_contribution() {
        let m = model("ou");
        let p = Prepared::new(&m, &[1.0], &[1.0, 1.0], 0.25).unwrap();
        let h = p.hermite(&[1.0]);
        // √Δ³·½·V̂_0V_0·H_(1) = 0.03125 plus Δ·G·H_(1,1) = 0.25·(−½)(0.25 − 1).
        assert!((p.psi_weak(&h) - (0.03125 + 0.09375)).abs() < 1e-15);
        assert_eq!(p.psi1(&h), 0.0);
    }

    #[test]
    fn constant_coefficients_have_no_corrections() {
        let m = model("ou");
        let t = correction_terms(&m, &[0.7], &[0.0, 1.3], 0.3, &[0.1]).unwrap();
        assert_eq!((t.psi1, t.phi2, t.psi_weak), (0.0, 0.0, 0.0));
    }

    #[test]
    fn schemes_i_and_ii_approach_each_other() {
        let m = model("quadratic_noise");
        let th = m.default_theta();
        let gap = |delta: f64| {
            let mo = crate::gauss::lg_moments(&m, &[0.3], &th, delta).unwrap();
            let sd = mo.sigma[0].sqrt();
            (-60..=60)
                .map(|k| {
                    let y = [mo.mu[0] + k as f64 * 0.1 * sd];
                    let a = density_scheme_i(&m, &[0.3], &y, &th, delta).unwrap();
                    let b = density_scheme_ii(&m, &[0.3], &y, &th, delta).unwrap();
                    (a - b).abs()
                })
                .fold(0.0, f64::max)
        };
        let gaps: Vec<f64> = [0.4, 0.2, 0.1].map(gap).to_vec();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn quadratic_noise_psi1_vanishes_at_origin() {
        let m = model("quadratic_noise");
        let th = [0.0, 1.0];
        assert_eq!(psi1(&m, &[0.0], &th, 0.2, &[0.4]).unwrap(), 0.0);
        assert!(psi1(&m, &[0.5], &th, 0.2, &[0.4]).unwrap() != 0.0);
    }

    #[test]
    fn closed_g_matches_generic() {
        for name in ["fitzhugh_nagumo", "fitzhugh_nagumo_sdhs", "linear_sdhs", "jansen_rit"] {
            let m = model(name);
            let dims = Model::dims(&m);
            let d = dims.total();
            let th = m.default_theta();
            for r in 0..5 {
                let x: Vec<f64> = (0..d).map(|i| 0.3 * ((r * d + i) as f64).sin()).collect();
                let mut closed = vec![0.0; d * d];
                m.g_matrix(&x, &th, &mut closed).unwrap();
                let dc = derived_coefficients(&m, &x, &th, Order::Third).unwrap();
                let mut generic = vec![0.0; d * d];
                g_matrix_from_derived(&dc, &mut generic);
                let scale = generic.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                // G_SS may differ by an antisymmetric part; compare symmetrised.
                let sym = |g: &[f64]| -> Vec<f64> {
                    (0..d * d).map(|k| 0.5 * (g[k] + g[(k % d) * d + k / d])).collect()
                };
                assert!(crate::linalg::max_abs_diff(&sym(&closed), &sym(&generic)) < 1e-10 * scale, "{name}");
            }
        }
    }

    #[test]
    fn fn_phi2_printed_coefficients() {
        let m = model("fitzhugh_nagumo");
        let th = m.default_theta();
        let (eps, s2) = (th[2], th[4] * th[4]);
        let x = [0.4, -0.3];
        let q = 1.0 - 3.0 * x[1] * x[1];
        let y = [0.45, -0.28];
        let mom = gauss::lg_moments(&m, &x, &th, 0.05).unwrap();
        let h = HermiteContext::new(&mom.sigma1_inv, &gauss::normalized_residual(&mom, &y));
        let printed = -0.5 * s2 * h.h2(0, 0)
            + (s2 / (2.0 * eps) - s2 * q / (6.0 * eps * eps)) * h.h2(0, 1)
            + (-s2 / (8.0 * eps * eps) + s2 * q / (8.0 * eps.powi(3))) * h.h2(1, 1);
        let got = phi2(&m, &x, &th, 0.05, &y).unwrap();
        assert!((got - printed).abs() < 1e-10 * printed.abs().max(1.0), "{got} vs {printed}");
        let dc = derived_coefficients(&m, &x, &th, Order::Third).unwrap();
        let mut g = vec![0.0; 4];
        g_matrix_from_derived(&dc, &mut g);
        assert!((phi2_from_g(&g, &h) - printed).abs() < 1e-8 * printed.abs().max(1.0));
    }

    #[test]
    fn sdhs_phi2_matches_generic() {
        for name in ["fitzhugh_nagumo_sdhs", "jansen_rit", "linear_sdhs"] {
            let m = model(name);
            let d = Model::dims(&m).total();
            let th = m.default_theta();
            let x: Vec<f64> = (0..d).map(|i| 0.1 * i as f64).collect();
            let y: Vec<f64> = (0..d).map(|i| 0.1 * i as f64 + 0.01 * (i as f64).cos()).collect();
            let a = phi2(&m, &x, &th, 0.01, &y).unwrap();
            let b = phi2_sdhs(&m, &x, &th, 0.01, &y).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{name}: {a} vs {b}");
        }
        assert!(phi2_sdhs(&model("ou"), &[0.0], &[1.0, 1.0], 0.1, &[0.0]).is_err());
    }

    #[test]
    fn ou_exact_variance() {
        let (m, v) = ou_transition_moments(1.0, 1.0, 0.0, 0.5);
        assert_eq!(m, 0.0);
        assert!((v - 0.316_060_279_414_278_6).abs() < 1e-15);
    }

    #[test]
    fn iterated_single_step_is_one_step_density() {
        let m = model("ou");
        let th = [1.0, 1.0];
        let a = iterated_density(Execution::default(), &m, 0.2, 0.1, &th, 0.5, 1, DensityBase::I, &IterOptions::default()).unwrap();
        let b = density_scheme_i(&m, &[0.2], &[0.1], &th, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(iterated_density(Execution::default(), &model("fitzhugh_nagumo"), 0.0, 0.0, &th, 0.5, 2, DensityBase::I, &IterOptions::default())
            .is_err());
    }
}
