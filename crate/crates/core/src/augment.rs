//! Bayesian data augmentation with a non-centred parameterisation and a
//! fixed-step Hamiltonian Monte Carlo sampler.
//!
//! The latent vector `q = [u, u₀, v]` is a priori standard normal. `u` maps
//! to the free parameters, `u₀` to the free initial-state coordinates, and
//! `v` holds the standard normals consumed by the imputing scheme, `δ = Δ/M`
//! per step. The path is a deterministic function of `q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Sde;
use crate::real::{Dual, Real};
use crate::scheme::{self, SchemeId};
use crate::variates::{normals_per_step, SeededRng, VariateBundle};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Map from a standard-normal whitening variable to a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorTransform {
    /// `θ = μ + s u`.
    Identity,
    /// `θ = exp(μ + s u)`.
    Log,
}

/// Prior of one model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamPrior {
    Fixed(f64),
    Normal { transform: PriorTransform, mean: f64, sd: f64 },
}

/// Prior of one initial-state coordinate, `x₀[coord] = mean + sd u₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitPrior {
    pub name: String,
    pub coord: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Priors over parameters (in layout order) and the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub params: Vec<ParamPrior>,
    /// Initial state; coordinates listed in `init` are overwritten.
    pub x0: Vec<f64>,
    pub init: Vec<InitPrior>,
}

impl PriorSpec {
    pub fn n_free_params(&self) -> usize {
        self.params.iter().filter(|p| matches!(p, ParamPrior::Normal { .. })).count()
    }

    /// Parameters and `dθ_i/du` for each free parameter, in layout order.
    pub fn theta(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut it = u.iter();
        let mut theta = Vec::with_capacity(self.params.len());
        let mut jac = Vec::new();
        for p in &self.params {
            match *p {
                ParamPrior::Fixed(v) => theta.push(v),
                ParamPrior::Normal { transform, mean, sd } => {
                    let z = mean + sd * it.next().copied().unwrap_or(0.0);
                    let (v, dv) = match transform {
                        PriorTransform::Identity => (z, sd),
                        PriorTransform::Log => (z.exp(), sd * z.exp()),
                    };
                    theta.push(v);
                    jac.push(dv);
                }
            }
        }
        (theta, jac)
    }

    pub fn initial_state(&self, u0: &[f64]) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (p, &u) in self.init.iter().zip(u0) {
            x[p.coord] = p.mean + p.sd * u;
        }
        x
    }
}

/// `Y_j = h(X_{jΔ}) + σ_y ε_j`, `j = 0, …, n`, where `h` reads one
/// coordinate, exponentiated when the state is on the log scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyObservations {
    pub delta: f64,
    pub values: Vec<f64>,
    pub coord: usize,
    pub exp_scale: bool,
    pub noise_sd: f64,
}

impl NoisyObservations {
    fn h(&self, x: &[f64]) -> (f64, f64) {
        let z = x[self.coord];
        if self.exp_scale {
            (z.exp(), z.exp())
        } else {
            (z, 1.0)
        }
    }
}

/// Sizes of the blocks of `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AugmentedLayout {
    pub n_u: usize,
    pub n_u0: usize,
    pub n_intervals: usize,
    /// Imputation steps per observation interval.
    pub m: usize,
    /// Normals stored in `v` per step.
    pub per_step: usize,
}

impl AugmentedLayout {
    pub fn n_steps(&self) -> usize {
        self.n_intervals * self.m
    }
    pub fn n_v(&self) -> usize {
        self.n_steps() * self.per_step
    }
    pub fn dim(&self) -> usize {
        self.n_u + self.n_u0 + self.n_v()
    }
}

/// Borrowed views of the blocks of `q`.
#[derive(Clone, Copy, Debug)]
pub struct AugmentedState<'a> {
    pub u: &'a [f64],
    pub u0: &'a [f64],
    pub v: &'a [f64],
}

impl AugmentedLayout {
    pub fn split<'a>(&self, q: &'a [f64]) -> AugmentedState<'a> {
        let (u, rest) = q.split_at(self.n_u);
        let (u0, v) = rest.split_at(self.n_u0);
        AugmentedState { u, u0, v }
    }
}

/// A target density for [`hmc_sample`].
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// `log π(q)` with its gradient written to `grad`; `−∞` when undefined.
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

/// Normals actually consumed per step: Euler–Maruyama needs only `B`.
fn used_normals(scheme: SchemeId, d_r: usize) -> usize {
    match scheme {
        SchemeId::Euler => d_r,
        s => normals_per_step(s.bundle_kind(), d_r),
    }
}

/// Non-centred posterior of `q` given noisy observations.
#[derive(Clone, Debug)]
pub struct AugmentedPosterior<M> {
    pub model: M,
    pub prior: PriorSpec,
    pub obs: NoisyObservations,
    pub scheme: SchemeId,
    pub layout: AugmentedLayout,
}

/// Path, parameters and observation log-likelihood at one `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagated {
    pub theta: Vec<f64>,
    /// States at every imputation time, row-major.
    pub states: Vec<f64>,
    pub log_lik: f64,
}

impl<M: Sde> AugmentedPosterior<M> {
    /// Posterior with `m` imputation steps per observation interval.
    pub fn new(model: M, prior: PriorSpec, obs: NoisyObservations, scheme: SchemeId, m: usize) -> Result<Self> {
        let dims = Sde::dims(&model);
        if m == 0 {
            return Err(Error::InvalidArgument("M must be at least 1".into()));
        }
        if obs.values.is_empty() {
            return Err(Error::InvalidArgument("at least one observation is required".into()));
        }
        if prior.params.len() != Sde::layout(&model).len() {
            return Err(Error::Dimension(format!(
                "{} parameter priors for {} parameters",
                prior.params.len(),
                Sde::layout(&model).len()
            )));
        }
        if prior.x0.len() != dims.total() || prior.init.iter().any(|p| p.coord >= dims.total()) || obs.coord >= dims.total() {
            return Err(Error::Dimension("initial state or observed coordinate out of range".into()));
        }
        if !(obs.noise_sd > 0.0) || !(obs.delta > 0.0) {
            return Err(Error::InvalidArgument("noise scale and spacing must be positive".into()));
        }
        scheme.check(dims, scheme.bundle_kind(), dims.rough)?;
        let layout = AugmentedLayout {
            n_u: prior.n_free_params(),
            n_u0: prior.init.len(),
            n_intervals: obs.values.len() - 1,
            m,
            per_step: used_normals(scheme, dims.rough),
        };
        Ok(AugmentedPosterior { model, prior, obs, scheme, layout })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn step_size(&self) -> f64 {
        self.obs.delta / self.layout.m as f64
    }

    /// Names of the quantities returned by [`Self::constrained`].
    pub fn constrained_names(&self) -> Vec<String> {
        let names = Sde::layout(&self.model).names();
        let mut out: Vec<String> = names
            .into_iter()
            .zip(&self.prior.params)
            .filter(|(_, p)| matches!(p, ParamPrior::Normal { .. }))
            .map(|(n, _)| n)
            .collect();
        out.extend(self.prior.init.iter().map(|p| p.name.clone()));
        out
    }

    /// Free parameters followed by free initial-state coordinates.
    pub fn constrained(&self, q: &[f64]) -> Vec<f64> {
        let s = self.layout.split(q);
        let (theta, _) = self.prior.theta(s.u);
        let x0 = self.prior.initial_state(s.u0);
        let mut out: Vec<f64> = theta
            .iter()
            .zip(&self.prior.params)
            .filter(|(_, p)| matches!(p, ParamPrior::Normal { .. }))
            .map(|(&t, _)| t)
            .collect();
        out.extend(self.prior.init.iter().map(|p| x0[p.coord]));
        out
    }

    fn normals<T: Real>(&self, used: &[T]) -> Vec<T> {
        let d_r = Sde::dims(&self.model).rough;
        let need = normals_per_step(self.scheme.bundle_kind(), d_r);
        let mut n = used.to_vec();
        n.resize(need, T::zero());
        n
    }

    fn step<T: Real>(&self, x: &[T], theta: &[T], v: &[T]) -> Result<Vec<T>> {
        let d_r = Sde::dims(&self.model).rough;
        let bundle = VariateBundle::from_normals(self.scheme.bundle_kind(), self.step_size(), d_r, &self.normals(v))?;
        scheme::step_generic(&self.model, self.scheme, x, theta, &bundle)
    }

    /// Runs the scheme from `q`.
    pub fn propagate(&self, q: &[f64]) -> Result<Propagated> {
        if q.len() != self.dim() {
            return Err(Error::Dimension(format!("q has length {}, expected {}", q.len(), self.dim())));
        }
        let s = self.layout.split(q);
        let (theta, _) = self.prior.theta(s.u);
        let d = Sde::dims(&self.model).total();
        let k = self.layout.per_step;
        let mut states = Vec::with_capacity((self.layout.n_steps() + 1) * d);
        let mut x = self.prior.initial_state(s.u0);
        states.extend_from_slice(&x);
        for i in 0..self.layout.n_steps() {
            x = self.step(&x, &theta, &s.v[i * k..(i + 1) * k])?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { step: i + 1 });
            }
            states.extend_from_slice(&x);
        }
        let mut log_lik = 0.0;
        for (j, &y) in self.obs.values.iter().enumerate() {
            let i = j * self.layout.m;
            let (h, _) = self.obs.h(&states[i * d..(i + 1) * d]);
            let r = (y - h) / self.obs.noise_sd;
            log_lik += -0.5 * (r * r + LN_2PI) - self.obs.noise_sd.ln();
        }
        Ok(Propagated { theta, states, log_lik })
    }

    /// `log N(q; 0, I) + log p(Y | path(q))`.
    pub fn log_posterior(&self, q: &[f64]) -> Result<f64> {
        let p = self.propagate(q)?;
        Ok(log_std_normal(q) + p.log_lik)
    }

    /// Log-posterior and its gradient by a reverse sweep over per-step
    /// Jacobians, each obtained with forward-mode duals.
    pub fn log_posterior_grad(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let prop = self.propagate(q)?;
        let lay = self.layout;
        let s = lay.split(q);
        let (_, dtheta) = self.prior.theta(s.u);
        let d = Sde::dims(&self.model).total();
        let k = lay.per_step;
        let free: Vec<usize> = (0..self.prior.params.len())
            .filter(|&i| matches!(self.prior.params[i], ParamPrior::Normal { .. }))
            .collect();
        let mut grad = vec![0.0; q.len()];
        let mut g_theta = vec![0.0; free.len()];
        let obs_grad = |i: usize, lam: &mut [f64]| {
            if i % lay.m == 0 {
                let y = self.obs.values[i / lay.m];
                let (h, dh) = self.obs.h(&prop.states[i * d..(i + 1) * d]);
                lam[self.obs.coord] += (y - h) / (self.obs.noise_sd * self.obs.noise_sd) * dh;
            }
        };
        let n = lay.n_steps();
        let mut lam = vec![0.0; d];
        obs_grad(n, &mut lam);
        let theta_c: Vec<Dual<f64>> = prop.theta.iter().map(|&t| Dual::constant(t)).collect();
        for i in (0..n).rev() {
            let x = &prop.states[i * d..(i + 1) * d];
            let v = &s.v[i * k..(i + 1) * k];
            let xc: Vec<Dual<f64>> = x.iter().map(|&t| Dual::constant(t)).collect();
            let vc: Vec<Dual<f64>> = v.iter().map(|&t| Dual::constant(t)).collect();
            // Directional derivative of the step output contracted with λ.
            let contract = |out: Vec<Dual<f64>>| -> f64 { out.iter().zip(&lam).map(|(o, l)| o.eps * l).sum() };
            let mut new_lam = vec![0.0; d];
            for j in 0..d {
                let mut xd = xc.clone();
                xd[j].eps = 1.0;
                new_lam[j] = contract(self.step(&xd, &theta_c, &vc)?);
            }
            for (a, &p) in free.iter().enumerate() {
                let mut td = theta_c.clone();
                td[p].eps = 1.0;
                g_theta[a] += contract(self.step(&xc, &td, &vc)?);
            }
            for j in 0..k {
                let mut vd = vc.clone();
                vd[j].eps = 1.0;
                grad[lay.n_u + lay.n_u0 + i * k + j] = contract(self.step(&xc, &theta_c, &vd)?);
            }
            lam = new_lam;
            obs_grad(i, &mut lam);
        }
        for a in 0..free.len() {
            grad[a] = g_theta[a] * dtheta[a];
        }
        for (b, p) in self.prior.init.iter().enumerate() {
            grad[lay.n_u + b] = lam[p.coord] * p.sd;
        }
        for (g, &qi) in grad.iter_mut().zip(q) {
            *g -= qi;
        }
        Ok((log_std_normal(q) + prop.log_lik, grad))
    }
}

impl<M: Sde> LogDensity for AugmentedPosterior<M> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }
    fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        match self.log_posterior_grad(q) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => {
                grad.copy_from_slice(&g);
                v
            }
            _ => f64::NEG_INFINITY,
        }
    }
}

fn log_std_normal(q: &[f64]) -> f64 {
    -0.5 * (q.iter().map(|v| v * v).sum::<f64>() + q.len() as f64 * LN_2PI)
}

/// Daily number of pupils confined to bed in the boarding-school influenza
/// outbreak of January 1978 (763 pupils).
pub const INFLUENZA_1978: [f64; 14] = [3.0, 8.0, 26.0, 76.0, 225.0, 298.0, 258.0, 233.0, 189.0, 128.0, 68.0, 29.0, 14.0, 4.0];

/// SIR priors: `log α, log σ, log λ ∼ N(0,1), N(−3,1), N(0,1)`,
/// `β ∼ N(0,1)`, `log C₀ ∼ N(0,1)`, with `S₀`, `I₀` fixed.
pub fn sir_prior(model: &crate::model::SirLog) -> PriorSpec {
    let normal = |transform, mean| ParamPrior::Normal { transform, mean, sd: 1.0 };
    PriorSpec {
        params: vec![
            normal(PriorTransform::Log, 0.0),
            normal(PriorTransform::Identity, 0.0),
            normal(PriorTransform::Log, -3.0),
            normal(PriorTransform::Log, 0.0),
        ],
        x0: vec![model.initial_susceptible.ln(), model.initial_infected().ln(), 0.0],
        init: vec![InitPrior { name: "log_C0".into(), coord: 2, mean: 0.0, sd: 1.0 }],
    }
}

/// The SIR augmentation problem on daily data with `σ_y` observation noise
/// and imputation step `dt`.
pub fn sir_posterior(
    model: crate::model::SirLog,
    data: &[f64],
    noise_sd: f64,
    scheme: SchemeId,
    dt: f64,
) -> Result<AugmentedPosterior<crate::model::SirLog>> {
    let m = (1.0 / dt).round();
    if !(m >= 1.0) || (m * dt - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("dt = {dt} must divide the unit observation interval")));
    }
    let prior = sir_prior(&model);
    let obs = NoisyObservations { delta: 1.0, values: data.to_vec(), coord: 1, exp_scale: true, noise_sd };
    AugmentedPosterior::new(model, prior, obs, scheme, m as usize)
}

/// `[u, u₀]` of an epidemic roughly following the 1978 data
/// (`α ≈ 0.14`, `β = 0.6`, `λ ≈ 0.5`, `C₀ ≈ 2.5`).
///
/// On the log scale `I₀ = 1` is fragile: with a low contact rate the Itô
/// correction `−(r + λI)/(2I²)` drives `log I` to `−∞` within a day, and
/// with a high one `log S` diverges once susceptibles run out, so chains are
/// started here rather than at the prior mean.
pub const SIR_START: [f64; 5] = [-2.0, 0.6, 0.0, -0.7, 0.9];

/// `q` at [`SIR_START`] with zero innovations.
pub fn sir_start<M: Sde>(post: &AugmentedPosterior<M>) -> Vec<f64> {
    let mut q = vec![0.0; post.dim()];
    q[..5].copy_from_slice(&SIR_START);
    q
}

/// Fixed-step HMC settings with identity mass matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    /// Iterations kept after warm-up.
    pub n_iters: usize,
    /// Initial iterations discarded.
    pub n_warmup: usize,
    pub seed: u64,
    pub stream: u64,
    /// Energy error beyond which a trajectory counts as divergent.
    pub max_energy_error: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.1,
            n_leapfrog: 20,
            n_iters: 1000,
            n_warmup: 500,
            seed: 0,
            stream: 0,
            max_energy_error: 1000.0,
        }
    }
}

/// Post-warm-up draws of `q`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chain {
    pub dim: usize,
    pub draws: Vec<f64>,
    /// Log-density at each kept draw.
    pub log_density: Vec<f64>,
    pub accepted: usize,
    /// Trajectories whose energy error exceeded the threshold.
    pub divergent: usize,
    /// Trajectories that left the support (non-finite log-density).
    pub out_of_support: usize,
    /// Total iterations including warm-up.
    pub iterations: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.log_density.len()
    }
    pub fn is_empty(&self) -> bool {
        self.log_density.is_empty()
    }
    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }
    /// Fraction of accepted proposals over all iterations.
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.iterations.max(1) as f64
    }
}

/// Runs `n_leapfrog` Störmer–Verlet steps in place. Returns the final
/// log-density, or `None` if it became undefined.
pub fn leapfrog<D: LogDensity + ?Sized>(
    target: &D,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    step: f64,
    n: usize,
) -> Option<f64> {
    let mut lp = 0.0;
    for _ in 0..n {
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * step * gi;
        }
        for (qi, pi) in q.iter_mut().zip(p.iter()) {
            *qi += step * pi;
        }
        lp = target.log_density_grad(q, grad);
        if !lp.is_finite() {
            return None;
        }
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * step * gi;
        }
    }
    Some(lp)
}

/// `H(q', p') − H(q, p)` along one trajectory, `H = −log π + ½|p|²`.
pub fn energy_error<D: LogDensity + ?Sized>(target: &D, q: &[f64], p: &[f64], step: f64, n: usize) -> f64 {
    let mut grad = vec![0.0; q.len()];
    let lp0 = target.log_density_grad(q, &mut grad);
    let h0 = -lp0 + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let (mut q1, mut p1) = (q.to_vec(), p.to_vec());
    match leapfrog(target, &mut q1, &mut p1, &mut grad, step, n) {
        Some(lp) => -lp + 0.5 * p1.iter().map(|v| v * v).sum::<f64>() - h0,
        None => f64::INFINITY,
    }
}

/// Fixed-step HMC from `q0`. Divergent trajectories are rejected and
/// counted.
pub fn hmc_sample<D: LogDensity + ?Sized>(target: &D, q0: &[f64], cfg: &HmcConfig) -> Result<Chain> {
    let dim = target.dim();
    if q0.len() != dim {
        return Err(Error::Dimension(format!("q0 has length {}, expected {dim}", q0.len())));
    }
    if !(cfg.step_size > 0.0) || cfg.n_leapfrog == 0 {
        return Err(Error::InvalidArgument("step size and leapfrog count must be positive".into()));
    }
    let mut rng = SeededRng::new(cfg.seed, cfg.stream);
    let mut q = q0.to_vec();
    let mut grad = vec![0.0; dim];
    let mut lp = target.log_density_grad(&q, &mut grad);
    if !lp.is_finite() {
        return Err(Error::InvalidArgument("log-density is undefined at the initial point".into()));
    }
    let total = cfg.n_warmup + cfg.n_iters;
    let mut chain = Chain {
        dim,
        draws: Vec::with_capacity(cfg.n_iters * dim),
        log_density: Vec::with_capacity(cfg.n_iters),
        accepted: 0,
        divergent: 0,
        out_of_support: 0,
        iterations: total,
    };
    let mut p = vec![0.0; dim];
    for it in 0..total {
        rng.fill_normals(&mut p);
        let h0 = -lp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        let (mut q1, mut g1) = (q.clone(), grad.clone());
        let end = leapfrog(target, &mut q1, &mut p, &mut g1, cfg.step_size, cfg.n_leapfrog);
        let log_u = rng.uniform().ln();
        match end {
            Some(lp1) => {
                let dh = -lp1 + 0.5 * p.iter().map(|v| v * v).sum::<f64>() - h0;
                if !dh.is_finite() {
                    chain.out_of_support += 1;
                } else if dh.abs() > cfg.max_energy_error {
                    chain.divergent += 1;
                } else if log_u < -dh {
                    q = q1;
                    grad = g1;
                    lp = lp1;
                    chain.accepted += 1;
                }
            }
            None => chain.out_of_support += 1,
        }
        if it >= cfg.n_warmup {
            chain.draws.extend_from_slice(&q);
            chain.log_density.push(lp);
        }
    }
    Ok(chain)
}

/// Marginal posterior summary of one quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summaries of the columns of `draws` (row-major, one row per draw).
pub fn posterior_summary(draws: &[f64], names: &[String]) -> Result<Vec<ParamSummary>> {
    let k = names.len();
    if k == 0 || draws.is_empty() || draws.len() % k != 0 {
        return Err(Error::InvalidArgument("empty chain or mismatched column names".into()));
    }
    let n = draws.len() / k;
    Ok(names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = (0..n).map(|i| draws[i * k + j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 { (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
            col.sort_by(f64::total_cmp);
            ParamSummary {
                name: name.clone(),
                mean,
                sd,
                q05: quantile(&col, 0.05),
                q50: quantile(&col, 0.5),
                q95: quantile(&col, 0.95),
            }
        })
        .collect())
}

/// `mean_b − mean_a` for every quantity present in both summaries.
pub fn mean_shift(a: &[ParamSummary], b: &[ParamSummary]) -> Vec<(String, f64)> {
    a.iter()
        .filter_map(|x| b.iter().find(|y| y.name == x.name).map(|y| (x.name.clone(), y.mean - x.mean)))
        .collect()
}

/// Chain draws mapped to constrained quantities, row-major.
pub fn constrained_draws<M: Sde>(post: &AugmentedPosterior<M>, chain: &Chain) -> Vec<f64> {
    (0..chain.len()).flat_map(|i| post.constrained(chain.draw(i))).collect()
}

/// A starting point near the posterior mode: Adam ascent on the
/// log-posterior from `q0`.
pub fn initial_point<D: LogDensity + ?Sized>(target: &D, q0: &[f64], iters: usize, step_size: f64) -> Result<Vec<f64>> {
    let cfg = crate::estimate::AdamConfig { step_size, n_iters: iters, ..Default::default() };
    let f = |q: &[f64]| {
        let mut g = vec![0.0; q.len()];
        let v = target.log_density_grad(q, &mut g);
        if v.is_finite() {
            Ok(-v)
        } else {
            Err(Error::NonFinite { what: "log-posterior", index: 0 })
        }
    };
    let g = |q: &[f64]| {
        let mut g = vec![0.0; q.len()];
        let v = target.log_density_grad(q, &mut g);
        if v.is_finite() {
            Ok(g.into_iter().map(|x| -x).collect())
        } else {
            Err(Error::NonFinite { what: "log-posterior", index: 0 })
        }
    };
    Ok(crate::estimate::adam_minimize(f, g, q0, &cfg)?.x)
}
