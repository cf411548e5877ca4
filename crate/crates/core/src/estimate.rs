//! Contrast functions for equidistant observations, Adam minimisation in a
//! log-transformed parameter space, the quadratic-variation baseline and
//! replicate studies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{self, UnitCovariance};
use crate::linalg;
use crate::model::{LocalTerms, Model};
use crate::par::{self, Execution};
use crate::scheme::{self, ObservationSet, SchemeId};
use crate::variates::SeededRng;

/// Which contrast to minimise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContrastMethod {
    /// Local Gaussian contrast corrected by `−2Δ Σ Φ₂`.
    #[serde(rename = "new")]
    New,
    /// Local Gaussian contrast.
    #[serde(rename = "lg")]
    LocalGaussian,
}

impl ContrastMethod {
    pub const ALL: [ContrastMethod; 2] = [ContrastMethod::New, ContrastMethod::LocalGaussian];

    pub fn as_str(self) -> &'static str {
        match self {
            ContrastMethod::New => "new",
            ContrastMethod::LocalGaussian => "lg",
        }
    }
}

impl fmt::Display for ContrastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContrastMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "new" | "new_contrast" => Ok(ContrastMethod::New),
            "lg" | "local_gaussian" => Ok(ContrastMethod::LocalGaussian),
            other => Err(Error::Unknown { kind: "contrast method", name: other.to_string() }),
        }
    }
}

/// The three sums making up a contrast.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ContrastParts {
    /// `Σ_m mᵀ Σ₁⁻¹ m` over normalised residuals.
    pub quadratic: f64,
    /// `Σ_m log |Σ₁(X_{t_{m−1}})|`.
    pub logdet: f64,
    /// `Σ_m Φ₂(Δ, X_{t_{m−1}}, X_{t_m})`.
    pub phi2: f64,
    pub delta: f64,
}

impl ContrastParts {
    pub fn value(&self, method: ContrastMethod) -> f64 {
        let lg = self.quadratic + self.logdet;
        match method {
            ContrastMethod::LocalGaussian => lg,
            ContrastMethod::New => lg - 2.0 * self.delta * self.phi2,
        }
    }
}

struct Scratch {
    lt: LocalTerms,
    g: Vec<f64>,
    r: Vec<f64>,
    h1: Vec<f64>,
    /// Last factorised `Σ₁` keyed by the `V_R` and `V̂_k V_{S,0}` it came from.
    cached: Option<(Vec<f64>, UnitCovariance)>,
}

fn observation_terms<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    delta: f64,
    scale: &[f64],
    shared: Option<&UnitCovariance>,
    with_phi2: bool,
    x: &[f64],
    y: &[f64],
    s: &mut Scratch,
) -> Result<[f64; 3]> {
    let dims = model.dims();
    let (dr, d) = (dims.rough, dims.total());
    model.local_terms(x, theta, &mut s.lt)?;
    let unit = match shared {
        Some(u) => u,
        None => {
            let fresh = match &s.cached {
                Some((key, _)) => key[..s.lt.vr.len()] != s.lt.vr[..] || key[s.lt.vr.len()..] != s.lt.hatk_vs0[..],
                None => true,
            };
            if fresh {
                let key = [s.lt.vr.as_slice(), s.lt.hatk_vs0.as_slice()].concat();
                s.cached = Some((key, UnitCovariance::from_local_terms(&s.lt, 0.0)?));
            }
            &s.cached.as_ref().expect("cache filled above").1
        }
    };
    for i in 0..d {
        let mut mu = x[i] + s.lt.drift[i] * delta;
        if i >= dr {
            mu += 0.5 * s.lt.hat0_vs0[i - dr] * delta * delta;
        }
        s.r[i] = (y[i] - mu) / scale[i];
    }
    linalg::mat_vec(&unit.inv, d, d, &s.r, &mut s.h1);
    let quad: f64 = s.r.iter().zip(&s.h1).map(|(a, b)| a * b).sum();
    let mut phi2 = 0.0;
    if with_phi2 {
        model.g_matrix(x, theta, &mut s.g)?;
        for i in 0..d {
            for j in 0..d {
                phi2 += s.g[i * d + j] * (s.h1[i] * s.h1[j] - unit.inv[i * d + j]);
            }
        }
    }
    Ok([quad, unit.logdet, phi2])
}

/// The contrast sums at `theta`. Failures carry the index `m` of the
/// transition `X_{t_{m−1}} → X_{t_m}`.
pub fn contrast_parts<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    obs: &ObservationSet,
    theta: &[f64],
    with_phi2: bool,
) -> Result<ContrastParts> {
    let dims = model.dims();
    let d = dims.total();
    if obs.dim != d {
        return Err(Error::Dimension(format!("observations have dimension {}, model '{}' has {d}", obs.dim, model.name())));
    }
    let n = obs.n_transitions();
    if n == 0 {
        return Err(Error::InvalidArgument("at least two observations are required".into()));
    }
    model.layout().validate(theta)?;
    let delta = obs.delta;
    let scale = gauss::scaling(dims, delta);
    // Σ₁ of a damping Hamiltonian system depends on θ only.
    let shared = match model.sdhs() {
        Some(form) => {
            let mut noise = vec![0.0; form.half_dim()];
            form.noise_at(theta, &mut noise);
            Some(UnitCovariance::sdhs(&noise, 0.0).map_err(|e| Error::AtObservation { index: 1, source: Box::new(e) })?)
        }
        None => None,
    };
    let n_chunks = n.div_ceil(par::CHUNK);
    let partial = par::try_map(exec, n_chunks, |c| {
        let mut s = Scratch { lt: LocalTerms::zeros(dims), g: vec![0.0; d * d], r: vec![0.0; d], h1: vec![0.0; d], cached: None };
        let mut acc = [0.0; 3];
        for m in c * par::CHUNK + 1..=((c + 1) * par::CHUNK).min(n) {
            let t = observation_terms(model, theta, delta, &scale, shared.as_ref(), with_phi2, obs.get(m - 1), obs.get(m), &mut s)
                .map_err(|e| Error::AtObservation { index: m, source: Box::new(e) })?;
            for (a, v) in acc.iter_mut().zip(t) {
                *a += v;
            }
        }
        Ok::<[f64; 3], Error>(acc)
    })?;
    let col = |k: usize| par::pairwise_sum(&partial.iter().map(|p| p[k]).collect::<Vec<_>>());
    Ok(ContrastParts { quadratic: col(0), logdet: col(1), phi2: col(2), delta })
}

/// `ℓ_{n,Δ}(θ)`. Elliptic models use the rough-only mean, `a_R` and `G_RR`.
pub fn contrast<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    obs: &ObservationSet,
    theta: &[f64],
    method: ContrastMethod,
) -> Result<f64> {
    Ok(contrast_parts(exec, model, obs, theta, method == ContrastMethod::New)?.value(method))
}

/// Coordinates that are optimised, and on which scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    /// Natural-space values of every coordinate; frozen ones stay here.
    pub base: Vec<f64>,
    pub free: Vec<bool>,
    pub log: Vec<bool>,
}

impl Transform {
    /// Free coordinates flagged by `free`; positive layout entries go on the
    /// log scale.
    pub fn new<M: Model + ?Sized>(model: &M, theta: &[f64], free: &[bool]) -> Result<Self> {
        let layout = model.layout();
        layout.validate(theta)?;
        if free.len() != theta.len() {
            return Err(Error::Dimension(format!("free mask has length {}, expected {}", free.len(), theta.len())));
        }
        Ok(Transform { base: theta.to_vec(), free: free.to_vec(), log: layout.positive_mask() })
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.free.len()).filter(|&i| self.free[i]).collect()
    }

    /// Free coordinates of a natural-space vector, transformed.
    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        self.free_indices().into_iter().map(|i| if self.log[i] { theta[i].ln() } else { theta[i] }).collect()
    }

    /// Natural-space vector from transformed free coordinates.
    pub fn inverse(&self, phi: &[f64]) -> Vec<f64> {
        let mut theta = self.base.clone();
        for (&i, &p) in self.free_indices().iter().zip(phi) {
            theta[i] = if self.log[i] { p.exp() } else { p };
        }
        theta
    }
}

/// Step for central differences in the transformed space.
pub const FD_STEP: f64 = 1e-6;

/// Central-difference gradient of `f` at `phi`.
pub fn fd_gradient<F>(f: F, phi: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut p = phi.to_vec();
    let mut g = vec![0.0; phi.len()];
    for i in 0..phi.len() {
        p[i] = phi[i] + h;
        let up = f(&p)?;
        p[i] = phi[i] - h;
        let down = f(&p)?;
        p[i] = phi[i];
        g[i] = (up - down) / (2.0 * h);
        if !g[i].is_finite() {
            return Err(Error::NonFinite { what: "gradient entry", index: i });
        }
    }
    Ok(g)
}

/// Gradient of the contrast with respect to the transformed free
/// coordinates of `tr`, at natural-space `theta`.
pub fn contrast_gradient<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    obs: &ObservationSet,
    theta: &[f64],
    tr: &Transform,
    method: ContrastMethod,
) -> Result<Vec<f64>> {
    let f = |phi: &[f64]| contrast(exec, model, obs, &tr.inverse(phi), method);
    fd_gradient(f, &tr.forward(theta), FD_STEP)
}

/// Adam settings; defaults are the experiments' configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub n_iters: usize,
    /// Stop once the gradient's Euclidean norm falls below this value.
    pub grad_tol: Option<f64>,
    pub record_trace: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            n_iters: 20_000,
            grad_tol: None,
            record_trace: false,
        }
    }
}

/// Result of [`adam_minimize`] in the optimiser's own coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdamOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective before each update, then at the final point.
    pub trace: Option<Vec<f64>>,
}

/// Minimises `objective` with Adam from `x0`. The gradient callback is
/// evaluated at each iterate before it is updated.
pub fn adam_minimize<F, G>(objective: F, gradient: G, x0: &[f64], cfg: &AdamConfig) -> Result<AdamOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let abort = |iteration: usize, reason: String| Error::Optimizer { iteration, reason };
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut trace = cfg.record_trace.then(Vec::new);
    let (mut b1t, mut b2t) = (1.0, 1.0);
    let mut iterations = 0;
    for t in 1..=cfg.n_iters {
        if let Some(tr) = trace.as_mut() {
            let f = objective(&x).map_err(|e| abort(t, e.to_string()))?;
            if !f.is_finite() {
                return Err(abort(t, format!("non-finite objective {f}")));
            }
            tr.push(f);
        }
        let g = gradient(&x).map_err(|e| abort(t, e.to_string()))?;
        if let Some(tol) = cfg.grad_tol {
            if g.iter().map(|v| v * v).sum::<f64>().sqrt() < tol {
                break;
            }
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1t);
            let vh = v[i] / (1.0 - b2t);
            x[i] -= cfg.step_size * mh / (vh.sqrt() + cfg.epsilon);
        }
        iterations = t;
    }
    let objective_value = objective(&x).map_err(|e| abort(iterations, e.to_string()))?;
    if !objective_value.is_finite() {
        return Err(abort(iterations, format!("non-finite objective {objective_value}")));
    }
    if let Some(tr) = trace.as_mut() {
        tr.push(objective_value);
    }
    Ok(AdamOutcome { x, objective: objective_value, iterations, trace })
}

/// A fitted contrast estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Option<Vec<f64>>,
    pub method: ContrastMethod,
}

/// Minimises the contrast over the free coordinates of `theta0`.
pub fn fit_contrast<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    obs: &ObservationSet,
    theta0: &[f64],
    free: &[bool],
    method: ContrastMethod,
    cfg: &AdamConfig,
) -> Result<EstimateReport> {
    let tr = Transform::new(model, theta0, free)?;
    let f = |phi: &[f64]| contrast(exec, model, obs, &tr.inverse(phi), method);
    let initial = f(&tr.forward(theta0))?;
    if !initial.is_finite() {
        return Err(Error::Optimizer { iteration: 0, reason: format!("non-finite objective {initial} at the start") });
    }
    let out = adam_minimize(f, |phi| fd_gradient(f, phi, FD_STEP), &tr.forward(theta0), cfg)?;
    Ok(EstimateReport {
        theta_hat: tr.inverse(&out.x),
        objective: out.objective,
        iterations: out.iterations,
        trace: out.trace,
        method,
    })
}

/// `σ̂^QV = √(Σ_m (X^c_{t_m} − X^c_{t_{m−1}})² / (nΔ))`.
pub fn qv_sigma(obs: &ObservationSet, coord: usize) -> Result<f64> {
    if coord >= obs.dim {
        return Err(Error::Dimension(format!("coordinate {coord} out of range for dimension {}", obs.dim)));
    }
    let n = obs.n_transitions();
    if n == 0 {
        return Err(Error::InvalidArgument("at least two observations are required".into()));
    }
    let sq: Vec<f64> = (1..=n).map(|m| (obs.get(m)[coord] - obs.get(m - 1)[coord]).powi(2)).collect();
    Ok((par::pairwise_sum(&sq) / (n as f64 * obs.delta)).sqrt())
}

/// Simulation and observation protocol for a replicate study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub name: String,
    /// Step of the fine local Gaussian simulation.
    pub fine_delta: f64,
    /// Fine steps per observation.
    pub stride: usize,
    /// Number of transitions observed.
    pub n: usize,
    /// Parameters estimated; all others stay at their true values.
    pub free: Vec<String>,
    /// `(parameter, coordinate)` pairs also estimated by quadratic variation.
    pub qv: Vec<(String, usize)>,
}

impl Design {
    pub fn delta(&self) -> f64 {
        self.fine_delta * self.stride as f64
    }

    /// Builtin designs: `fn1`–`fn3` for FitzHugh–Nagumo and `jr1`–`jr3` for
    /// Jansen–Rit, all on `[0, 100]` from a `10⁻⁴` grid.
    pub fn named(name: &str) -> Result<Design> {
        let fnf = || ["gamma", "alpha", "epsilon", "sigma"].map(String::from).to_vec();
        let jrf = || ["C", "mu", "sigma2"].map(String::from).to_vec();
        let (stride, n, free, qv) = match name {
            "fn1" => (200, 5_000, fnf(), vec![("sigma".to_string(), 0)]),
            "fn2" => (100, 10_000, fnf(), vec![("sigma".to_string(), 0)]),
            "fn3" => (50, 20_000, fnf(), vec![("sigma".to_string(), 0)]),
            "jr1" => (80, 12_500, jrf(), vec![("sigma2".to_string(), 1)]),
            "jr2" => (40, 25_000, jrf(), vec![("sigma2".to_string(), 1)]),
            "jr3" => (20, 50_000, jrf(), vec![("sigma2".to_string(), 1)]),
            other => return Err(Error::Unknown { kind: "design", name: other.to_string() }),
        };
        Ok(Design { name: name.to_string(), fine_delta: 1e-4, stride, n, free, qv })
    }

    /// Model name matching a builtin design.
    pub fn model_name(&self) -> Option<&'static str> {
        match self.name.get(..2) {
            Some("fn") => Some("fitzhugh_nagumo"),
            Some("jr") => Some("jansen_rit"),
            _ => None,
        }
    }

    pub fn free_mask<M: Model + ?Sized>(&self, model: &M) -> Result<Vec<bool>> {
        let layout = model.layout();
        let mut mask = vec![false; layout.len()];
        for name in &self.free {
            let i = layout
                .index_of(name)
                .ok_or_else(|| Error::Unknown { kind: "parameter", name: format!("{name} (model {})", model.name()) })?;
            mask[i] = true;
        }
        Ok(mask)
    }
}

/// Simulates one replicate's observations: a local Gaussian path on the
/// fine grid, subsampled every `stride` steps.
pub fn simulate_design<M: Model + ?Sized>(
    model: &M,
    design: &Design,
    x0: &[f64],
    theta: &[f64],
    rng: &mut SeededRng,
) -> Result<ObservationSet> {
    let path = scheme::simulate_strided(
        model,
        SchemeId::LocalGauss,
        x0,
        theta,
        design.fine_delta,
        design.n * design.stride,
        design.stride,
        rng,
    )?;
    Ok(ObservationSet::from(&path))
}

/// Replicate study settings.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub design: Design,
    pub theta_true: Vec<f64>,
    pub x0: Vec<f64>,
    pub n_replicates: usize,
    pub methods: Vec<ContrastMethod>,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Half-width of the uniform relative perturbation of the start point.
    pub init_spread: f64,
}

/// One estimate in a study; `method` is `new`, `lg` or `qv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRow {
    pub replicate: usize,
    pub method: String,
    pub param: String,
    pub estimate: f64,
}

/// Replicate/method pairs whose fit failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyFailure {
    pub replicate: usize,
    pub method: String,
    pub error: String,
}

/// Summary of one method's estimates of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudySummary {
    pub method: String,
    pub param: String,
    pub truth: f64,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub failures: Vec<StudyFailure>,
    pub summary: Vec<StudySummary>,
}

impl StudyResult {
    pub fn summary_for(&self, method: &str, param: &str) -> Option<&StudySummary> {
        self.summary.iter().find(|s| s.method == method && s.param == param)
    }

    /// `replicate,method,param,estimate` with full precision.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "replicate,method,param,estimate")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{:.16e}", r.replicate, r.method, r.param, r.estimate)?;
        }
        Ok(())
    }
}

/// Starting point: free coordinates of `theta` scaled by independent
/// `U(1 − spread, 1 + spread)` factors.
pub fn perturbed_start(theta: &[f64], free: &[bool], spread: f64, rng: &mut SeededRng) -> Vec<f64> {
    theta
        .iter()
        .zip(free)
        .map(|(&t, &f)| if f { t * (1.0 + spread * (2.0 * rng.uniform() - 1.0)) } else { t })
        .collect()
}

/// Stream offset separating start-point draws from path noise.
const INIT_STREAM: u64 = 1 << 32;

/// Simulates `n_replicates` datasets and fits every method on each.
/// Replicate `r` draws its path from stream `r` and its start point from
/// stream `2³² + r` of `seed`. Failed fits are recorded, not fatal.
pub fn replicate_study<M: Model + ?Sized>(exec: Execution, model: &M, cfg: &StudyConfig) -> Result<StudyResult> {
    let layout = model.layout();
    layout.validate(&cfg.theta_true)?;
    let free = cfg.design.free_mask(model)?;
    let qv: Vec<(usize, usize)> = cfg
        .design
        .qv
        .iter()
        .map(|(p, c)| {
            layout.index_of(p).map(|i| (i, *c)).ok_or_else(|| Error::Unknown { kind: "parameter", name: p.clone() })
        })
        .collect::<Result<_>>()?;
    let names = layout.names();
    // Replicates run in parallel; each contrast evaluation inside is sequential.
    let per_rep = par::try_map(exec, cfg.n_replicates, |r| {
        let mut rng = SeededRng::new(cfg.seed, r as u64);
        let obs = simulate_design(model, &cfg.design, &cfg.x0, &cfg.theta_true, &mut rng)?;
        let mut init_rng = SeededRng::new(cfg.seed, INIT_STREAM + r as u64);
        let theta0 = perturbed_start(&cfg.theta_true, &free, cfg.init_spread, &mut init_rng);
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for &(i, c) in &qv {
            rows.push(StudyRow { replicate: r, method: "qv".into(), param: names[i].clone(), estimate: qv_sigma(&obs, c)? });
        }
        for &method in &cfg.methods {
            match fit_contrast(Execution::Sequential, model, &obs, &theta0, &free, method, &cfg.adam) {
                Ok(rep) => {
                    for (i, &v) in rep.theta_hat.iter().enumerate().filter(|(i, _)| free[*i]) {
                        rows.push(StudyRow { replicate: r, method: method.to_string(), param: names[i].clone(), estimate: v });
                    }
                }
                Err(e) => failures.push(StudyFailure { replicate: r, method: method.to_string(), error: e.to_string() }),
            }
        }
        Ok::<_, Error>((rows, failures))
    })?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_rep {
        rows.extend(r);
        failures.extend(f);
    }
    let summary = summarize(&rows, &names, &cfg.theta_true);
    Ok(StudyResult { rows, failures, summary })
}

/// Mean, SD, standard error and RMSE per method and parameter, in first
/// appearance order.
pub fn summarize(rows: &[StudyRow], names: &[String], truth: &[f64]) -> Vec<StudySummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.param.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, param)| {
            let xs: Vec<f64> =
                rows.iter().filter(|r| r.method == method && r.param == param).map(|r| r.estimate).collect();
            let t = names.iter().position(|n| *n == param).map_or(f64::NAN, |i| truth[i]);
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            let rmse = (xs.iter().map(|x| (x - t).powi(2)).sum::<f64>() / n).sqrt();
            StudySummary { method, param, truth: t, count: xs.len(), mean, sd, se: sd / n.sqrt(), rmse }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinModel};
    use std::collections::BTreeMap;

    fn model(name: &str) -> BuiltinModel {
        builtin_model(name, &BTreeMap::new()).unwrap()
    }

    fn ou_obs(theta: &[f64], n: usize, delta: f64, seed: u64) -> ObservationSet {
        let m = model("ou");
        let mut rng = SeededRng::new(seed, 0);
        let p = scheme::simulate_path(&m, SchemeId::Euler, &[0.0], theta, delta, n, &mut rng).unwrap();
        ObservationSet::from(&p)
    }

    #[test]
    fn single_unit_transition() {
        // Zero drift, unit diffusion, Δ = 1, 0 → 1.
        let m = model("ou");
        let obs = ObservationSet::new(1, 1.0, vec![0.0, 1.0]).unwrap();
        for method in ContrastMethod::ALL {
            let c = contrast(Execution::Sequential, &m, &obs, &[0.0, 1.0], method).unwrap();
            assert!((c - 1.0).abs() < 1e-15, "{method}: {c}");
        }
    }

    #[test]
    fn ou_contrast_by_hand() {
        let m = model("ou");
        let theta = [0.7, 1.3];
        let obs = ou_obs(&theta, 50, 0.1, 3);
        let (k, s, dt) = (theta[0], theta[1], 0.1);
        let mut lg = 0.0;
        for i in 1..obs.len() {
            let (x, y) = (obs.get(i - 1)[0], obs.get(i)[0]);
            lg += (y - x + k * x * dt).powi(2) / (s * s * dt) + (s * s).ln();
        }
        let c = contrast(Execution::Sequential, &m, &obs, &theta, ContrastMethod::LocalGaussian).unwrap();
        assert!((c - lg).abs() < 1e-10 * lg.abs());
        // G = ½ V̂₁V₀ V₁ = −κσ²/2, so Φ₂ = −κσ²/2 · H₂.
        let mut phi = 0.0;
        for i in 1..obs.len() {
            let (x, y) = (obs.get(i - 1)[0], obs.get(i)[0]);
            let h1 = (y - x + k * x * dt) / dt.sqrt() / (s * s);
            phi += -0.5 * k * s * s * (h1 * h1 - 1.0 / (s * s));
        }
        let c_new = contrast(Execution::Sequential, &m, &obs, &theta, ContrastMethod::New).unwrap();
        assert!((c_new - (lg - 2.0 * dt * phi)).abs() < 1e-10 * lg.abs());
    }

    #[test]
    fn constant_damping_sdhs_has_no_correction_difference() {
        // The correction vanishes identically only when c = 0.
        let mut f = BTreeMap::new();
        f.insert("c".to_string(), 0.0);
        let m = builtin_model("linear_sdhs", &f).unwrap();
        let theta = m.default_theta();
        let mut rng = SeededRng::new(1, 0);
        let p = scheme::simulate_path(&m, SchemeId::LocalGauss, &[0.0, 0.0], &theta, 0.05, 200, &mut rng).unwrap();
        let obs = ObservationSet::from(&p);
        let a = contrast(Execution::Sequential, &m, &obs, &theta, ContrastMethod::New).unwrap();
        let b = contrast(Execution::Sequential, &m, &obs, &theta, ContrastMethod::LocalGaussian).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_identity() {
        let m = model("fitzhugh_nagumo");
        let theta = m.default_theta();
        let mut rng = SeededRng::new(5, 0);
        let p = scheme::simulate_strided(&m, SchemeId::LocalGauss, &[0.0, 0.0], &theta, 1e-3, 4000, 10, &mut rng).unwrap();
        let obs = ObservationSet::from(&p);
        let probe = [1.3, 0.35, 0.12, 0.01, 0.55];
        let parts = contrast_parts(Execution::Sequential, &m, &obs, &probe, true).unwrap();
        let a = contrast(Execution::Sequential, &m, &obs, &probe, ContrastMethod::New).unwrap();
        let b = contrast(Execution::Sequential, &m, &obs, &probe, ContrastMethod::LocalGaussian).unwrap();
        assert!((a - b + 2.0 * obs.delta * parts.phi2).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn worker_count_does_not_change_value() {
        let m = model("jansen_rit");
        let theta = m.default_theta();
        let mut rng = SeededRng::new(9, 0);
        let p = scheme::simulate_strided(&m, SchemeId::LocalGauss, &[0.0; 6], &theta, 1e-4, 30_000, 20, &mut rng).unwrap();
        let obs = ObservationSet::from(&p);
        let a = contrast(Execution::Sequential, &m, &obs, &theta, ContrastMethod::New).unwrap();
        let b = contrast(Execution::Parallel, &m, &obs, &theta, ContrastMethod::New).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn failures_carry_the_observation_index() {
        let m = model("ou");
        let mut data = vec![0.0, 0.1, 0.2];
        data[2] = f64::INFINITY;
        let obs = ObservationSet { dim: 1, delta: 0.1, data };
        let r = contrast(Execution::Sequential, &m, &obs, &[1.0, 1.0], ContrastMethod::LocalGaussian);
        assert!(r.is_ok() && !r.unwrap().is_finite());
        let mut data = vec![0.0, 0.1, 0.2];
        data[1] = f64::NAN;
        let obs = ObservationSet { dim: 1, delta: 0.1, data };
        match contrast(Execution::Sequential, &m, &obs, &[1.0, 1.0], ContrastMethod::LocalGaussian) {
            Err(Error::AtObservation { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quadratic_gradient() {
        let f = |p: &[f64]| Ok(3.0 * p[0] * p[0] + p[0] * p[1] - 2.0 * p[1]);
        let g = fd_gradient(f, &[0.4, -1.1], FD_STEP).unwrap();
        assert!((g[0] - (6.0 * 0.4 - 1.1)).abs() < 1e-6);
        assert!((g[1] - (0.4 - 2.0)).abs() < 1e-6);
    }

    #[test]
    fn ou_gradient_matches_hand_derivative() {
        // d/dκ of the LG contrast: Σ 2 (y − x + κxΔ) xΔ / (σ²Δ).
        let m = model("ou");
        let theta = [0.8, 1.1];
        let obs = ou_obs(&[1.0, 1.0], 400, 0.05, 11);
        let tr = Transform::new(&m, &theta, &[true, true]).unwrap();
        let g = contrast_gradient(Execution::Sequential, &m, &obs, &theta, &tr, ContrastMethod::LocalGaussian).unwrap();
        let (k, s, dt) = (theta[0], theta[1], obs.delta);
        let mut dk = 0.0;
        let mut ds = 0.0;
        for i in 1..obs.len() {
            let (x, y) = (obs.get(i - 1)[0], obs.get(i)[0]);
            let e = y - x + k * x * dt;
            dk += 2.0 * e * x * dt / (s * s * dt);
            ds += -2.0 * e * e / (s * s * s * dt) + 2.0 / s;
        }
        let (lk, ls) = (tr.log[0], tr.log[1]);
        let expect = [if lk { dk * k } else { dk }, if ls { ds * s } else { ds }];
        for i in 0..2 {
            assert!((g[i] - expect[i]).abs() <= 1e-5 * expect[i].abs().max(1.0), "{i}: {} vs {}", g[i], expect[i]);
        }
    }

    #[test]
    fn adam_on_a_parabola() {
        let f = |p: &[f64]| Ok((p[0] - 3.0).powi(2));
        let g = |p: &[f64]| Ok(vec![2.0 * (p[0] - 3.0)]);
        let out = adam_minimize(f, g, &[0.0], &AdamConfig::default()).unwrap();
        assert!((out.x[0] - 3.0).abs() <= 1e-3, "{}", out.x[0]);
        assert_eq!(out.iterations, 20_000);
    }

    #[test]
    fn adam_zero_gradient_is_stationary() {
        let out = adam_minimize(|_| Ok(1.0), |_| Ok(vec![0.0, 0.0]), &[0.5, -2.0], &AdamConfig::default()).unwrap();
        assert_eq!(out.x, vec![0.5, -2.0]);
    }

    #[test]
    fn adam_aborts_on_non_finite_objective() {
        let cfg = AdamConfig { record_trace: true, n_iters: 10, ..AdamConfig::default() };
        let f = |p: &[f64]| Ok(if p[0] < 0.97 { f64::NAN } else { p[0] });
        let r = adam_minimize(f, |_| Ok(vec![1.0]), &[1.0], &cfg);
        assert!(matches!(r, Err(Error::Optimizer { .. })));
    }

    #[test]
    fn log_scale_keeps_sigma_positive() {
        let m = model("ou");
        let obs = ou_obs(&[1.0, 0.05], 500, 0.01, 2);
        let cfg = AdamConfig { n_iters: 300, step_size: 0.1, record_trace: true, ..AdamConfig::default() };
        let rep = fit_contrast(Execution::Sequential, &m, &obs, &[1.0, 2.0], &[false, true], ContrastMethod::LocalGaussian, &cfg)
            .unwrap();
        assert!(rep.theta_hat[1] > 0.0);
        assert!(rep.trace.unwrap().iter().all(|v| v.is_finite()));
        assert!((rep.theta_hat[1] - 0.05).abs() < 0.01, "{}", rep.theta_hat[1]);
    }

    #[test]
    fn qv_examples() {
        let obs = ObservationSet::new(1, 0.1, vec![2.0; 11]).unwrap();
        assert_eq!(qv_sigma(&obs, 0).unwrap(), 0.0);
        // Brownian motion with σ = 2 over [0, 100].
        let mut rng = SeededRng::new(42, 0);
        let mut data = vec![0.0];
        for _ in 0..10_000 {
            let last = *data.last().unwrap();
            data.push(last + 2.0 * 0.1 * rng.normal());
        }
        let obs = ObservationSet::new(1, 0.01, data).unwrap();
        let s = qv_sigma(&obs, 0).unwrap();
        assert!((1.9..=2.1).contains(&s), "{s}");
        assert!(qv_sigma(&obs, 1).is_err());
    }

    #[test]
    fn designs() {
        let d = Design::named("fn3").unwrap();
        assert!((d.delta() - 0.005).abs() < 1e-15);
        assert_eq!(d.n, 20_000);
        let d = Design::named("jr3").unwrap();
        assert!((d.delta() - 0.002).abs() < 1e-15);
        assert_eq!(d.n as f64 * d.delta(), 100.0);
        let jr = model("jansen_rit");
        assert_eq!(d.free_mask(&jr).unwrap().iter().filter(|&&f| f).count(), 3);
        assert!(Design::named("xx").is_err());
    }

    #[test]
    fn summary_statistics() {
        let rows: Vec<StudyRow> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(r, &v)| StudyRow { replicate: r, method: "lg".into(), param: "a".into(), estimate: v })
            .collect();
        let s = &summarize(&rows, &["a".to_string()], &[2.5])[0];
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
        assert!((s.se - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((s.rmse - ((2.25 + 0.25 + 0.25) / 3.0f64).sqrt()).abs() < 1e-15);
    }
}
