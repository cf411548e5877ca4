//! One-step samplers and path simulation.
//!
//! Each update is written once over [`Real`] on top of the hat-operator
//! compositions, so the same code drives `f64` simulation and the
//! differentiated steps used by data augmentation.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ad_tensors, derived_coefficients, eval_coefficients, DerivedCoefficients, Dims, LocalTerms, Model, Order, Sde};
use crate::par::{self, Execution};
use crate::real::Real;
use crate::variates::{self, BundleKind, SeededRng, VariateBundle};

/// Available one-step schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Euler,
    LocalGauss,
    Weak2Elliptic,
    Weak2Hypo,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::Euler, SchemeId::LocalGauss, SchemeId::Weak2Elliptic, SchemeId::Weak2Hypo];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Euler => "euler",
            SchemeId::LocalGauss => "local_gauss",
            SchemeId::Weak2Elliptic => "weak2_elliptic",
            SchemeId::Weak2Hypo => "weak2_hypo",
        }
    }

    /// The weak second-order scheme matching `dims`.
    pub fn weak2_for(dims: Dims) -> SchemeId {
        if dims.is_elliptic() {
            SchemeId::Weak2Elliptic
        } else {
            SchemeId::Weak2Hypo
        }
    }

    /// Kind of variate bundle the scheme consumes.
    pub fn bundle_kind(self) -> BundleKind {
        match self {
            SchemeId::Euler | SchemeId::Weak2Elliptic => BundleKind::Elliptic,
            SchemeId::LocalGauss | SchemeId::Weak2Hypo => BundleKind::Hypo,
        }
    }

    /// Derivative order the scheme needs.
    pub fn order(self) -> Order {
        match self {
            SchemeId::Euler => Order::Zero,
            SchemeId::LocalGauss | SchemeId::Weak2Elliptic => Order::Second,
            SchemeId::Weak2Hypo => Order::Third,
        }
    }

    pub fn check(self, dims: Dims, bundle_kind: BundleKind, bundle_dr: usize) -> Result<()> {
        match self {
            SchemeId::Weak2Elliptic if !dims.is_elliptic() => {
                return Err(Error::Dimension("the elliptic scheme needs d_S = 0; use weak2_hypo".into()))
            }
            SchemeId::LocalGauss | SchemeId::Weak2Hypo if dims.is_elliptic() => {
                return Err(Error::Dimension(format!("scheme '{}' needs d_S ≥ 1", self.as_str())))
            }
            _ => {}
        }
        if bundle_dr != dims.rough {
            return Err(Error::Dimension(format!("bundle has d_R = {bundle_dr}, model has {}", dims.rough)));
        }
        if self != SchemeId::Euler && bundle_kind != self.bundle_kind() {
            return Err(Error::InvalidArgument(format!("scheme '{}' needs a {:?} bundle", self.as_str(), self.bundle_kind())));
        }
        Ok(())
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" | "em" => Ok(SchemeId::Euler),
            "local_gauss" | "lg" => Ok(SchemeId::LocalGauss),
            "weak2_elliptic" => Ok(SchemeId::Weak2Elliptic),
            "weak2_hypo" => Ok(SchemeId::Weak2Hypo),
            _ => Err(Error::Unknown { kind: "scheme", name: s.to_string() }),
        }
    }
}

/// `x + V_0 Δ + Σ_k V_{R,k} B_k`; smooth rows receive no noise.
pub fn euler_update<T: Real>(dims: Dims, x: &[T], v0: &[T], vr: &[T], delta: f64, b: &[T]) -> Vec<T> {
    let dr = dims.rough;
    let mut y: Vec<T> = x.iter().zip(v0).map(|(&x, &v)| x + v * delta).collect();
    for i in 0..dr {
        for k in 0..dr {
            y[i] += vr[i * dr + k] * b[k];
        }
    }
    y
}

/// Rough update shared by both weak second-order schemes.
fn weak2_rough<T: Real>(dc: &DerivedCoefficients<T>, x: &[T], bundle: &VariateBundle<T>, y: &mut [T]) {
    let dr = dc.dims.rough;
    let delta = bundle.delta;
    for i in 0..dr {
        let mut v = x[i] + dc.v0[i] * delta;
        for k in 1..=dr {
            v += dc.field(k, i) * bundle.b[k - 1];
        }
        for k1 in 0..=dr {
            for k2 in 0..=dr {
                v += dc.hat_vr(k1, k2, i) * bundle.second[k1 * (dr + 1) + k2];
            }
        }
        y[i] = v;
    }
}

/// Weak second-order update for elliptic models.
pub fn weak2_elliptic_update<T: Real>(dc: &DerivedCoefficients<T>, x: &[T], bundle: &VariateBundle<T>) -> Vec<T> {
    let mut y = vec![T::zero(); dc.dims.rough];
    weak2_rough(dc, x, bundle, &mut y);
    y
}

/// Weak second-order update for hypo-elliptic models.
pub fn weak2_hypo_update<T: Real>(dc: &DerivedCoefficients<T>, x: &[T], bundle: &VariateBundle<T>) -> Vec<T> {
    let (dr, ds) = (dc.dims.rough, dc.dims.smooth);
    let n = dr + 1;
    let delta = bundle.delta;
    let mut y = vec![T::zero(); dr + ds];
    weak2_rough(dc, x, bundle, &mut y);
    for s in 0..ds {
        let mut v = x[dr + s] + dc.v0[dr + s] * delta;
        for k in 0..n {
            v += dc.hat_vs0(k, s) * bundle.zeta(k, 0);
        }
        for k1 in 0..n {
            for k2 in 0..n {
                if k1 + k2 > 0 {
                    v += dc.hathat_vs0(k1, k2, s) * bundle.eta(k1, k2);
                }
            }
        }
        y[dr + s] = v;
    }
    y
}

/// Local Gaussian update from derived coefficients.
pub fn local_gauss_update<T: Real>(dc: &DerivedCoefficients<T>, x: &[T], bundle: &VariateBundle<T>) -> Vec<T> {
    let (dr, ds) = (dc.dims.rough, dc.dims.smooth);
    let delta = bundle.delta;
    let mut y = euler_update(dc.dims, x, &dc.v0, &dc.vr, delta, &bundle.b);
    for s in 0..ds {
        y[dr + s] += dc.hat_vs0(0, s) * (0.5 * delta * delta);
        for k in 1..=dr {
            y[dr + s] += dc.hat_vs0(k, s) * bundle.zeta(k, 0);
        }
    }
    y
}

/// Local Gaussian update from first-level coefficients.
fn local_gauss_from_terms(lt: &LocalTerms, x: &[f64], bundle: &VariateBundle) -> Vec<f64> {
    let (dr, ds) = (lt.dims.rough, lt.dims.smooth);
    let delta = bundle.delta;
    let mut y = euler_update(lt.dims, x, &lt.drift, &lt.vr, delta, &bundle.b);
    for s in 0..ds {
        y[dr + s] += lt.hat0_vs0[s] * (0.5 * delta * delta);
        for k in 1..=dr {
            y[dr + s] += lt.hatk_vs0[s * dr + k - 1] * bundle.zeta(k, 0);
        }
    }
    y
}

fn check_state<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<()> {
    let d = model.dims().total();
    if x.len() != d {
        return Err(Error::Dimension(format!("state has length {}, expected {d}", x.len())));
    }
    Ok(())
}

fn check_delta(delta: f64, bundle: &VariateBundle) -> Result<()> {
    if (delta - bundle.delta).abs() > 1e-12 * delta.abs() {
        return Err(Error::InvalidArgument(format!("bundle drawn for Δ = {}, step uses {delta}", bundle.delta)));
    }
    Ok(())
}

/// Euler–Maruyama step.
pub fn step_euler<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], delta: f64, bundle: &VariateBundle) -> Result<Vec<f64>> {
    check_state(model, x)?;
    SchemeId::Euler.check(model.dims(), bundle.kind, bundle.d_r)?;
    check_delta(delta, bundle)?;
    let (v0, vr) = eval_coefficients(model, x, theta)?;
    Ok(euler_update(model.dims(), x, &v0, &vr, delta, &bundle.b))
}

/// Local Gaussian step.
pub fn step_local_gauss<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    theta: &[f64],
    delta: f64,
    bundle: &VariateBundle,
) -> Result<Vec<f64>> {
    check_state(model, x)?;
    SchemeId::LocalGauss.check(model.dims(), bundle.kind, bundle.d_r)?;
    let mut lt = LocalTerms::zeros(model.dims());
    model.local_terms(x, theta, &mut lt)?;
    check_delta(delta, bundle)?;
    Ok(local_gauss_from_terms(&lt, x, bundle))
}

/// Weak second-order step for elliptic models.
pub fn step_weak2_elliptic<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    theta: &[f64],
    delta: f64,
    bundle: &VariateBundle,
) -> Result<Vec<f64>> {
    check_state(model, x)?;
    SchemeId::Weak2Elliptic.check(model.dims(), bundle.kind, bundle.d_r)?;
    check_delta(delta, bundle)?;
    let dc = derived_coefficients(model, x, theta, Order::Second)?;
    Ok(weak2_elliptic_update(&dc, x, bundle))
}

/// Weak second-order step for hypo-elliptic models.
pub fn step_weak2_hypo<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    theta: &[f64],
    delta: f64,
    bundle: &VariateBundle,
) -> Result<Vec<f64>> {
    check_state(model, x)?;
    SchemeId::Weak2Hypo.check(model.dims(), bundle.kind, bundle.d_r)?;
    check_delta(delta, bundle)?;
    let dc = derived_coefficients(model, x, theta, Order::Third)?;
    Ok(weak2_hypo_update(&dc, x, bundle))
}

/// Dispatches to the stepper named by `scheme`. The step size is taken
/// from the bundle.
pub fn step<M: Model + ?Sized>(model: &M, scheme: SchemeId, x: &[f64], theta: &[f64], bundle: &VariateBundle) -> Result<Vec<f64>> {
    let delta = bundle.delta;
    match scheme {
        SchemeId::Euler => step_euler(model, x, theta, delta, bundle),
        SchemeId::LocalGauss => step_local_gauss(model, x, theta, delta, bundle),
        SchemeId::Weak2Elliptic => step_weak2_elliptic(model, x, theta, delta, bundle),
        SchemeId::Weak2Hypo => step_weak2_hypo(model, x, theta, delta, bundle),
    }
}

/// The same steps over any [`Real`], with exact derivatives of an [`Sde`].
pub fn step_generic<M: Sde, T: Real>(model: &M, scheme: SchemeId, x: &[T], theta: &[T], bundle: &VariateBundle<T>) -> Result<Vec<T>> {
    let dims = model.dims();
    if x.len() != dims.total() {
        return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), dims.total())));
    }
    scheme.check(dims, bundle.kind, bundle.d_r)?;
    Ok(match scheme {
        SchemeId::Euler => {
            let mut v0 = vec![T::zero(); dims.total()];
            let mut vr = vec![T::zero(); dims.rough * dims.rough];
            model.drift(x, theta, &mut v0);
            model.diffusion(x, theta, &mut vr);
            euler_update(dims, x, &v0, &vr, bundle.delta, &bundle.b)
        }
        SchemeId::LocalGauss => {
            let dc = DerivedCoefficients::from_tensors(&ad_tensors(model, x, theta, Order::Second));
            local_gauss_update(&dc, x, bundle)
        }
        SchemeId::Weak2Elliptic => {
            let dc = DerivedCoefficients::from_tensors(&ad_tensors(model, x, theta, Order::Second));
            weak2_elliptic_update(&dc, x, bundle)
        }
        SchemeId::Weak2Hypo => {
            let dc = DerivedCoefficients::from_tensors(&ad_tensors(model, x, theta, Order::Third));
            weak2_hypo_update(&dc, x, bundle)
        }
    })
}

/// Provenance of a simulated path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub model: String,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub scheme: SchemeId,
    pub delta: f64,
}

/// States on an equidistant grid, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub meta: PathMeta,
}

impl Path {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }
    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_grid_csv(w, self.dim, &self.times, &self.states)
    }
}

/// Simulates `n_steps` steps of `scheme` from `x0`, recording every state.
pub fn simulate_path<M: Model + ?Sized>(
    model: &M,
    scheme: SchemeId,
    x0: &[f64],
    theta: &[f64],
    delta: f64,
    n_steps: usize,
    rng: &mut SeededRng,
) -> Result<Path> {
    simulate_strided(model, scheme, x0, theta, delta, n_steps, 1, rng)
}

/// Like [`simulate_path`] but keeps only every `stride`-th state, so long
/// fine-grid runs need not be held in memory.
#[allow(clippy::too_many_arguments)]
pub fn simulate_strided<M: Model + ?Sized>(
    model: &M,
    scheme: SchemeId,
    x0: &[f64],
    theta: &[f64],
    delta: f64,
    n_steps: usize,
    stride: usize,
    rng: &mut SeededRng,
) -> Result<Path> {
    let dims = model.dims();
    check_state(model, x0)?;
    model.layout().validate(theta)?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {delta}")));
    }
    let d = dims.total();
    let kind = scheme.bundle_kind();
    let mut normals = vec![0.0; variates::normals_per_step(kind, dims.rough)];
    let n_keep = n_steps / stride + 1;
    let mut times = Vec::with_capacity(n_keep);
    let mut states = Vec::with_capacity(n_keep * d);
    times.push(0.0);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    for i in 1..=n_steps {
        rng.fill_normals(&mut normals);
        let bundle = VariateBundle::from_normals(kind, delta, dims.rough, &normals)?;
        x = match step(model, scheme, &x, theta, &bundle) {
            Ok(y) => y,
            Err(Error::NonFinite { .. }) => return Err(Error::NonFiniteState { step: i }),
            Err(e) => return Err(e),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: i });
        }
        if i % stride == 0 {
            times.push(i as f64 * delta);
            states.extend_from_slice(&x);
        }
    }
    Ok(Path {
        dim: d,
        times,
        states,
        meta: PathMeta {
            model: model.name().to_string(),
            theta: theta.to_vec(),
            seed: rng.seed(),
            stream: rng.stream(),
            scheme,
            delta: delta * stride as f64,
        },
    })
}

/// Independent paths, path `r` on stream `r` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_replicates<M: Model + ?Sized>(
    exec: Execution,
    model: &M,
    scheme: SchemeId,
    x0: &[f64],
    theta: &[f64],
    delta: f64,
    n_steps: usize,
    stride: usize,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<Path>> {
    par::try_map(exec, n_paths, |r| {
        let mut rng = SeededRng::new(seed, r as u64);
        simulate_strided(model, scheme, x0, theta, delta, n_steps, stride, &mut rng)
    })
}

/// Equidistant observations `X_{t_0}, …, X_{t_n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub dim: usize,
    pub delta: f64,
    /// Row-major, `(n + 1) × dim`.
    pub data: Vec<f64>,
}

impl ObservationSet {
    pub fn new(dim: usize, delta: f64, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Dimension(format!("{} values do not form rows of length {dim}", data.len())));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("observation spacing must be positive, got {delta}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "observation", index: i / dim });
        }
        Ok(ObservationSet { dim, delta, data })
    }
    /// Number of states `n + 1`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    /// Number of transitions `n`.
    pub fn n_transitions(&self) -> usize {
        self.len().saturating_sub(1)
    }
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64 * self.delta).collect()
    }
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        write_grid_csv(w, self.dim, &self.times(), &self.data)
    }

    /// Reads `t,x1,…,xd` rows; the spacing is taken from the first two times.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('t') || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 1)))?;
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("at least two observations are required".into()));
        }
        let width = rows[0].len();
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("rows have inconsistent widths".into()));
        }
        let delta = rows[1][0] - rows[0][0];
        for w in rows.windows(2) {
            if ((w[1][0] - w[0][0]) - delta).abs() > 1e-9 * delta.abs().max(1.0) {
                return Err(Error::InvalidArgument("observation times are not equidistant".into()));
            }
        }
        let data = rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
        ObservationSet::new(width - 1, delta, data)
    }
}

/// Every `stride`-th state of `path`.
pub fn subsample(path: &Path, stride: usize) -> Result<ObservationSet> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if stride >= path.len() {
        return Err(Error::InvalidArgument(format!("stride {stride} exceeds path of {} states", path.len())));
    }
    let data = (0..path.len()).step_by(stride).flat_map(|i| path.state(i).iter().copied()).collect();
    ObservationSet::new(path.dim, path.meta.delta * stride as f64, data)
}

impl From<&Path> for ObservationSet {
    fn from(p: &Path) -> Self {
        ObservationSet { dim: p.dim, delta: p.meta.delta, data: p.states.clone() }
    }
}

fn write_grid_csv<W: Write>(mut w: W, dim: usize, times: &[f64], data: &[f64]) -> io::Result<()> {
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=dim).map(|i| format!("x{i}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, t) in times.iter().enumerate() {
        write!(w, "{t:.16e}")?;
        for v in &data[i * dim..(i + 1) * dim] {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinModel};
    use crate::variates::{draw_elliptic, draw_hypo};
    use std::collections::BTreeMap;

    fn model(name: &str) -> BuiltinModel {
        builtin_model(name, &BTreeMap::new()).unwrap()
    }

    fn zero_bundle(kind: BundleKind, delta: f64, d_r: usize) -> VariateBundle {
        VariateBundle::from_normals(kind, delta, d_r, &vec![0.0; variates::normals_per_step(kind, d_r)]).unwrap()
    }

    #[test]
    fn euler_drift_only() {
        let m = model("ou");
        let b = zero_bundle(BundleKind::Elliptic, 0.5, 1);
        assert_eq!(step_euler(&m, &[1.0], &[1.0, 1.0], 0.5, &b).unwrap(), vec![0.5]);
    }

    #[test]
    fn euler_pure_noise() {
        let m = model("ou");
        let b = draw_elliptic(&mut SeededRng::new(3, 0), 0.7, 1).unwrap();
        assert_eq!(step_euler(&m, &[0.0], &[0.0, 1.0], 0.7, &b).unwrap(), vec![b.b[0]]);
    }

    #[test]
    fn weak2_elliptic_mean_on_ou() {
        // Zero-noise part of the step: x(1 − Δ + Δ²/2) once ξ_00 = Δ²/2 is included.
        let m = model("ou");
        let b = zero_bundle(BundleKind::Elliptic, 0.5, 1);
        let y = step_weak2_elliptic(&m, &[1.0], &[1.0, 1.0], 0.5, &b).unwrap();
        // ξ_11 = −Δ/2 at B = 0 but V̂_1 V_1 = 0 for additive noise.
        assert!((y[0] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn scheme_dimension_guards() {
        let ou = model("ou");
        let fnm = model("fitzhugh_nagumo");
        let bh = zero_bundle(BundleKind::Hypo, 0.1, 1);
        let be = zero_bundle(BundleKind::Elliptic, 0.1, 1);
        assert!(matches!(step_weak2_elliptic(&fnm, &[0.0, 0.0], &fnm.default_theta(), 0.1, &be), Err(Error::Dimension(_))));
        assert!(matches!(step_local_gauss(&ou, &[0.0], &[1.0, 1.0], 0.1, &bh), Err(Error::Dimension(_))));
    }

    #[test]
    fn small_step_limit() {
        let m = model("fitzhugh_nagumo");
        let th = m.default_theta();
        let x = [0.3, -0.1];
        let b = draw_hypo(&mut SeededRng::new(1, 0), 1e-12, 1).unwrap();
        for s in [SchemeId::LocalGauss, SchemeId::Weak2Hypo] {
            let y = step(&m, s, &x, &th, &b).unwrap();
            assert!((y[0] - x[0]).abs() < 1e-4 && (y[1] - x[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn generic_step_matches_f64() {
        let m = model("fitzhugh_nagumo");
        let th = m.default_theta();
        let x = [0.3, -0.1];
        let b = draw_hypo(&mut SeededRng::new(2, 0), 0.05, 1).unwrap();
        for s in [SchemeId::LocalGauss, SchemeId::Weak2Hypo, SchemeId::Euler] {
            let bb = if s == SchemeId::Euler { draw_elliptic(&mut SeededRng::new(2, 0), 0.05, 1).unwrap() } else { b.clone() };
            let a = step(&m, s, &x, &th, &bb).unwrap();
            let g = step_generic(&m, s, &x, &th, &bb).unwrap();
            assert!(crate::linalg::max_abs_diff(&a, &g) < 1e-13, "{s:?}");
        }
    }

    #[test]
    fn path_replay_and_subsample() {
        let m = model("ou");
        let p0 = simulate_path(&m, SchemeId::Euler, &[0.2], &[1.0, 1.0], 1e-4, 0, &mut SeededRng::new(1, 0)).unwrap();
        assert_eq!(p0.len(), 1);
        let a = simulate_path(&m, SchemeId::Weak2Elliptic, &[0.2], &[1.0, 1.0], 1e-4, 100, &mut SeededRng::new(1, 0)).unwrap();
        let b = simulate_path(&m, SchemeId::Weak2Elliptic, &[0.2], &[1.0, 1.0], 1e-4, 100, &mut SeededRng::new(1, 0)).unwrap();
        assert_eq!(a, b);
        let o = subsample(&a, 50).unwrap();
        assert_eq!(o.len(), 3);
        assert!((o.delta - 0.005).abs() < 1e-15);
        assert_eq!(o.get(2), a.state(100));
        let o1 = subsample(&a, 1).unwrap();
        assert_eq!(o1.data, a.states);
        assert!(subsample(&a, 200).is_err());
        let s = simulate_strided(&m, SchemeId::Weak2Elliptic, &[0.2], &[1.0, 1.0], 1e-4, 100, 20, &mut SeededRng::new(1, 0))
            .unwrap();
        assert_eq!(ObservationSet::from(&s).data, subsample(&a, 20).unwrap().data);
    }

    #[test]
    fn non_finite_state_reports_step() {
        // Large step on a cubic drift blows up.
        let m = model("fitzhugh_nagumo");
        let th = m.default_theta();
        let e = simulate_path(&m, SchemeId::Euler, &[50.0, 50.0], &th, 10.0, 50, &mut SeededRng::new(1, 0)).unwrap_err();
        assert!(matches!(e, Error::NonFiniteState { .. }), "{e:?}");
    }

    #[test]
    fn csv_round_trip() {
        let m = model("fitzhugh_nagumo");
        let p = simulate_path(&m, SchemeId::LocalGauss, &[0.0, 0.0], &m.default_theta(), 0.01, 10, &mut SeededRng::new(4, 0))
            .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let o = ObservationSet::read_csv(io::Cursor::new(buf)).unwrap();
        assert_eq!(o.data, p.states);
        assert!((o.delta - 0.01).abs() < 1e-15);
    }
}
