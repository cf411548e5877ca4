use std::collections::BTreeMap;

use super::{Block, Dims, LocalTerms, ParamLayout, Sde, Sdhs, SdhsForm, SdhsSpec};
use crate::error::{Error, Result};
use crate::real::Real;

/// Names accepted by [`builtin_model`].
pub const BUILTIN_NAMES: &[&str] = &[
    "ou",
    "quadratic_noise",
    "linear_sdhs",
    "fitzhugh_nagumo",
    "fitzhugh_nagumo_sdhs",
    "jansen_rit",
    "sir_log",
];

/// Scalar Ornstein–Uhlenbeck process `dX = −κ X dt + σ dB`.
#[derive(Clone, Debug)]
pub struct Ou {
    layout: ParamLayout,
}

impl Default for Ou {
    fn default() -> Self {
        Ou { layout: ParamLayout::new(&[("kappa", Block::Beta, false), ("sigma", Block::Sigma, true)]) }
    }
}

impl Sde for Ou {
    fn name(&self) -> &str {
        "ou"
    }
    fn dims(&self) -> Dims {
        Dims::elliptic(1)
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        out[0] = -(theta[0] * x[0]);
    }
    fn diffusion<T: Real>(&self, _x: &[T], theta: &[T], out: &mut [T]) {
        out[0] = theta[1];
    }
}

/// Scalar elliptic model with state-dependent noise,
/// `dX = −κ X dt + s (1 + X²/2) dB`.
#[derive(Clone, Debug)]
pub struct QuadraticNoise {
    layout: ParamLayout,
}

impl Default for QuadraticNoise {
    fn default() -> Self {
        QuadraticNoise {
            layout: ParamLayout::new(&[("kappa", Block::Beta, false), ("scale", Block::Sigma, true)]),
        }
    }
}

impl Sde for QuadraticNoise {
    fn name(&self) -> &str {
        "quadratic_noise"
    }
    fn dims(&self) -> Dims {
        Dims::elliptic(1)
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        out[0] = -(theta[0] * x[0]);
    }
    fn diffusion<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        out[0] = theta[1] * (x[0] * x[0] * 0.5 + 1.0);
    }
}

/// Linear damped oscillator `dX_R = −(c X_R + k X_S) dt + σ dB`, `dX_S = X_R dt`.
#[derive(Clone, Debug)]
pub struct LinearSdhsSpec {
    layout: ParamLayout,
}

impl Default for LinearSdhsSpec {
    fn default() -> Self {
        LinearSdhsSpec {
            layout: ParamLayout::new(&[
                ("c", Block::Beta, false),
                ("k", Block::Beta, false),
                ("sigma", Block::Sigma, true),
            ]),
        }
    }
}

impl SdhsSpec for LinearSdhsSpec {
    fn name(&self) -> &str {
        "linear_sdhs"
    }
    fn half_dim(&self) -> usize {
        1
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn damping<T: Real>(&self, _xs: &[T], theta: &[T], out: &mut [T]) {
        out[0] = theta[0];
    }
    fn forcing<T: Real>(&self, xs: &[T], theta: &[T], out: &mut [T]) {
        out[0] = theta[1] * xs[0];
    }
    fn noise<T: Real>(&self, theta: &[T], out: &mut [T]) {
        out[0] = theta[2];
    }
}

fn fn_layout() -> ParamLayout {
    ParamLayout::new(&[
        ("gamma", Block::Beta, false),
        ("alpha", Block::Beta, false),
        ("epsilon", Block::Gamma, true),
        ("s", Block::Gamma, false),
        ("sigma", Block::Sigma, true),
    ])
}

/// Stochastic FitzHugh–Nagumo model
///
/// `dX_R = (γ X_S − X_R + α) dt + σ dB`,
/// `dX_S = (X_S − X_S³ − X_R − s)/ε dt`,
/// with `θ = (γ, α, ε, s, σ)`.
#[derive(Clone, Debug)]
pub struct FitzHughNagumo {
    layout: ParamLayout,
}

impl Default for FitzHughNagumo {
    fn default() -> Self {
        FitzHughNagumo { layout: fn_layout() }
    }
}

impl Sde for FitzHughNagumo {
    fn name(&self) -> &str {
        "fitzhugh_nagumo"
    }
    fn dims(&self) -> Dims {
        Dims::new(1, 1)
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        let (u, v) = (x[0], x[1]);
        out[0] = theta[0] * v - u + theta[1];
        out[1] = (v - v * v * v - u - theta[3]) / theta[2];
    }
    fn diffusion<T: Real>(&self, _x: &[T], theta: &[T], out: &mut [T]) {
        out[0] = theta[4];
    }
    fn local_terms_closed(&self, x: &[f64], theta: &[f64], out: &mut LocalTerms) -> bool {
        let (u, v) = (x[0], x[1]);
        let (gamma, alpha, eps, s, sigma) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        let vr0 = gamma * v - u + alpha;
        let vs0 = (v - v * v * v - u - s) / eps;
        out.drift[0] = vr0;
        out.drift[1] = vs0;
        out.vr[0] = sigma;
        out.hat0_vs0[0] = (vs0 * (1.0 - 3.0 * v * v) - vr0) / eps;
        out.hatk_vs0[0] = -sigma / eps;
        true
    }
    fn g_matrix_closed(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> bool {
        let v = x[1];
        let (eps, s2) = (theta[2], theta[4] * theta[4]);
        let q = 1.0 - 3.0 * v * v;
        let rs = 0.5 * (s2 / (2.0 * eps) - s2 * q / (6.0 * eps * eps));
        out[0] = -0.5 * s2;
        out[1] = rs;
        out[2] = rs;
        out[3] = -s2 / (8.0 * eps * eps) + s2 * q / (8.0 * eps * eps * eps);
        true
    }
}

/// FitzHugh–Nagumo written as a damping Hamiltonian system through the
/// change of variables `(X_R, X_S) ↦ (V_{S,0}(X), X_S)`, so that the smooth
/// coordinate is unchanged and the new rough coordinate is its velocity.
/// Shares the parameter vector of [`FitzHughNagumo`].
#[derive(Clone, Debug)]
pub struct FitzHughNagumoSdhsSpec {
    layout: ParamLayout,
}

impl Default for FitzHughNagumoSdhsSpec {
    fn default() -> Self {
        FitzHughNagumoSdhsSpec { layout: fn_layout() }
    }
}

impl FitzHughNagumoSdhsSpec {
    /// Maps an original-coordinate state `(u, v)` to `(w, v)`.
    pub fn to_sdhs(x: &[f64], theta: &[f64]) -> [f64; 2] {
        let (u, v) = (x[0], x[1]);
        [(v - v * v * v - u - theta[3]) / theta[2], v]
    }
}

impl SdhsSpec for FitzHughNagumoSdhsSpec {
    fn name(&self) -> &str {
        "fitzhugh_nagumo_sdhs"
    }
    fn half_dim(&self) -> usize {
        1
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn damping<T: Real>(&self, xs: &[T], theta: &[T], out: &mut [T]) {
        let v = xs[0];
        out[0] = -((-(v * v * 3.0) + 1.0) / theta[2]) + 1.0;
    }
    fn forcing<T: Real>(&self, xs: &[T], theta: &[T], out: &mut [T]) {
        let v = xs[0];
        out[0] = ((theta[0] - 1.0) * v + v * v * v + theta[3] + theta[1]) / theta[2];
    }
    fn noise<T: Real>(&self, theta: &[T], out: &mut [T]) {
        out[0] = theta[4] / theta[2];
    }
}

/// Jansen–Rit neural mass model with
/// `θ = (A, B, C, μ, ν₀, a, b, r, ν_max, σ₁, σ₂, σ₃)`.
///
/// Damping `c = 2Γ` with `Γ = diag(a, a, b)` and forcing
/// `g(x_S) = Γ² x_S − G(x_S)`.
#[derive(Clone, Debug)]
pub struct JansenRitSpec {
    layout: ParamLayout,
}

impl Default for JansenRitSpec {
    fn default() -> Self {
        JansenRitSpec {
            layout: ParamLayout::new(&[
                ("A", Block::Beta, false),
                ("B", Block::Beta, false),
                ("C", Block::Beta, false),
                ("mu", Block::Beta, false),
                ("nu0", Block::Beta, false),
                ("a", Block::Beta, true),
                ("b", Block::Beta, true),
                ("r", Block::Beta, true),
                ("nu_max", Block::Beta, true),
                ("sigma1", Block::Sigma, true),
                ("sigma2", Block::Sigma, true),
                ("sigma3", Block::Sigma, true),
            ]),
        }
    }
}

/// `𝒮(z) = ν_max / (1 + exp(r (ν₀ − z)))`.
pub fn jr_sigmoid<T: Real>(z: T, nu0: T, r: T, nu_max: T) -> T {
    nu_max / ((r * (nu0 - z)).exp() + 1.0)
}

impl SdhsSpec for JansenRitSpec {
    fn name(&self) -> &str {
        "jansen_rit"
    }
    fn half_dim(&self) -> usize {
        3
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn damping<T: Real>(&self, _xs: &[T], theta: &[T], out: &mut [T]) {
        let (a, b) = (theta[5], theta[6]);
        out[0] = a * 2.0;
        out[4] = a * 2.0;
        out[8] = b * 2.0;
    }
    fn forcing<T: Real>(&self, xs: &[T], theta: &[T], out: &mut [T]) {
        let (aa, bb, c, mu, nu0, a, b, r, vmax) =
            (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5], theta[6], theta[7], theta[8]);
        let s = |z: T| jr_sigmoid(z, nu0, r, vmax);
        let g1 = aa * a * s(xs[1] - xs[2]);
        let g2 = aa * a * (mu + c * 0.8 * s(c * xs[0]));
        let g3 = bb * b * c * 0.25 * s(c * 0.25 * xs[0]);
        out[0] = a * a * xs[0] - g1;
        out[1] = a * a * xs[1] - g2;
        out[2] = b * b * xs[2] - g3;
    }
    fn noise<T: Real>(&self, theta: &[T], out: &mut [T]) {
        out[0] = theta[9];
        out[1] = theta[10];
        out[2] = theta[11];
    }
}

/// SIR model with a log-Ornstein–Uhlenbeck contact rate, on the state
/// `x = (log S, log I, log C)`; `θ = (α, β, σ, λ)`.
///
/// On the natural scale `dS = −r dt + √r dB₁`,
/// `dI = (r − λI) dt − √r dB₁ + √(λI) dB₂`, `d log C = α(β − log C) dt + σ dB₃`
/// with `r = C S I / N`; the coefficients below follow from Itô's formula.
#[derive(Clone, Debug)]
pub struct SirLog {
    layout: ParamLayout,
    pub population: f64,
    pub initial_susceptible: f64,
}

impl Default for SirLog {
    fn default() -> Self {
        SirLog {
            layout: ParamLayout::new(&[
                ("alpha", Block::Beta, true),
                ("beta", Block::Beta, false),
                ("sigma", Block::Sigma, true),
                ("lambda", Block::Beta, true),
            ]),
            population: 763.0,
            initial_susceptible: 762.0,
        }
    }
}

impl SirLog {
    pub fn initial_infected(&self) -> f64 {
        self.population - self.initial_susceptible
    }
}

impl Sde for SirLog {
    fn name(&self) -> &str {
        "sir_log"
    }
    fn dims(&self) -> Dims {
        Dims::elliptic(3)
    }
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        let ln_n = self.population.ln();
        let (ls, li, lc) = (x[0], x[1], x[2]);
        let (alpha, beta, lambda) = (theta[0], theta[1], theta[3]);
        let ci_n = (lc + li - ln_n).exp();
        let cs_n = (lc + ls - ln_n).exp();
        out[0] = -(ci_n + ci_n * (-ls).exp() * 0.5);
        out[1] = cs_n - lambda - (cs_n + lambda) * (-li).exp() * 0.5;
        out[2] = alpha * (beta - lc);
    }
    fn diffusion<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        let ln_n = self.population.ln();
        let (ls, li, lc) = (x[0], x[1], x[2]);
        out[0] = ((lc + li - ls - ln_n) * 0.5).exp();
        out[3] = -((lc + ls - li - ln_n) * 0.5).exp();
        out[4] = theta[3].sqrt() * (-(li * 0.5)).exp();
        out[8] = theta[2];
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Ou(Ou),
    QuadraticNoise(QuadraticNoise),
    LinearSdhs(Sdhs<LinearSdhsSpec>),
    FitzHughNagumo(FitzHughNagumo),
    FitzHughNagumoSdhs(Sdhs<FitzHughNagumoSdhsSpec>),
    JansenRit(Sdhs<JansenRitSpec>),
    SirLog(SirLog),
}

/// A builtin model together with its reference parameter and initial state.
#[derive(Clone, Debug)]
pub struct BuiltinModel {
    kind: Kind,
    theta: Vec<f64>,
    x0: Vec<f64>,
}

impl BuiltinModel {
    /// Reference parameter (the data-generating values used in experiments).
    pub fn default_theta(&self) -> Vec<f64> {
        self.theta.clone()
    }
    pub fn default_x0(&self) -> Vec<f64> {
        self.x0.clone()
    }
    /// The SIR model when this is `sir_log`.
    pub fn as_sir(&self) -> Option<&SirLog> {
        match &self.kind {
            Kind::SirLog(m) => Some(m),
            _ => None,
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match &$self.kind {
            Kind::Ou($m) => $body,
            Kind::QuadraticNoise($m) => $body,
            Kind::LinearSdhs($m) => $body,
            Kind::FitzHughNagumo($m) => $body,
            Kind::FitzHughNagumoSdhs($m) => $body,
            Kind::JansenRit($m) => $body,
            Kind::SirLog($m) => $body,
        }
    };
}

impl Sde for BuiltinModel {
    fn name(&self) -> &str {
        dispatch!(self, m => m.name())
    }
    fn dims(&self) -> Dims {
        dispatch!(self, m => m.dims())
    }
    fn layout(&self) -> &ParamLayout {
        dispatch!(self, m => m.layout())
    }
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        dispatch!(self, m => m.drift(x, theta, out))
    }
    fn diffusion<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        dispatch!(self, m => m.diffusion(x, theta, out))
    }
    fn local_terms_closed(&self, x: &[f64], theta: &[f64], out: &mut LocalTerms) -> bool {
        dispatch!(self, m => m.local_terms_closed(x, theta, out))
    }
    fn g_matrix_closed(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> bool {
        dispatch!(self, m => m.g_matrix_closed(x, theta, out))
    }
    fn sdhs_form(&self) -> Option<&dyn SdhsForm> {
        dispatch!(self, m => m.sdhs_form())
    }
}

/// Builds a model by name. `fixed_params` overrides reference parameter
/// values by name, plus the SIR constants `N` and `S0`.
pub fn builtin_model(name: &str, fixed_params: &BTreeMap<String, f64>) -> Result<BuiltinModel> {
    let canonical = match name {
        "fn" => "fitzhugh_nagumo",
        "fn_sdhs" => "fitzhugh_nagumo_sdhs",
        "jr" => "jansen_rit",
        "sir" => "sir_log",
        other => other,
    };
    let mut model = match canonical {
        "ou" => BuiltinModel { kind: Kind::Ou(Ou::default()), theta: vec![1.0, 1.0], x0: vec![0.0] },
        "quadratic_noise" => BuiltinModel {
            kind: Kind::QuadraticNoise(QuadraticNoise::default()),
            theta: vec![0.5, 1.0],
            x0: vec![0.0],
        },
        "linear_sdhs" => BuiltinModel {
            kind: Kind::LinearSdhs(Sdhs(LinearSdhsSpec::default())),
            theta: vec![0.8, 1.5, 1.0],
            x0: vec![0.0, 0.0],
        },
        "fitzhugh_nagumo" => BuiltinModel {
            kind: Kind::FitzHughNagumo(FitzHughNagumo::default()),
            theta: vec![1.5, 0.3, 0.1, 0.01, 0.6],
            x0: vec![0.0, 0.0],
        },
        "fitzhugh_nagumo_sdhs" => BuiltinModel {
            kind: Kind::FitzHughNagumoSdhs(Sdhs(FitzHughNagumoSdhsSpec::default())),
            theta: vec![1.5, 0.3, 0.1, 0.01, 0.6],
            x0: vec![-0.1, 0.0],
        },
        "jansen_rit" => BuiltinModel {
            kind: Kind::JansenRit(Sdhs(JansenRitSpec::default())),
            theta: vec![3.25, 22.0, 135.0, 220.0, 6.0, 100.0, 50.0, 0.56, 5.0, 0.01, 2000.0, 1.0],
            x0: vec![0.0; 6],
        },
        "sir_log" => {
            let mut sir = SirLog::default();
            if let Some(&n) = fixed_params.get("N") {
                sir.population = n;
            }
            if let Some(&s0) = fixed_params.get("S0") {
                sir.initial_susceptible = s0;
            }
            if !(sir.population > sir.initial_susceptible && sir.initial_susceptible > 0.0) {
                return Err(Error::InvalidArgument("SIR requires 0 < S0 < N".into()));
            }
            let x0 = vec![sir.initial_susceptible.ln(), sir.initial_infected().ln(), 0.6];
            BuiltinModel { kind: Kind::SirLog(sir), theta: vec![0.5, 0.6, 0.1, 0.5], x0 }
        }
        _ => return Err(Error::Unknown { kind: "model", name: name.to_string() }),
    };
    for (key, &value) in fixed_params {
        match model.layout().index_of(key) {
            Some(i) => model.theta[i] = value,
            None if canonical == "sir_log" && (key == "N" || key == "S0") => {}
            None => {
                return Err(Error::Unknown { kind: "parameter", name: format!("{key} (model {canonical})") })
            }
        }
    }
    model.layout().validate(&model.theta)?;
    Ok(model)
}
