//! SDE model abstraction, parameter layout and hat-operator compositions.
//!
//! The state is ordered `x = (x_R, x_S)` with `d_R` rough coordinates driven
//! by Brownian motion and `d_S` smooth coordinates driven only through the
//! drift. The diffusion is a `d_R × d_R` matrix whose column `k` is the vector
//! field `V_{R,k}`; it is stored row-major, so entry `(i, k)` is `V_{R,k}^i`.

mod builtin;
mod fd;
mod sdhs;
mod tensors;

pub use builtin::{
    builtin_model, BuiltinModel, FitzHughNagumo, JansenRitSpec, LinearSdhsSpec, Ou,
    QuadraticNoise, SirLog, FitzHughNagumoSdhsSpec, BUILTIN_NAMES,
};
pub use fd::{AsPlain, FiniteDiff, PlainSde};
pub use sdhs::{Sdhs, SdhsForm, SdhsSpec};
pub use tensors::{ad_tensors, DerivativeTensors, DerivedCoefficients};

use crate::error::{Error, Result};
use crate::real::Real;
use serde::{Deserialize, Serialize};

/// Rough/smooth dimension split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub rough: usize,
    pub smooth: usize,
}

impl Dims {
    pub fn new(rough: usize, smooth: usize) -> Self {
        assert!(rough >= 1, "at least one rough coordinate is required");
        Dims { rough, smooth }
    }
    pub fn elliptic(rough: usize) -> Self {
        Dims::new(rough, 0)
    }
    #[inline]
    pub fn total(&self) -> usize {
        self.rough + self.smooth
    }
    #[inline]
    pub fn is_elliptic(&self) -> bool {
        self.smooth == 0
    }
}

/// Which part of the model a parameter enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Rough drift `V_{R,0}`.
    Beta,
    /// Smooth drift `V_{S,0}`.
    Gamma,
    /// Diffusion `V_R`.
    Sigma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub block: Block,
    /// Optimised on the log scale and required to be strictly positive.
    pub positive: bool,
}

/// Ordered parameter vector description, `θ = (β, γ, σ)` grouped by block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub params: Vec<ParamSpec>,
}

impl ParamLayout {
    pub fn new(specs: &[(&str, Block, bool)]) -> Self {
        ParamLayout {
            params: specs
                .iter()
                .map(|&(name, block, positive)| ParamSpec { name: name.to_string(), block, positive })
                .collect(),
        }
    }
    pub fn len(&self) -> usize {
        self.params.len()
    }
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }
    pub fn positive_mask(&self) -> Vec<bool> {
        self.params.iter().map(|p| p.positive).collect()
    }
    /// Sizes of the β, γ and σ blocks.
    pub fn partition(&self) -> (usize, usize, usize) {
        let count = |b| self.params.iter().filter(|p| p.block == b).count();
        (count(Block::Beta), count(Block::Gamma), count(Block::Sigma))
    }
    /// Checks length, finiteness and positivity of a natural-space vector.
    pub fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.len() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                self.len()
            )));
        }
        for (p, &v) in self.params.iter().zip(theta) {
            if !v.is_finite() || (p.positive && v <= 0.0) {
                return Err(Error::InvalidArgument(format!("parameter {} = {v} is out of range", p.name)));
            }
        }
        Ok(())
    }
}

/// Derivative depth available from, or requested of, a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    /// Values only.
    Zero,
    /// Jacobians of drift and diffusion.
    First,
    /// Hessians of drift and diffusion.
    Second,
    /// Third rough derivatives of the smooth drift.
    Third,
}

/// A model whose coefficients are written once over any [`Real`] scalar,
/// which makes every derivative exact through nested dual numbers.
pub trait Sde: Send + Sync {
    fn name(&self) -> &str;
    fn dims(&self) -> Dims;
    fn layout(&self) -> &ParamLayout;
    /// `V_0 = (V_{R,0}, V_{S,0})`; `out` has length `d` and is zeroed on entry.
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]);
    /// `V_R` row-major; `out` has length `d_R²` and is zeroed on entry.
    fn diffusion<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]);

    /// Closed-form [`LocalTerms`]; `false` selects the generic route.
    fn local_terms_closed(&self, _x: &[f64], _theta: &[f64], _out: &mut LocalTerms) -> bool {
        false
    }
    /// Closed-form Φ₂ coefficient matrix `G`; `false` selects the generic route.
    fn g_matrix_closed(&self, _x: &[f64], _theta: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    /// Stochastic damping Hamiltonian structure, when the model has it.
    fn sdhs_form(&self) -> Option<&dyn SdhsForm> {
        None
    }
}

/// First-level coefficients used by the local Gaussian mean and covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTerms {
    pub dims: Dims,
    /// `V_0`, length `d`.
    pub drift: Vec<f64>,
    /// `V_R`, row-major `d_R × d_R`.
    pub vr: Vec<f64>,
    /// `V̂_0 V_{S,0}`, length `d_S`.
    pub hat0_vs0: Vec<f64>,
    /// `V̂_k V_{S,0}` stored `[s * d_R + (k - 1)]`.
    pub hatk_vs0: Vec<f64>,
}

impl LocalTerms {
    pub fn zeros(dims: Dims) -> Self {
        LocalTerms {
            dims,
            drift: vec![0.0; dims.total()],
            vr: vec![0.0; dims.rough * dims.rough],
            hat0_vs0: vec![0.0; dims.smooth],
            hatk_vs0: vec![0.0; dims.smooth * dims.rough],
        }
    }

    pub fn from_derived(dc: &DerivedCoefficients<f64>) -> Self {
        let dims = dc.dims;
        let (dr, ds) = (dims.rough, dims.smooth);
        let mut lt = LocalTerms::zeros(dims);
        lt.drift.copy_from_slice(&dc.v0);
        lt.vr.copy_from_slice(&dc.vr);
        for s in 0..ds {
            lt.hat0_vs0[s] = dc.hat_vs0(0, s);
            for k in 1..=dr {
                lt.hatk_vs0[s * dr + k - 1] = dc.hat_vs0(k, s);
            }
        }
        lt
    }

    /// `a_R = V_R V_Rᵀ`.
    pub fn a_r(&self) -> Vec<f64> {
        let dr = self.dims.rough;
        let mut a = vec![0.0; dr * dr];
        for i in 0..dr {
            for j in 0..dr {
                a[i * dr + j] = (0..dr).map(|k| self.vr[i * dr + k] * self.vr[j * dr + k]).sum();
            }
        }
        a
    }

    /// Unit-time local Gaussian covariance `Σ₁(x; θ)`, row-major `d × d`.
    pub fn sigma1(&self, out: &mut [f64]) {
        let (dr, ds) = (self.dims.rough, self.dims.smooth);
        let d = dr + ds;
        for i in 0..dr {
            for j in 0..dr {
                out[i * d + j] = (0..dr).map(|k| self.vr[i * dr + k] * self.vr[j * dr + k]).sum();
            }
        }
        for i in 0..dr {
            for s in 0..ds {
                let v: f64 = 0.5 * (0..dr).map(|k| self.vr[i * dr + k] * self.hatk_vs0[s * dr + k]).sum::<f64>();
                out[i * d + dr + s] = v;
                out[(dr + s) * d + i] = v;
            }
        }
        for s in 0..ds {
            for t in 0..ds {
                out[(dr + s) * d + dr + t] =
                    (0..dr).map(|k| self.hatk_vs0[s * dr + k] * self.hatk_vs0[t * dr + k]).sum::<f64>() / 3.0;
            }
        }
    }
}

/// Uniform `f64` interface used by schemes, expansions and estimators.
///
/// Implemented for every [`Sde`] (exact derivatives) and for
/// [`FiniteDiff`] wrappers around plain evaluators.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;
    fn dims(&self) -> Dims;
    fn layout(&self) -> &ParamLayout;
    /// Highest derivative order this model can supply.
    fn max_order(&self) -> Order;
    /// Raw drift and diffusion without finiteness checks.
    fn eval_raw(&self, x: &[f64], theta: &[f64], drift: &mut [f64], diffusion: &mut [f64]);
    fn tensors(&self, x: &[f64], theta: &[f64], order: Order) -> Result<DerivativeTensors<f64>>;
    fn local_terms(&self, x: &[f64], theta: &[f64], out: &mut LocalTerms) -> Result<()>;
    fn g_matrix(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()>;
    fn sdhs(&self) -> Option<&dyn SdhsForm>;
}

impl<M: Sde> Model for M {
    fn name(&self) -> &str {
        Sde::name(self)
    }
    fn dims(&self) -> Dims {
        Sde::dims(self)
    }
    fn layout(&self) -> &ParamLayout {
        Sde::layout(self)
    }
    fn max_order(&self) -> Order {
        Order::Third
    }
    fn eval_raw(&self, x: &[f64], theta: &[f64], drift: &mut [f64], diffusion: &mut [f64]) {
        drift.iter_mut().for_each(|v| *v = 0.0);
        diffusion.iter_mut().for_each(|v| *v = 0.0);
        self.drift(x, theta, drift);
        self.diffusion(x, theta, diffusion);
    }
    fn tensors(&self, x: &[f64], theta: &[f64], order: Order) -> Result<DerivativeTensors<f64>> {
        let t = ad_tensors(self, x, theta, order);
        t.check_finite()?;
        Ok(t)
    }
    fn local_terms(&self, x: &[f64], theta: &[f64], out: &mut LocalTerms) -> Result<()> {
        if !self.local_terms_closed(x, theta, out) {
            let order = if Sde::dims(self).is_elliptic() { Order::First } else { Order::Second };
            let dc = DerivedCoefficients::from_tensors(&Model::tensors(self, x, theta, order)?);
            *out = LocalTerms::from_derived(&dc);
        }
        check_finite("local coefficient", &out.drift)?;
        check_finite("local coefficient", &out.hat0_vs0)?;
        Ok(())
    }
    fn g_matrix(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.g_matrix_closed(x, theta, out) {
            let order = if Sde::dims(self).is_elliptic() { Order::Second } else { Order::Third };
            let dc = DerivedCoefficients::from_tensors(&Model::tensors(self, x, theta, order)?);
            crate::expansion::g_matrix_from_derived(&dc, out);
        }
        check_finite("G-matrix entry", out)
    }
    fn sdhs(&self) -> Option<&dyn SdhsForm> {
        self.sdhs_form()
    }
}

pub(crate) fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|z| !z.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Stacked drift `V_0 = [V_{R,0}; V_{S,0}]` and diffusion `V_R` at `(x, θ)`.
pub fn eval_coefficients<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let dims = model.dims();
    if x.len() != dims.total() {
        return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), dims.total())));
    }
    check_finite("state", x)?;
    let mut drift = vec![0.0; dims.total()];
    let mut diffusion = vec![0.0; dims.rough * dims.rough];
    model.eval_raw(x, theta, &mut drift, &mut diffusion);
    check_finite("drift", &drift)?;
    check_finite("diffusion", &diffusion)?;
    Ok((drift, diffusion))
}

/// Every hat-operator composition needed by the schemes and expansions.
///
/// `order` defaults to what the model can supply; requesting more than that
/// is a capability error.
pub fn derived_coefficients<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    theta: &[f64],
    order: Order,
) -> Result<DerivedCoefficients<f64>> {
    if order > model.max_order() {
        return Err(Error::Capability(format!(
            "model '{}' supplies derivatives up to {:?}, {:?} requested",
            model.name(),
            model.max_order(),
            order
        )));
    }
    Ok(DerivedCoefficients::from_tensors(&model.tensors(x, theta, order)?))
}

/// Derivative order needed for the full set of compositions used by the
/// weak second-order scheme and `Φ₂` of a model with these dimensions.
pub fn full_order(dims: Dims) -> Order {
    if dims.is_elliptic() {
        Order::Second
    } else {
        Order::Third
    }
}
