use super::{Dims, LocalTerms, ParamLayout, Sde};
use crate::real::Real;

/// Largest half-dimension supported by the stack buffers below.
const MAX_HALF: usize = 8;

/// Ingredients of a stochastic damping Hamiltonian system
///
/// `dX_R = −(c(X_S) X_R + g(X_S)) dt + diag(σ) dB`, `dX_S = X_R dt`,
/// with `X_R, X_S ∈ ℝ^{d̄}`.
pub trait SdhsSpec: Send + Sync {
    fn name(&self) -> &str;
    /// The half-dimension `d̄`.
    fn half_dim(&self) -> usize;
    fn layout(&self) -> &ParamLayout;
    /// Damping matrix `c(x_S)`, row-major `d̄ × d̄`, `out` zeroed on entry.
    fn damping<T: Real>(&self, xs: &[T], theta: &[T], out: &mut [T]);
    /// Forcing `g(x_S)`, `out` zeroed on entry.
    fn forcing<T: Real>(&self, xs: &[T], theta: &[T], out: &mut [T]);
    /// Diagonal noise scales.
    fn noise<T: Real>(&self, theta: &[T], out: &mut [T]);
}

/// Object-safe view of the SDHS structure used by the specialised `Φ₂`.
pub trait SdhsForm: Send + Sync {
    fn half_dim(&self) -> usize;
    fn damping_at(&self, xs: &[f64], theta: &[f64], out: &mut [f64]);
    fn noise_at(&self, theta: &[f64], out: &mut [f64]);
}

/// Wraps an [`SdhsSpec`] into a full model.
#[derive(Clone, Debug, Default)]
pub struct Sdhs<S>(pub S);

impl<S: SdhsSpec> SdhsForm for Sdhs<S> {
    fn half_dim(&self) -> usize {
        self.0.half_dim()
    }
    fn damping_at(&self, xs: &[f64], theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.0.damping(xs, theta, out)
    }
    fn noise_at(&self, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.0.noise(theta, out)
    }
}

impl<S: SdhsSpec> Sde for Sdhs<S> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn dims(&self) -> Dims {
        let h = self.0.half_dim();
        assert!(h <= MAX_HALF);
        Dims::new(h, h)
    }
    fn layout(&self) -> &ParamLayout {
        self.0.layout()
    }
    fn drift<T: Real>(&self, x: &[T], theta: &[T], out: &mut [T]) {
        let h = self.0.half_dim();
        let (xr, xs) = x.split_at(h);
        let mut c = [T::zero(); MAX_HALF * MAX_HALF];
        let mut g = [T::zero(); MAX_HALF];
        self.0.damping(xs, theta, &mut c[..h * h]);
        self.0.forcing(xs, theta, &mut g[..h]);
        for i in 0..h {
            let mut v = g[i];
            for j in 0..h {
                v += c[i * h + j] * xr[j];
            }
            out[i] = -v;
            out[h + i] = xr[i];
        }
    }
    fn diffusion<T: Real>(&self, _x: &[T], theta: &[T], out: &mut [T]) {
        let h = self.0.half_dim();
        let mut s = [T::zero(); MAX_HALF];
        self.0.noise(theta, &mut s[..h]);
        for i in 0..h {
            out[i * h + i] = s[i];
        }
    }
    fn local_terms_closed(&self, x: &[f64], theta: &[f64], out: &mut LocalTerms) -> bool {
        let h = self.0.half_dim();
        out.drift.iter_mut().for_each(|v| *v = 0.0);
        out.vr.iter_mut().for_each(|v| *v = 0.0);
        out.hatk_vs0.iter_mut().for_each(|v| *v = 0.0);
        self.drift(x, theta, &mut out.drift);
        let mut s = [0.0; MAX_HALF];
        self.0.noise(theta, &mut s[..h]);
        for i in 0..h {
            out.vr[i * h + i] = s[i];
            out.hatk_vs0[i * h + i] = s[i];
            out.hat0_vs0[i] = out.drift[i];
        }
        true
    }
    fn g_matrix_closed(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> bool {
        let h = self.0.half_dim();
        let d = 2 * h;
        let mut c = [0.0; MAX_HALF * MAX_HALF];
        let mut s = [0.0; MAX_HALF];
        self.0.damping(&x[h..], theta, &mut c[..h * h]);
        self.0.noise(theta, &mut s[..h]);
        for i in 0..h {
            for k in 0..h {
                let s2k = s[k] * s[k];
                out[i * d + k] = -0.5 * c[i * h + k] * s2k;
                let rs = -c[i * h + k] * s2k / 6.0 - s[i] * s[i] * c[k * h + i] / 12.0;
                out[i * d + h + k] = rs;
                out[(h + k) * d + i] = rs;
                out[(h + k) * d + h + i] = -s2k * c[i * h + k] / 8.0;
            }
        }
        true
    }
    fn sdhs_form(&self) -> Option<&dyn SdhsForm> {
        Some(self)
    }
}
