use super::{DerivativeTensors, Dims, LocalTerms, Model, Order, ParamLayout, Sde, SdhsForm};
use crate::error::{Error, Result};

/// A model given only by plain `f64` evaluators.
pub trait PlainSde: Send + Sync {
    fn name(&self) -> &str;
    fn dims(&self) -> Dims;
    fn layout(&self) -> &ParamLayout;
    /// `out` has length `d` and is zeroed on entry.
    fn drift(&self, x: &[f64], theta: &[f64], out: &mut [f64]);
    /// `out` has length `d_R²` and is zeroed on entry.
    fn diffusion(&self, x: &[f64], theta: &[f64], out: &mut [f64]);
}

/// Exposes an [`Sde`] through plain evaluators only, hiding its exact
/// derivatives. Used to cross-check the finite-difference route.
pub struct AsPlain<M>(pub M);

impl<M: Sde> PlainSde for AsPlain<M> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn layout(&self) -> &ParamLayout {
        self.0.layout()
    }
    fn drift(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        self.0.drift(x, theta, out)
    }
    fn diffusion(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        self.0.diffusion(x, theta, out)
    }
}

/// Derivatives by central differences with step `h_j = 1e-5·max(1, |x_j|)`,
/// nested for second derivatives. Third derivatives are not offered.
pub struct FiniteDiff<P>(pub P);

impl<P: PlainSde> FiniteDiff<P> {
    fn step(x: &[f64], j: usize) -> f64 {
        1e-5 * x[j].abs().max(1.0)
    }

    /// Drift and diffusion stacked into one vector.
    fn stacked(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let dims = self.0.dims();
        let d = dims.total();
        let mut out = vec![0.0; d + dims.rough * dims.rough];
        let (a, b) = out.split_at_mut(d);
        self.0.drift(x, theta, a);
        self.0.diffusion(x, theta, b);
        out
    }

    fn shifted(&self, x: &[f64], theta: &[f64], shifts: &[(usize, f64)]) -> Vec<f64> {
        let mut y = x.to_vec();
        for &(j, h) in shifts {
            y[j] += h;
        }
        self.stacked(&y, theta)
    }
}

impl<P: PlainSde> Model for FiniteDiff<P> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn layout(&self) -> &ParamLayout {
        self.0.layout()
    }
    fn max_order(&self) -> Order {
        Order::Second
    }
    fn eval_raw(&self, x: &[f64], theta: &[f64], drift: &mut [f64], diffusion: &mut [f64]) {
        drift.iter_mut().for_each(|v| *v = 0.0);
        diffusion.iter_mut().for_each(|v| *v = 0.0);
        self.0.drift(x, theta, drift);
        self.0.diffusion(x, theta, diffusion);
    }
    fn tensors(&self, x: &[f64], theta: &[f64], order: Order) -> Result<DerivativeTensors<f64>> {
        if order > Order::Second {
            return Err(Error::Capability(format!(
                "finite-difference model '{}' has no third derivatives",
                self.0.name()
            )));
        }
        let dims = self.0.dims();
        let (d, dr) = (dims.total(), dims.rough);
        let nf = d + dr * dr;
        let base = self.stacked(x, theta);
        let mut t = DerivativeTensors {
            dims,
            order,
            v0: base[..d].to_vec(),
            vr: base[d..].to_vec(),
            dv0: vec![0.0; d * d],
            dvr: vec![0.0; dr * dr * d],
            d2v0: vec![0.0; d * d * d],
            d2vr: vec![0.0; dr * dr * d * d],
            d3vs0: vec![0.0; dims.smooth * dr * dr * dr],
        };
        let put = |t: &mut DerivativeTensors<f64>, f: usize, j: usize, l: Option<usize>, v: f64| {
            match (f < d, l) {
                (true, None) => t.dv0[f * d + j] = v,
                (false, None) => t.dvr[(f - d) * d + j] = v,
                (true, Some(l)) => t.d2v0[(f * d + j) * d + l] = v,
                (false, Some(l)) => t.d2vr[((f - d) * d + j) * d + l] = v,
            }
        };
        if order >= Order::First {
            for j in 0..d {
                let h = Self::step(x, j);
                let p = self.shifted(x, theta, &[(j, h)]);
                let m = self.shifted(x, theta, &[(j, -h)]);
                for f in 0..nf {
                    put(&mut t, f, j, None, (p[f] - m[f]) / (2.0 * h));
                }
            }
        }
        if order >= Order::Second {
            for j in 0..d {
                let hj = Self::step(x, j);
                for l in 0..=j {
                    let hl = Self::step(x, l);
                    let pp = self.shifted(x, theta, &[(j, hj), (l, hl)]);
                    let pm = self.shifted(x, theta, &[(j, hj), (l, -hl)]);
                    let mp = self.shifted(x, theta, &[(j, -hj), (l, hl)]);
                    let mm = self.shifted(x, theta, &[(j, -hj), (l, -hl)]);
                    for f in 0..nf {
                        let v = (pp[f] - pm[f] - mp[f] + mm[f]) / (4.0 * hj * hl);
                        put(&mut t, f, j, Some(l), v);
                        put(&mut t, f, l, Some(j), v);
                    }
                }
            }
        }
        t.check_finite()?;
        Ok(t)
    }
    fn local_terms(&self, x: &[f64], theta: &[f64], out: &mut LocalTerms) -> Result<()> {
        let order = if self.0.dims().is_elliptic() { Order::First } else { Order::Second };
        let dc = super::DerivedCoefficients::from_tensors(&self.tensors(x, theta, order)?);
        *out = LocalTerms::from_derived(&dc);
        Ok(())
    }
    fn g_matrix(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.0.dims().is_elliptic() {
            return Err(Error::Capability(format!(
                "finite-difference model '{}' cannot form the hypo-elliptic G matrix",
                self.0.name()
            )));
        }
        let dc = super::DerivedCoefficients::from_tensors(&self.tensors(x, theta, Order::Second)?);
        crate::expansion::g_matrix_from_derived(&dc, out);
        Ok(())
    }
    fn sdhs(&self) -> Option<&dyn SdhsForm> {
        None
    }
}
