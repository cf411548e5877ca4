use super::{check_finite, Dims, Order, Sde};
use crate::error::Result;
use crate::real::{Dual, Real};

/// Spatial derivative tensors of the drift and diffusion at one point.
///
/// Index conventions (all row-major):
/// `dv0[i*d + j] = ∂_j V_0^i`, `d2v0[(i*d + j)*d + l] = ∂_j ∂_l V_0^i`,
/// `dvr[(i*d_R + k)*d + j] = ∂_j V_{R,k+1}^i`, `d2vr` likewise with a trailing
/// `l`, and `d3vs0[((s*d_R + a)*d_R + b)*d_R + c] = ∂_a ∂_b ∂_c V_{S,0}^s`
/// over rough directions only.
#[derive(Clone, Debug)]
pub struct DerivativeTensors<T> {
    pub dims: Dims,
    pub order: Order,
    pub v0: Vec<T>,
    pub vr: Vec<T>,
    pub dv0: Vec<T>,
    pub dvr: Vec<T>,
    pub d2v0: Vec<T>,
    pub d2vr: Vec<T>,
    pub d3vs0: Vec<T>,
}

impl<T: Real> DerivativeTensors<T> {
    fn zeros(dims: Dims, order: Order) -> Self {
        let (d, dr, ds) = (dims.total(), dims.rough, dims.smooth);
        let z = |n: usize| vec![T::zero(); n];
        DerivativeTensors {
            dims,
            order,
            v0: z(d),
            vr: z(dr * dr),
            dv0: z(d * d),
            dvr: z(dr * dr * d),
            d2v0: z(d * d * d),
            d2vr: z(dr * dr * d * d),
            d3vs0: z(ds * dr * dr * dr),
        }
    }
}

impl DerivativeTensors<f64> {
    pub(crate) fn check_finite(&self) -> Result<()> {
        check_finite("drift", &self.v0)?;
        check_finite("diffusion", &self.vr)?;
        check_finite("drift derivative", &self.dv0)?;
        check_finite("diffusion derivative", &self.dvr)?;
        check_finite("drift second derivative", &self.d2v0)?;
        check_finite("diffusion second derivative", &self.d2vr)?;
        check_finite("drift third derivative", &self.d3vs0)
    }
}

fn seed<T: Real>(x: &[T], j: usize) -> Vec<Dual<T>> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| Dual::new(v, if i == j { T::one() } else { T::zero() }))
        .collect()
}

fn lift_theta<T: Real>(theta: &[T]) -> Vec<Dual<T>> {
    theta.iter().map(|&v| Dual::constant(v)).collect()
}

fn eval<M: Sde, T: Real>(m: &M, x: &[T], theta: &[T], drift: &mut Vec<T>, diff: &mut Vec<T>) {
    let dims = m.dims();
    drift.clear();
    drift.resize(dims.total(), T::zero());
    diff.clear();
    diff.resize(dims.rough * dims.rough, T::zero());
    m.drift(x, theta, drift);
    m.diffusion(x, theta, diff);
}

/// Exact derivative tensors by nested forward-mode differentiation.
pub fn ad_tensors<M: Sde, T: Real>(m: &M, x: &[T], theta: &[T], order: Order) -> DerivativeTensors<T> {
    let dims = m.dims();
    let (d, dr, ds) = (dims.total(), dims.rough, dims.smooth);
    let mut t = DerivativeTensors::zeros(dims, order);
    {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        eval(m, x, theta, &mut a, &mut b);
        t.v0.copy_from_slice(&a);
        t.vr.copy_from_slice(&b);
    }
    if order >= Order::First {
        let th1 = lift_theta(theta);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for j in 0..d {
            eval(m, &seed(x, j), &th1, &mut a, &mut b);
            for i in 0..d {
                t.dv0[i * d + j] = a[i].eps;
            }
            for ik in 0..dr * dr {
                t.dvr[ik * d + j] = b[ik].eps;
            }
        }
    }
    if order >= Order::Second {
        let th2 = lift_theta(&lift_theta(theta));
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for l in 0..d {
            let inner = seed(x, l);
            for j in 0..=l {
                eval(m, &seed(&inner, j), &th2, &mut a, &mut b);
                for i in 0..d {
                    let v = a[i].eps.eps;
                    t.d2v0[(i * d + j) * d + l] = v;
                    t.d2v0[(i * d + l) * d + j] = v;
                }
                for ik in 0..dr * dr {
                    let v = b[ik].eps.eps;
                    t.d2vr[(ik * d + j) * d + l] = v;
                    t.d2vr[(ik * d + l) * d + j] = v;
                }
            }
        }
    }
    if order >= Order::Third && ds > 0 {
        let th3 = lift_theta(&lift_theta(&lift_theta(theta)));
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for c in 0..dr {
            let s1 = seed(x, c);
            for bb in 0..=c {
                let s2 = seed(&s1, bb);
                for aa in 0..=bb {
                    eval(m, &seed(&s2, aa), &th3, &mut a, &mut b);
                    for s in 0..ds {
                        let v = a[dr + s].eps.eps.eps;
                        for (p, q, r) in permutations(aa, bb, c) {
                            t.d3vs0[((s * dr + p) * dr + q) * dr + r] = v;
                        }
                    }
                }
            }
        }
    }
    t
}

fn permutations(a: usize, b: usize, c: usize) -> [(usize, usize, usize); 6] {
    [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
}

/// Hat-operator compositions at one `(x, θ)`.
///
/// Field index `0` denotes the drift (`V_{R,0}` on rough rows) and `k ≥ 1`
/// the diffusion column `V_{R,k}`. The operators are
/// `V̂_0 f = ⟨V_0, ∂f⟩ + ½ Σ_k V_{R,k}ᵀ ∂²_{x_R} f V_{R,k}` and
/// `V̂_k f = ⟨V_{R,k}, ∂_{x_R} f⟩`.
#[derive(Clone, Debug)]
pub struct DerivedCoefficients<T> {
    pub dims: Dims,
    pub order: Order,
    pub v0: Vec<T>,
    pub vr: Vec<T>,
    /// `V̂_{k1} V_{R,k2}^i` at `[(k1*(d_R+1) + k2)*d_R + i]`.
    pub hat_vr: Vec<T>,
    /// `V̂_k V_{S,0}^s` at `[k*d_S + s]`.
    pub hat_vs0: Vec<T>,
    /// `V̂_{k1} V̂_{k2} V_{S,0}^s` at `[(k1*(d_R+1) + k2)*d_S + s]`; the
    /// `(0, 0)` slot is unused.
    pub hathat_vs0: Vec<T>,
}

impl<T: Real> DerivedCoefficients<T> {
    #[inline]
    pub fn hat_vr(&self, k1: usize, k2: usize, i: usize) -> T {
        let dr = self.dims.rough;
        self.hat_vr[(k1 * (dr + 1) + k2) * dr + i]
    }
    #[inline]
    pub fn hat_vs0(&self, k: usize, s: usize) -> T {
        self.hat_vs0[k * self.dims.smooth + s]
    }
    #[inline]
    pub fn hathat_vs0(&self, k1: usize, k2: usize, s: usize) -> T {
        self.hathat_vs0[(k1 * (self.dims.rough + 1) + k2) * self.dims.smooth + s]
    }
    /// `V_{R,k}^i` with `k = 0` meaning the rough drift.
    #[inline]
    pub fn field(&self, k: usize, i: usize) -> T {
        if k == 0 {
            self.v0[i]
        } else {
            self.vr[i * self.dims.rough + k - 1]
        }
    }

    pub fn from_tensors(t: &DerivativeTensors<T>) -> Self {
        let dims = t.dims;
        let (d, dr, ds) = (dims.total(), dims.rough, dims.smooth);
        let n = dr + 1;
        let mut out = DerivedCoefficients {
            dims,
            order: t.order,
            v0: t.v0.clone(),
            vr: t.vr.clone(),
            hat_vr: vec![T::zero(); n * n * dr],
            hat_vs0: vec![T::zero(); n * ds],
            hathat_vs0: vec![T::zero(); n * n * ds],
        };
        if t.order < Order::First {
            return out;
        }
        let vr = |i: usize, k: usize| t.vr[i * dr + k - 1];
        // a_R restricted to rough indices.
        let mut ar = vec![T::zero(); dr * dr];
        for a in 0..dr {
            for b in 0..dr {
                let mut s = T::zero();
                for k in 1..=dr {
                    s += vr(a, k) * vr(b, k);
                }
                ar[a * dr + b] = s;
            }
        }
        // Gradient and Hessian accessors of the rough fields.
        let grad_field = |k: usize, i: usize, j: usize| -> T {
            if k == 0 {
                t.dv0[i * d + j]
            } else {
                t.dvr[(i * dr + k - 1) * d + j]
            }
        };
        let hess_field = |k: usize, i: usize, j: usize, l: usize| -> T {
            if k == 0 {
                t.d2v0[(i * d + j) * d + l]
            } else {
                t.d2vr[((i * dr + k - 1) * d + j) * d + l]
            }
        };
        let hat_k = |k: usize, grad: &dyn Fn(usize) -> T| -> T {
            let mut s = T::zero();
            for c in 0..dr {
                s += vr(c, k) * grad(c);
            }
            s
        };
        let hat_0 = |grad: &dyn Fn(usize) -> T, hess: &dyn Fn(usize, usize) -> T| -> T {
            let mut s = T::zero();
            for j in 0..d {
                s += t.v0[j] * grad(j);
            }
            let mut q = T::zero();
            for a in 0..dr {
                for b in 0..dr {
                    q += ar[a * dr + b] * hess(a, b);
                }
            }
            s + q * 0.5
        };

        // V̂_{k1} V_{R,k2}.
        for k2 in 0..n {
            for i in 0..dr {
                for k1 in 1..n {
                    out.hat_vr[(k1 * n + k2) * dr + i] = hat_k(k1, &|c| grad_field(k2, i, c));
                }
                if t.order >= Order::Second {
                    out.hat_vr[k2 * dr + i] = hat_0(&|j| grad_field(k2, i, j), &|a, b| hess_field(k2, i, a, b));
                }
            }
        }
        // V̂_k V_{S,0}.
        let gs = |s: usize, j: usize| t.dv0[(dr + s) * d + j];
        let hs = |s: usize, j: usize, l: usize| t.d2v0[((dr + s) * d + j) * d + l];
        for s in 0..ds {
            for k in 1..n {
                out.hat_vs0[k * ds + s] = hat_k(k, &|c| gs(s, c));
            }
            if t.order >= Order::Second {
                out.hat_vs0[s] = hat_0(&|j| gs(s, j), &|a, b| hs(s, a, b));
            }
        }
        if t.order < Order::Second {
            return out;
        }
        // ∂_j g_k^s with g_k = V̂_k V_{S,0}, k ≥ 1, any direction j.
        let dg = |k: usize, s: usize, j: usize| -> T {
            let mut v = T::zero();
            for l in 0..dr {
                v += t.dvr[(l * dr + k - 1) * d + j] * gs(s, l) + vr(l, k) * hs(s, j, l);
            }
            v
        };
        for s in 0..ds {
            for k1 in 1..n {
                for k2 in 1..n {
                    out.hathat_vs0[(k1 * n + k2) * ds + s] = hat_k(k1, &|c| dg(k2, s, c));
                }
            }
        }
        if t.order < Order::Third {
            return out;
        }
        let ts = |s: usize, a: usize, b: usize, c: usize| t.d3vs0[((s * dr + a) * dr + b) * dr + c];
        for s in 0..ds {
            // V̂_0 V̂_k V_{S,0}.
            for k in 1..n {
                let d2g = |a: usize, b: usize| -> T {
                    let mut v = T::zero();
                    for l in 0..dr {
                        let dvl = |j: usize| t.dvr[(l * dr + k - 1) * d + j];
                        v += t.d2vr[((l * dr + k - 1) * d + a) * d + b] * gs(s, l)
                            + dvl(b) * hs(s, a, l)
                            + dvl(a) * hs(s, b, l)
                            + vr(l, k) * ts(s, a, b, l);
                    }
                    v
                };
                out.hathat_vs0[k * ds + s] = hat_0(&|j| dg(k, s, j), &d2g);
            }
            // V̂_k V̂_0 V_{S,0}: derivative of h = V̂_0 V_{S,0} along rough c.
            let dh = |c: usize| -> T {
                let mut v = T::zero();
                for j in 0..d {
                    v += t.dv0[j * d + c] * gs(s, j) + t.v0[j] * hs(s, c, j);
                }
                let mut q = T::zero();
                for a in 0..dr {
                    for b in 0..dr {
                        let mut dar = T::zero();
                        for kk in 1..n {
                            dar += t.dvr[(a * dr + kk - 1) * d + c] * vr(b, kk)
                                + vr(a, kk) * t.dvr[(b * dr + kk - 1) * d + c];
                        }
                        q += dar * hs(s, a, b) + ar[a * dr + b] * ts(s, c, a, b);
                    }
                }
                v + q * 0.5
            };
            for k in 1..n {
                out.hathat_vs0[(k * n) * ds + s] = hat_k(k, &dh);
            }
        }
        out
    }
}
