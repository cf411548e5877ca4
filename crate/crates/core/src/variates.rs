//! Moment-matched random inputs of the weak second-order schemes.
//!
//! A step consumes a fixed number of standard normals in a fixed order:
//!
//! * elliptic, `2 d_R − 1` normals: `Z_1..Z_{d_R}`, then `B̃_2..B̃_{d_R}`
//!   (before scaling by `√Δ`);
//! * hypo-elliptic, `5 d_R − 2` normals: `Z`, `Z̃` (each `d_R`), the
//!   η-level `B̃_1..B̃_{d_R}`, `W_2..W_{d_R}`, and the ξ-level
//!   `B̃_2..B̃_{d_R}`.
//!
//! Index `0` in a second-level pair denotes time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::real::Real;

/// Counter-based generator addressed by `(seed, stream)`; distinct streams
/// are independent and can be consumed in any order.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SeededRng { seed, stream, rng }
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn stream(&self) -> u64 {
        self.stream
    }
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }
    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand_distr::StandardUniform.sample(&mut self.rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    Elliptic,
    Hypo,
}

/// Number of standard normals consumed per step.
pub fn normals_per_step(kind: BundleKind, d_r: usize) -> usize {
    match kind {
        BundleKind::Elliptic => 2 * d_r - 1,
        BundleKind::Hypo => 5 * d_r - 2,
    }
}

/// One step's random inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct VariateBundle<T = f64> {
    pub kind: BundleKind,
    pub delta: f64,
    pub d_r: usize,
    /// Brownian increments `B_k`, length `d_R`.
    pub b: Vec<T>,
    /// `ξ_{k1k2}` (elliptic) or `ζ_{k1k2}` (hypo), `(d_R+1)²` row-major.
    pub second: Vec<T>,
    /// `η_{k1k2}`, `(d_R+1)²` row-major; empty for elliptic bundles.
    pub eta: Vec<T>,
}

impl<T: Real> VariateBundle<T> {
    #[inline]
    pub fn xi(&self, k1: usize, k2: usize) -> T {
        self.second[k1 * (self.d_r + 1) + k2]
    }
    #[inline]
    pub fn zeta(&self, k1: usize, k2: usize) -> T {
        self.second[k1 * (self.d_r + 1) + k2]
    }
    #[inline]
    pub fn eta(&self, k1: usize, k2: usize) -> T {
        self.eta[k1 * (self.d_r + 1) + k2]
    }

    /// Builds a bundle from standard normals laid out as documented above.
    pub fn from_normals(kind: BundleKind, delta: f64, d_r: usize, normals: &[T]) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {delta}")));
        }
        if d_r == 0 {
            return Err(Error::Dimension("d_R must be at least 1".into()));
        }
        let need = normals_per_step(kind, d_r);
        if normals.len() != need {
            return Err(Error::Dimension(format!("{need} normals required, {} given", normals.len())));
        }
        let n = d_r + 1;
        let sd = delta.sqrt();
        let z = &normals[..d_r];
        let b: Vec<T> = z.iter().map(|&v| v * sd).collect();
        let mut second = vec![T::zero(); n * n];
        second[0] = T::cst(0.5 * delta * delta);
        let xi_tilde = match kind {
            BundleKind::Elliptic => &normals[d_r..],
            BundleKind::Hypo => &normals[4 * d_r - 1..],
        };
        // ξ-level B̃_k for k = 2..d_R lives at xi_tilde[k - 2].
        let bt = |k: usize| xi_tilde[k - 2] * sd;
        for k1 in 1..n {
            for k2 in 1..n {
                let (b1, b2) = (b[k1 - 1], b[k2 - 1]);
                second[k1 * n + k2] = if k1 == k2 {
                    (b1 * b1 - delta) * 0.5
                } else if k1 < k2 {
                    (b1 * b2 + b1 * bt(k2)) * 0.5
                } else {
                    (b1 * b2 - b2 * bt(k1)) * 0.5
                };
            }
        }
        let mut eta = Vec::new();
        match kind {
            BundleKind::Elliptic => {
                for k in 1..n {
                    let v = b[k - 1] * (0.5 * delta);
                    second[k * n] = v;
                    second[k] = v;
                }
            }
            BundleKind::Hypo => {
                let zt = &normals[d_r..2 * d_r];
                let d32 = delta * sd;
                for k in 1..n {
                    let z0k = (z[k - 1] + zt[k - 1] * (1.0 / 3f64.sqrt())) * (0.5 * d32);
                    second[k] = z0k;
                    second[k * n] = z[k - 1] * d32 - z0k;
                }
                let bte = &normals[2 * d_r..3 * d_r];
                let w = &normals[3 * d_r..4 * d_r - 1];
                let bt_eta = |k: usize| bte[k - 1] * sd;
                let w_eta = |k: usize| w[k - 2] * sd;
                let c = 1.0 / (6.0 * 2f64.sqrt());
                eta = vec![T::zero(); n * n];
                for k in 1..n {
                    let zk0 = second[k * n];
                    eta[k * n] = zk0 * (0.5 * delta) - b[k - 1] * (delta * delta / 12.0);
                    eta[k] = zk0 * delta - b[k - 1] * (delta * delta / 3.0);
                }
                for k1 in 1..n {
                    for k2 in 1..n {
                        let tilde = if k1 == k2 {
                            (bt_eta(k1) * bt_eta(k1) - delta) * c
                        } else if k1 < k2 {
                            (bt_eta(k1) * bt_eta(k2) + bt_eta(k1) * w_eta(k2)) * c
                        } else {
                            (bt_eta(k1) * bt_eta(k2) - bt_eta(k2) * w_eta(k1)) * c
                        };
                        eta[k1 * n + k2] = second[k1 * n + k2] * (delta / 3.0) - tilde * delta;
                    }
                }
            }
        }
        Ok(VariateBundle { kind, delta, d_r, b, second, eta })
    }
}

/// Draws an elliptic bundle.
pub fn draw_elliptic(rng: &mut SeededRng, delta: f64, d_r: usize) -> Result<VariateBundle> {
    draw(rng, BundleKind::Elliptic, delta, d_r)
}

/// Draws a hypo-elliptic bundle.
pub fn draw_hypo(rng: &mut SeededRng, delta: f64, d_r: usize) -> Result<VariateBundle> {
    draw(rng, BundleKind::Hypo, delta, d_r)
}

pub fn draw(rng: &mut SeededRng, kind: BundleKind, delta: f64, d_r: usize) -> Result<VariateBundle> {
    let mut z = vec![0.0; normals_per_step(kind, d_r.max(1))];
    rng.fill_normals(&mut z);
    VariateBundle::from_normals(kind, delta, d_r, &z)
}

/// A factor in a catalogued product moment. Indices are 1-based with `0`
/// standing for time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    B(usize),
    Xi(usize, usize),
    Zeta(usize, usize),
    Eta(usize, usize),
}

impl std::fmt::Display for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Var::B(k) => write!(f, "B{k}"),
            Var::Xi(a, b) => write!(f, "xi{a}{b}"),
            Var::Zeta(a, b) => write!(f, "zeta{a}{b}"),
            Var::Eta(a, b) => write!(f, "eta{a}{b}"),
        }
    }
}

/// `E[∏ factors]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Moment {
    pub factors: Vec<Var>,
}

impl Moment {
    pub fn new(mut factors: Vec<Var>) -> Self {
        factors.sort();
        Moment { factors }
    }
    pub fn kind(&self) -> BundleKind {
        if self.factors.iter().any(|v| matches!(v, Var::Xi(..))) {
            BundleKind::Elliptic
        } else {
            BundleKind::Hypo
        }
    }
    /// Value of the product on one bundle.
    pub fn sample(&self, b: &VariateBundle) -> f64 {
        self.factors
            .iter()
            .map(|v| match *v {
                Var::B(k) => b.b[k - 1],
                Var::Xi(k1, k2) => b.xi(k1, k2),
                Var::Zeta(k1, k2) => b.zeta(k1, k2),
                Var::Eta(k1, k2) => b.eta(k1, k2),
            })
            .product()
    }
}

impl std::fmt::Display for Moment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|v| v.to_string()).collect();
        write!(f, "E[{}]", parts.join("*"))
    }
}

impl std::str::FromStr for Moment {
    type Err = Error;
    /// Parses the [`Display`](std::fmt::Display) form, e.g. `E[B1*eta10]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Unknown { kind: "moment", name: s.to_string() };
        let inner = s.trim().strip_prefix("E[").and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
        let digits = |t: &str| -> Option<Vec<usize>> {
            t.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect()
        };
        let mut factors = Vec::new();
        for tok in inner.split('*') {
            let v = if let Some(r) = tok.strip_prefix("zeta") {
                match digits(r).as_deref() {
                    Some([a, b]) => Var::Zeta(*a, *b),
                    _ => return Err(bad()),
                }
            } else if let Some(r) = tok.strip_prefix("eta") {
                match digits(r).as_deref() {
                    Some([a, b]) => Var::Eta(*a, *b),
                    _ => return Err(bad()),
                }
            } else if let Some(r) = tok.strip_prefix("xi") {
                match digits(r).as_deref() {
                    Some([a, b]) => Var::Xi(*a, *b),
                    _ => return Err(bad()),
                }
            } else if let Some(r) = tok.strip_prefix('B') {
                match digits(r).as_deref() {
                    Some([k]) => Var::B(*k),
                    _ => return Err(bad()),
                }
            } else {
                return Err(bad());
            };
            factors.push(v);
        }
        Ok(Moment::new(factors))
    }
}

fn ind(c: bool) -> f64 {
    if c {
        1.0
    } else {
        0.0
    }
}

/// Nonzero index of a pair with exactly one time index.
fn time_pair(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        (0, k) | (k, 0) if k > 0 => Some(k),
        _ => None,
    }
}

/// Exact value of a catalogued moment of the ξ, ζ, η and B variates.
pub fn moment_oracle(m: &Moment, delta: f64) -> Result<f64> {
    let unknown = || Error::Unknown { kind: "moment", name: m.to_string() };
    if m.factors.iter().any(|v| match *v {
        Var::B(k) => k == 0,
        Var::Xi(a, b) | Var::Zeta(a, b) | Var::Eta(a, b) => a == 0 && b == 0,
    }) {
        return Err(unknown());
    }
    let d2 = delta * delta;
    let d3 = d2 * delta;
    let d4 = d3 * delta;
    let both = |a: usize, b: usize| a > 0 && b > 0;
    use Var::*;
    let v = match m.factors.as_slice() {
        [Xi(..)] | [Zeta(..)] | [Eta(..)] => 0.0,
        [B(c), Xi(a, b)] | [B(c), Zeta(a, b)] => match time_pair(*a, *b) {
            Some(k) => 0.5 * d2 * ind(k == *c),
            None => 0.0,
        },
        [B(c), Eta(a, b)] => match time_pair(*a, *b) {
            Some(k) => d3 / 6.0 * ind(k == *c),
            None => 0.0,
        },
        [Xi(a, b), Xi(c, e)] => match (both(*a, *b), both(*c, *e)) {
            (true, true) => 0.5 * d2 * ind(a == c && b == e),
            (true, false) | (false, true) => 0.0,
            _ => return Err(unknown()),
        },
        [Zeta(a, b), Zeta(c, e)] => match (both(*a, *b), both(*c, *e)) {
            (true, true) => 0.5 * d2 * ind(a == c && b == e),
            (false, false) => {
                let (k, j) = (a.max(b), c.max(e));
                let same_side = (*a == 0) == (*c == 0);
                ind(k == j) * if same_side { d3 / 3.0 } else { d3 / 6.0 }
            }
            _ => 0.0,
        },
        [B(c), B(e), Xi(a, b)] => {
            if both(*a, *b) {
                if a != b && ((a == c && b == e) || (a == e && b == c)) {
                    0.5 * d2
                } else if a == b && a == c && a == e {
                    d2
                } else {
                    0.0
                }
            } else {
                0.0
            }
        }
        [B(_), Xi(a, b), Xi(c, e)] if both(*a, *b) && both(*c, *e) => 0.0,
        [B(_), B(_), B(_), Xi(a, b)] if both(*a, *b) => 0.0,
        [Zeta(c, e), Eta(a, b)] => {
            if both(*a, *b) && both(*c, *e) {
                d3 / 6.0 * ind(a == c && b == e)
            } else if *e == 0 && *c > 0 && *b == 0 && *a > 0 {
                d4 / 8.0 * ind(a == c)
            } else if *e == 0 && *c > 0 && *a == 0 && *b > 0 {
                d4 / 6.0 * ind(b == c)
            } else {
                return Err(unknown());
            }
        }
        [Eta(a, b), Eta(c, e)] if both(*a, *b) && both(*c, *e) => d4 / 12.0 * ind(a == c && b == e),
        _ => return Err(unknown()),
    };
    Ok(v)
}

/// Every catalogued moment pattern over indices `1..=d_r`.
pub fn catalogue(d_r: usize) -> Vec<Moment> {
    use Var::*;
    let ks: Vec<usize> = (1..=d_r).collect();
    let mut pairs = Vec::new();
    let mut time_pairs = Vec::new();
    for &a in &ks {
        time_pairs.push((a, 0));
        time_pairs.push((0, a));
        for &b in &ks {
            pairs.push((a, b));
        }
    }
    let all_pairs: Vec<(usize, usize)> = time_pairs.iter().chain(&pairs).copied().collect();
    let mut out = Vec::new();
    let mut push = |f: Vec<Var>| out.push(Moment::new(f));
    for &(a, b) in &all_pairs {
        push(vec![Xi(a, b)]);
        push(vec![Zeta(a, b)]);
        push(vec![Eta(a, b)]);
        for &c in &ks {
            push(vec![B(c), Xi(a, b)]);
            push(vec![B(c), Zeta(a, b)]);
            push(vec![B(c), Eta(a, b)]);
        }
    }
    for &(a, b) in &pairs {
        for &(c, e) in &all_pairs {
            push(vec![Xi(a, b), Xi(c, e)]);
            push(vec![Zeta(a, b), Zeta(c, e)]);
        }
        for &(c, e) in &pairs {
            push(vec![Eta(a, b), Eta(c, e)]);
            push(vec![Eta(a, b), Zeta(c, e)]);
        }
        for &c in &ks {
            for &e in &ks {
                push(vec![B(c), B(e), Xi(a, b)]);
                push(vec![B(c), Xi(a, b), Xi(c, e)]);
                for &f in &ks {
                    push(vec![B(c), B(e), B(f), Xi(a, b)]);
                }
            }
        }
    }
    for &(a, b) in &time_pairs {
        for &(c, e) in &time_pairs {
            push(vec![Zeta(a, b), Zeta(c, e)]);
            if e == 0 {
                push(vec![Eta(a, b), Zeta(c, e)]);
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|m| seen.insert(m.clone()));
    out
}

/// Monte-Carlo estimate of a moment next to its exact value.
#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub moment: String,
    pub delta: f64,
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
}

impl MomentCheck {
    /// `|estimate − exact|` in standard errors (0 when both coincide).
    pub fn z_score(&self) -> f64 {
        let err = (self.estimate - self.exact).abs();
        if err <= 1e-14 * self.exact.abs().max(1e-300) || err == 0.0 {
            0.0
        } else {
            err / self.std_error
        }
    }
}

/// Samples every moment in `moments` from `n` bundles of each kind.
///
/// Draws are split into chunks with their own generator streams, so the
/// result does not depend on the execution mode.
pub fn moment_suite(
    exec: Execution,
    moments: &[Moment],
    delta: f64,
    d_r: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<MomentCheck>> {
    let exact: Vec<f64> = moments.iter().map(|m| moment_oracle(m, delta)).collect::<Result<_>>()?;
    const DRAWS_PER_CHUNK: usize = 16_384;
    let n_chunks = n.div_ceil(DRAWS_PER_CHUNK);
    let nm = moments.len();
    let sums = par::chunked_vec_sum(exec, n_chunks, 2 * nm, |c| {
        let mut rng = SeededRng::new(seed, c as u64);
        let mut acc = vec![0.0; 2 * nm];
        let mut ze = vec![0.0; normals_per_step(BundleKind::Elliptic, d_r)];
        let mut zh = vec![0.0; normals_per_step(BundleKind::Hypo, d_r)];
        for _ in c * DRAWS_PER_CHUNK..((c + 1) * DRAWS_PER_CHUNK).min(n) {
            rng.fill_normals(&mut ze);
            rng.fill_normals(&mut zh);
            let be = VariateBundle::from_normals(BundleKind::Elliptic, delta, d_r, &ze).expect("valid inputs");
            let bh = VariateBundle::from_normals(BundleKind::Hypo, delta, d_r, &zh).expect("valid inputs");
            for (j, m) in moments.iter().enumerate() {
                let v = match m.kind() {
                    BundleKind::Elliptic => m.sample(&be),
                    BundleKind::Hypo => m.sample(&bh),
                };
                acc[2 * j] += v;
                acc[2 * j + 1] += v * v;
            }
        }
        acc
    });
    let nf = n as f64;
    Ok(moments
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let mean = sums[2 * j] / nf;
            let var = (sums[2 * j + 1] / nf - mean * mean).max(0.0);
            MomentCheck {
                moment: m.to_string(),
                delta,
                exact: exact[j],
                estimate: mean,
                std_error: (var / nf).sqrt(),
            }
        })
        .collect())
}
