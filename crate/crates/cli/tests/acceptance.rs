//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a criterion outside `KNOWN_FAILURES` fails.
//!
//! Criteria 5 and 6 take hours on one core and run only when
//! `HYPOSDE_EXTENDED=1`. Numeric arguments select criteria, e.g.
//! `cargo test --test acceptance -- 1 4`.

use std::collections::BTreeMap;
use std::time::Instant;

use hyposde::augment::{
    energy_error, hmc_sample, AugmentedPosterior, HmcConfig, InitPrior, NoisyObservations, ParamPrior, PriorSpec,
};
use hyposde::estimate::{replicate_study, AdamConfig, ContrastMethod, Design, StudyConfig, StudyResult};
use hyposde::expansion::{ou_bias_study, phi2, phi2_sdhs, DensityBase, IterOptions, Prepared};
use hyposde::gauss;
use hyposde::hermite::HermiteContext;
use hyposde::model::{builtin_model, BuiltinModel, Model, Ou};
use hyposde::par::Execution;
use hyposde::scheme::{self, SchemeId};
use hyposde::variates::{catalogue, moment_suite, normals_per_step, SeededRng, VariateBundle};
use hyposde_cli::{Command, RunConfig};
use nalgebra::{DMatrix, DVector};

/// Criteria expected to fail; see the project notes.
const KNOWN_FAILURES: &[u8] = &[2, 3];
const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn model(name: &str) -> BuiltinModel {
    builtin_model(name, &BTreeMap::new()).unwrap()
}

/// Least-squares slope of `ys` on `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    slope(&lx, &ly)
}

// 1. Variate moments against their oracles.
fn criterion_1() -> Verdict {
    const N: usize = 2_000_000;
    const MAX_Z: f64 = 5.0;
    let moments = catalogue(2);
    let mut worst = (0.0f64, String::new());
    for delta in [0.5, 1.0] {
        for m in moment_suite(Execution::default(), &moments, delta, 2, N, SEED).unwrap() {
            let z = m.z_score();
            if z > worst.0 {
                worst = (z, format!("{} at Δ={delta}", m.moment));
            }
        }
    }
    verdict(
        worst.0 <= MAX_Z,
        format!("{} moments x 2 steps, N={N}: max |z| = {:.2} ({}) <= {MAX_Z}", moments.len(), worst.0, worst.1),
    )
}

// 2. Weak-order slopes on linear models.

/// Probabilists' Gauss–Hermite nodes and weights (weights sum to one).
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        j[(k - 1, k)] = (k as f64).sqrt();
        j[(k, k - 1)] = (k as f64).sqrt();
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Tensor Gauss–Hermite rule in `k` dimensions.
fn tensor_rule(k: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_hermite(n);
    let mut rule = vec![(Vec::new(), 1.0)];
    for _ in 0..k {
        rule = rule
            .into_iter()
            .flat_map(|(z, wz)| (0..n).map({
                let (x, w) = (&x, &w);
                move |i| {
                    let mut z2 = z.clone();
                    z2.push(x[i]);
                    (z2, wz * w[i])
                }
            }))
            .collect();
    }
    rule
}

/// Exact `E[y^p]`, `p = 1, 2, 4`, of coordinate `coord` after `T/Δ` steps
/// of a scheme that is affine in the state. Each step is
/// `X' = A X + h(Z)`, so `ℓᵀX_N` is a constant plus a sum of independent
/// terms whose cumulants add; the per-step moments are computed by
/// Gauss–Hermite quadrature over the step's normals.
fn scheme_moments(m: &BuiltinModel, sid: SchemeId, x0: &[f64], t: f64, delta: f64, coord: usize) -> [f64; 3] {
    let dims = Model::dims(m);
    let d = dims.total();
    let theta = m.default_theta();
    let kind = sid.bundle_kind();
    let k = normals_per_step(kind, dims.rough);
    let step = |x: &[f64], z: &[f64]| {
        let b = VariateBundle::from_normals(kind, delta, dims.rough, z).unwrap();
        scheme::step(m, sid, x, &theta, &b).unwrap()
    };
    let zero = vec![0.0; d];
    let z0 = vec![0.3; k];
    let base = step(&zero, &z0);
    let mut a = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut e = zero.clone();
        e[j] = 1.0;
        let col = step(&e, &z0);
        for i in 0..d {
            a[(i, j)] = col[i] - base[i];
        }
    }
    let rule = tensor_rule(k, 10);
    let h: Vec<DVector<f64>> = rule.iter().map(|(z, _)| DVector::from_vec(step(&zero, z))).collect();
    let n = (t / delta).round() as usize;
    let mut w = DVector::<f64>::zeros(d);
    w[coord] = 1.0;
    let mut cum = [0.0; 4];
    for _ in 0..n {
        let mut mu = [0.0; 4];
        for ((_, wq), hq) in rule.iter().zip(&h) {
            let s = w.dot(hq);
            let mut p = 1.0;
            for m in mu.iter_mut() {
                p *= s;
                *m += wq * p;
            }
        }
        let [m1, m2, m3, m4] = mu;
        cum[0] += m1;
        cum[1] += m2 - m1 * m1;
        cum[2] += m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3);
        cum[3] += m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4);
        w = a.transpose() * w;
    }
    cum[0] += w.dot(&DVector::from_column_slice(x0));
    let [k1, k2, k3, k4] = cum;
    let e2 = k2 + k1 * k1;
    let e4 = k4 + 4.0 * k3 * k1 + 3.0 * k2 * k2 + 6.0 * k2 * k1 * k1 + k1.powi(4);
    [k1, e2, e4]
}

/// `E[y], E[y²], E[y⁴]` for `y ~ N(m, v)`.
fn gaussian_moments(m: f64, v: f64) -> [f64; 3] {
    [m, m * m + v, m.powi(4) + 6.0 * m * m * v + 3.0 * v * v]
}

/// Exact Gaussian law of a linear SDE `dX = F X dt + G dW` at time `t`,
/// by Van Loan's block exponential.
fn linear_sde_law(f: &DMatrix<f64>, g: &DMatrix<f64>, x0: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
    let d = f.nrows();
    let mut blk = DMatrix::<f64>::zeros(2 * d, 2 * d);
    blk.view_mut((0, 0), (d, d)).copy_from(&(-f));
    blk.view_mut((0, d), (d, d)).copy_from(&(g * g.transpose()));
    blk.view_mut((d, d), (d, d)).copy_from(&f.transpose());
    let e = (blk * t).exp();
    let phi = e.view((d, d), (d, d)).transpose();
    let q = &phi * e.view((0, d), (d, d));
    (&phi * DVector::from_column_slice(x0), q)
}

fn criterion_2() -> Verdict {
    const DELTAS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
    const T: f64 = 1.6;
    const WEAK2_MIN: f64 = 1.8;
    const EM_RANGE: (f64, f64) = (0.8, 1.2);
    let mut lines = Vec::new();
    let mut pass = true;

    let ou = model("ou");
    let th = ou.default_theta();
    let (kappa, sigma, x0) = (th[0], th[1], 1.0);
    let mean = x0 * (-kappa * T).exp();
    let var = sigma * sigma * (1.0 - (-2.0 * kappa * T).exp()) / (2.0 * kappa);
    let mut cases = vec![("ou", ou, vec![x0], vec![(0, gaussian_moments(mean, var))])];

    let sdhs = model("linear_sdhs");
    let th = sdhs.default_theta();
    let (c, k, s) = (th[0], th[1], th[2]);
    // State (X_R, X_S): dX_R = −(c X_R + k X_S) dt + σ dW, dX_S = X_R dt.
    let f = DMatrix::from_row_slice(2, 2, &[-c, -k, 1.0, 0.0]);
    let g = DMatrix::from_row_slice(2, 1, &[s, 0.0]);
    let x0 = vec![0.5, 1.0];
    let (m, q) = linear_sde_law(&f, &g, &x0, T);
    let exact = (0..2).map(|i| (i, gaussian_moments(m[i], q[(i, i)]))).collect();
    cases.push(("linear_sdhs", sdhs, x0, exact));

    for (name, mdl, x0, exact) in &cases {
        let weak2 = SchemeId::weak2_for(Model::dims(mdl));
        for sid in [weak2, SchemeId::Euler] {
            for (coord, ex) in exact {
                let errs: Vec<[f64; 3]> = DELTAS
                    .iter()
                    .map(|&dl| {
                        let sm = scheme_moments(mdl, sid, x0, T, dl, *coord);
                        [(sm[0] - ex[0]).abs(), (sm[1] - ex[1]).abs(), (sm[2] - ex[2]).abs()]
                    })
                    .collect();
                for (p, phi) in ["y", "y^2", "y^4"].iter().enumerate() {
                    let e: Vec<f64> = errs.iter().map(|r| r[p]).collect();
                    let sl = log_slope(&DELTAS, &e);
                    let ok = if sid == SchemeId::Euler { (EM_RANGE.0..=EM_RANGE.1).contains(&sl) } else { sl >= WEAK2_MIN };
                    pass &= ok;
                    lines.push(format!("{name}/{}/x{}/{phi}={sl:.2}{}", sid.as_str(), coord + 1, if ok { "" } else { "!" }));
                }
            }
        }
    }
    verdict(pass, format!("slopes (weak2 >= {WEAK2_MIN}, EM in [0.8,1.2]): {}", lines.join(" ")))
}

// 3. Normalisation of the one-step densities.
fn criterion_3() -> Verdict {
    const TOL: f64 = 1e-6;
    const RATIO: (f64, f64) = (6.0, 10.0);
    let m = model("quadratic_noise");
    let th = m.default_theta();
    let x = 0.3;
    let mut worst_i: f64 = 0.0;
    let mut worst_psi: f64 = 0.0;
    let mut ii = Vec::new();
    for delta in [0.4, 0.2, 0.1] {
        let p = Prepared::new(&m, &[x], &th, delta).unwrap();
        let mom = gauss::lg_moments(&m, &[x], &th, delta).unwrap();
        let sd = mom.sigma[0].sqrt();
        let n = 40_001;
        let (lo, hi) = (mom.mu[0] - 14.0 * sd, mom.mu[0] + 14.0 * sd);
        let h = (hi - lo) / (n - 1) as f64;
        let (mut si, mut sii, mut spsi) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..n {
            let y = [lo + h * j as f64];
            let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
            si += w * p.density(DensityBase::I, &y);
            sii += w * p.density(DensityBase::II, &y);
            spsi += w * p.psi_weak(&p.hermite(&y)) * p.lg_logdensity(&y).exp();
        }
        worst_i = worst_i.max((si - 1.0).abs());
        worst_psi = worst_psi.max(spsi.abs());
        ii.push((sii - 1.0).abs());
    }
    let r = [ii[0] / ii[1], ii[1] / ii[2]];
    let ok_ratio = r.iter().all(|v| (RATIO.0..=RATIO.1).contains(v));
    verdict(
        worst_i <= TOL && worst_psi <= TOL && ok_ratio,
        format!(
            "quadratic_noise x={x}: max|∫p_I-1|={worst_i:.1e}, max|∫Ψ p_LG|={worst_psi:.1e} (<= {TOL:.0e}); \
             |∫p_II-1| = {:.2e},{:.2e},{:.2e} halving ratios {:.2},{:.2} (need [{},{}])",
            ii[0], ii[1], ii[2], r[0], r[1], RATIO.0, RATIO.1
        ),
    )
}

// 4. Bias order of iterated densities on OU.
fn criterion_4() -> Verdict {
    const MS: [usize; 4] = [2, 4, 8, 16];
    let m = model("ou");
    let th = m.default_theta();
    let rows = ou_bias_study(Execution::default(), &m, th[0], th[1], 0.0, 0.5, &MS, &IterOptions::default()).unwrap();
    let ms: Vec<f64> = MS.iter().map(|&v| v as f64).collect();
    let order = |e: Vec<f64>| -log_slope(&ms, &e);
    let oi = order(rows.iter().map(|r| r.sup_error_i).collect());
    let oii = order(rows.iter().map(|r| r.sup_error_ii).collect());
    let oem = order(rows.iter().map(|r| r.sup_error_em).collect());
    let two = 1.7..=2.3;
    let one = 0.8..=1.2;
    verdict(
        two.contains(&oi) && two.contains(&oii) && one.contains(&oem),
        format!("orders I={oi:.3} II={oii:.3} (need [1.7,2.3]), EM={oem:.3} (need [0.8,1.2])"),
    )
}

// 5 and 6. Calibration studies.
fn study(design: &str, reps: usize, iters: usize) -> StudyResult {
    let d = Design::named(design).unwrap();
    let m = model(d.model_name().unwrap());
    let cfg = StudyConfig {
        design: d,
        theta_true: m.default_theta(),
        x0: m.default_x0(),
        n_replicates: reps,
        methods: ContrastMethod::ALL.to_vec(),
        adam: AdamConfig { n_iters: iters, ..Default::default() },
        seed: SEED,
        init_spread: 0.2,
    };
    replicate_study(Execution::default(), &m, &cfg).unwrap()
}

fn criterion_5() -> Verdict {
    let r = study("fn3", 10, 20_000);
    let new = r.summary_for("new", "sigma").unwrap();
    let lg = r.summary_for("lg", "sigma").unwrap();
    let pass = (0.59..=0.61).contains(&new.mean)
        && (0.58..=0.60).contains(&lg.mean)
        && (new.mean - 0.6).abs() < (lg.mean - 0.6).abs();
    verdict(
        pass,
        format!(
            "fn3, 10 reps: mean sigma new={:.4} ({:.4}) in [0.59,0.61], lg={:.4} ({:.4}) in [0.58,0.60]; failures={}",
            new.mean, new.se, lg.mean, lg.se, r.failures.len()
        ),
    )
}

fn criterion_6() -> Verdict {
    let iters = std::env::var("HYPOSDE_JR_ITERS").ok().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let r = study("jr3", 5, iters);
    let new = r.summary_for("new", "sigma2").unwrap();
    let lg = r.summary_for("lg", "sigma2").unwrap();
    let pass = (1940.0..=2040.0).contains(&new.mean) && (new.mean - 2000.0).abs() < (lg.mean - 2000.0).abs();
    verdict(
        pass,
        format!(
            "jr3, 5 reps, {iters} Adam iterations: mean sigma2 new={:.2} ({:.2}) in [1940,2040], lg={:.2} ({:.2}); failures={}",
            new.mean, new.se, lg.mean, lg.se, r.failures.len()
        ),
    )
}

// 7. Generic and damping-Hamiltonian Φ₂ agree; FN matches its printed form.
fn criterion_7() -> Verdict {
    const POINTS: usize = 100;
    const TOL: f64 = 1e-10;
    let mut rng = SeededRng::new(SEED, 7);
    let mut worst: f64 = 0.0;
    for (name, scale) in [("fitzhugh_nagumo_sdhs", [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]), ("jansen_rit", [50.0, 500.0, 50.0, 5.0, 20.0, 5.0])] {
        let m = model(name);
        let d = Model::dims(&m).total();
        let th = m.default_theta();
        for _ in 0..POINTS {
            let x: Vec<f64> = (0..d).map(|i| scale[i] * rng.normal()).collect();
            let delta = 0.005 + 0.05 * rng.uniform();
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.1 * scale[i] * rng.normal()).collect();
            let a = phi2(&m, &x, &th, delta, &y).unwrap();
            let b = phi2_sdhs(&m, &x, &th, delta, &y).unwrap();
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
        }
    }
    let m = model("fitzhugh_nagumo");
    let th = m.default_theta();
    let (eps, s2) = (th[2], th[4] * th[4]);
    let mut worst_printed: f64 = 0.0;
    for _ in 0..POINTS {
        let x = [rng.normal(), rng.normal()];
        let delta = 0.005 + 0.05 * rng.uniform();
        let y = [x[0] + 0.1 * rng.normal(), x[1] + 0.05 * rng.normal()];
        let mom = gauss::lg_moments(&m, &x, &th, delta).unwrap();
        let xi = gauss::normalized_residual(&mom, &y);
        let inv = &mom.sigma1_inv;
        let h1 = [inv[0] * xi[0] + inv[1] * xi[1], inv[2] * xi[0] + inv[3] * xi[1]];
        let h2 = |i: usize, j: usize| h1[i] * h1[j] - inv[2 * i + j];
        let q = 1.0 - 3.0 * x[1] * x[1];
        let printed = -0.5 * s2 * h2(0, 0)
            + (s2 / (2.0 * eps) - s2 * q / (6.0 * eps * eps)) * h2(0, 1)
            + (-s2 / (8.0 * eps * eps) + s2 * q / (8.0 * eps.powi(3))) * h2(1, 1);
        let got = phi2(&m, &x, &th, delta, &y).unwrap();
        worst_printed = worst_printed.max((got - printed).abs() / printed.abs().max(f64::MIN_POSITIVE));
    }
    verdict(
        worst <= TOL && worst_printed <= TOL,
        format!("max rel |generic - sdhs| = {worst:.1e}, max rel |FN generic - printed| = {worst_printed:.1e} (<= {TOL:.0e})"),
    )
}

// 8. Hermite polynomials: derivative oracle and Monte Carlo identities.

fn random_spd(d: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.normal());
    &a * a.transpose() + DMatrix::identity(d, d) * 0.5
}

fn gaussian_density(inv: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let d = x.len() as f64;
    let det_inv = inv.determinant();
    (det_inv / (2.0 * std::f64::consts::PI).powf(d)).sqrt() * (-0.5 * (x.transpose() * inv * x)[(0, 0)]).exp()
}

/// Central difference of `f` along the listed axes.
fn partial(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, axes: &[usize], h: f64) -> f64 {
    match axes.split_first() {
        None => f(x),
        Some((&i, rest)) => {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            (partial(f, &a, rest, h) - partial(f, &b, rest, h)) / (2.0 * h)
        }
    }
}

fn criterion_8() -> Verdict {
    const FD_TOL: f64 = 1e-4;
    const MAX_Z: f64 = 5.0;
    const N_MC: usize = 400_000;
    let mut rng = SeededRng::new(SEED, 8);
    let mut worst_fd: f64 = 0.0;
    for d in [1usize, 2, 3] {
        for _ in 0..5 {
            let sigma = random_spd(d, &mut rng);
            let inv = sigma.clone().try_inverse().unwrap();
            let x = DVector::from_fn(d, |_, _| rng.normal());
            let ctx = HermiteContext::new(inv.as_slice(), x.as_slice());
            let p = |z: &DVector<f64>| gaussian_density(&inv, z);
            let p0 = p(&x);
            let mut check = |axes: &[usize], got: f64, h: f64| {
                let sign = if axes.len() % 2 == 0 { 1.0 } else { -1.0 };
                let fd = sign * partial(&p, &x, axes, h) / p0;
                worst_fd = worst_fd.max((got - fd).abs() / fd.abs().max(1.0));
            };
            for i in 0..d {
                check(&[i], ctx.h1(i), 1e-5);
                for j in 0..d {
                    check(&[i, j], ctx.h2(i, j), 1e-4);
                    for k in 0..d {
                        check(&[i, j, k], ctx.h3(i, j, k), 2e-3);
                    }
                }
            }
        }
    }
    // Under ξ ~ N(0, Σ): E H_α = 0, E[H_i H_j] = Σ⁻¹_ij,
    // E[H_ij H_kl] = Σ⁻¹_ik Σ⁻¹_jl + Σ⁻¹_il Σ⁻¹_jk.
    let d = 2;
    let sigma = random_spd(d, &mut rng);
    let inv = sigma.clone().try_inverse().unwrap();
    let chol = sigma.cholesky().unwrap().l();
    let mut stats: Vec<(String, f64, f64, f64)> = Vec::new();
    let mut add = |name: String, v: f64, target: f64| match stats.iter_mut().find(|s| s.0 == name) {
        Some(s) => {
            s.1 += v - target;
            s.2 += (v - target).powi(2);
        }
        None => stats.push((name, v - target, (v - target).powi(2), target)),
    };
    for _ in 0..N_MC {
        let z = DVector::from_fn(d, |_, _| rng.normal());
        let xi = &chol * z;
        let ctx = HermiteContext::new(inv.as_slice(), xi.as_slice());
        for i in 0..d {
            add(format!("H{i}"), ctx.h1(i), 0.0);
            for j in 0..d {
                add(format!("H{i}{j}"), ctx.h2(i, j), 0.0);
                add(format!("H{i}H{j}"), ctx.h1(i) * ctx.h1(j), inv[(i, j)]);
                for k in 0..d {
                    add(format!("H{i}{j}{k}"), ctx.h3(i, j, k), 0.0);
                    for l in 0..d {
                        let t = inv[(i, k)] * inv[(j, l)] + inv[(i, l)] * inv[(j, k)];
                        add(format!("H{i}{j}H{k}{l}"), ctx.h2(i, j) * ctx.h2(k, l), t);
                    }
                }
            }
        }
    }
    let n = N_MC as f64;
    let worst_z = stats
        .iter()
        .map(|(_, s, s2, _)| {
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0);
            mean.abs() / (var / n).sqrt().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    verdict(
        worst_fd <= FD_TOL && worst_z <= MAX_Z,
        format!(
            "orders 1-3, d=1..3: max rel FD gap {worst_fd:.1e} (<= {FD_TOL:.0e}); {} MC identities, N={N_MC}: max |z| {worst_z:.2} (<= {MAX_Z})",
            stats.len()
        ),
    )
}

// 9. Augmentation: conjugate toy posterior, leapfrog order, SIR demo.

fn toy_posterior(values: &[f64], m: usize) -> AugmentedPosterior<Ou> {
    let prior = PriorSpec {
        params: vec![ParamPrior::Fixed(0.8), ParamPrior::Fixed(0.6)],
        x0: vec![0.0],
        init: vec![InitPrior { name: "x0".into(), coord: 0, mean: 0.5, sd: 1.0 }],
    };
    let obs = NoisyObservations { delta: 0.5, values: values.to_vec(), coord: 0, exp_scale: false, noise_sd: 0.3 };
    AugmentedPosterior::new(Ou::default(), prior, obs, SchemeId::Euler, m).unwrap()
}

/// Batch-means standard error of a chain's mean.
fn batch_se(x: &[f64], batches: usize) -> f64 {
    let b = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|i| x[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let mu = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

fn criterion_9() -> Verdict {
    const MAX_SE: f64 = 3.0;
    const ORDER: (f64, f64) = (1.8, 2.2);
    let values = [0.9, 0.4, 0.1, -0.3, 0.2, 0.5];
    let m = 4;
    let post = toy_posterior(&values, m);
    let dim = post.dim();
    // Euler on OU with fixed θ: X₀ = 0.5 + u₀, X_{k+1} = a X_k + s v_k, so the
    // observed states are c + J q and the posterior of q is Gaussian.
    let delta = 0.5 / m as f64;
    let (a, s) = (1.0 - 0.8 * delta, 0.6 * delta.sqrt());
    let n_obs = values.len();
    let mut jm = DMatrix::<f64>::zeros(n_obs, dim);
    let mut c = DVector::<f64>::zeros(n_obs);
    for (j, cj) in c.iter_mut().enumerate() {
        let steps = j * m;
        *cj = 0.5 * a.powi(steps as i32);
        jm[(j, 0)] = a.powi(steps as i32);
        for k in 0..steps {
            jm[(j, 1 + k)] = s * a.powi((steps - 1 - k) as i32);
        }
    }
    let tau2 = 0.3f64 * 0.3;
    let y = DVector::from_column_slice(&values);
    let prec = DMatrix::<f64>::identity(dim, dim) + jm.transpose() * &jm / tau2;
    let cov = prec.clone().try_inverse().unwrap();
    let mean_q = &cov * jm.transpose() * (&y - &c) / tau2;
    let mean_x = &c + &jm * &mean_q;

    let cfg = HmcConfig { step_size: 0.15, n_leapfrog: 10, n_iters: 20_000, n_warmup: 500, seed: SEED, ..Default::default() };
    let chain = hmc_sample(&post, &vec![0.0; dim], &cfg).unwrap();
    let mut worst_z: f64 = 0.0;
    for j in 0..n_obs {
        let xs: Vec<f64> = (0..chain.len())
            .map(|i| c[j] + (jm.row(j) * DVector::from_column_slice(chain.draw(i)))[(0, 0)])
            .collect();
        let est = xs.iter().sum::<f64>() / xs.len() as f64;
        worst_z = worst_z.max((est - mean_x[j]).abs() / batch_se(&xs, 40));
    }

    let steps = [0.2, 0.1, 0.05];
    let mut rng = SeededRng::new(SEED, 9);
    let mut errs = vec![0.0; steps.len()];
    for _ in 0..20 {
        let q: Vec<f64> = (0..dim).map(|i| mean_q[i] + 0.5 * rng.normal()).collect();
        let p: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for (e, &h) in errs.iter_mut().zip(&steps) {
            *e += energy_error(&post, &q, &p, h, (0.8 / h).round() as usize).abs();
        }
    }
    let order = log_slope(&steps, &errs);

    let dir = tempfile::tempdir().unwrap();
    let demo = RunConfig { command: Command::Mcmc, out: Some(dir.path().join("chain.csv")), ..Default::default() };
    let manifest = hyposde_cli::run(&demo).unwrap();
    let res = &manifest.results;
    let divergent = res["divergent"].as_u64().unwrap();
    let outside = res["out_of_support"].as_u64().unwrap();
    let iters = res["chains"][0]["iterations"].as_u64().unwrap();
    let accept = res["chains"][0]["acceptance_rate"].as_f64().unwrap();
    verdict(
        worst_z <= MAX_SE && (ORDER.0..=ORDER.1).contains(&order) && divergent == 0,
        format!(
            "toy posterior means: max |z| {worst_z:.2} (<= {MAX_SE}); energy error order {order:.2} (need [{},{}]); \
             SIR demo (default config, {iters} iterations): {divergent} divergent, {outside} left the support, acceptance {accept:.3}",
            ORDER.0, ORDER.1
        ),
    )
}

fn main() {
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let extended = std::env::var("HYPOSDE_EXTENDED").is_ok_and(|v| v == "1");
    let criteria: [(u8, &str, fn() -> Verdict, bool); 9] = [
        (1, "variate moment suite", criterion_1, false),
        (2, "weak-order slopes", criterion_2, false),
        (3, "density normalisation", criterion_3, false),
        (4, "iterated-density bias order", criterion_4, false),
        (5, "FN calibration", criterion_5, true),
        (6, "JR calibration", criterion_6, true),
        (7, "cross-implementation Phi2", criterion_7, false),
        (8, "Hermite correctness", criterion_8, false),
        (9, "augmentation sanity", criterion_9, false),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run, long) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        if long && !extended && !selected.contains(&id) {
            println!("criterion {id} [{name}]: SKIP (extended; set HYPOSDE_EXTENDED=1)");
            continue;
        }
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = match (v.pass, KNOWN_FAILURES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(id);
                "FAIL"
            }
        };
        println!("criterion {id} [{name}]: {tag} in {secs:.1}s: {}", v.detail);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
