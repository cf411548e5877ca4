//! Subcommand execution and artifact emission.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hyposde::augment::{
    constrained_draws, hmc_sample, initial_point, posterior_summary, sir_posterior, sir_start, HmcConfig,
};
use hyposde::estimate::{replicate_study, Design, StudyConfig};
use hyposde::expansion::{decay_order, ou_bias_study, IterOptions};
use hyposde::model::{builtin_model, BuiltinModel, Dims, Sde};
use hyposde::par::{self, Execution};
use hyposde::scheme::{simulate_strided, SchemeId};
use hyposde::variates::{catalogue, moment_suite, SeededRng};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};

/// Failure of a run, reported as JSON on standard error.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Every validation problem found in the configuration.
    Config(Vec<String>),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Io(_) => 3,
        }
    }

    pub fn report(&self) -> Value {
        let errors = match self {
            CliError::Config(v) => v.clone(),
            CliError::Runtime(m) | CliError::Io(m) => vec![m.clone()],
        };
        json!({ "status": "error", "kind": self.kind(), "errors": errors })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.report())
    }
}

impl std::error::Error for CliError {}

impl From<hyposde::Error> for CliError {
    fn from(e: hyposde::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Run manifest written next to the CSV output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub status: &'static str,
    pub command: &'static str,
    pub model: String,
    pub seed: u64,
    pub version: &'static str,
    pub config_hash: String,
    pub config: String,
    pub outputs: Vec<PathBuf>,
    pub wall_time_seconds: f64,
    pub results: Value,
}

/// Resolves a scheme name against the model dimensions; `weak2` picks the
/// weak second-order scheme matching them.
pub fn parse_scheme(name: &str, dims: Option<Dims>) -> Result<SchemeId, String> {
    let scheme = match name {
        "weak2" => match dims {
            Some(d) => SchemeId::weak2_for(d),
            None => return Ok(SchemeId::Weak2Elliptic),
        },
        "euler" | "em" => SchemeId::Euler,
        "local_gauss" | "lg" => SchemeId::LocalGauss,
        "weak2_elliptic" => SchemeId::Weak2Elliptic,
        "weak2_hypo" => SchemeId::Weak2Hypo,
        other => return Err(format!("unknown scheme {other}")),
    };
    if let Some(d) = dims {
        scheme
            .check(d, scheme.bundle_kind(), d.rough)
            .map_err(|e| format!("scheme {name}: {e}"))?;
    }
    Ok(scheme)
}

/// SHA-256 of the configuration's TOML form, hex encoded.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Validates `cfg`, runs its command on `cfg.workers` threads, writes the
/// CSV (to `out` or standard output) and the manifest when it has a path.
pub fn run(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let text = cfg.to_toml().map_err(|e| CliError::Config(vec![e]))?;
    let start = Instant::now();
    let mut csv = Vec::new();
    let results = par::with_workers(cfg.workers, || execute(&cfg, &mut csv))?;
    let mut outputs = Vec::new();
    match &cfg.out {
        Some(path) => {
            write_file(path, &csv)?;
            outputs.push(path.clone());
        }
        None => io::stdout().lock().write_all(&csv)?,
    }
    let manifest_path = cfg.manifest_path();
    if let Some(p) = &manifest_path {
        outputs.push(p.clone());
    }
    let manifest = Manifest {
        status: "ok",
        command: cfg.command.as_str(),
        model: cfg.model_name().to_string(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(&text),
        config: text,
        outputs,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        results,
    };
    if let Some(p) = &manifest_path {
        let body = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        write_file(p, &body)?;
    }
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

fn execute(cfg: &RunConfig, csv: &mut Vec<u8>) -> Result<Value, CliError> {
    let exec = Execution::default();
    let model = builtin_model(cfg.model_name(), &cfg.params)?;
    match cfg.command {
        Command::Simulate => simulate(cfg, &model, csv),
        Command::Estimate => estimate(cfg, exec, &model, csv),
        Command::DensityBias => density_bias(cfg, exec, &model, csv),
        Command::MomentsCheck => moments_check(cfg, exec, csv),
        Command::Mcmc => mcmc(cfg, exec, &model, csv),
    }
}

fn simulate(cfg: &RunConfig, model: &BuiltinModel, csv: &mut Vec<u8>) -> Result<Value, CliError> {
    let c = &cfg.simulate;
    let scheme = parse_scheme(&c.scheme, Some(model.dims())).map_err(|e| CliError::Config(vec![e]))?;
    let x0 = if c.x0.is_empty() { model.default_x0() } else { c.x0.clone() };
    let theta = model.default_theta();
    let mut rng = SeededRng::new(cfg.seed, 0);
    let path = simulate_strided(model, scheme, &x0, &theta, c.dt, c.n, c.stride, &mut rng)?;
    path.write_csv(&mut *csv)?;
    Ok(json!({ "scheme": scheme.as_str(), "theta": theta, "x0": x0, "rows": path.len() }))
}

fn estimate(cfg: &RunConfig, exec: Execution, model: &BuiltinModel, csv: &mut Vec<u8>) -> Result<Value, CliError> {
    let c = &cfg.estimate;
    let study = StudyConfig {
        design: Design::named(&c.design)?,
        theta_true: model.default_theta(),
        x0: model.default_x0(),
        n_replicates: c.replicates,
        methods: c.methods.clone(),
        adam: c.adam.clone(),
        seed: cfg.seed,
        init_spread: c.init_spread,
    };
    let result = replicate_study(exec, model, &study)?;
    result.write_csv(&mut *csv)?;
    Ok(json!({
        "design": c.design,
        "theta_true": study.theta_true,
        "summary": result.summary,
        "failures": result.failures,
    }))
}

fn density_bias(cfg: &RunConfig, exec: Execution, model: &BuiltinModel, csv: &mut Vec<u8>) -> Result<Value, CliError> {
    let c = &cfg.density_bias;
    let theta = model.default_theta();
    let (kappa, sigma) = (theta[0], theta[1]);
    let opts = IterOptions { grid_points: c.grid_points, width_sd: c.width_sd };
    let rows = ou_bias_study(exec, model, kappa, sigma, c.x, c.delta, &c.ms, &opts)?;
    let cols: [Vec<f64>; 3] = [
        rows.iter().map(|r| r.sup_error_i).collect(),
        rows.iter().map(|r| r.sup_error_ii).collect(),
        rows.iter().map(|r| r.sup_error_em).collect(),
    ];
    writeln!(csv, "M,sup_error_I,sup_error_II,sup_error_EM,order_I,order_II,order_EM")?;
    for (i, r) in rows.iter().enumerate() {
        write!(csv, "{},{:.16e},{:.16e},{:.16e}", r.m, r.sup_error_i, r.sup_error_ii, r.sup_error_em)?;
        for col in &cols {
            if i == 0 {
                write!(csv, ",")?;
            } else {
                let o = (col[i - 1] / col[i]).ln() / (r.m as f64 / rows[i - 1].m as f64).ln();
                write!(csv, ",{o:.16e}")?;
            }
        }
        writeln!(csv)?;
    }
    Ok(json!({
        "kappa": kappa,
        "sigma": sigma,
        "delta": c.delta,
        "fitted_order": {
            "I": decay_order(&c.ms, &cols[0]),
            "II": decay_order(&c.ms, &cols[1]),
            "EM": decay_order(&c.ms, &cols[2]),
        },
    }))
}

fn moments_check(cfg: &RunConfig, exec: Execution, csv: &mut Vec<u8>) -> Result<Value, CliError> {
    let c = &cfg.moments_check;
    let moments = catalogue(c.d_r);
    writeln!(csv, "moment,delta,exact,estimate,std_error,z")?;
    let mut max_z: f64 = 0.0;
    for &delta in &c.deltas {
        for m in moment_suite(exec, &moments, delta, c.d_r, c.n, cfg.seed)? {
            let z = m.z_score();
            max_z = max_z.max(z);
            writeln!(csv, "{},{:.16e},{:.16e},{:.16e},{:.16e},{z:.16e}", m.moment, m.delta, m.exact, m.estimate, m.std_error)?;
        }
    }
    Ok(json!({ "moments": moments.len(), "max_z": max_z, "max_z_allowed": c.max_z, "passed": max_z <= c.max_z }))
}

fn mcmc(cfg: &RunConfig, exec: Execution, model: &BuiltinModel, csv: &mut Vec<u8>) -> Result<Value, CliError> {
    let c = &cfg.mcmc;
    let sir = model
        .as_sir()
        .cloned()
        .ok_or_else(|| CliError::Config(vec!["mcmc requires model sir_log".into()]))?;
    let scheme = if c.scheme == "em" { SchemeId::Euler } else { SchemeId::weak2_for(model.dims()) };
    let post = sir_posterior(sir, &c.data, c.noise_sd, scheme, c.dt)?;
    let q0 = initial_point(&post, &sir_start(&post), c.init_iters, c.init_step)?;
    let chains = par::try_map(exec, c.chains, |k| {
        let hmc = HmcConfig {
            step_size: c.step_size,
            n_leapfrog: c.n_leapfrog,
            n_iters: c.iters,
            n_warmup: c.warmup,
            seed: cfg.seed,
            stream: k as u64,
            max_energy_error: c.max_energy_error,
        };
        hmc_sample(&post, &q0, &hmc)
    })?;
    let names = post.constrained_names();
    writeln!(csv, "chain,iteration,{},log_density", names.join(","))?;
    let mut all = Vec::new();
    for (k, chain) in chains.iter().enumerate() {
        let draws = constrained_draws(&post, chain);
        for i in 0..chain.len() {
            write!(csv, "{k},{i}")?;
            for v in &draws[i * names.len()..(i + 1) * names.len()] {
                write!(csv, ",{v:.16e}")?;
            }
            writeln!(csv, ",{:.16e}", chain.log_density[i])?;
        }
        all.extend(draws);
    }
    let per_chain: Vec<Value> = chains
        .iter()
        .map(|ch| {
            json!({
                "acceptance_rate": ch.acceptance_rate(),
                "divergent": ch.divergent,
                "out_of_support": ch.out_of_support,
                "iterations": ch.iterations,
            })
        })
        .collect();
    Ok(json!({
        "scheme": scheme.as_str(),
        "dim": post.dim(),
        "chains": per_chain,
        "divergent": chains.iter().map(|ch| ch.divergent).sum::<usize>(),
        "out_of_support": chains.iter().map(|ch| ch.out_of_support).sum::<usize>(),
        "summary": posterior_summary(&all, &names)?,
    }))
}
