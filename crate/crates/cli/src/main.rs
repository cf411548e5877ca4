use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyposde::estimate::ContrastMethod;
use hyposde_cli::config::SEED_ENV;
use hyposde_cli::{run, CliError, Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hyposde", version, about = "Simulation, density and estimation experiments for hypo-elliptic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Option<Sub>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Builtin model; each command has its own default
    #[arg(long, global = true)]
    model: Option<String>,
    /// Base seed; defaults to $HYPOSDE_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 uses all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// CSV output path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Manifest path; defaults to the output path with `.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "param", global = true, value_parser = parse_param)]
    params: Vec<(String, f64)>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Simulate one path and write it as CSV.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
    /// Replicate contrast estimation study on a builtin design.
    #[command(allow_negative_numbers = true)]
    Estimate {
        #[arg(long)]
        design: Option<String>,
        /// `new`, `lg` or a comma-separated list.
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<ContrastMethod>>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Adam iterations.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
    },
    /// Sup-grid bias of iterated densities against the exact OU transition.
    #[command(allow_negative_numbers = true)]
    DensityBias {
        #[arg(long = "Delta", alias = "delta")]
        delta: Option<f64>,
        #[arg(long = "M", alias = "m", value_delimiter = ',')]
        m: Option<Vec<usize>>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<f64>,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Monte Carlo check of the variate moment catalogue.
    #[command(allow_negative_numbers = true)]
    MomentsCheck {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "Delta", alias = "delta", value_delimiter = ',')]
        delta: Option<Vec<f64>>,
        #[arg(long)]
        d_r: Option<usize>,
    },
    /// HMC on the augmented SIR posterior.
    #[command(allow_negative_numbers = true)]
    Mcmc {
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        n_leapfrog: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let mut errs = Vec::new();
    if let Ok(s) = std::env::var(SEED_ENV) {
        match s.trim().parse() {
            Ok(seed) => cfg.seed = seed,
            Err(e) => errs.push(format!("{SEED_ENV}={s}: {e}")),
        }
    }
    if let Some(path) = &cli.common.config {
        match std::fs::read_to_string(path) {
            Ok(text) => match RunConfig::from_toml(&text) {
                Ok(file) => {
                    let env_seed = cfg.seed;
                    let has_seed = text.parse::<toml::Table>().map(|t| t.contains_key("seed")).unwrap_or(false);
                    cfg = file;
                    if !has_seed {
                        cfg.seed = env_seed;
                    }
                }
                Err(e) => errs.push(format!("{}: {e}", path.display())),
            },
            Err(e) => errs.push(format!("{}: {e}", path.display())),
        }
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let c = cli.common;
    if c.model.is_some() {
        cfg.model = c.model;
    }
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.workers, c.workers);
    if c.out.is_some() {
        cfg.out = c.out;
    }
    if c.manifest.is_some() {
        cfg.manifest = c.manifest;
    }
    cfg.params.extend(c.params);
    match cli.command {
        Some(Sub::Simulate { n, dt, scheme, stride, x0 }) => {
            cfg.command = Command::Simulate;
            let s = &mut cfg.simulate;
            set(&mut s.n, n);
            set(&mut s.dt, dt);
            set(&mut s.scheme, scheme);
            set(&mut s.stride, stride);
            set(&mut s.x0, x0);
        }
        Some(Sub::Estimate { design, method, replicates, iters, step_size }) => {
            cfg.command = Command::Estimate;
            let s = &mut cfg.estimate;
            set(&mut s.design, design);
            set(&mut s.methods, method);
            set(&mut s.replicates, replicates);
            set(&mut s.adam.n_iters, iters);
            set(&mut s.adam.step_size, step_size);
        }
        Some(Sub::DensityBias { delta, m, x, grid_points }) => {
            cfg.command = Command::DensityBias;
            let s = &mut cfg.density_bias;
            set(&mut s.delta, delta);
            set(&mut s.ms, m);
            set(&mut s.x, x);
            set(&mut s.grid_points, grid_points);
        }
        Some(Sub::MomentsCheck { n, delta, d_r }) => {
            cfg.command = Command::MomentsCheck;
            let s = &mut cfg.moments_check;
            set(&mut s.n, n);
            set(&mut s.deltas, delta);
            set(&mut s.d_r, d_r);
        }
        Some(Sub::Mcmc { scheme, dt, iters, warmup, step_size, n_leapfrog, chains }) => {
            cfg.command = Command::Mcmc;
            let s = &mut cfg.mcmc;
            set(&mut s.scheme, scheme);
            set(&mut s.dt, dt);
            set(&mut s.iters, iters);
            set(&mut s.warmup, warmup);
            set(&mut s.step_size, step_size);
            set(&mut s.n_leapfrog, n_leapfrog);
            set(&mut s.chains, chains);
        }
        None => {
            if c.config.is_none() && !c.dump_config {
                return Err(CliError::Config(vec!["a subcommand or --config is required".into()]));
            }
        }
    }
    cfg.resolve();
    Ok(cfg)
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.report());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail(&CliError::Config(vec![e.to_string().trim().to_string()])),
    };
    let dump = cli.common.dump_config;
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if dump {
        return match cfg.to_toml() {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&CliError::Config(vec![e])),
        };
    }
    match run(&cfg) {
        Ok(m) => {
            if cfg.out.is_some() {
                eprintln!("wrote {} in {:.2}s", m.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "), m.wall_time_seconds);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
