//! Run configuration: defaults, TOML file, environment and flag overrides,
//! and exhaustive validation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hyposde::augment::INFLUENZA_1978;
use hyposde::estimate::{AdamConfig, ContrastMethod, Design};
use hyposde::model::{builtin_model, Sde};
use serde::{Deserialize, Serialize};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "HYPOSDE_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Simulate,
    Estimate,
    DensityBias,
    MomentsCheck,
    Mcmc,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::DensityBias => "density-bias",
            Command::MomentsCheck => "moments-check",
            Command::Mcmc => "mcmc",
        }
    }

    /// Model used when the configuration names none.
    pub fn default_model(self) -> &'static str {
        match self {
            Command::Simulate | Command::DensityBias | Command::MomentsCheck => "ou",
            Command::Estimate => "fitzhugh_nagumo",
            Command::Mcmc => "sir_log",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Number of steps; the output has `n / stride + 1` rows.
    pub n: usize,
    pub dt: f64,
    /// `weak2`, `euler`, `local_gauss`, `weak2_elliptic` or `weak2_hypo`.
    pub scheme: String,
    pub stride: usize,
    /// Initial state; the model's reference state when empty.
    pub x0: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { n: 1000, dt: 0.01, scheme: "weak2".into(), stride: 1, x0: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub design: String,
    pub methods: Vec<ContrastMethod>,
    pub replicates: usize,
    /// Half-width of the relative uniform perturbation of the start point.
    pub init_spread: f64,
    pub adam: AdamConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            design: "fn3".into(),
            methods: ContrastMethod::ALL.to_vec(),
            replicates: 20,
            init_spread: 0.2,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityBiasConfig {
    pub delta: f64,
    pub ms: Vec<usize>,
    /// Starting point of the transition.
    pub x: f64,
    pub grid_points: usize,
    pub width_sd: f64,
}

impl Default for DensityBiasConfig {
    fn default() -> Self {
        DensityBiasConfig { delta: 0.5, ms: vec![2, 4, 8, 16], x: 0.0, grid_points: 2001, width_sd: 8.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsCheckConfig {
    pub n: usize,
    pub deltas: Vec<f64>,
    pub d_r: usize,
    /// Largest accepted `|z|` score.
    pub max_z: f64,
}

impl Default for MomentsCheckConfig {
    fn default() -> Self {
        MomentsCheckConfig { n: 2_000_000, deltas: vec![0.5, 1.0], d_r: 2, max_z: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// `em` or `weak2`.
    pub scheme: String,
    pub dt: f64,
    pub iters: usize,
    pub warmup: usize,
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub chains: usize,
    pub noise_sd: f64,
    /// Adam iterations locating the start point.
    pub init_iters: usize,
    pub init_step: f64,
    pub max_energy_error: f64,
    pub data: Vec<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            scheme: "em".into(),
            dt: 0.05,
            iters: 1500,
            warmup: 500,
            step_size: 0.004,
            n_leapfrog: 25,
            chains: 1,
            noise_sd: 5.0,
            init_iters: 500,
            init_step: 0.01,
            max_energy_error: 1000.0,
            data: INFLUENZA_1978.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Builtin model name; the command's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// CSV destination; standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Run manifest destination; next to `out` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Parameter overrides by name.
    pub params: BTreeMap<String, f64>,
    pub simulate: SimulateConfig,
    pub estimate: EstimateConfig,
    pub density_bias: DensityBiasConfig,
    pub moments_check: MomentsCheckConfig,
    pub mcmc: McmcConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> Result<String, String> {
        toml::to_string(self).map_err(|e| e.to_string())
    }

    pub fn model_name(&self) -> &str {
        self.model.as_deref().unwrap_or(self.command.default_model())
    }

    /// Fills in the model name so the dumped form is explicit.
    pub fn resolve(&mut self) {
        if self.model.is_none() {
            self.model = Some(self.command.default_model().to_string());
        }
    }

    /// Manifest path: explicit, or `out` with extension `manifest.json`.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| self.out.as_ref().map(|p| p.with_extension("manifest.json")))
    }

    /// Every problem with the configuration, empty when it is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.seed > i64::MAX as u64 {
            errs.push(format!("seed {} exceeds {}", self.seed, i64::MAX));
        }
        let model = match builtin_model(self.model_name(), &self.params) {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(format!("model: {e}"));
                None
            }
        };
        let canonical = model.as_ref().map(|m| m.name().to_string());
        let require_model = |errs: &mut Vec<String>, want: &str| {
            if let Some(c) = &canonical {
                if c != want {
                    errs.push(format!("{} requires model {want}, got {c}", self.command.as_str()));
                }
            }
        };
        match self.command {
            Command::Simulate => {
                let c = &self.simulate;
                if c.n == 0 {
                    errs.push("simulate.n must be positive".into());
                }
                positive(&mut errs, "simulate.dt", c.dt);
                if c.stride == 0 {
                    errs.push("simulate.stride must be positive".into());
                }
                if let Err(e) = crate::run::parse_scheme(&c.scheme, model.as_ref().map(|m| m.dims())) {
                    errs.push(e);
                }
                if let Some(m) = &model {
                    let d = m.dims().total();
                    if !c.x0.is_empty() && c.x0.len() != d {
                        errs.push(format!("simulate.x0 has length {}, model state has dimension {d}", c.x0.len()));
                    }
                    if c.x0.iter().any(|v| !v.is_finite()) {
                        errs.push("simulate.x0 must be finite".into());
                    }
                }
            }
            Command::Estimate => {
                let c = &self.estimate;
                match Design::named(&c.design) {
                    Ok(d) => {
                        if let (Some(want), Some(got)) = (d.model_name(), &canonical) {
                            if want != got {
                                errs.push(format!("design {} requires model {want}, got {got}", c.design));
                            }
                        }
                    }
                    Err(e) => errs.push(format!("estimate.design: {e}")),
                }
                if c.methods.is_empty() {
                    errs.push("estimate.methods must not be empty".into());
                }
                if c.replicates == 0 {
                    errs.push("estimate.replicates must be positive".into());
                }
                if !(0.0..1.0).contains(&c.init_spread) {
                    errs.push(format!("estimate.init_spread must lie in [0, 1), got {}", c.init_spread));
                }
                positive(&mut errs, "estimate.adam.step_size", c.adam.step_size);
                if !(0.0..1.0).contains(&c.adam.beta1) || !(0.0..1.0).contains(&c.adam.beta2) {
                    errs.push("estimate.adam.beta1 and beta2 must lie in [0, 1)".into());
                }
                positive(&mut errs, "estimate.adam.epsilon", c.adam.epsilon);
                if c.adam.n_iters == 0 {
                    errs.push("estimate.adam.n_iters must be positive".into());
                }
            }
            Command::DensityBias => {
                let c = &self.density_bias;
                require_model(&mut errs, "ou");
                positive(&mut errs, "density_bias.delta", c.delta);
                if c.ms.len() < 2 || c.ms.contains(&0) {
                    errs.push("density_bias.ms needs at least two positive values".into());
                }
                if c.grid_points < 3 {
                    errs.push("density_bias.grid_points must be at least 3".into());
                }
                positive(&mut errs, "density_bias.width_sd", c.width_sd);
                if !c.x.is_finite() {
                    errs.push("density_bias.x must be finite".into());
                }
            }
            Command::MomentsCheck => {
                let c = &self.moments_check;
                if c.n < 2 {
                    errs.push("moments_check.n must be at least 2".into());
                }
                if c.deltas.is_empty() {
                    errs.push("moments_check.deltas must not be empty".into());
                }
                for (i, d) in c.deltas.iter().enumerate() {
                    positive(&mut errs, &format!("moments_check.deltas[{i}]"), *d);
                }
                if c.d_r == 0 {
                    errs.push("moments_check.d_r must be positive".into());
                }
                positive(&mut errs, "moments_check.max_z", c.max_z);
            }
            Command::Mcmc => {
                let c = &self.mcmc;
                require_model(&mut errs, "sir_log");
                if c.scheme != "em" && c.scheme != "weak2" {
                    errs.push(format!("mcmc.scheme must be em or weak2, got {}", c.scheme));
                }
                positive(&mut errs, "mcmc.dt", c.dt);
                if c.dt > 0.0 {
                    let m = (1.0 / c.dt).round();
                    if (m * c.dt - 1.0).abs() > 1e-9 {
                        errs.push(format!("mcmc.dt must divide the observation spacing 1, got {}", c.dt));
                    }
                }
                if c.iters == 0 {
                    errs.push("mcmc.iters must be positive".into());
                }
                positive(&mut errs, "mcmc.step_size", c.step_size);
                if c.n_leapfrog == 0 {
                    errs.push("mcmc.n_leapfrog must be positive".into());
                }
                if c.chains == 0 {
                    errs.push("mcmc.chains must be positive".into());
                }
                positive(&mut errs, "mcmc.noise_sd", c.noise_sd);
                positive(&mut errs, "mcmc.init_step", c.init_step);
                positive(&mut errs, "mcmc.max_energy_error", c.max_energy_error);
                if c.data.len() < 2 || c.data.iter().any(|v| !v.is_finite()) {
                    errs.push("mcmc.data needs at least two finite values".into());
                }
            }
        }
        errs
    }
}

fn positive(errs: &mut Vec<String>, what: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{what} must be positive and finite, got {v}"));
    }
}
