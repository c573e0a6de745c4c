//! Strict TOML run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vortlab_core::dynamics::ModeSpec;
use vortlab_core::ergodics::{default_catalog, Observable};
use vortlab_core::ou::MIN_CALIBRATION_INDEX;
use vortlab_core::{FourierGrid, InitialCondition, NoiseSpectrum, ScalarField, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Ensemble,
    OuCalibrate,
    Invariant,
    MarkovTest,
    TailReport,
    ContdepTest,
    Checks,
}

impl Command {
    /// Commands whose statistics assume an invariant measure.
    pub fn needs_damping(self) -> bool {
        matches!(self, Command::Invariant | Command::MarkovTest | Command::TailReport)
    }
}

pub const DAMPING_WARNING: &str = "γ>0 required by the invariant-measure hypothesis";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub h: f64,
    pub kcut: f64,
    pub sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let d = NoiseSpectrum::default();
        Self {
            alpha: d.alpha,
            h: d.h,
            kcut: d.kcut,
            sigma: d.amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k1: i64,
    pub k2: i64,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Zero,
    RandomBandLimited { band: usize, linf: f64, seed: u64 },
    Modes { modes: Vec<ModeEntry> },
    /// A snapshot file written by `simulate`.
    Snapshot { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub trajectories: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { trajectories: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantConfig {
    pub burn_in: f64,
    pub horizons: Vec<f64>,
    pub replicates: usize,
    pub batches: usize,
    /// Seed of the second run in the seed-agreement check.
    pub second_seed: u64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            burn_in: 10.0,
            horizons: vec![25.0, 50.0, 100.0, 200.0],
            replicates: 16,
            batches: 10,
            second_seed: 4242,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovConfig {
    pub t: f64,
    pub s: f64,
    pub m_outer: usize,
    pub m_inner: usize,
    pub observable: String,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            s: 1.0,
            m_outer: 200,
            m_inner: 50,
            observable: "tanh_mix".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailConfig {
    pub times: Vec<f64>,
    pub m: usize,
    /// Time whose 90% quantile the last sample time is compared against.
    pub reference_time: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            times: vec![5.0, 10.0, 20.0, 40.0],
            m: 200,
            reference_time: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `exp(cos x₁ + sin x₂)`
    ExpBump,
    Modes { modes: Vec<ModeEntry> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContdepConfig {
    pub n_list: Vec<usize>,
    pub amplitude: f64,
    pub g: TestFunction,
}

impl Default for ContdepConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4, 8, 16, 32],
            amplitude: 1.0,
            g: TestFunction::ExpBump,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuConfig {
    pub a: f64,
    pub c_tilde: f64,
    pub samples: usize,
}

impl Default for OuConfig {
    fn default() -> Self {
        Self {
            a: 3.0,
            c_tilde: 1.0,
            samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Diagnostic records are taken every this many steps.
    pub record_every: u64,
    pub burn_in: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            record_every: 10,
            burn_in: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n: usize,
    pub dt: f64,
    pub gamma: f64,
    pub t0: f64,
    pub t1: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub snapshot_every: u64,
    pub advection: bool,
    /// Catalog observables recorded along runs; empty means the whole catalog.
    pub observables: Vec<String>,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    pub noise: NoiseConfig,
    pub initial: InitialConfig,
    pub ensemble: EnsembleConfig,
    pub invariant: InvariantConfig,
    pub markov: MarkovConfig,
    pub tail: TailConfig,
    pub contdep: ContdepConfig,
    pub ou: OuConfig,
    pub checks: ChecksConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 128,
            dt: 1e-3,
            gamma: 0.5,
            t0: 0.0,
            t1: 10.0,
            seed: 42,
            stream_id: 0,
            snapshot_every: 0,
            advection: true,
            observables: Vec::new(),
            output_dir: PathBuf::from("vortlab-out"),
            formats: vec![Format::Csv, Format::Snapshot],
            noise: NoiseConfig::default(),
            initial: InitialConfig::default(),
            ensemble: EnsembleConfig::default(),
            invariant: InvariantConfig::default(),
            markov: MarkovConfig::default(),
            tail: TailConfig::default(),
            contdep: ContdepConfig::default(),
            ou: OuConfig::default(),
            checks: ChecksConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn serialize_config(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run config is always serializable")
}

impl RunConfig {
    pub fn spectrum(&self) -> NoiseSpectrum {
        NoiseSpectrum {
            alpha: self.noise.alpha,
            h: self.noise.h,
            kcut: self.noise.kcut,
            amplitude: self.noise.sigma,
        }
    }

    pub fn grid(&self) -> Result<FourierGrid, ConfigError> {
        FourierGrid::new(self.n).map_err(|e| ConfigError(format!("n: {e}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return err(format!("dt must be > 0 (got {})", self.dt));
        }
        if !(self.t1 >= self.t0) {
            return err(format!("t1 must not precede t0 (t0 = {}, t1 = {})", self.t0, self.t1));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return err(format!("gamma must be >= 0 (got {})", self.gamma));
        }
        let spec = self.spectrum();
        spec.validate().map_err(|e| ConfigError(format!("noise: {e}")))?;
        if spec.kcut > grid.kmax_dealias() as f64 {
            return err(format!(
                "noise.kcut = {} exceeds kmax_dealias = floor(n/3) = {}",
                spec.kcut,
                grid.kmax_dealias()
            ));
        }
        if !(self.ou.a > MIN_CALIBRATION_INDEX) {
            return err(format!(
                "ou.a must exceed 2 so that H^(a-1) embeds in L^inf (got {})",
                self.ou.a
            ));
        }
        if !(self.ou.c_tilde > 0.0) {
            return err(format!("ou.c_tilde must be > 0 (got {})", self.ou.c_tilde));
        }
        if self.ou.samples == 0 {
            return err("ou.samples must be >= 1");
        }
        if self.ensemble.trajectories == 0 {
            return err("ensemble.trajectories must be >= 1");
        }
        let inv = &self.invariant;
        if !(inv.burn_in >= 0.0) {
            return err(format!("invariant.burn_in must be >= 0 (got {})", inv.burn_in));
        }
        if inv.horizons.is_empty() || inv.horizons.iter().any(|h| !(*h > 0.0)) {
            return err("invariant.horizons must be a non-empty list of positive times");
        }
        if inv.replicates == 0 || inv.batches < 2 {
            return err("invariant.replicates must be >= 1 and invariant.batches >= 2");
        }
        let m = &self.markov;
        if !(m.t > 0.0) || !(m.s >= 0.0) {
            return err(format!("markov.t must be > 0 and markov.s >= 0 (got {}, {})", m.t, m.s));
        }
        if m.m_outer < 2 || m.m_inner < 2 {
            return err("markov.m_outer and markov.m_inner must be >= 2");
        }
        if self.tail.m == 0 || self.tail.times.is_empty() || self.tail.times.iter().any(|t| !(*t >= 0.0)) {
            return err("tail.m must be >= 1 and tail.times a non-empty list of times >= 0");
        }
        if self.checks.record_every == 0 {
            return err("checks.record_every must be >= 1");
        }
        let mut ints = vec![
            ("seed", self.seed),
            ("stream_id", self.stream_id),
            ("snapshot_every", self.snapshot_every),
            ("invariant.second_seed", inv.second_seed),
            ("checks.record_every", self.checks.record_every),
        ];
        if let InitialConfig::RandomBandLimited { seed, .. } = self.initial {
            ints.push(("initial.seed", seed));
        }
        if let Some((name, v)) = ints.iter().find(|(_, v)| *v > i64::MAX as u64) {
            return err(format!("{name} = {v} exceeds the TOML integer range"));
        }
        self.observables()?;
        self.sim_config()?;
        Ok(())
    }

    /// `validate` plus the rules of sections only `command` reads.
    pub fn validate_for(&self, command: Command) -> Result<(), ConfigError> {
        self.validate()?;
        if command == Command::ContdepTest {
            let kmax = self.grid()?.kmax_dealias();
            if self.contdep.n_list.is_empty() {
                return err("contdep.n_list must not be empty");
            }
            if let Some(n) = self.contdep.n_list.iter().find(|&&n| n == 0 || n > kmax) {
                return err(format!("contdep.n_list entry {n} outside [1, kmax_dealias = {kmax}]"));
            }
        }
        Ok(())
    }

    /// Warnings attached to `command` under this configuration.
    pub fn warnings(&self, command: Command) -> Vec<String> {
        let mut w = Vec::new();
        if command.needs_damping() && self.gamma == 0.0 {
            w.push(DAMPING_WARNING.to_string());
        }
        w
    }

    pub fn observables(&self) -> Result<Vec<Observable>, ConfigError> {
        let catalog = default_catalog(&self.grid()?);
        if self.observables.is_empty() {
            return Ok(catalog);
        }
        self.observables
            .iter()
            .map(|name| {
                catalog.iter().find(|o| &o.name == name).cloned().ok_or_else(|| {
                    let names: Vec<_> = catalog.iter().map(|o| o.name.as_str()).collect();
                    ConfigError(format!("unknown observable {name:?}; catalog: {}", names.join(", ")))
                })
            })
            .collect()
    }

    pub fn observable(&self, name: &str) -> Result<Observable, ConfigError> {
        default_catalog(&self.grid()?)
            .into_iter()
            .find(|o| o.name == name)
            .ok_or_else(|| ConfigError(format!("unknown observable {name:?}")))
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let mut c = SimConfig::new(self.grid()?);
        c.dt = self.dt;
        c.gamma = self.gamma;
        c.spectrum = self.spectrum();
        c.t0 = self.t0;
        c.t1 = self.t1;
        c.seed = self.seed;
        c.stream_id = self.stream_id;
        c.snapshot_every = self.snapshot_every;
        c.advection = self.advection;
        c.observables = self.observables()?;
        c.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(c)
    }

    /// Initial vorticity; snapshot files are resolved relative to the working directory.
    pub fn initial_field(&self) -> anyhow::Result<ScalarField> {
        let grid = self.grid()?;
        let ic = match &self.initial {
            InitialConfig::Zero => InitialCondition::Zero,
            InitialConfig::RandomBandLimited { band, linf, seed } => InitialCondition::RandomBandLimited {
                band: *band,
                linf: *linf,
                seed: *seed,
            },
            InitialConfig::Modes { modes } => InitialCondition::Modes(modes.iter().map(mode_spec).collect()),
            InitialConfig::Snapshot { path } => {
                let snap = crate::snapshot::read_snapshot(path)?;
                if snap.n != self.n {
                    anyhow::bail!("snapshot {} has N = {}, config has n = {}", path.display(), snap.n, self.n);
                }
                InitialCondition::Values(snap.values)
            }
        };
        Ok(ic.build(&grid)?)
    }

    pub fn test_function(&self) -> anyhow::Result<ScalarField> {
        let grid = self.grid()?;
        Ok(match &self.contdep.g {
            TestFunction::ExpBump => ScalarField::from_fn(&grid, |x, y| (x.cos() + y.sin()).exp()),
            TestFunction::Modes { modes } => InitialCondition::Modes(modes.iter().map(mode_spec).collect()).build(&grid)?,
        })
    }
}

fn mode_spec(m: &ModeEntry) -> ModeSpec {
    ModeSpec {
        k1: m.k1,
        k2: m.k2,
        cos: m.cos,
        sin: m.sin,
    }
}
