//! Experiment configuration: one TOML file per experiment, sections named after
//! the core modules, dotted-key overrides from the command line.

use std::path::Path;

use roughspde_core::kernels::{make_initial_data, InitialFamily, KernelKind, KernelSpec};
use roughspde_core::noise::{HurstParam, SpaceTimeGrid};
use roughspde_core::regularity::{Direction, Experiment, IncrementLadder, PropertyPConfig, MIN_PATHS};
use roughspde_core::solver::{Scheme, SigmaAffine};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub noise: NoiseSection,
    pub grid: GridSection,
    pub kernels: KernelsSection,
    pub solver: SolverSection,
    pub regularity: RegularitySection,
    pub property_p: PropertyPSection,
    pub run: RunSection,
    pub tolerances: Tolerances,
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub hurst: f64,
    /// Admit `0 < H ≤ 1/4`; outputs are stamped as outside the theorem's range.
    pub allow_outside_theorem: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { hurst: 0.3, allow_outside_theorem: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub nx: usize,
    pub horizon: f64,
    pub nt: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { half_width: 8.0, nx: 4096, horizon: 1.0, nt: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelsSection {
    pub kind: KernelKind,
    pub init: InitConfig,
}

impl Default for KernelsSection {
    fn default() -> Self {
        Self { kind: KernelKind::Heat, init: InitConfig::default() }
    }
}

/// Initial position `u0`; the initial velocity is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    Weierstrass { hurst: f64, terms: u32 },
    FrozenFbm { hurst: f64, seed: u64 },
    Bump { center: f64, width: f64, amplitude: f64 },
    Constant { value: f64 },
    Linear { slope: f64 },
    Zero,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Weierstrass { hurst: 0.3, terms: 30 }
    }
}

impl InitConfig {
    pub fn family(&self) -> InitialFamily {
        match *self {
            InitConfig::Weierstrass { hurst, terms } => InitialFamily::Weierstrass { hurst, terms },
            InitConfig::FrozenFbm { hurst, seed } => InitialFamily::FrozenFbm { hurst, seed },
            InitConfig::Bump { center, width, amplitude } => InitialFamily::Bump { center, width, amplitude },
            InitConfig::Constant { value } => InitialFamily::Constant(value),
            InitConfig::Linear { slope } => InitialFamily::Linear { slope },
            InitConfig::Zero => InitialFamily::Zero,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            InitConfig::Weierstrass { hurst, terms } => format!("weierstrass(hurst = {hurst}, terms = {terms})"),
            InitConfig::FrozenFbm { hurst, seed } => format!("frozen_fbm(hurst = {hurst}, seed = {seed})"),
            InitConfig::Bump { center, width, amplitude } => {
                format!("bump(center = {center}, width = {width}, amplitude = {amplitude})")
            }
            InitConfig::Constant { value } => format!("constant({value})"),
            InitConfig::Linear { slope } => format!("linear(slope = {slope})"),
            InitConfig::Zero => "zero".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Mild,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// `σ(u) = a·u + b`.
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub scheme: SchemeName,
    pub n_iters: usize,
    /// Picard contraction is expected when `|a|·√(c_H·g(T))` is below this.
    pub contraction_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { sigma_a: 0.5, sigma_b: 1.0, scheme: SchemeName::Mild, n_iters: 3, contraction_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularitySection {
    pub directions: Vec<Direction>,
    /// Moment orders `p`.
    pub orders: Vec<f64>,
    pub h0: f64,
    /// Explicit lags; dyadic from eight grid steps up to `h0` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space_lags: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_lags: Option<Vec<f64>>,
    /// Half-width of the observation window.
    pub window: f64,
    /// Times before `ramp` are excluded from statistics.
    pub ramp: f64,
    /// Bootstrap resamples for exponent intervals; 0 disables.
    pub bootstrap: usize,
    pub plots: bool,
}

impl Default for RegularitySection {
    fn default() -> Self {
        Self {
            directions: vec![Direction::Space, Direction::Time],
            orders: vec![2.0, 4.0],
            h0: 0.25,
            space_lags: None,
            time_lags: None,
            window: 2.0,
            ramp: 0.125,
            bootstrap: 400,
            plots: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyPSection {
    pub p: f64,
    pub h0: f64,
    pub time_cells: usize,
    pub y_spacing: f64,
    pub far_stride: f64,
    pub far_reach: f64,
    pub candidate_spacing: f64,
}

impl Default for PropertyPSection {
    fn default() -> Self {
        let d = PropertyPConfig::default();
        Self {
            p: d.p,
            h0: d.h0,
            time_cells: d.time_cells,
            y_spacing: d.y_spacing,
            far_stride: d.far_stride,
            far_reach: d.far_reach,
            candidate_spacing: d.candidate_spacing,
        }
    }
}

impl PropertyPSection {
    pub fn core(&self) -> PropertyPConfig {
        PropertyPConfig {
            p: self.p,
            h0: self.h0,
            time_cells: self.time_cells,
            y_spacing: self.y_spacing,
            far_stride: self.far_stride,
            far_reach: self.far_reach,
            candidate_spacing: self.candidate_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub paths: usize,
    pub seed: u64,
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { paths: 2048, seed: 2024, out: "out".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Half-width of the accepted band around each target exponent.
    pub exponent: f64,
    /// Monte Carlo agreement: `|x̂ − x| ≤ stderr_multiple·stderr + rel·|x|`.
    pub stderr_multiple: f64,
    pub gaussian_rel: f64,
    pub covariance_rel: f64,
    /// Relative error of `g(2h)/g(h)` against `2^{2H+1}` (wave).
    pub wave_ratio: f64,
    /// Relative error of the heat energy against its closed form.
    pub heat_closed_form: f64,
    /// Largest relative change of the property-(P) value under refinement.
    pub drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exponent: 0.05,
            stderr_multiple: 3.0,
            gaussian_rel: 0.03,
            covariance_rel: 0.02,
            wave_ratio: 1e-3,
            heat_closed_form: 1e-6,
            drift: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub noise_paths: usize,
    pub gaussian_paths: usize,
    pub picard_paths: usize,
    pub property_p_paths: usize,
    pub energy_hurst: Vec<f64>,
    pub energy_lags: Vec<f64>,
    /// Values of `C·c̄` fed to the constant recursion; values `≥ 1` must be
    /// reported as diverging.
    pub recursion_products: Vec<f64>,
    pub recursion_steps: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            noise_paths: 10_000,
            gaussian_paths: 10_000,
            picard_paths: 256,
            property_p_paths: 64,
            energy_hurst: vec![0.26, 0.3, 0.4],
            energy_lags: vec![0.25, 0.5],
            recursion_products: vec![0.5, 1.0],
            recursion_steps: 40,
        }
    }
}

/// Core objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub ladders: Vec<IncrementLadder>,
    pub scheme: Scheme,
}

fn field<T>(name: &str, r: roughspde_core::error::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::config(name, e))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Read a config file, apply `KEY=VALUE` overrides, and validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn hurst(&self) -> Result<HurstParam> {
        let h = self.noise.hurst;
        field(
            "noise.hurst",
            if self.noise.allow_outside_theorem { HurstParam::with_override(h) } else { HurstParam::new(h) },
        )
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        let g = &self.grid;
        field("grid", SpaceTimeGrid::new(g.half_width, g.nx, g.horizon, g.nt))
    }

    pub fn sigma(&self) -> SigmaAffine {
        SigmaAffine::new(self.solver.sigma_a, self.solver.sigma_b)
    }

    /// Validate every section and build the core objects.
    pub fn resolve(&self) -> Result<Resolved> {
        // TOML integers are signed, so larger seeds could not be written back.
        let mut seeds = vec![("run.seed", self.run.seed)];
        if let InitConfig::FrozenFbm { seed, .. } = self.kernels.init {
            seeds.push(("kernels.init.seed", seed));
        }
        for (name, s) in seeds {
            if s > i64::MAX as u64 {
                return Err(CliError::config(name, format!("seeds must not exceed {}", i64::MAX)));
            }
        }
        let hurst = self.hurst()?;
        let grid = self.grid()?;
        let kind = self.kernels.kind;
        if kind == KernelKind::Wave && grid.dt() > grid.dx() * (1.0 + 1e-12) {
            return Err(CliError::config(
                "grid.nt",
                format!("wave runs need dt <= dx (dt = {}, dx = {})", grid.dt(), grid.dx()),
            ));
        }
        let init = field("kernels.init", make_initial_data(self.kernels.init.family(), &grid))?;
        let s = &self.solver;
        if !(s.sigma_a.is_finite() && s.sigma_b.is_finite()) {
            return Err(CliError::config("solver", "sigma coefficients must be finite"));
        }
        let scheme = match s.scheme {
            SchemeName::Mild => Scheme::MildStep,
            SchemeName::Picard => {
                if s.n_iters == 0 {
                    return Err(CliError::config("solver.n_iters", "Picard runs need at least one iterate"));
                }
                Scheme::Picard(s.n_iters)
            }
        };
        if !(s.contraction_threshold > 0.0) {
            return Err(CliError::config("solver.contraction_threshold", "must be positive"));
        }
        let r = &self.regularity;
        if !(r.ramp >= 0.0 && r.ramp < grid.horizon) {
            return Err(CliError::config("regularity.ramp", format!("must lie in [0, T), got {}", r.ramp)));
        }
        if r.directions.is_empty() {
            return Err(CliError::config("regularity.directions", "at least one direction is required"));
        }
        if r.orders.is_empty() {
            return Err(CliError::config("regularity.orders", "at least one order is required"));
        }
        let experiment = Experiment {
            kernel: KernelSpec::new(kind, hurst.value()),
            hurst,
            sigma: self.sigma(),
            grid,
            init,
            window: r.window,
            ramp: r.ramp,
            seed: self.run.seed,
        };
        field("regularity.window", experiment.observation())?;
        let mut ladders = Vec::new();
        for &d in &r.directions {
            let (name, lags, step) = match d {
                Direction::Space => ("regularity.space_lags", &r.space_lags, grid.dx()),
                Direction::Time => ("regularity.time_lags", &r.time_lags, grid.dt()),
            };
            let ladder = match lags {
                Some(l) => IncrementLadder::new(d, l.clone(), r.orders.clone(), r.h0),
                None => IncrementLadder::dyadic(d, step, r.h0, r.orders.clone()),
            };
            let ladder = field(name, ladder)?;
            field(name, ladder.steps(step))?;
            ladders.push(ladder);
        }
        field("regularity", roughspde_core::regularity::MomentPlan::new(&experiment, ladders.clone()).map(|_| ()))?;
        if self.run.paths < MIN_PATHS {
            return Err(CliError::config("run.paths", format!("at least {MIN_PATHS} paths, got {}", self.run.paths)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.exponent", t.exponent),
            ("tolerances.stderr_multiple", t.stderr_multiple),
            ("tolerances.gaussian_rel", t.gaussian_rel),
            ("tolerances.covariance_rel", t.covariance_rel),
            ("tolerances.wave_ratio", t.wave_ratio),
            ("tolerances.heat_closed_form", t.heat_closed_form),
            ("tolerances.drift", t.drift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::config(name, format!("must be a nonnegative number, got {v}")));
            }
        }
        Ok(Resolved { experiment, ladders, scheme })
    }
}

/// Set `a.b.c = value` in a TOML table. The value is parsed as a TOML literal
/// and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Parse(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Parse(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(key, format!("`{p}` is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
