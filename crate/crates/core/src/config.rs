//! Experiment configuration: TOML sections, dotted overrides and a stable hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boussinesq::Profile;
use crate::composer::EnvelopeOptions;
use crate::dispersion::PhysicalParams;
use crate::error::{Error, Result};
use crate::nonlinearity::TaylorNonlinearity;
use crate::norms::WeightParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    /// Strictly decreasing amplitudes in `(0, 1)`.
    pub eps_list: Vec<f64>,
    /// Horizon constant `T`; runs end at `t = T/ε²`.
    pub horizon: f64,
    pub seed: u64,
    /// Parallel ε jobs; 0 defers to the environment.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: usize,
    /// Slow box, one length per axis; the fast box is this divided by ε.
    pub slow_lengths: Vec<f64>,
    pub slow_points: Vec<usize>,
    /// Fast grid points per carrier wavelength along x (rounded up to a power of two overall).
    pub points_per_wavelength: usize,
    /// Fast grid points on every transverse axis.
    pub transverse_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// Reject nonzero transverse cubic coefficients.
    pub strict: bool,
    pub g30: Vec<f64>,
    #[serde(default)]
    pub g02: Vec<Vec<f64>>,
    #[serde(default)]
    pub g21: Vec<Vec<f64>>,
    #[serde(default)]
    pub g12: Vec<Vec<f64>>,
    #[serde(default)]
    pub g03: Vec<Vec<f64>>,
}

impl NonlinearityConfig {
    pub fn taylor(&self) -> TaylorNonlinearity {
        TaylorNonlinearity {
            g30: self.g30.clone(),
            g02: self.g02.clone(),
            g21: self.g21.clone(),
            g12: self.g12.clone(),
            g03: self.g03.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopesConfig {
    pub phi0: Profile,
    pub phi1: Profile,
    pub psi1: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoussinesqConfig {
    /// `dt = dt_factor / λ_max`.
    pub dt_factor: f64,
    /// Write a checkpoint every this many steps (0 disables).
    #[serde(default)]
    pub checkpoint_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlsConfig {
    pub dtheta: f64,
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposerConfig {
    pub mu_nodes: usize,
    /// Residual time step as a fraction of the carrier period.
    pub time_step_fraction: f64,
    /// Truncation used by `compose` and `fas-residual`.
    pub terms: usize,
    #[serde(default)]
    pub freeze: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub beta: f64,
    pub p: f64,
    pub trials: usize,
    /// Lattice half widths, one run per entry.
    pub half_widths: Vec<usize>,
    pub lattice_dims: usize,
    pub max_power: usize,
    /// Norm bound `M₁` of the random fields in the Lipschitz checks.
    pub m1: f64,
    pub zeta: f64,
    pub taus: Vec<f64>,
    pub transport_trials: usize,
    pub transport_points: Vec<usize>,
    /// Fast-axis box of the transport lattice in units of 2π.
    pub transport_periods: f64,
}

impl NormsConfig {
    pub fn weights(&self) -> WeightParams {
        WeightParams { beta: self.beta, p: self.p }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    /// Geometric samples in `(0, t_end]`; `t = 0` is added.
    pub schedule_points: usize,
    /// First geometric sample as a fraction of `t_end`.
    pub schedule_start: f64,
    /// How many of the latest schedule times feed the residual measurement.
    pub residual_points: usize,
    /// Offsets per carrier period at each residual time; the maximum is kept.
    pub residual_phases: usize,
    /// Evaluate the equation residual at every reduction sample.
    pub record_residual: bool,
    pub order_window: [f64; 2],
    pub residual_window: [f64; 2],
    pub leading_residual_window: [f64; 2],
    pub min_r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    pub grid: GridConfig,
    pub dispersion: DispersionConfig,
    pub nonlinearity: NonlinearityConfig,
    pub envelopes: EnvelopesConfig,
    pub boussinesq_solver: BoussinesqConfig,
    pub nls_solver: NlsConfig,
    pub composer: ComposerConfig,
    pub weighted_norms: NormsConfig,
    pub harness: HarnessConfig,
}

impl Default for Config {
    fn default() -> Self {
        let g = Profile::gaussian(1.0, 4.0);
        Config {
            experiment: Experiment { eps_list: vec![0.25, 0.18, 0.125], horizon: 0.5, seed: 7, workers: 0 },
            grid: GridConfig {
                dims: 2,
                slow_lengths: vec![40.0, 40.0],
                slow_points: vec![64, 32],
                points_per_wavelength: 16,
                transverse_points: 64,
            },
            dispersion: DispersionConfig { nu: 1.0 },
            nonlinearity: NonlinearityConfig {
                strict: true,
                g30: vec![1.0, 0.0],
                g02: vec![],
                g21: vec![],
                g12: vec![],
                g03: vec![],
            },
            envelopes: EnvelopesConfig { phi0: g.clone(), phi1: g.clone(), psi1: g },
            boussinesq_solver: BoussinesqConfig { dt_factor: 0.5, checkpoint_stride: 0 },
            nls_solver: NlsConfig { dtheta: 1e-3, snapshot_stride: 10 },
            composer: ComposerConfig { mu_nodes: 32768, time_step_fraction: 1e-4, terms: 3, freeze: false },
            weighted_norms: NormsConfig {
                beta: 0.5,
                p: 3.0,
                trials: 200,
                half_widths: vec![8, 16],
                lattice_dims: 2,
                max_power: 3,
                m1: 1.0,
                zeta: 1.0,
                taus: vec![1.0, 10.0, 100.0],
                transport_trials: 20,
                transport_points: vec![8192, 8],
                transport_periods: 500.0,
            },
            harness: HarnessConfig {
                schedule_points: 16,
                schedule_start: 0.01,
                residual_points: 4,
                residual_phases: 8,
                record_residual: true,
                order_window: [1.6, 2.4],
                residual_window: [3.5, 4.5],
                leading_residual_window: [1.5, 2.5],
                min_r2: 0.9,
            },
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} must be positive")))
    }
}

fn window(key: &str, w: [f64; 2]) -> Result<()> {
    if w[0].is_finite() && w[1].is_finite() && w[0] <= w[1] {
        Ok(())
    } else {
        Err(Error::config(key, format!("{w:?} is not an interval")))
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
        Self::from_table(value)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_toml_str(&text)
    }

    /// Loads `path` (or the defaults) and applies `key=value` overrides before validation.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::config(p.display().to_string(), format!("cannot read config: {e}")))?;
                text.parse::<toml::Table>().map_err(|e| Error::config(p.display().to_string(), e.to_string()))?
            }
            None => Config::default().to_table()?,
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Config> {
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(error_key(&e.to_string()), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..8].to_string()
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        PhysicalParams::new(self.dispersion.nu, self.nonlinearity.taylor())
    }

    pub fn weights(&self) -> WeightParams {
        self.weighted_norms.weights()
    }

    /// Envelope options whose horizon covers `T` plus one step of margin.
    pub fn envelope_options(&self) -> EnvelopeOptions {
        EnvelopeOptions {
            dtheta: self.nls_solver.dtheta,
            horizon: self.experiment.horizon + self.nls_solver.dtheta,
            snapshot_stride: self.nls_solver.snapshot_stride,
            mu_nodes: self.composer.mu_nodes,
            freeze: self.composer.freeze,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.eps_list.is_empty() {
            return Err(Error::config("experiment.eps_list", "empty"));
        }
        for (i, &eps) in e.eps_list.iter().enumerate() {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::config(format!("experiment.eps_list[{}]", i + 1), format!("{eps} outside (0, 1)")));
            }
        }
        if e.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("experiment.eps_list", "must be strictly decreasing"));
        }
        positive("experiment.horizon", e.horizon)?;

        let g = &self.grid;
        if !(1..=3).contains(&g.dims) {
            return Err(Error::config("grid.dims", format!("{} outside 1..=3", g.dims)));
        }
        if g.slow_lengths.len() != g.dims {
            return Err(Error::config("grid.slow_lengths", format!("needs {} entries", g.dims)));
        }
        if g.slow_points.len() != g.dims {
            return Err(Error::config("grid.slow_points", format!("needs {} entries", g.dims)));
        }
        for (i, &l) in g.slow_lengths.iter().enumerate() {
            positive(&format!("grid.slow_lengths[{}]", i + 1), l)?;
        }
        for (i, &n) in g.slow_points.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::config(format!("grid.slow_points[{}]", i + 1), format!("{n} must be even and at least 4")));
            }
        }
        if g.points_per_wavelength < 4 {
            return Err(Error::config("grid.points_per_wavelength", "at least 4 required"));
        }
        if g.dims > 1 && (g.transverse_points < 4 || g.transverse_points % 2 != 0) {
            return Err(Error::config("grid.transverse_points", "must be even and at least 4"));
        }

        positive("dispersion.nu", self.dispersion.nu)?;
        let nl = self.nonlinearity.taylor();
        if nl.dims() != g.dims {
            return Err(Error::config("nonlinearity.g30", format!("needs {} entries, one per axis", g.dims)));
        }
        let check = if self.nonlinearity.strict { nl.validate() } else { nl.validate_permissive() };
        if let Err(v) = check {
            let first = &v[0];
            return Err(Error::config(format!("nonlinearity.{}", first.coefficient), first.to_string()));
        }
        for (name, p) in [("phi0", &self.envelopes.phi0), ("phi1", &self.envelopes.phi1), ("psi1", &self.envelopes.psi1)] {
            p.validate(&format!("envelopes.{name}"))
                .map_err(|err| Error::config(format!("envelopes.{name}"), err.to_string()))?;
        }

        positive("boussinesq_solver.dt_factor", self.boussinesq_solver.dt_factor)?;
        positive("nls_solver.dtheta", self.nls_solver.dtheta)?;
        if self.nls_solver.snapshot_stride == 0 {
            return Err(Error::config("nls_solver.snapshot_stride", "must be at least 1"));
        }
        if self.composer.mu_nodes < 2 {
            return Err(Error::config("composer.mu_nodes", "at least 2 required"));
        }
        positive("composer.time_step_fraction", self.composer.time_step_fraction)?;
        if !(1..=3).contains(&self.composer.terms) {
            return Err(Error::config("composer.terms", format!("{} outside 1..=3", self.composer.terms)));
        }

        let n = &self.weighted_norms;
        positive("weighted_norms.beta", n.beta)?;
        if !(1..=3).contains(&n.lattice_dims) {
            return Err(Error::config("weighted_norms.lattice_dims", "outside 1..=3"));
        }
        n.weights()
            .validate(n.lattice_dims.max(g.dims))
            .map_err(|err| Error::config("weighted_norms.p", err.to_string()))?;
        if n.trials == 0 || n.transport_trials == 0 {
            return Err(Error::config("weighted_norms.trials", "at least one trial required"));
        }
        if n.half_widths.is_empty() || n.half_widths.contains(&0) {
            return Err(Error::config("weighted_norms.half_widths", "need positive half widths"));
        }
        if !(1..=4).contains(&n.max_power) {
            return Err(Error::config("weighted_norms.max_power", "outside 1..=4"));
        }
        positive("weighted_norms.m1", n.m1)?;
        if n.zeta == 0.0 || !n.zeta.is_finite() {
            return Err(Error::config("weighted_norms.zeta", "must be a nonzero finite speed"));
        }
        if n.taus.is_empty() {
            return Err(Error::config("weighted_norms.taus", "empty"));
        }
        if n.transport_points.is_empty() || n.transport_points.len() > 3 {
            return Err(Error::config("weighted_norms.transport_points", "needs 1 to 3 entries"));
        }
        positive("weighted_norms.transport_periods", n.transport_periods)?;

        let h = &self.harness;
        if h.schedule_points < 2 {
            return Err(Error::config("harness.schedule_points", "at least 2 required"));
        }
        if !(h.schedule_start > 0.0 && h.schedule_start < 1.0) {
            return Err(Error::config("harness.schedule_start", "must lie in (0, 1)"));
        }
        if h.residual_points == 0 || h.residual_points > h.schedule_points {
            return Err(Error::config("harness.residual_points", "must lie in 1..=schedule_points"));
        }
        if h.residual_phases == 0 {
            return Err(Error::config("harness.residual_phases", "must be at least 1"));
        }
        window("harness.order_window", h.order_window)?;
        window("harness.residual_window", h.residual_window)?;
        window("harness.leading_residual_window", h.leading_residual_window)?;
        if !(0.0..=1.0).contains(&h.min_r2) {
            return Err(Error::config("harness.min_r2", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Best-effort key from a toml error message (`unknown field `x``).
fn error_key(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string())
}

/// `section.key=value` with `value` in TOML syntax; bare words are strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(path, "empty key segment"));
    }
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let next = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::config(parts[..=i].join("."), "is not a section"))?;
    }
    unreachable!("split always yields one part")
}
