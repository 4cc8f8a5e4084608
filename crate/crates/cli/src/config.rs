//! TOML run configuration.
//!
//! ```toml
//! name = "vdp"                 # file-name prefix, default: model kind
//! nf = 16                      # harmonic truncation, >= 16
//! noise_nodes = ["v1"]         # default: the model's observation nodes
//! nu = [1]                     # carrier harmonics
//! output_dir = "out"
//!
//! [model]
//! kind = "vdp"                 # vdp | tank | rf900 | ilo2 | ring3
//! eps = 0.5
//! noise = 0.08
//!
//! [sweep]
//! start = 1e-5
//! stop = 1e-1
//! kind = "log"                 # lin | log
//! points = 10                  # total (lin) or per decade (log)
//!
//! [pss]                        # optional
//! period_guess = 6.3
//! x0 = [2.0, 0.0]
//! grid = 1024
//! tol = 1e-9
//!
//! [mc]                         # optional, runs the Monte-Carlo reference
//! paths = 16
//! ```

use std::path::{Path, PathBuf};

use floqnoise::model::{
    builtin_coupled_ensemble, builtin_ilo2, builtin_ring3, builtin_vdp, CircuitModel, Coupling, TankEnsemble,
    VdpParams, ILO_TRANSCONDUCTANCE,
};
use floqnoise::oracle::{McConfig, DEFAULT_SEED};
use floqnoise::pss::{PssGuess, PssOptions};
use floqnoise::spectra::{SweepKind, SweepSpec};
use serde::Deserialize;

use crate::error::{CliError, Stage};

/// Smallest admissible harmonic truncation.
pub const MIN_NF: usize = 16;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// Normalized van der Pol tank (`L = C = 1`).
    Vdp {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    /// Tank oscillator with explicit element values.
    Tank {
        inductance: f64,
        capacitance: f64,
        #[serde(default)]
        loss: f64,
        g1: f64,
        g3: f64,
        noise: f64,
    },
    /// RF tank near 898 MHz with thermal-like noise.
    Rf900,
    /// Injection-locked pair of normalized units.
    Ilo2 {
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_gm")]
        transconductance: f64,
        /// Noise multiple of the secondary unit.
        #[serde(default = "default_ratio")]
        ratio: f64,
    },
    /// Three detuned units on a resistive ring.
    Ring3 {
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

fn default_eps() -> f64 {
    0.5
}
fn default_noise() -> f64 {
    0.08
}
fn default_gm() -> f64 {
    ILO_TRANSCONDUCTANCE
}
fn default_ratio() -> f64 {
    100.0
}

/// A built model with its unit count and default shooting guess.
pub struct BuiltModel {
    pub model: TankEnsemble,
    pub k: usize,
    pub observation_nodes: Vec<String>,
    pub guess: PssGuess,
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Vdp { .. } => "vdp",
            ModelSpec::Tank { .. } => "tank",
            ModelSpec::Rf900 => "rf900",
            ModelSpec::Ilo2 { .. } => "ilo2",
            ModelSpec::Ring3 { .. } => "ring3",
        }
    }

    pub fn build(&self) -> floqnoise::Result<BuiltModel> {
        let (model, k) = match *self {
            ModelSpec::Vdp { eps, noise } => (builtin_vdp(VdpParams::normalized(eps, noise))?, 1),
            ModelSpec::Tank {
                inductance,
                capacitance,
                loss,
                g1,
                g3,
                noise,
            } => (
                builtin_vdp(VdpParams {
                    inductance,
                    capacitance,
                    loss,
                    g1,
                    g3,
                    noise,
                })?,
                1,
            ),
            ModelSpec::Rf900 => (builtin_vdp(VdpParams::rf900())?, 1),
            ModelSpec::Ilo2 {
                noise,
                transconductance,
                ratio,
            } => {
                let (m, meta) = if transconductance == ILO_TRANSCONDUCTANCE && ratio == 100.0 {
                    builtin_ilo2(noise)?
                } else {
                    builtin_coupled_ensemble(
                        vec![
                            VdpParams::normalized(0.5, noise),
                            VdpParams::normalized(0.5, ratio * noise),
                        ],
                        Coupling::Unilateral { transconductance },
                    )?
                };
                (m, meta.k)
            }
            ModelSpec::Ring3 { noise } => {
                let (m, meta) = builtin_ring3(noise)?;
                (m, meta.k)
            }
        };
        let units = model.units();
        let period = 2.0 * std::f64::consts::PI / units[0].tank_omega();
        let x0 = units
            .iter()
            .flat_map(|u| {
                let a = u.amplitude_estimate();
                [if a > 0.0 { a } else { 1.0 }, 0.0]
            })
            .collect();
        let observation_nodes = (1..=k).map(|u| format!("v{u}")).collect();
        Ok(BuiltModel {
            model,
            k,
            observation_nodes,
            guess: PssGuess { x0, period },
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    start: f64,
    stop: f64,
    #[serde(default = "default_sweep_kind")]
    kind: String,
    points: usize,
}

fn default_sweep_kind() -> String {
    "log".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPss {
    period_guess: Option<f64>,
    x0: Option<Vec<f64>>,
    grid: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    settle_periods: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    paths: Option<usize>,
    steps_per_period: Option<f64>,
    periods: Option<f64>,
    window_periods: Option<f64>,
    seed: Option<u64>,
    stride: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    nf: Option<usize>,
    noise_nodes: Option<Vec<String>>,
    k: Option<usize>,
    nu: Option<Vec<usize>>,
    output_dir: Option<PathBuf>,
    model: ModelSpec,
    sweep: RawSweep,
    #[serde(default)]
    pss: RawPss,
    mc: Option<RawMc>,
}

/// Shooting settings; unset guesses fall back to the model's estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PssSettings {
    pub period_guess: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub settle_periods: usize,
}

impl PssSettings {
    pub fn options(&self) -> PssOptions {
        PssOptions {
            grid_size: self.grid,
            tol: self.tol,
            max_iter: self.max_iter,
            settle_periods: self.settle_periods,
        }
    }

    pub fn guess(&self, fallback: &PssGuess) -> PssGuess {
        PssGuess {
            x0: self.x0.clone().unwrap_or_else(|| fallback.x0.clone()),
            period: self.period_guess.unwrap_or(fallback.period),
        }
    }
}

/// Monte-Carlo settings in units of the limit-cycle period.
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub paths: usize,
    pub steps_per_period: f64,
    pub periods: f64,
    pub window_periods: f64,
    pub seed: u64,
    pub stride: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            paths: 16,
            steps_per_period: 200.0,
            periods: 2048.0,
            window_periods: 512.0,
            seed: DEFAULT_SEED,
            stride: 8,
        }
    }
}

impl McSettings {
    pub fn config(&self, t0: f64) -> McConfig {
        McConfig {
            n_paths: self.paths,
            dt: t0 / self.steps_per_period,
            duration: self.periods * t0,
            seed: self.seed,
            window: self.window_periods * t0,
            stride: self.stride,
        }
    }

    fn validate(&self) -> Result<(), String> {
        // the same invariants McConfig checks, phrased in periods
        if !(self.steps_per_period >= 200.0) {
            return Err(format!("mc.steps_per_period = {} must be at least 200", self.steps_per_period));
        }
        if !(self.periods >= 50.0) {
            return Err(format!("mc.periods = {} must be at least 50", self.periods));
        }
        if self.paths < 8 {
            return Err(format!("mc.paths = {} must be at least 8", self.paths));
        }
        if self.stride == 0 {
            return Err("mc.stride must be at least 1".into());
        }
        if !(self.window_periods > 0.0 && 4.0 * self.window_periods <= self.periods) {
            return Err(format!(
                "mc.window_periods = {} must be positive and fit 4 times into mc.periods = {}",
                self.window_periods, self.periods
            ));
        }
        Ok(())
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub name: String,
    pub model: ModelSpec,
    pub sweep: SweepSpec,
    pub nf: usize,
    pub noise_nodes: Vec<String>,
    pub k: usize,
    pub nu_list: Vec<usize>,
    pub pss: PssSettings,
    pub mc: Option<McSettings>,
    pub output_dir: PathBuf,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::config(msg)
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<SimulationConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}

/// Validate configuration text.
pub fn parse_str(text: &str) -> Result<SimulationConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;

    let nf = raw.nf.unwrap_or(MIN_NF);
    if nf < MIN_NF {
        return Err(config_error(format!(
            "nf = {nf} is below the required minimum Nf >= {MIN_NF}"
        )));
    }

    let kind = match raw.sweep.kind.as_str() {
        "lin" => SweepKind::Lin,
        "log" => SweepKind::Log,
        other => return Err(config_error(format!("sweep.kind must be `lin` or `log`, got `{other}`"))),
    };
    let sweep = SweepSpec {
        start: raw.sweep.start,
        stop: raw.sweep.stop,
        kind,
        points: raw.sweep.points,
    };
    sweep.validate().map_err(|e| config_error(e.to_string()))?;

    let built = raw
        .model
        .build()
        .map_err(|e| CliError::new(Stage::Model, e))?;
    if let Some(k) = raw.k {
        if k != built.k {
            return Err(config_error(format!(
                "k = {k} does not match the {} model, which has {} oscillator units",
                raw.model.kind(),
                built.k
            )));
        }
    }

    let noise_nodes = raw.noise_nodes.unwrap_or_else(|| built.observation_nodes.clone());
    check_nodes(&built.model, &noise_nodes)?;

    let nu_list = raw.nu.unwrap_or_else(|| vec![1]);
    if nu_list.is_empty() || nu_list.contains(&0) {
        return Err(config_error("nu must be a nonempty list of harmonics >= 1"));
    }
    if let Some(&nu) = nu_list.iter().find(|&&nu| nu > nf) {
        return Err(config_error(format!("harmonic nu = {nu} exceeds the truncation nf = {nf}")));
    }

    let grid = raw.pss.grid.unwrap_or(1024);
    if !grid.is_power_of_two() || grid < 4 * nf {
        return Err(config_error(format!(
            "pss.grid = {grid} must be a power of two and at least 4 * nf = {}",
            4 * nf
        )));
    }
    let tol = raw.pss.tol.unwrap_or(1e-9);
    if !(tol > 0.0 && tol < 1e-3) {
        return Err(config_error(format!("pss.tol = {tol} must lie in (0, 1e-3)")));
    }
    if let Some(x0) = &raw.pss.x0 {
        if x0.len() != built.model.dim() {
            return Err(config_error(format!(
                "pss.x0 has {} entries but the model has {} states ({})",
                x0.len(),
                built.model.dim(),
                built.model.node_names().join(", ")
            )));
        }
    }
    if let Some(t) = raw.pss.period_guess {
        if !(t > 0.0 && t.is_finite()) {
            return Err(config_error(format!("pss.period_guess = {t} must be positive")));
        }
    }
    let pss = PssSettings {
        period_guess: raw.pss.period_guess,
        x0: raw.pss.x0,
        grid,
        tol,
        max_iter: raw.pss.max_iter.unwrap_or(50),
        settle_periods: raw.pss.settle_periods.unwrap_or(0),
    };

    let mc = raw.mc.map(|m| {
        let d = McSettings::default();
        McSettings {
            paths: m.paths.unwrap_or(d.paths),
            steps_per_period: m.steps_per_period.unwrap_or(d.steps_per_period),
            periods: m.periods.unwrap_or(d.periods),
            window_periods: m.window_periods.unwrap_or(d.window_periods),
            seed: m.seed.unwrap_or(d.seed),
            stride: m.stride.unwrap_or(d.stride),
        }
    });
    if let Some(m) = &mc {
        m.validate().map_err(config_error)?;
    }

    Ok(SimulationConfig {
        name: raw.name.unwrap_or_else(|| raw.model.kind().to_string()),
        model: raw.model,
        sweep,
        nf,
        noise_nodes,
        k: built.k,
        nu_list,
        pss,
        mc,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(".")),
    })
}

fn check_nodes(model: &dyn CircuitModel, nodes: &[String]) -> Result<(), CliError> {
    if nodes.is_empty() {
        return Err(config_error("noise_nodes must name at least one node"));
    }
    for node in nodes {
        if model.node_index(node).is_none() {
            return Err(config_error(format!(
                "unknown noise node `{node}`; available nodes: {}",
                model.node_names().join(", ")
            )));
        }
    }
    Ok(())
}

impl SimulationConfig {
    /// Replace the observation nodes, re-checking that they exist.
    pub fn set_nodes(&mut self, nodes: Vec<String>) -> Result<(), CliError> {
        let built = self.model.build().map_err(|e| CliError::new(Stage::Model, e))?;
        check_nodes(&built.model, &nodes)?;
        self.noise_nodes = nodes;
        Ok(())
    }

    /// Turn the Monte-Carlo reference on, keeping configured settings.
    pub fn enable_mc(&mut self) {
        if self.mc.is_none() {
            self.mc = Some(McSettings::default());
        }
    }
}
