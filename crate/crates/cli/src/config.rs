//! Experiment configuration: TOML file, command-line overrides, validation.

use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use osgood_core::euler::{InitialVorticity, StabilityParams};
use osgood_core::growth::GrowthFunction;
use osgood_core::interp::MuKind;
use osgood_core::modulus::Modulus;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Subcommand {
    Modulus,
    Acm,
    Flow,
    Interp,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModulusChoice {
    Lipschitz,
    LogLipschitz,
    LogN,
    Power,
    Associated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModulusCheck {
    ClosedForm,
    FixedPoint,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulusConfig {
    pub kind: ModulusChoice,
    /// order for `log_n`
    pub n: u32,
    /// exponent for `power`
    pub alpha: f64,
    /// `Θ = log_m` for `associated`
    pub theta_m: u32,
    pub check: ModulusCheck,
    pub points: usize,
    pub r_min: f64,
    pub js: Vec<f64>,
    pub tol: f64,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        Self {
            kind: ModulusChoice::LogLipschitz,
            n: 2,
            alpha: 0.5,
            theta_m: 1,
            check: ModulusCheck::ClosedForm,
            points: 100,
            r_min: 1e-12,
            js: vec![0.0, 0.5, 1.0, 2.0],
            tol: 1e-6,
        }
    }
}

impl ModulusConfig {
    pub fn modulus(&self) -> osgood_core::Result<Modulus> {
        Ok(match self.kind {
            ModulusChoice::Lipschitz => Modulus::lipschitz(),
            ModulusChoice::LogLipschitz => Modulus::log_lipschitz(),
            ModulusChoice::LogN => Modulus::log_n(self.n)?,
            ModulusChoice::Power => Modulus::power(self.alpha)?,
            ModulusChoice::Associated => Modulus::associated(GrowthFunction::iterated_log(self.theta_m)?),
        })
    }

    fn validate(&self) -> Result<(), String> {
        let m = self.modulus().map_err(|e| e.to_string())?;
        if self.points < 2 {
            return Err("modulus.points must be at least 2".into());
        }
        if !(self.r_min > 0.0 && self.r_min < m.cutoff() / 2.0) {
            return Err(format!("modulus.r_min must lie in (0, m/2) with m = {}", m.cutoff()));
        }
        if !(self.tol > 0.0) {
            return Err("modulus.tol must be positive".into());
        }
        if self.js.iter().any(|j| !(*j >= 0.0) || !j.is_finite()) {
            return Err("modulus.js must be finite and nonnegative".into());
        }
        if self.check == ModulusCheck::ClosedForm && m.closed_form().is_none() {
            return Err(format!("no closed form for modulus kind {}", m.label()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ConditionChoice {
    SumLambda,
    GradLp,
    InitSobolev,
    Blowup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcmConfig {
    /// `log1`, `log2` or `log3`
    pub theta: String,
    #[serde(alias = "N")]
    pub n_cells: usize,
    pub d: usize,
    pub sigma: f64,
    pub condition: ConditionChoice,
    pub p: f64,
    pub constant: f64,
    pub s: f64,
    pub t: f64,
    pub c: f64,
}

impl Default for AcmConfig {
    fn default() -> Self {
        Self {
            theta: "log1".into(),
            n_cells: 8,
            d: 2,
            sigma: 0.5,
            condition: ConditionChoice::Blowup,
            p: 2.0,
            constant: 1.0,
            s: 0.5,
            t: 0.1,
            c: 1.0,
        }
    }
}

impl AcmConfig {
    pub fn growth(&self) -> Result<GrowthFunction, String> {
        let m = match self.theta.as_str() {
            "log1" => 1,
            "log2" => 2,
            "log3" => 3,
            other => return Err(format!("acm.theta must be log1, log2 or log3, got {other:?}")),
        };
        GrowthFunction::iterated_log(m).map_err(|e| e.to_string())
    }

    fn validate(&self) -> Result<(), String> {
        let theta = self.growth()?;
        osgood_core::acm::make_cells(&theta, self.n_cells.max(1), self.d, self.sigma).map_err(|e| e.to_string())?;
        if self.n_cells == 0 || self.n_cells > 50 {
            return Err(format!("acm.N must lie in 1..=50, got {}", self.n_cells));
        }
        if !(self.p >= 1.0) || !(self.constant > 0.0) {
            return Err("acm.p must be ≥ 1 and acm.constant positive".into());
        }
        if !(self.s > 0.0 && 2.0 * self.s < self.d as f64) || !(self.t >= 0.0) || !(self.c > 0.0) {
            return Err("acm needs 0 < s < d/2, t ≥ 0, c > 0".into());
        }
        if self.condition == ConditionChoice::Blowup && !(self.s < 1.0 && self.t > 0.0) {
            return Err("acm blowup needs s < 1 and t > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum FieldChoice {
    Shear,
    Rotation,
    Osgood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub field: FieldChoice,
    pub amplitude: f64,
    /// modulus of the 1D `osgood` field `u = a φ(x)`
    pub modulus: ModulusConfig,
    /// starting points; empty selects defaults for the field
    pub x0: Vec<Vec<f64>>,
    #[serde(alias = "t")]
    pub t_final: f64,
    pub tol: f64,
    pub pairs: usize,
    /// transported-field grid for 2D fields; 0 skips transport
    pub transport_n: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            field: FieldChoice::Osgood,
            amplitude: 1.0,
            modulus: ModulusConfig::default(),
            x0: Vec::new(),
            t_final: 1.0,
            tol: 1e-10,
            pairs: 1000,
            transport_n: 32,
        }
    }
}

impl FlowConfig {
    pub fn dim(&self) -> usize {
        match self.field {
            FieldChoice::Osgood => 1,
            _ => 2,
        }
    }

    pub fn starting_points(&self) -> Vec<Vec<f64>> {
        if !self.x0.is_empty() {
            return self.x0.clone();
        }
        match self.field {
            FieldChoice::Osgood => [1e-12, 1e-8, 1e-4, 1e-2, 0.05].iter().map(|x| vec![*x]).collect(),
            _ => vec![vec![0.25, 0.5], vec![0.5, 0.25], vec![0.7, 0.6]],
        }
    }

    fn validate(&self) -> Result<(), String> {
        self.modulus.modulus().map_err(|e| e.to_string())?;
        if !(self.t_final > 0.0) || !self.t_final.is_finite() || !(self.tol > 0.0 && self.tol < 1e-2) {
            return Err("flow needs t > 0 and 0 < tol < 1e-2".into());
        }
        if !self.amplitude.is_finite() {
            return Err("flow.amplitude must be finite".into());
        }
        if self.pairs == 0 {
            return Err("flow.pairs must be positive".into());
        }
        if self.x0.iter().any(|x| x.len() != self.dim() || x.iter().any(|v| !v.is_finite())) {
            return Err(format!("flow.x0 entries must be finite points of dimension {}", self.dim()));
        }
        if self.transport_n != 0 && (self.transport_n < 4 || !self.transport_n.is_power_of_two()) {
            return Err("flow.transport_n must be 0 or a power of two ≥ 4".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpConfig {
    pub fields: usize,
    pub n_grid: usize,
    pub kmax: usize,
    pub mus: Vec<MuKind>,
    pub epsilons: Vec<f64>,
    pub max_ratio: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            fields: 50,
            n_grid: 32,
            kmax: 10,
            mus: MuKind::ALL.to_vec(),
            epsilons: vec![0.5, 0.1, 0.01],
            max_ratio: 1e3,
        }
    }
}

impl InterpConfig {
    fn validate(&self) -> Result<(), String> {
        if self.fields == 0 || self.mus.is_empty() || self.epsilons.is_empty() {
            return Err("interp needs at least one field, weight and ε".into());
        }
        if self.n_grid < 4 || !self.n_grid.is_power_of_two() || self.kmax == 0 || 2 * self.kmax >= self.n_grid {
            return Err("interp needs a power-of-two grid ≥ 4 and 0 < kmax < n_grid/2".into());
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err("interp.epsilons must lie in (0, 1)".into());
        }
        if !(self.max_ratio >= 1.0) {
            return Err("interp.max_ratio must be ≥ 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EulerMode {
    Stability,
    Conservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerConfig {
    pub mode: EulerMode,
    pub n_grid: usize,
    pub t_end: f64,
    pub dt: f64,
    pub initial: InitialVorticity,
    /// shifts of the initial profile along x for the second run
    pub deltas: Vec<f64>,
    pub params: StabilityParams,
    pub drift_tol: f64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self {
            mode: EulerMode::Stability,
            n_grid: 64,
            t_end: 0.5,
            dt: 0.005,
            initial: InitialVorticity::SmoothBlob { center: [0.5, 0.5], amplitude: 2.0, width: 0.04 },
            deltas: vec![1e-1, 1e-2, 1e-3],
            params: StabilityParams::default(),
            drift_tol: 1e-6,
        }
    }
}

impl EulerConfig {
    fn validate(&self) -> Result<(), String> {
        osgood_core::euler::make_initial_vorticity(&self.initial, self.n_grid, 1.0).map_err(|e| e.to_string())?;
        if !(self.t_end > 0.0) || !self.t_end.is_finite() || !(self.dt > 0.0) || self.dt > self.t_end {
            return Err("euler needs t_end > 0 and 0 < dt ≤ t_end".into());
        }
        self.params.validate().map_err(|e| e.to_string())?;
        if self.mode == EulerMode::Stability && (self.deltas.is_empty() || self.deltas.iter().any(|d| !d.is_finite())) {
            return Err("euler.deltas must be a nonempty list of finite shifts".into());
        }
        if !(self.drift_tol > 0.0) {
            return Err("euler.drift_tol must be positive".into());
        }
        Ok(())
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Option<Subcommand>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub modulus: ModulusConfig,
    #[serde(default)]
    pub acm: AcmConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub interp: InterpConfig,
    #[serde(default)]
    pub euler: EulerConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("osgood-out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            subcommand: None,
            seed: 0,
            threads: None,
            out: default_out(),
            modulus: ModulusConfig::default(),
            acm: AcmConfig::default(),
            flow: FlowConfig::default(),
            interp: InterpConfig::default(),
            euler: EulerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        if text.trim().is_empty() {
            return Err(Failure::Parse("configuration file is empty".into()));
        }
        toml::from_str(text).map_err(|e| Failure::Parse(format!("configuration: {e}")))
    }

    pub fn validate(&self) -> Result<Subcommand, Failure> {
        let sub = self.subcommand.ok_or_else(|| Failure::Parse("no subcommand given on the command line or in the configuration".into()))?;
        if self.threads == Some(0) {
            return Err(Failure::Validation("threads must be positive".into()));
        }
        let checked = match sub {
            Subcommand::Modulus => self.modulus.validate(),
            Subcommand::Acm => self.acm.validate(),
            Subcommand::Flow => self.flow.validate(),
            Subcommand::Interp => self.interp.validate(),
            Subcommand::Euler => self.euler.validate(),
        };
        checked.map_err(Failure::Validation)?;
        Ok(sub)
    }
}
