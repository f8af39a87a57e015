//! Run configuration, read from TOML.
//!
//! ```toml
//! [system]
//! omega0 = 1.0
//! tunneling = 0.0
//!
//! [[bath]]
//! family = "ohmic"          # ohmic | drude | discrete
//! lambda = 0.1
//! omega_c = 3.0
//! temperature = 10.0
//! counted = true
//! scheme = "two_point"      # two_point | single
//!
//! [[bath]]
//! family = "discrete"
//! modes = [[1.3, 0.12], [1.9, 0.1]]
//! temperature = 2.0
//!
//! [numerics]
//! n_max = 4
//! t_end = 10.0
//!
//! [mode]
//! kind = "transient"        # transient | conductance_scan | chi_scan | oracle_compare
//!
//! [output]
//! dir = "out"
//! ```

use std::path::PathBuf;

use fcs_heom_core::model::{build_two_level_model, BathModel, Mode, Scheme, SystemModel};
use fcs_heom_core::propagator::SideBasis;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(rename = "bath")]
    pub baths: Vec<BathSection>,
    #[serde(default)]
    pub numerics: Numerics,
    pub mode: ModeSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub omega0: f64,
    #[serde(default)]
    pub tunneling: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ohmic,
    Drude,
    Discrete,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    TwoPoint,
    Single,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Scheme {
        match s {
            SchemeName::TwoPoint => Scheme::TwoPoint,
            SchemeName::Single => Scheme::Single,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub family: Family,
    pub temperature: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub omega_c: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// `[frequency, coupling]` pairs for discrete baths.
    #[serde(default)]
    pub modes: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub counted: bool,
    #[serde(default)]
    pub scheme: SchemeName,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SideBasisName {
    #[default]
    Reduced,
    Paper,
}

impl From<SideBasisName> for SideBasis {
    fn from(s: SideBasisName) -> SideBasis {
        match s {
            SideBasisName::Reduced => SideBasis::Reduced,
            SideBasisName::Paper => SideBasis::Paper,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_max: usize,
    pub n_max_step: usize,
    pub n_max_cap: usize,
    /// Largest relative change between successive depths accepted as converged.
    pub convergence_tol: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Extend `t_end` by doubling up to this time until a steady state shows.
    pub t_end_cap: f64,
    /// Highest moment order propagated.
    pub m_max: usize,
    pub q_max: usize,
    pub terms: usize,
    pub n_matsubara: usize,
    pub fit_tolerance: f64,
    pub fit_window: f64,
    pub fit_samples: usize,
    /// Inverse-temperature step relative to `beta` for temperature derivatives.
    pub beta_step: f64,
    pub steady_window: f64,
    pub steady_tol: f64,
    pub step_halving: Option<f64>,
    pub side_basis: SideBasisName,
    pub field_cap: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            n_max: 4,
            n_max_step: 2,
            n_max_cap: 16,
            convergence_tol: 1e-3,
            dt: 0.002,
            t_end: 10.0,
            t_end_cap: 10.0,
            m_max: 2,
            q_max: 5,
            terms: 7,
            n_matsubara: 4,
            fit_tolerance: 1e-4,
            fit_window: 10.0,
            fit_samples: 400,
            beta_step: 1e-2,
            steady_window: 2.0,
            steady_tol: 1e-4,
            step_halving: None,
            side_basis: SideBasisName::Reduced,
            field_cap: 4_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    Lambda,
    OmegaC,
    Temperature,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    #[default]
    Both,
    TwoPoint,
    Single,
}

impl SchemeChoice {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeChoice::Both => vec![Scheme::TwoPoint, Scheme::Single],
            SchemeChoice::TwoPoint => vec![Scheme::TwoPoint],
            SchemeChoice::Single => vec![Scheme::Single],
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModeKind {
    Transient,
    ConductanceScan,
    ChiScan,
    OracleCompare,
}

impl ModeKind {
    pub fn name(self) -> &'static str {
        match self {
            ModeKind::Transient => "transient",
            ModeKind::ConductanceScan => "conductance_scan",
            ModeKind::ChiScan => "chi_scan",
            ModeKind::OracleCompare => "oracle_compare",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub kind: ModeKind,
    #[serde(default)]
    pub scheme: SchemeChoice,
    /// Transient: evaluate the transient relations up to this cumulant order
    /// (`0` skips the temperature stencils).
    #[serde(default = "default_relation_order")]
    pub relation_order: usize,
    /// Transient: highest temperature-derivative order in the relations.
    #[serde(default = "default_relation_m")]
    pub relation_m: usize,
    #[serde(default)]
    pub parameter: Option<ScanParameter>,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub chi: Vec<f64>,
    #[serde(default = "default_fock")]
    pub fock_cutoff: usize,
    #[serde(default = "default_n_times")]
    pub n_times: usize,
    /// Oracle comparison: randomized identity draws, seeded by `--seed`.
    #[serde(default)]
    pub draws: usize,
}

fn default_relation_order() -> usize {
    3
}
fn default_relation_m() -> usize {
    1
}
fn default_fock() -> usize {
    5
}
fn default_n_times() -> usize {
    50
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Integration steps between output samples.
    pub stride: usize,
    /// Write a checkpoint of the final hierarchy state.
    pub checkpoint: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), stride: 5, checkpoint: false }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::Parse(e.to_string()))
    }

    /// Output spacing in time units.
    pub fn spacing(&self) -> f64 {
        self.numerics.dt * self.output.stride as f64
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let n = &self.numerics;
        let bad = |what: &str| Err(AppError::Validation(what.to_string()));
        for (name, v) in [
            ("convergence_tol", n.convergence_tol),
            ("dt", n.dt),
            ("t_end", n.t_end),
            ("fit_tolerance", n.fit_tolerance),
            ("fit_window", n.fit_window),
            ("beta_step", n.beta_step),
            ("steady_window", n.steady_window),
            ("steady_tol", n.steady_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("numerics.{name} must be positive, got {v}"));
            }
        }
        if let Some(tol) = n.step_halving {
            if !(tol > 0.0) {
                return bad("numerics.step_halving must be positive");
            }
        }
        if n.n_max_cap < n.n_max {
            return bad("numerics.n_max_cap is below numerics.n_max");
        }
        if n.n_max_step == 0 && n.n_max_cap > n.n_max {
            return bad("numerics.n_max_step must be positive when escalation is enabled");
        }
        if self.output.stride == 0 {
            return bad("output.stride must be positive");
        }
        if n.terms == 0 || n.fit_samples < 2 * n.terms {
            return bad("numerics.fit_samples must be at least twice numerics.terms");
        }
        if self.baths.iter().filter(|b| b.counted).count() != 1 {
            return bad("exactly one bath must be counted");
        }
        let m = &self.mode;
        match m.kind {
            ModeKind::ConductanceScan => {
                if m.parameter.is_none() {
                    return bad("mode.parameter is required for conductance_scan");
                }
                if m.values.is_empty() {
                    return bad("mode.values must be non-empty for conductance_scan");
                }
                if m.values.iter().any(|v| !(*v > 0.0)) {
                    return bad("mode.values must be positive");
                }
            }
            ModeKind::ChiScan | ModeKind::OracleCompare => {
                if m.chi.is_empty() {
                    return bad("mode.chi must be non-empty");
                }
                if m.kind == ModeKind::OracleCompare && m.n_times < 2 {
                    return bad("mode.n_times must be at least 2");
                }
            }
            ModeKind::Transient => {}
        }
        self.build_model().map(|_| ())
    }

    /// The physical model with the counted bath at its configured scheme.
    pub fn build_model(&self) -> Result<(SystemModel, Vec<BathModel>), AppError> {
        let mut baths = Vec::new();
        for (i, b) in self.baths.iter().enumerate() {
            if !(b.temperature > 0.0) {
                return Err(AppError::Validation(format!("bath {i}: temperature must be positive")));
            }
            let need = |v: Option<f64>, key: &str| {
                v.filter(|x| *x > 0.0)
                    .ok_or_else(|| AppError::Validation(format!("bath {i}: {key} must be given and positive")))
            };
            let mut bath = match b.family {
                Family::Ohmic => BathModel::ohmic(need(b.lambda, "lambda")?, need(b.omega_c, "omega_c")?, b.temperature),
                Family::Drude => BathModel::drude(need(b.lambda, "lambda")?, need(b.gamma, "gamma")?, b.temperature),
                Family::Discrete => {
                    let modes = b
                        .modes
                        .as_ref()
                        .filter(|m| !m.is_empty())
                        .ok_or_else(|| AppError::Validation(format!("bath {i}: discrete bath needs modes")))?;
                    let modes = modes.iter().map(|&[frequency, coupling]| Mode { frequency, coupling }).collect();
                    BathModel::discrete(modes, 1.0 / b.temperature)
                }
            };
            if b.counted {
                bath = bath.counted(b.scheme.into());
            }
            baths.push(bath);
        }
        build_two_level_model(self.system.omega0, self.system.tunneling, baths).map_err(AppError::from_core)
    }

    /// Index of the counted bath.
    pub fn counted(&self) -> usize {
        self.baths.iter().position(|b| b.counted).unwrap_or(0)
    }
}
