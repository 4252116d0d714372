//! Run configuration: one JSON file drives every subcommand.
//!
//! Unknown keys are rejected. Every run echoes the fully resolved
//! configuration (all defaults materialized) next to its outputs, and that
//! echo is itself a valid configuration reproducing the run bit for bit.

use serde::{Deserialize, Serialize};

use heavytail_core::model::{CoupleLaw, ScalarLaw};
use heavytail_core::pathspace::EventSet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: CoupleLaw,
    #[serde(default)]
    pub minorization: Option<MinorizationConfig>,
    /// `"auto"` calibrates the index from the model; a number pins it.
    #[serde(default)]
    pub alpha: AlphaChoice,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// `0` lets the scheduler pick; any value yields identical numbers.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
    pub experiment: Experiment,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum AlphaChoice {
    Auto(String),
    Fixed(f64),
}

impl Default for AlphaChoice {
    fn default() -> Self {
        AlphaChoice::Auto("auto".to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MinorizationConfig {
    AtomAtZero,
    DensityGrid { d: f64, e0: (f64, f64), grid: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Simulate(SimulateConfig),
    CalibrateAlpha(CalibrateConfig),
    Diagnose(DiagnoseConfig),
    EstimateConstants(ConstantsBlock),
    TailCurve(TailCurveConfig),
    RareEvent(RareEventBlock),
    Barrier(BarrierBlock),
    LimitMeasure(LimitMeasureBlock),
    M1Distance(M1DistanceConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::CalibrateAlpha(_) => "calibrate-alpha",
            Experiment::Diagnose(_) => "diagnose",
            Experiment::EstimateConstants(_) => "estimate-constants",
            Experiment::TailCurve(_) => "tail-curve",
            Experiment::RareEvent(_) => "rare-event",
            Experiment::Barrier(_) => "barrier",
            Experiment::LimitMeasure(_) => "limit-measure",
            Experiment::M1Distance(_) => "m1-distance",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    #[serde(default)]
    pub x0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "default_alpha_tol")]
    pub tol: f64,
}

fn default_alpha_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "default_mc_budget")]
    pub mc_budget: usize,
}

fn default_mc_budget() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantsBlock {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_escape_scale")]
    pub escape_scale: f64,
    #[serde(default = "default_z_tol")]
    pub z_tol: f64,
    #[serde(default = "default_z_tol")]
    pub trunc_tol: f64,
}

impl Default for ConstantsBlock {
    fn default() -> Self {
        ConstantsBlock {
            budget: default_budget(),
            escape_scale: default_escape_scale(),
            z_tol: default_z_tol(),
            trunc_tol: default_z_tol(),
        }
    }
}

fn default_budget() -> usize {
    100_000
}
fn default_escape_scale() -> f64 {
    1e4
}
fn default_z_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CycleKindConfig {
    Regeneration,
    FirstReturn { d: f64, x0: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TailCurveConfig {
    pub u_min: f64,
    pub u_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Dual-measure switch exponents; one curve per value.
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_cycle_kind")]
    pub cycle: CycleKindConfig,
}

fn default_points() -> usize {
    9
}
fn default_betas() -> Vec<f64> {
    vec![0.7]
}
fn default_cycle_kind() -> CycleKindConfig {
    CycleKindConfig::Regeneration
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RareEventBlock {
    pub event: EventSet,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Restrict the jump analysis to nondecreasing paths.
    #[serde(default)]
    pub one_sided: bool,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub constants: ConstantsBlock,
    #[serde(default = "default_q0")]
    pub defensive_q0: f64,
    #[serde(default = "default_plant_beta")]
    pub plant_beta: f64,
    #[serde(default)]
    pub plant_scale: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_limit_budget")]
    pub limit_measure_budget: usize,
    /// Start value; omitted = draw from the regeneration law.
    #[serde(default)]
    pub x0: Option<f64>,
}

fn default_methods() -> Vec<String> {
    vec!["direct-mc".into(), "cycle-is".into(), "asymptotic".into()]
}
fn default_q0() -> f64 {
    0.25
}
fn default_plant_beta() -> f64 {
    1.0
}
fn default_limit_budget() -> usize {
    200_000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BarrierBlock {
    pub a_minus: f64,
    pub a_plus: f64,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub constants: ConstantsBlock,
    #[serde(default = "default_q0")]
    pub defensive_q0: f64,
    #[serde(default = "default_plant_beta")]
    pub plant_beta: f64,
    #[serde(default)]
    pub plant_scale: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_limit_budget")]
    pub limit_measure_budget: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LimitMeasureBlock {
    pub event: EventSet,
    #[serde(default)]
    pub z: f64,
    pub j: usize,
    pub k: usize,
    pub gamma: f64,
    #[serde(default = "default_limit_budget")]
    pub budget: usize,
    #[serde(default = "default_lm_mode")]
    pub mode: String,
}

fn default_lm_mode() -> String {
    "auto".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct M1DistanceConfig {
    pub path_a: String,
    pub path_b: String,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Also report the J1 distance of the pair.
    #[serde(default)]
    pub with_j1: bool,
}

fn default_eps() -> f64 {
    1e-3
}

/// A `ScalarLaw` is part of the public config surface through
/// `CoupleLaw::AtomPlusDensity`; re-export so config authors find it here.
pub type PhiLaw = ScalarLaw;

pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    serde_json::from_str::<RunConfig>(text).map_err(|e| format!("config error: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_simulate_config_parses() {
        let text = r#"{
            "model": {"family": "discrete_joint", "atoms": [[2.0, 1.0, 0.3], [0.5, 1.0, 0.7]]},
            "experiment": {"kind": "simulate", "n": 100}
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.experiment.kind(), "simulate");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{
            "model": {"family": "discrete_joint", "atoms": [[2.0, 1.0, 1.0]]},
            "experiment": {"kind": "simulate", "n": 100, "bogus": 1}
        }"#;
        assert!(parse_config(text).is_err());
        let text = r#"{
            "model": {"family": "discrete_joint", "atoms": [[2.0, 1.0, 1.0]]},
            "typo_field": true,
            "experiment": {"kind": "simulate", "n": 100}
        }"#;
        assert!(parse_config(text).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"{
            "model": {"family": "lognormal_normal_indep", "mu_a": -0.6, "sigma_a": 0.894, "mu_b": 0.0, "sigma_b": 1.0},
            "alpha": 1.5,
            "experiment": {"kind": "calibrate-alpha"}
        }"#;
        let cfg = parse_config(text).unwrap();
        let echoed = serde_json::to_string_pretty(&cfg).unwrap();
        let back = parse_config(&echoed).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn event_tree_parses() {
        let text = r#"{
            "model": {"family": "discrete_joint", "atoms": [[0.0, 1.0, 0.2], [2.0, 1.0, 0.3], [0.4, 1.0, 0.5]]},
            "minorization": {"mode": "atom_at_zero"},
            "experiment": {"kind": "rare-event",
                "event": {"and": [{"terminal_at_least": 2.0},
                                   {"time_slice": {"t": 0.5, "pred": {"at_least": 0.1}}}]},
                "n_grid": [128, 256]}
        }"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.experiment.kind(), "rare-event");
    }
}
