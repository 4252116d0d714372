//! Limit measures of the sample-path large deviations and the rare-event
//! estimators built on them.
//!
//! The scaled additive path satisfies, for events `E` forced to make `J`
//! jumps and bounded away from the lower jump classes,
//!
//! ```text
//! P(scaled path in E) ~ n^{-J(alpha-1)} * (1/Er1)^J
//!                       * sum_{l+m=J} C+^l C-^m C_{l,m}(E)
//! ```
//!
//! (one-sided: `(C+/Er1)^J C_J(E)`), where `C_{l,m}` integrates paths
//! `z*id + sum x_i 1_{[U_i,1]} - sum y_i 1_{[V_i,1]}` with Pareto(`alpha`)
//! jump sizes at uniform times. Note the cycle count in a horizon of `n`
//! steps is `n / E r_1`, so the mean cycle length enters the prefactor
//! through its reciprocal.
//!
//! Estimation methods for `P(scaled path in E)` are interchangeable
//! strategies behind [`RareEventEstimator`], selected by name at runtime:
//!
//! * `direct-mc` — simulate the path, count memberships;
//! * `cycle-is` — plant `J` dual-measure tail cycles at uniform positions
//!   among the `~n/Er1` cycle slots of a replication, with exact
//!   mixture likelihood ratios (defensive, so weights are bounded);
//! * `asymptotic` — evaluate the closed prefactor times `n^{-J(alpha-1)}`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::measure::{tilt, ConstantsReport, CycleSampler, MeasureError, TiltPhase};
use crate::model::Model;
use crate::pathspace::{jump_index, EventError, EventSet, JumpMode, PathFacts, StepFn};
use crate::regen::MinorizationParams;
use crate::rng::{StreamDomain, StreamFactory};
use crate::stats::{
    adaptive_simpson, elementary_symmetric, fit_line, mean_estimate, Estimate, LineFit,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdpError {
    #[error("event is not separated from the lower jump class")]
    NotSeparated,
    #[error("gamma too large: halving it moved the estimate by {shift_sigma:.2} sigma")]
    GammaTooLarge { shift_sigma: f64 },
    #[error("budget too small: {0}")]
    BudgetTooSmall(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("unknown estimation method `{0}`")]
    UnknownMethod(String),
}

/// Specification of a limit-measure evaluation `C_{j,k}^z(E)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitMeasureSpec {
    pub z: f64,
    /// Up-jump count.
    pub j: usize,
    /// Down-jump count (`0` for the one-sided `C_j`).
    pub k: usize,
    /// Pareto floor applied per jump coordinate.
    pub gamma: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitMeasureEstimate {
    pub value: Estimate,
    /// Same estimate at half the jump floor (stability check).
    pub value_half_gamma: Estimate,
    pub method: &'static str,
    pub separation: f64,
}

/// Dirac case `(j, k) = (0, 0)`: the measure of `E` is the indicator of
/// the drift line.
fn dirac_case(event: &EventSet, z: f64) -> LimitMeasureEstimate {
    let inside = event.contains(&StepFn::linear(z));
    let v = Estimate::new(if inside { 1.0 } else { 0.0 }, 0.0, 1);
    LimitMeasureEstimate { value: v, value_half_gamma: v, method: "dirac", separation: f64::NAN }
}

/// Monte Carlo evaluation of `C_{j,k}^z(E)`:
/// `gamma^{-alpha (j+k)} / (j! k!) * P(path with Pareto(alpha, gamma) jumps
/// at uniform times lies in E)`, valid because events separated from the
/// lower jump class force every jump above `gamma`.
pub fn limit_measure(
    event: &EventSet,
    spec: &LimitMeasureSpec,
    budget: usize,
    streams: &StreamFactory,
) -> Result<LimitMeasureEstimate, LdpError> {
    if spec.j + spec.k == 0 {
        return Ok(dirac_case(event, spec.z));
    }
    let mode = if spec.k == 0 { JumpMode::OneSided } else { JumpMode::TwoSided };
    let report = jump_index(event, spec.z, mode)?;
    if report.count != spec.j + spec.k {
        return Err(LdpError::NotSeparated);
    }
    let separation = report.separation.filter(|&r| r > 0.0).ok_or(LdpError::NotSeparated)?;

    let estimate_at = |gamma: f64, salt: u64| -> Estimate {
        let total = spec.j + spec.k;
        let scale = gamma.powf(-spec.alpha * total as f64)
            / (factorial(spec.j) * factorial(spec.k));
        let slices = event.slice_times();
        let vals: Vec<f64> = (0..budget)
            .into_par_iter()
            .map(|i| {
                let mut rng = streams.stream(StreamDomain::LimitMeasure, salt + i as u64);
                let mut jumps: Vec<(f64, f64)> = Vec::with_capacity(total);
                for c in 0..total {
                    let u: f64 = rng.random();
                    let size = gamma * rng.random::<f64>().powf(-1.0 / spec.alpha);
                    let signed = if c < spec.j { size } else { -size };
                    jumps.push((u.max(1e-12), signed));
                }
                jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
                // collapse (probability-zero) ties to keep times strictly increasing
                for w in 1..jumps.len() {
                    if jumps[w].0 <= jumps[w - 1].0 {
                        jumps[w].0 = jumps[w - 1].0 + 1e-12;
                    }
                }
                match StepFn::new(0.0, spec.z, jumps) {
                    Ok(path) => {
                        let facts = PathFacts::from_step_fn(&path, &slices);
                        if event.eval_facts(&facts, &slices) {
                            scale
                        } else {
                            0.0
                        }
                    }
                    Err(_) => 0.0,
                }
            })
            .collect();
        mean_estimate(&vals)
    };

    let value = estimate_at(spec.gamma, 0);
    let value_half_gamma = estimate_at(0.5 * spec.gamma, 3_000_000_000);
    let sigma = (value.stderr.powi(2) + value_half_gamma.stderr.powi(2)).sqrt();
    if sigma > 0.0 {
        let shift_sigma = (value.value - value_half_gamma.value).abs() / sigma;
        if shift_sigma > 3.0 {
            return Err(LdpError::GammaTooLarge { shift_sigma });
        }
    }
    Ok(LimitMeasureEstimate { value, value_half_gamma, method: "mc", separation })
}

/// Closed-form / quadrature evaluation for the shapes that admit one:
/// single-jump terminal and slice events, and the two-jump barrier at
/// zero drift.
pub fn limit_measure_quadrature(event: &EventSet, spec: &LimitMeasureSpec) -> Option<f64> {
    let alpha = spec.alpha;
    match (spec.j, spec.k, event) {
        (0, 0, _) => Some(if event.contains(&StepFn::linear(spec.z)) { 1.0 } else { 0.0 }),
        (1, 0, EventSet::TerminalAtLeast(a)) => {
            let need = a - spec.z;
            (need > 0.0).then(|| need.powf(-alpha))
        }
        (1, 0, EventSet::TimeSlice { t, pred: crate::pathspace::SlicePred::AtLeast(a) }) => {
            let need = a - spec.z * t;
            (need > 0.0).then(|| t * need.powf(-alpha))
        }
        (1, 1, EventSet::And(parts)) if spec.z == 0.0 && parts.len() == 2 => {
            let mut a_plus = None;
            let mut a_minus = None;
            for p in parts {
                match p {
                    EventSet::TerminalAtLeast(a) => a_plus = Some(*a),
                    EventSet::RunningInfAtMost(c) => a_minus = Some(-*c),
                    _ => return None,
                }
            }
            let (ap, am) = (a_plus?, a_minus?);
            if !(ap > 0.0 && am > 0.0) {
                return None;
            }
            // The event needs the down jump first (y >= a_minus) and the up
            // jump to clear the terminal (x >= a_plus + y):
            // C = 1/2 * int_{a_minus}^inf alpha y^{-alpha-1} (y+a_plus)^{-alpha} dy,
            // computed after y = a_minus / t on t in (0, 1].
            let integrand =
                |t: f64| t.powf(2.0 * alpha - 1.0) * (am + ap * t).powf(-alpha);
            let integral = adaptive_simpson(&integrand, 0.0, 1.0, 1e-12);
            Some(0.5 * alpha * am.powf(-alpha) * integral)
        }
        _ => None,
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product::<f64>().max(1.0)
}

/// Estimation method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RareEventMethod {
    DirectMc,
    CycleIs,
    Asymptotic,
}

impl RareEventMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RareEventMethod::DirectMc => "direct-mc",
            RareEventMethod::CycleIs => "cycle-is",
            RareEventMethod::Asymptotic => "asymptotic",
        }
    }
}

/// Tuning knobs shared by the estimators.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RareEventConfig {
    pub budget: usize,
    /// Defensive mixture mass on the unplanted branch of cycle-IS; the
    /// remainder spreads uniformly over planting levels `1..=J`.
    pub defensive_q0: f64,
    /// Planting threshold exponent: tilt until `|X| > scale * n^beta`.
    pub plant_beta: f64,
    /// Planting threshold scale; `None` derives it from the event geometry.
    pub plant_scale: Option<f64>,
    /// Jump floor for limit-measure integrals; `None` derives it.
    pub gamma: Option<f64>,
    /// Budget for limit-measure integrals inside the asymptotic method.
    pub limit_measure_budget: usize,
    /// Start value of the path; `None` draws from the regeneration law.
    pub x0: Option<f64>,
}

impl Default for RareEventConfig {
    fn default() -> Self {
        RareEventConfig {
            budget: 100_000,
            defensive_q0: 0.25,
            plant_beta: 1.0,
            plant_scale: None,
            gamma: None,
            limit_measure_budget: 200_000,
            x0: None,
        }
    }
}

/// Everything an estimator needs to run.
pub struct RareEventContext<'a> {
    pub model: &'a Model,
    pub minor: &'a MinorizationParams,
    pub event: &'a EventSet,
    pub n: usize,
    pub alpha: f64,
    pub constants: &'a ConstantsReport,
    pub jump_mode: JumpMode,
    pub cfg: RareEventConfig,
    pub streams: &'a StreamFactory,
    /// Offsets the replication stream index so different grid points use
    /// disjoint streams.
    pub stream_salt: u64,
}

impl<'a> RareEventContext<'a> {
    fn drift(&self) -> f64 {
        self.constants.mu
    }

    /// Per-jump magnitude the event forces, from the verified witness.
    fn witness_jump_scale(&self) -> Result<f64, LdpError> {
        let report = jump_index(self.event, self.drift(), self.jump_mode)?;
        let min_jump = report
            .witness
            .jumps()
            .iter()
            .map(|j| j.size.abs())
            .fold(f64::INFINITY, f64::min);
        Ok(if min_jump.is_finite() { min_jump } else { 1.0 })
    }
}

/// A single method's output.
#[derive(Debug, Clone, Serialize)]
pub struct MethodEstimate {
    pub method: String,
    pub p: Estimate,
    /// Replications (direct/cycle-IS) or limit-measure budget (asymptotic).
    pub budget: usize,
    /// Jump count the estimate is based on, where applicable.
    pub jump_count: Option<usize>,
}

/// One interchangeable estimation strategy.
pub trait RareEventEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, ctx: &RareEventContext) -> Result<MethodEstimate, LdpError>;
}

/// Name-keyed registry of the available strategies.
pub struct EstimatorRegistry {
    estimators: Vec<Box<dyn RareEventEstimator>>,
}

impl EstimatorRegistry {
    /// The standard strategies: `direct-mc`, `cycle-is`, `asymptotic`.
    pub fn standard() -> Self {
        EstimatorRegistry {
            estimators: vec![
                Box::new(DirectMcEstimator),
                Box::new(CycleIsEstimator),
                Box::new(AsymptoticEstimator),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn RareEventEstimator, LdpError> {
        self.estimators
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| LdpError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.estimators.iter().map(|e| e.name()).collect()
    }
}

/// Plain Monte Carlo over full paths started from `phi`.
pub struct DirectMcEstimator;

impl RareEventEstimator for DirectMcEstimator {
    fn name(&self) -> &'static str {
        "direct-mc"
    }

    fn estimate(&self, ctx: &RareEventContext) -> Result<MethodEstimate, LdpError> {
        let slices = ctx.event.slice_times();
        let hits: Vec<f64> = (0..ctx.cfg.budget)
            .into_par_iter()
            .map(|i| {
                let mut rng = ctx
                    .streams
                    .stream(StreamDomain::RareEvent, ctx.stream_salt.wrapping_add(i as u64));
                let mut states = Vec::with_capacity(ctx.n);
                let mut x = ctx.cfg.x0.unwrap_or_else(|| ctx.minor.phi_sample(&mut rng));
                for _ in 0..ctx.n {
                    states.push(x);
                    let (a, b) = ctx.model.sample(&mut rng);
                    x = a * x + b;
                }
                let facts = PathFacts::from_scaled_states(&states, ctx.n, &slices);
                if ctx.event.eval_facts(&facts, &slices) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(MethodEstimate {
            method: self.name().to_string(),
            p: mean_estimate(&hits),
            budget: ctx.cfg.budget,
            jump_count: None,
        })
    }
}

/// Importance sampling that plants dual-measure tail cycles at uniform
/// slots among the `~n/Er1` cycles of a replication.
///
/// Per replication a planting level `j` is drawn: `j = 0` (nothing
/// planted) with probability `q0`, and each level `1..=J` with probability
/// `(1-q0)/J`, where `J` is the event's jump count. At level `j` a uniform
/// `j`-subset of the first `K` cycle slots is simulated under the dual
/// measure (tilted until `|X|` exceeds the planting threshold, original
/// afterwards). The likelihood ratio of the resulting mixture against the
/// original cycle product law is
///
/// ```text
/// w = 1 / (q0 + sum_j q_j * e_j(rho_1..rho_K) / C(K, j))
/// ```
///
/// where `rho_i` is the dual/original density ratio of cycle `i` and `e_j`
/// the elementary symmetric polynomials; the defensive branch bounds `w`
/// by `1/q0`, so the estimator is unbiased with bounded weights by
/// construction, and the intermediate levels keep the variance controlled
/// for paths realized by fewer-than-`J` oversized cycles.
pub struct CycleIsEstimator;

impl RareEventEstimator for CycleIsEstimator {
    fn name(&self) -> &'static str {
        "cycle-is"
    }

    fn estimate(&self, ctx: &RareEventContext) -> Result<MethodEstimate, LdpError> {
        let jump_count = jump_index(ctx.event, ctx.drift(), ctx.jump_mode)?.count;
        if jump_count == 0 {
            // Nothing to plant: the event is reachable by the fluid path.
            let direct = DirectMcEstimator.estimate(ctx)?;
            return Ok(MethodEstimate {
                method: self.name().to_string(),
                jump_count: Some(0),
                ..direct
            });
        }
        let tilted = tilt(ctx.model, ctx.alpha)?;
        let sampler = CycleSampler::for_regeneration(&tilted, ctx.minor)?;

        let e_r1 = ctx.constants.e_r1.value;
        if !(e_r1.is_finite() && e_r1 >= 1.0) {
            return Err(LdpError::Precondition(format!("invalid E[r1] estimate {e_r1}")));
        }
        let slots = ((ctx.n as f64 / e_r1).ceil() as usize).max(jump_count);
        let scale = match ctx.cfg.plant_scale {
            Some(s) => s,
            None => (0.25 * ctx.witness_jump_scale()? / jump_count as f64).max(0.02),
        };
        // Mixture thresholds, descending: full event scale plus two coarser
        // levels that cover paths realized by moderately large cycles.
        let t_hi = scale * (ctx.n as f64).powf(ctx.cfg.plant_beta);
        let thresholds_desc: Vec<f64> = vec![t_hi, t_hi / 4.0, t_hi / 16.0];
        let mut track: Vec<f64> = thresholds_desc.clone();
        track.sort_by(f64::total_cmp); // run_tracked wants ascending
        let level_of = |t: f64| track.iter().position(|&x| x == t).expect("member");
        let q0 = ctx.cfg.defensive_q0;
        if !(q0 > 0.0 && q0 < 1.0) {
            return Err(LdpError::Precondition("defensive q0 must lie in (0,1)".into()));
        }
        let n_components = jump_count * thresholds_desc.len();
        let q_comp = (1.0 - q0) / n_components as f64;
        // log C(slots, j) for j = 0..=J
        let log_choose: Vec<f64> = (0..=jump_count).map(|j| log_binomial(slots, j)).collect();
        let slices = ctx.event.slice_times();

        let vals: Vec<f64> = (0..ctx.cfg.budget)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ctx
                    .streams
                    .stream(StreamDomain::RareEvent, ctx.stream_salt.wrapping_add(rep as u64));
                // component = (planted count j in 1..=J, threshold index)
                let comp_draw: f64 = rng.random();
                let (level, tilt_idx) = if comp_draw < q0 {
                    (0, track.len() - 1)
                } else {
                    let c = (((comp_draw - q0) / q_comp) as usize).min(n_components - 1);
                    let j = 1 + c / thresholds_desc.len();
                    let t = thresholds_desc[c % thresholds_desc.len()];
                    (j, level_of(t))
                };
                let mut planted: Vec<usize> = Vec::new();
                while planted.len() < level {
                    let idx = (rng.random::<f64>() * slots as f64) as usize;
                    let idx = idx.min(slots - 1);
                    if !planted.contains(&idx) {
                        planted.push(idx);
                    }
                }
                planted.sort_unstable();
                let mut states: Vec<f64> = Vec::with_capacity(ctx.n + 64);
                // per tracked threshold, the dual/original ratios of each slot
                let mut rho: Vec<Vec<f64>> = vec![Vec::with_capacity(slots); track.len()];
                let mut slot = 0usize;
                while states.len() < ctx.n || slot < slots {
                    let phase = if planted.binary_search(&slot).is_ok() {
                        TiltPhase::UntilCrossing
                    } else {
                        TiltPhase::None
                    };
                    // an explicit start value applies to the first segment only
                    let start = if slot == 0 { ctx.cfg.x0 } else { None };
                    let run = sampler.run_tracked_from(
                        start,
                        phase,
                        &track,
                        tilt_idx,
                        crate::measure::StopRule::CycleEnd,
                        &mut rng,
                        Some(&mut states),
                    );
                    if slot < slots {
                        for (k, r) in rho.iter_mut().enumerate() {
                            r.push(sampler.dual_ratio_at(&run, k));
                        }
                    }
                    slot += 1;
                    if slot > slots + 4 * ctx.n {
                        break; // cycle lengths pathologically long
                    }
                }
                states.truncate(ctx.n);
                let facts = PathFacts::from_scaled_states(&states, ctx.n, &slices);
                if !ctx.event.eval_facts(&facts, &slices) {
                    return 0.0;
                }
                let mut denom = q0;
                for r in &rho {
                    let e_sym = elementary_symmetric(r, jump_count);
                    for j in 1..=jump_count {
                        denom += q_comp * e_sym[j] * (-log_choose[j]).exp();
                    }
                }
                1.0 / denom
            })
            .collect();

        Ok(MethodEstimate {
            method: self.name().to_string(),
            p: mean_estimate(&vals),
            budget: ctx.cfg.budget,
            jump_count: Some(jump_count),
        })
    }
}

fn log_binomial(n: usize, k: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..k {
        s += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    s
}

/// Closed-prefactor evaluation `n^{-J(alpha-1)} (1/Er1)^J *
/// sum_{l+m=J} C+^l C-^m C_{l,m}(E)` (one-sided: `(C+/Er1)^J C_J(E)`).
pub struct AsymptoticEstimator;

impl RareEventEstimator for AsymptoticEstimator {
    fn name(&self) -> &'static str {
        "asymptotic"
    }

    fn estimate(&self, ctx: &RareEventContext) -> Result<MethodEstimate, LdpError> {
        let report = jump_index(ctx.event, ctx.drift(), ctx.jump_mode)?;
        let j_total = report.count;
        if j_total == 0 {
            let inside = ctx.event.contains(&StepFn::linear(ctx.drift()));
            return Ok(MethodEstimate {
                method: self.name().to_string(),
                p: Estimate::new(if inside { 1.0 } else { 0.0 }, 0.0, 1),
                budget: 0,
                jump_count: Some(0),
            });
        }
        if report.separation.filter(|&r| r > 0.0).is_none() {
            return Err(LdpError::NotSeparated);
        }
        let gamma = match ctx.cfg.gamma {
            Some(g) => g,
            None => 0.25 * ctx.witness_jump_scale()? / j_total as f64,
        };
        let e_r1 = ctx.constants.e_r1;
        let c_plus = ctx.constants.c_plus;
        let c_minus = ctx.constants.c_minus;
        let rate = (ctx.n as f64).powf(-(j_total as f64) * (ctx.alpha - 1.0));

        let mut total = 0.0f64;
        let mut var = 0.0f64;
        match ctx.jump_mode {
            JumpMode::OneSided => {
                let spec = LimitMeasureSpec {
                    z: ctx.drift(),
                    j: j_total,
                    k: 0,
                    gamma,
                    alpha: ctx.alpha,
                };
                let c_e = match limit_measure_quadrature(ctx.event, &spec) {
                    Some(v) => Estimate::new(v, 0.0, 0),
                    None => limit_measure(ctx.event, &spec, ctx.cfg.limit_measure_budget, ctx.streams)?
                        .value,
                };
                let factor = (c_plus.value / e_r1.value).powi(j_total as i32);
                let value = factor * c_e.value;
                // first-order error propagation across the three factors
                let rel = (j_total as f64)
                    * ((c_plus.stderr / c_plus.value).powi(2) + (e_r1.stderr / e_r1.value).powi(2))
                    + if c_e.value > 0.0 { (c_e.stderr / c_e.value).powi(2) } else { 0.0 };
                total = value;
                var = (value * rel.sqrt()).powi(2);
            }
            JumpMode::TwoSided => {
                for l in 0..=j_total {
                    let m = j_total - l;
                    let spec = LimitMeasureSpec {
                        z: ctx.drift(),
                        j: l,
                        k: m,
                        gamma,
                        alpha: ctx.alpha,
                    };
                    let c_lm = match limit_measure_quadrature(ctx.event, &spec) {
                        Some(v) => Estimate::new(v, 0.0, 0),
                        None => {
                            match limit_measure(
                                ctx.event,
                                &spec,
                                ctx.cfg.limit_measure_budget,
                                ctx.streams,
                            ) {
                                Ok(est) => est.value,
                                // combos whose geometry cannot realize the
                                // event contribute zero mass
                                Err(LdpError::NotSeparated) => Estimate::new(0.0, 0.0, 0),
                                Err(e) => return Err(e),
                            }
                        }
                    };
                    if c_lm.value <= 0.0 {
                        continue;
                    }
                    let coeff = c_plus.value.powi(l as i32) * c_minus.value.powi(m as i32)
                        / e_r1.value.powi(j_total as i32);
                    let value = coeff * c_lm.value;
                    let rel = (l as f64) * (c_plus.stderr / c_plus.value.max(1e-300)).powi(2)
                        + (m as f64) * (c_minus.stderr / c_minus.value.max(1e-300)).powi(2)
                        + (j_total as f64) * (e_r1.stderr / e_r1.value).powi(2)
                        + (c_lm.stderr / c_lm.value).powi(2);
                    total += value;
                    var += (value * rel.sqrt()).powi(2);
                }
            }
        }
        Ok(MethodEstimate {
            method: self.name().to_string(),
            p: Estimate::new(total * rate, var.sqrt() * rate, ctx.cfg.limit_measure_budget as u64),
            budget: ctx.cfg.limit_measure_budget,
            jump_count: Some(j_total),
        })
    }
}

/// Per-`n` estimates for one event, across the requested methods.
#[derive(Debug, Clone, Serialize)]
pub struct RareEventReport {
    pub n: usize,
    pub estimates: Vec<MethodEstimate>,
}

/// Rate check over an `n`-grid: per-method curves with their log-log
/// slopes.
#[derive(Debug, Clone, Serialize)]
pub struct MethodCurve {
    pub method: String,
    pub points: Vec<(usize, Estimate)>,
    pub slope: Option<LineFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RareEventStudy {
    pub reports: Vec<RareEventReport>,
    pub curves: Vec<MethodCurve>,
    /// Theoretical rate `-J(alpha-1)` from the jump analysis.
    pub rate_exponent: f64,
}

/// Run the named methods over a grid of horizons and fit the decay rates.
#[allow(clippy::too_many_arguments)]
pub fn rare_event_study(
    model: &Model,
    minor: &MinorizationParams,
    event: &EventSet,
    n_grid: &[usize],
    methods: &[RareEventMethod],
    alpha: f64,
    constants: &ConstantsReport,
    jump_mode: JumpMode,
    cfg: RareEventConfig,
    streams: &StreamFactory,
) -> Result<RareEventStudy, LdpError> {
    let registry = EstimatorRegistry::standard();
    let mut reports = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let ctx = RareEventContext {
            model,
            minor,
            event,
            n,
            alpha,
            constants,
            jump_mode,
            cfg,
            streams,
            stream_salt: (gi as u64 + 1) * 100_000_000,
        };
        let mut estimates = Vec::new();
        for method in methods {
            estimates.push(registry.get(method.name())?.estimate(&ctx)?);
        }
        reports.push(RareEventReport { n, estimates });
    }

    let jump_count = jump_index(event, constants.mu, jump_mode)?.count;
    let rate_exponent = -(jump_count as f64) * (alpha - 1.0);

    let mut curves = Vec::new();
    for method in methods {
        let mut points = Vec::new();
        for rep in &reports {
            let est = rep
                .estimates
                .iter()
                .find(|e| e.method == method.name())
                .expect("method present");
            points.push((rep.n, est.p));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &(n, p) in &points {
            if p.value > 0.0 {
                xs.push((n as f64).ln());
                ys.push(p.value.ln());
            }
        }
        let slope = (xs.len() >= 3).then(|| fit_line(&xs, &ys));
        curves.push(MethodCurve { method: method.name().to_string(), points, slope });
    }
    Ok(RareEventStudy { reports, curves, rate_exponent })
}

/// Full barrier-option study: separation, asymptotic constant, cycle-IS
/// curve, and the rate comparison.
#[derive(Debug, Clone, Serialize)]
pub struct BarrierStudy {
    pub a_minus: f64,
    pub a_plus: f64,
    pub mu: f64,
    pub jump_count: usize,
    pub separation: f64,
    /// `C_{1,1}(E)` by quadrature (zero drift) or Monte Carlo.
    pub c11: Estimate,
    /// Asymptotic constant `C_{1,1}(E) C+ C- / Er1^2`.
    pub asymptotic_constant: Estimate,
    pub n_grid: Vec<usize>,
    pub p_is: Vec<Estimate>,
    pub p_asymptotic: Vec<f64>,
    pub slope: Option<LineFit>,
    pub slope_target: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn barrier_option_study(
    model: &Model,
    minor: &MinorizationParams,
    a_minus: f64,
    a_plus: f64,
    n_grid: &[usize],
    alpha: f64,
    constants: &ConstantsReport,
    cfg: RareEventConfig,
    streams: &StreamFactory,
) -> Result<BarrierStudy, LdpError> {
    let mu = constants.mu;
    if !(a_plus > mu.max(0.0)) {
        return Err(LdpError::Precondition(format!(
            "a_plus = {a_plus} must exceed max(mu, 0) = {}",
            mu.max(0.0)
        )));
    }
    if !(a_minus > (-mu).max(0.0)) {
        return Err(LdpError::Precondition(format!(
            "a_minus = {a_minus} must exceed max(-mu, 0) = {}",
            (-mu).max(0.0)
        )));
    }
    let event = EventSet::barrier(a_minus, a_plus);
    let report = jump_index(&event, mu, JumpMode::TwoSided)?;
    if report.count != 2 {
        return Err(LdpError::Precondition(format!(
            "barrier event needs 2 jumps, analysis found {}",
            report.count
        )));
    }
    let separation = report.separation.filter(|&r| r > 0.0).ok_or(LdpError::NotSeparated)?;

    let gamma = cfg.gamma.unwrap_or(0.25 * a_minus.min(a_plus - mu.max(0.0)));
    let spec = LimitMeasureSpec { z: mu, j: 1, k: 1, gamma, alpha };
    let c11 = if mu == 0.0 {
        Estimate::new(
            limit_measure_quadrature(&event, &spec).expect("barrier closed form at zero drift"),
            0.0,
            0,
        )
    } else {
        limit_measure(&event, &spec, cfg.limit_measure_budget, streams)?.value
    };

    let e_r1 = constants.e_r1;
    let inv_len_sq = 1.0 / (e_r1.value * e_r1.value);
    let asym_value = c11.value * constants.c_plus.value * constants.c_minus.value * inv_len_sq;
    let rel = (c11.stderr / c11.value.max(1e-300)).powi(2)
        + (constants.c_plus.stderr / constants.c_plus.value.max(1e-300)).powi(2)
        + (constants.c_minus.stderr / constants.c_minus.value.max(1e-300)).powi(2)
        + 4.0 * (e_r1.stderr / e_r1.value).powi(2);
    let asymptotic_constant = Estimate::new(asym_value, asym_value * rel.sqrt(), 0);

    let study = rare_event_study(
        model,
        minor,
        &event,
        n_grid,
        &[RareEventMethod::CycleIs],
        alpha,
        constants,
        JumpMode::TwoSided,
        cfg,
        streams,
    )?;
    let p_is: Vec<Estimate> = study.curves[0].points.iter().map(|&(_, p)| p).collect();
    let p_asymptotic: Vec<f64> = n_grid
        .iter()
        .map(|&n| asym_value * (n as f64).powf(-2.0 * (alpha - 1.0)))
        .collect();

    Ok(BarrierStudy {
        a_minus,
        a_plus,
        mu,
        jump_count: report.count,
        separation,
        c11,
        asymptotic_constant,
        n_grid: n_grid.to_vec(),
        p_is,
        p_asymptotic,
        slope: study.curves[0].slope,
        slope_target: -2.0 * (alpha - 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoupleLaw;

    #[test]
    fn single_jump_terminal_oracle() {
        // C_1({xi(1) >= 2}) at alpha = 3/2 is 2^{-3/2}.
        let event = EventSet::TerminalAtLeast(2.0);
        let spec = LimitMeasureSpec { z: 0.0, j: 1, k: 0, gamma: 0.5, alpha: 1.5 };
        let streams = StreamFactory::new(5);
        let est = limit_measure(&event, &spec, 200_000, &streams).unwrap();
        let exact = 2.0f64.powf(-1.5);
        assert!(
            (est.value.value - exact).abs() < 3.0 * est.value.stderr,
            "{} vs {} (+- {})",
            est.value.value,
            exact,
            est.value.stderr
        );
        assert_eq!(limit_measure_quadrature(&event, &spec), Some(exact));
    }

    #[test]
    fn slice_event_carries_time_factor() {
        // The jump must land by t = 1/2: C = (1/2) b^{-alpha}.
        let event =
            EventSet::TimeSlice { t: 0.5, pred: crate::pathspace::SlicePred::AtLeast(2.0) };
        let spec = LimitMeasureSpec { z: 0.0, j: 1, k: 0, gamma: 0.5, alpha: 1.5 };
        let streams = StreamFactory::new(6);
        let est = limit_measure(&event, &spec, 200_000, &streams).unwrap();
        let exact = 0.5 * 2.0f64.powf(-1.5);
        assert!(
            (est.value.value - exact).abs() < 3.0 * est.value.stderr,
            "{} vs {}",
            est.value.value,
            exact
        );
        assert_eq!(limit_measure_quadrature(&event, &spec), Some(exact));
    }

    #[test]
    fn barrier_quadrature_matches_partial_fractions() {
        // alpha = 2, a+ = a- = 1: C_{1,1}(E) = 3 ln 2 - 2.
        let event = EventSet::barrier(1.0, 1.0);
        let spec = LimitMeasureSpec { z: 0.0, j: 1, k: 1, gamma: 0.25, alpha: 2.0 };
        let exact = 3.0 * std::f64::consts::LN_2 - 2.0;
        let quad = limit_measure_quadrature(&event, &spec).unwrap();
        assert!((quad - exact).abs() < 1e-6, "quad {quad} vs exact {exact}");
        let streams = StreamFactory::new(7);
        let est = limit_measure(&event, &spec, 400_000, &streams).unwrap();
        assert!(
            (est.value.value - exact).abs() < 3.0 * est.value.stderr,
            "mc {} +- {} vs {}",
            est.value.value,
            est.value.stderr,
            exact
        );
    }

    #[test]
    fn dirac_case_is_exact_membership() {
        let event = EventSet::TerminalAtLeast(0.4);
        let spec = LimitMeasureSpec { z: 0.5, j: 0, k: 0, gamma: 0.1, alpha: 2.0 };
        let streams = StreamFactory::new(8);
        let est = limit_measure(&event, &spec, 10, &streams).unwrap();
        assert_eq!(est.value.value, 1.0);
        let spec_miss = LimitMeasureSpec { z: 0.3, ..spec };
        let event_miss = EventSet::TerminalAtLeast(0.4);
        let est = limit_measure(&event_miss, &spec_miss, 10, &streams).unwrap();
        assert_eq!(est.value.value, 0.0);
    }

    #[test]
    fn scaling_law_in_the_threshold() {
        // C_1({xi(1) >= b}) * b^alpha is constant in b.
        let streams = StreamFactory::new(9);
        let alpha = 1.5;
        let mut values = Vec::new();
        for b in [1.0, 2.0, 4.0] {
            let event = EventSet::TerminalAtLeast(b);
            let spec = LimitMeasureSpec { z: 0.0, j: 1, k: 0, gamma: 0.4, alpha };
            let est = limit_measure(&event, &spec, 150_000, &streams).unwrap();
            values.push((est.value.value * b.powf(alpha), est.value.stderr * b.powf(alpha)));
        }
        for w in values.windows(2) {
            let (v1, s1) = w[0];
            let (v2, s2) = w[1];
            let sigma = (s1 * s1 + s2 * s2).sqrt();
            assert!((v1 - v2).abs() < 3.0 * sigma, "{v1} vs {v2} (sigma {sigma})");
        }
    }

    #[test]
    fn limit_measure_rejects_unseparated_specs() {
        // Two jumps requested for a single-jump event: the lower class
        // meets the event, so the integral is not defined.
        let event = EventSet::TerminalAtLeast(1.0);
        let spec = LimitMeasureSpec { z: 0.0, j: 2, k: 0, gamma: 0.2, alpha: 1.5 };
        let streams = StreamFactory::new(10);
        assert!(matches!(
            limit_measure(&event, &spec, 1000, &streams),
            Err(LdpError::NotSeparated)
        ));
    }

    #[test]
    fn registry_knows_all_methods() {
        let reg = EstimatorRegistry::standard();
        assert_eq!(reg.names(), vec!["direct-mc", "cycle-is", "asymptotic"]);
        assert!(reg.get("direct-mc").is_ok());
        assert!(matches!(reg.get("bogus"), Err(LdpError::UnknownMethod(_))));
    }

    #[test]
    fn fluid_ball_event_has_probability_one() {
        // A centered-tube event around the drift line is a J = 0 event:
        // by the LLN the path settles at the fluid line, here mu = 0.
        let model = Model::build(CoupleLaw::DiscreteJoint {
            atoms: vec![(0.0, 0.5, 0.2), (0.0, -0.5, 0.2), (2.0, -1.0, 0.1), (0.4, 0.2, 0.5)],
        })
        .unwrap();
        assert!(model.fluid_mean().abs() < 1e-12, "mu = {}", model.fluid_mean());
        let minor =
            crate::regen::find_minorization(&model, crate::regen::MinorizationMode::AtomAtZero)
                .unwrap();
        let alpha = crate::measure::solve_alpha(&model, 1e-10).unwrap().alpha;
        let streams = StreamFactory::new(12);
        let constants = crate::measure::estimate_cycle_constants(
            &model,
            &minor,
            alpha,
            &crate::measure::ConstantsConfig { budget: 4_000, ..Default::default() },
            &streams,
        )
        .unwrap();
        let event = EventSet::centered_tube(0.4);
        let ctx = RareEventContext {
            model: &model,
            minor: &minor,
            event: &event,
            n: 4_000,
            alpha,
            constants: &constants,
            jump_mode: JumpMode::TwoSided,
            cfg: RareEventConfig { budget: 300, ..Default::default() },
            streams: &streams,
            stream_salt: 0,
        };
        let est = DirectMcEstimator.estimate(&ctx).unwrap();
        assert!(est.p.value > 0.9, "p = {}", est.p.value);
    }
}
