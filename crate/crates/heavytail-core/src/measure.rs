//! Calibration of the tail index, exponential tilting, and the estimators
//! for the tail constants of regeneration-cycle areas.
//!
//! The index `alpha` is the root of `E[A^s] = 1` on `s > 0`. Under the
//! `alpha`-shifted law (density proportional to `A^alpha`) the chain is
//! transient, `|X_n| -> infinity`, and the discrepancy
//! `Z_n = X_n e^{-S_n} = X_0 + sum B_k e^{-S_k}` converges almost surely;
//! the cycle-area tails satisfy
//!
//! ```text
//! u^alpha P(area > u)  ->  C+ = C_inf * E_tilt[(Z^+)^alpha 1{no regen}]
//! u^alpha P(area < -u) ->  C- = C_inf * E_tilt[(Z^-)^alpha 1{no regen}]
//! ```
//!
//! where `C_inf` is the tail constant of the perpetuity `sum_k e^{S_k}`,
//! estimated both by the Goldie renewal representation of `R = 1 + A R`
//! and by direct tail regression. Tail probabilities of cycle areas are
//! estimated without rare-event starvation by the dual change of measure:
//! tilted dynamics until the first exceedance time `T(u^beta)`, original
//! dynamics after, each sample weighted by `e^{-alpha S_T}` on
//! `{T < cycle end}`, plus an untilted complement term.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{CoupleLaw, Model};
use crate::regen::{MinorizationParams, TransitionDensity};
use crate::rng::{StreamDomain, StreamFactory};
use crate::stats::{fit_line, mean_estimate, quantile, Estimate, LineFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("no root of E[A^s] = 1 with s <= {0}")]
    NoAlphaRoot(f64),
    #[error("family cannot be tilted exactly: {0}")]
    UntiltableFamily(String),
    #[error("escape level ambiguous: doubling it moved survival probability by {shift_sigma:.2} sigma")]
    EscapeAmbiguous { shift_sigma: f64 },
    #[error("budget too small: {0:.1} effective samples at u = {1}")]
    BudgetTooSmall(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationMethod {
    ExactMoments,
    MonteCarloBracket,
}

/// The calibrated index `alpha` with its residual `|E[A^alpha] - 1|`.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaCalibration {
    pub alpha: f64,
    pub residual: f64,
    pub method: CalibrationMethod,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

const ALPHA_S_CAP: f64 = 64.0;

/// Solve `E[A^s] = 1` for the unique positive root, by closed form where
/// the family admits one and otherwise by bisection on the convex
/// log-moment function.
pub fn solve_alpha(model: &Model, tol: f64) -> Result<AlphaCalibration, MeasureError> {
    // Lognormal families close in s: mu s + sigma^2 s^2/2 (+ log(1-p0)) = 0.
    match model.law() {
        CoupleLaw::LognormalNormalIndep { mu_a, sigma_a, .. } => {
            let alpha = -2.0 * mu_a / (sigma_a * sigma_a);
            if alpha <= 0.0 {
                return Err(MeasureError::NoAlphaRoot(ALPHA_S_CAP));
            }
            let residual = (model.moment_a(alpha) - 1.0).abs();
            return Ok(AlphaCalibration {
                alpha,
                residual,
                method: CalibrationMethod::ExactMoments,
                bracket: (alpha, alpha),
                iterations: 0,
            });
        }
        CoupleLaw::AtomPlusDensity { p0, mu_a, sigma_a, .. } => {
            let s2 = sigma_a * sigma_a;
            let disc = mu_a * mu_a - 2.0 * s2 * (1.0 - p0).ln();
            if disc <= 0.0 {
                return Err(MeasureError::NoAlphaRoot(ALPHA_S_CAP));
            }
            let alpha = (-mu_a + disc.sqrt()) / s2;
            if alpha <= 0.0 {
                return Err(MeasureError::NoAlphaRoot(ALPHA_S_CAP));
            }
            let residual = (model.moment_a(alpha) - 1.0).abs();
            return Ok(AlphaCalibration {
                alpha,
                residual,
                method: CalibrationMethod::ExactMoments,
                bracket: (alpha, alpha),
                iterations: 0,
            });
        }
        CoupleLaw::DiscreteJoint { .. } => {}
    }

    // Bracket by doubling until the exact moment exceeds one.
    let mut s_hi = 1.0f64;
    while model.moment_a(s_hi) <= 1.0 {
        s_hi *= 2.0;
        if s_hi > ALPHA_S_CAP {
            return Err(MeasureError::NoAlphaRoot(ALPHA_S_CAP));
        }
    }
    let mut lo = 0.0f64;
    let mut hi = s_hi;
    let mut iterations = 0usize;
    while hi - lo > 1e-14 && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if model.moment_a(mid) >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let alpha = 0.5 * (lo + hi);
    let residual = (model.moment_a(alpha) - 1.0).abs();
    if residual > tol.max(1e-10) {
        return Err(MeasureError::NoAlphaRoot(s_hi));
    }
    Ok(AlphaCalibration {
        alpha,
        residual,
        method: CalibrationMethod::ExactMoments,
        bracket: (lo, hi),
        iterations,
    })
}

/// Monte Carlo variant of the calibration, kept as a cross-check: bisection
/// on a sampled moment curve.
pub fn solve_alpha_mc(
    model: &Model,
    budget: usize,
    streams: &StreamFactory,
) -> Result<AlphaCalibration, MeasureError> {
    let moment = |s: f64, idx: u64| -> Estimate {
        let mut rng = streams.stream(StreamDomain::Diagnostics, 1000 + idx);
        let vals: Vec<f64> = (0..budget)
            .map(|_| {
                let (a, _) = model.sample(&mut rng);
                if a > 0.0 {
                    a.powf(s)
                } else {
                    0.0
                }
            })
            .collect();
        mean_estimate(&vals)
    };
    let mut s_hi = 1.0f64;
    let mut idx = 0u64;
    loop {
        let m = moment(s_hi, idx);
        idx += 1;
        if m.value - 3.0 * m.stderr > 1.0 {
            break;
        }
        s_hi *= 2.0;
        if s_hi > ALPHA_S_CAP {
            return Err(MeasureError::NoAlphaRoot(ALPHA_S_CAP));
        }
    }
    let mut lo = 0.0;
    let mut hi = s_hi;
    let mut iterations = 0;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let m = moment(mid, idx);
        idx += 1;
        iterations += 1;
        if m.value >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-3 {
            break;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let m = moment(alpha, idx);
    Ok(AlphaCalibration {
        alpha,
        residual: (m.value - 1.0).abs(),
        method: CalibrationMethod::MonteCarloBracket,
        bracket: (lo, hi),
        iterations,
    })
}

/// The model together with its exactly tilted companion law
/// (`A`-density reweighted by `a^alpha`).
#[derive(Debug, Clone)]
pub struct TiltedModel {
    base: Model,
    tilted: Model,
    alpha: f64,
    /// `E[A^alpha]` of the base law: the tilt normalization, equal to one
    /// at the calibrated index up to the calibration residual.
    normalization: f64,
}

impl TiltedModel {
    pub fn base(&self) -> &Model {
        &self.base
    }

    pub fn tilted(&self) -> &Model {
        &self.tilted
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Per-step likelihood ratio `d(base)/d(tilted)` at a drawn multiplier.
    pub fn step_weight(&self, a: f64) -> f64 {
        if a <= 0.0 {
            f64::INFINITY // the tilted law never draws a = 0
        } else {
            self.normalization * (-self.alpha * a.ln()).exp()
        }
    }
}

/// Exact exponential tilt of the coefficient law: discrete atoms are
/// reweighted by `a^alpha`, a lognormal multiplier shifts its location by
/// `alpha * sigma_a^2`, and an atom at zero receives weight zero.
pub fn tilt(model: &Model, alpha: f64) -> Result<TiltedModel, MeasureError> {
    let normalization = model.moment_a(alpha);
    if !(normalization.is_finite() && normalization > 0.0) {
        return Err(MeasureError::UntiltableFamily(format!(
            "E[A^alpha] = {normalization} is not positive and finite"
        )));
    }
    let tilted_law = match model.law() {
        CoupleLaw::DiscreteJoint { atoms } => {
            let tilted: Vec<(f64, f64, f64)> = atoms
                .iter()
                .filter(|&&(a, _, p)| (a > 0.0 || alpha == 0.0) && p > 0.0)
                .map(|&(a, b, p)| {
                    let w = if alpha == 0.0 { 1.0 } else { a.powf(alpha) };
                    (a, b, p * w / normalization)
                })
                .collect();
            if tilted.is_empty() {
                return Err(MeasureError::UntiltableFamily(
                    "tilt removes every atom (A = 0 a.s.)".into(),
                ));
            }
            CoupleLaw::DiscreteJoint { atoms: tilted }
        }
        CoupleLaw::LognormalNormalIndep { mu_a, sigma_a, mu_b, sigma_b } => {
            CoupleLaw::LognormalNormalIndep {
                mu_a: mu_a + alpha * sigma_a * sigma_a,
                sigma_a: *sigma_a,
                mu_b: *mu_b,
                sigma_b: *sigma_b,
            }
        }
        CoupleLaw::AtomPlusDensity { p0, b_at_zero, mu_a, sigma_a, mu_b, sigma_b } => {
            if alpha == 0.0 {
                CoupleLaw::AtomPlusDensity {
                    p0: *p0,
                    b_at_zero: b_at_zero.clone(),
                    mu_a: *mu_a,
                    sigma_a: *sigma_a,
                    mu_b: *mu_b,
                    sigma_b: *sigma_b,
                }
            } else {
                // the atom at zero carries tilt weight 0^alpha = 0
                CoupleLaw::LognormalNormalIndep {
                    mu_a: mu_a + alpha * sigma_a * sigma_a,
                    sigma_a: *sigma_a,
                    mu_b: *mu_b,
                    sigma_b: *sigma_b,
                }
            }
        }
    };
    // The tilted chain is supercritical by design; skip the stability gate.
    let tilted = Model::build_unchecked(tilted_law);
    Ok(TiltedModel { base: model.clone(), tilted, alpha, normalization })
}

/// Which dynamics drive a simulated cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TiltPhase {
    /// Original dynamics throughout.
    None,
    /// Tilted until the first time `|X| > threshold`, original after.
    UntilCrossing,
    /// Tilted throughout.
    Always,
}

/// When a simulated run may stop early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run until the cycle closes (or the step cap).
    CycleEnd,
    /// Stop once the crossing is recorded and the discrepancy series has
    /// converged; used by the tilted constant estimators, whose runs never
    /// close in atom mode.
    CrossingConverged,
}

/// How a cycle ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleKind {
    /// Regeneration cycle of the split chain (started from `phi`).
    Regeneration,
    /// First return of the plain chain to `[-d, d]` from a fixed start.
    FirstReturn { d: f64, x0: f64 },
}

/// One simulated cycle with the quantities the estimators consume.
#[derive(Debug, Clone)]
pub struct CycleRun {
    pub len: usize,
    pub area: f64,
    pub abs_area: f64,
    /// Maximum of `|X_n|` over the cycle states.
    pub max_abs: f64,
    /// Per tracked threshold: `(T, S_T, tilted steps so far)` at the first
    /// exceedance, when it happened before the cycle ended.
    pub crossings: Vec<Option<(usize, f64, usize)>>,
    /// Index into the tracked thresholds that drove the tilt phase.
    pub tilt_index: usize,
    /// Log-walk value after the step that closed the cycle (`-inf` when
    /// that step drew `A = 0`).
    pub s_end: f64,
    /// Tilted steps consumed over the whole run.
    pub tilted_steps: usize,
    /// Whether the cycle actually closed (false only at the step cap).
    pub completed: bool,
    /// Discrepancy limit `Z = X_0 + sum B_k e^{-S_k}`, accumulated until
    /// its terms fall below the tolerance.
    pub z_value: f64,
}

impl CycleRun {
    /// Crossing record of the threshold that drove the tilt phase.
    pub fn crossing(&self) -> Option<(usize, f64, usize)> {
        self.crossings.get(self.tilt_index).copied().flatten()
    }
}

/// Unified cycle simulator.
///
/// Every step draws a coefficient pair from the active law. Regeneration is
/// decided by the retrospective mark with probability
/// `theta * phi(y) / p(x, y)` given the realized transition (the event
/// `A = 0` in atom mode); the mark's conditional law does not depend on
/// which measure drove the innovation, so tilted expectations over the
/// split chain are exactly the reweighted ones.
pub struct CycleSampler<'a> {
    tilt: &'a TiltedModel,
    minor: Option<&'a MinorizationParams>,
    density: Option<TransitionDensity<'a>>,
    kind: CycleKind,
    pub max_steps: usize,
    pub z_tol: f64,
}

impl<'a> CycleSampler<'a> {
    pub fn for_regeneration(
        tilt: &'a TiltedModel,
        minor: &'a MinorizationParams,
    ) -> Result<Self, MeasureError> {
        let density = if minor.is_atom_mode() {
            None
        } else {
            Some(TransitionDensity::new(tilt.base()).map_err(|e| {
                MeasureError::UntiltableFamily(format!("no transition density: {e}"))
            })?)
        };
        if minor.is_atom_mode() && tilt.base().atom_at_zero() >= 1.0 {
            return Err(MeasureError::UntiltableFamily("A = 0 almost surely".into()));
        }
        Ok(CycleSampler {
            tilt,
            minor: Some(minor),
            density,
            kind: CycleKind::Regeneration,
            max_steps: 2_000_000,
            z_tol: 1e-12,
        })
    }

    pub fn for_first_return(tilt: &'a TiltedModel, d: f64, x0: f64) -> Self {
        CycleSampler {
            tilt,
            minor: None,
            density: None,
            kind: CycleKind::FirstReturn { d, x0 },
            max_steps: 2_000_000,
            z_tol: 1e-12,
        }
    }

    pub fn kind(&self) -> CycleKind {
        self.kind
    }

    /// Simulate one cycle under the given tilt phase and crossing threshold.
    pub fn run(&self, phase: TiltPhase, threshold: Option<f64>, rng: &mut ChaCha8Rng) -> CycleRun {
        match threshold {
            Some(t) => self.run_tracked(phase, &[t], 0, StopRule::CycleEnd, rng, None),
            None => self.run_tracked(phase, &[], 0, StopRule::CycleEnd, rng, None),
        }
    }

    /// Like [`CycleSampler::run`] with an explicit early-stop rule.
    pub fn run_until(
        &self,
        phase: TiltPhase,
        threshold: Option<f64>,
        stop: StopRule,
        rng: &mut ChaCha8Rng,
    ) -> CycleRun {
        match threshold {
            Some(t) => self.run_tracked(phase, &[t], 0, stop, rng, None),
            None => self.run_tracked(phase, &[], 0, stop, rng, None),
        }
    }

    /// Like [`CycleSampler::run`], additionally appending the cycle states
    /// `X_0 .. X_{r_1 - 1}` to `out`.
    pub fn run_collect(
        &self,
        phase: TiltPhase,
        threshold: Option<f64>,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<f64>,
    ) -> CycleRun {
        match threshold {
            Some(t) => self.run_tracked(phase, &[t], 0, StopRule::CycleEnd, rng, Some(out)),
            None => self.run_tracked(phase, &[], 0, StopRule::CycleEnd, rng, Some(out)),
        }
    }

    /// Full-control entry point: record first crossings of every threshold
    /// in `track` (which must be sorted ascending); the tilt phase, when
    /// `UntilCrossing`, switches at `track[tilt_index]`.
    pub fn run_tracked(
        &self,
        phase: TiltPhase,
        track: &[f64],
        tilt_index: usize,
        stop: StopRule,
        rng: &mut ChaCha8Rng,
        collect: Option<&mut Vec<f64>>,
    ) -> CycleRun {
        self.run_tracked_from(None, phase, track, tilt_index, stop, rng, collect)
    }

    /// Like [`CycleSampler::run_tracked`] with an explicit start value
    /// overriding the cycle's initial law.
    #[allow(clippy::too_many_arguments)]
    pub fn run_tracked_from(
        &self,
        start: Option<f64>,
        phase: TiltPhase,
        track: &[f64],
        tilt_index: usize,
        stop: StopRule,
        rng: &mut ChaCha8Rng,
        mut collect: Option<&mut Vec<f64>>,
    ) -> CycleRun {
        let x0 = start.unwrap_or_else(|| match self.kind {
            CycleKind::Regeneration => self.minor.expect("regeneration sampler").phi_sample(rng),
            CycleKind::FirstReturn { x0, .. } => x0,
        });
        let mut x = x0;
        let mut s = 0.0f64;
        let mut area = 0.0f64;
        let mut abs_area = 0.0f64;
        let mut max_abs = 0.0f64;
        let mut z = x0;
        let mut z_live = true;
        let mut crossings: Vec<Option<(usize, f64, usize)>> = vec![None; track.len()];
        let mut next_uncrossed = 0usize; // thresholds below this are crossed
        let mut tilted_steps = 0usize;

        for n in 0..self.max_steps {
            // state X_n belongs to the cycle
            if let Some(out) = collect.as_deref_mut() {
                out.push(x);
            }
            area += x;
            abs_area += x.abs();
            max_abs = max_abs.max(x.abs());
            while next_uncrossed < track.len() && x.abs() > track[next_uncrossed] {
                crossings[next_uncrossed] = Some((n, s, tilted_steps));
                next_uncrossed += 1;
            }
            let tilt_crossed = next_uncrossed > tilt_index || track.is_empty();
            if stop == StopRule::CrossingConverged && next_uncrossed > tilt_index && !z_live {
                return CycleRun {
                    len: n,
                    area,
                    abs_area,
                    max_abs,
                    crossings,
                    tilt_index,
                    s_end: s,
                    tilted_steps,
                    completed: false,
                    z_value: z,
                };
            }
            let tilted_now = match phase {
                TiltPhase::None => false,
                TiltPhase::Always => true,
                TiltPhase::UntilCrossing => !tilt_crossed,
            };
            let (a, b) = if tilted_now {
                tilted_steps += 1;
                self.tilt.tilted().sample(rng)
            } else {
                self.tilt.base().sample(rng)
            };
            let y = a * x + b;
            s += a.ln();
            if z_live {
                let decay = (-s).exp();
                z += b * decay;
                if decay < self.z_tol {
                    z_live = false;
                }
            }
            // does step n+1 close the cycle?
            let closes = match self.kind {
                CycleKind::Regeneration => {
                    let minor = self.minor.expect("regeneration sampler");
                    if minor.is_atom_mode() {
                        a == 0.0
                    } else if minor.in_small_set(x) {
                        let p = self.density.as_ref().expect("density mode").eval(x, y);
                        let q = if p > 0.0 {
                            (minor.theta * minor.phi_density(y) / p).min(1.0)
                        } else {
                            0.0
                        };
                        rng.random::<f64>() < q
                    } else {
                        false
                    }
                }
                CycleKind::FirstReturn { d, .. } => y.abs() <= d,
            };
            if closes {
                return CycleRun {
                    len: n + 1,
                    area,
                    abs_area,
                    max_abs,
                    crossings,
                    tilt_index,
                    s_end: s,
                    tilted_steps,
                    completed: true,
                    z_value: z,
                };
            }
            x = y;
        }
        CycleRun {
            len: self.max_steps,
            area,
            abs_area,
            max_abs,
            crossings,
            tilt_index,
            s_end: s,
            tilted_steps,
            completed: false,
            z_value: z,
        }
    }

    /// Importance ratio `d(dual_k)/d(original)` of a realized cycle, where
    /// `dual_k` tilts until the first exceedance of tracked threshold `k`:
    /// `e^{alpha S_T}` for cycles that crossed it, `e^{alpha S_end}` for
    /// cycles that closed first (zero in atom mode, where the closing step
    /// draws `A = 0`).
    pub fn dual_ratio_at(&self, run: &CycleRun, k: usize) -> f64 {
        let alpha = self.tilt.alpha();
        let m = self.tilt.normalization();
        match run.crossings.get(k).copied().flatten() {
            Some((t, s_t, _)) => (alpha * s_t).exp() / m.powi(t as i32),
            None => {
                if run.completed && run.s_end.is_finite() {
                    (alpha * run.s_end).exp() / m.powi(run.len as i32)
                } else {
                    0.0
                }
            }
        }
    }

    /// Ratio at the threshold that drove the tilt phase.
    pub fn dual_ratio(&self, run: &CycleRun) -> f64 {
        self.dual_ratio_at(run, run.tilt_index)
    }

    /// Unbiased weight `d(original)/d(dual)` for a cycle simulated under
    /// the dual phase, on the event that it crossed its tilt threshold.
    pub fn dual_weight(&self, run: &CycleRun) -> Option<f64> {
        run.crossing().map(|(_, s_t, steps)| {
            (-self.tilt.alpha() * s_t).exp() * self.tilt.normalization().powi(steps as i32)
        })
    }
}

/// Report of the perpetuity tail-constant estimation.
#[derive(Debug, Clone, Serialize)]
pub struct CInfinityReport {
    pub goldie: Estimate,
    pub regression: Estimate,
    pub regression_fit: Option<LineFit>,
    pub m_alpha_log: f64,
    pub no_heavy_tail: bool,
    /// |goldie - regression| in combined sigmas.
    pub disagreement_sigma: f64,
    /// Shift of the Goldie estimate when the truncation tolerance halves,
    /// in combined sigmas.
    pub truncation_shift_sigma: f64,
}

/// Estimate `C_inf` in `P(sum_k e^{S_k} > u) ~ C_inf u^{-alpha}`.
///
/// Primary estimator: Goldie's renewal representation for `R = 1 + A R`,
/// `C_inf = E[(1 + A R)^alpha - (A R)^alpha] / (alpha E[A^alpha log A])`,
/// with `R` simulated by backward iteration truncated once the running
/// product falls below `trunc_tol`. Cross-check: tail regression of the
/// directly simulated perpetuity.
pub fn estimate_c_infinity(
    model: &Model,
    alpha: f64,
    n_samples: usize,
    trunc_tol: f64,
    streams: &StreamFactory,
) -> CInfinityReport {
    let m_alpha_log = model.moment_a_log(alpha);

    let goldie_at = |tol: f64, salt: u64| -> Estimate {
        let vals: Vec<f64> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = streams.stream(StreamDomain::GoldieCoupling, salt + i as u64);
                let r = simulate_perpetuity(model, tol, &mut rng);
                let (a, _) = model.sample(&mut rng);
                let ar = a * r;
                (1.0 + ar).powf(alpha) - ar.powf(alpha)
            })
            .collect();
        mean_estimate(&vals).scaled_exact(1.0 / (alpha * m_alpha_log))
    };
    let goldie = goldie_at(trunc_tol, 0);
    let goldie_half = goldie_at(0.5 * trunc_tol, 1_000_000_007);
    let truncation_shift_sigma = if goldie.stderr > 0.0 {
        (goldie.value - goldie_half.value).abs()
            / (goldie.stderr.powi(2) + goldie_half.stderr.powi(2)).sqrt()
    } else {
        0.0
    };

    // Tail regression on directly simulated perpetuities.
    let samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(StreamDomain::Perpetuity, i as u64);
            simulate_perpetuity(model, trunc_tol, &mut rng)
        })
        .collect();
    let q50 = quantile(&samples, 0.5);
    let q_hi = quantile(&samples, 1.0 - 50.0_f64.min(n_samples as f64 / 10.0) / n_samples as f64);
    let no_heavy_tail = !(q_hi > 3.0 * q50);
    let (regression, regression_fit) = if no_heavy_tail {
        (Estimate::new(f64::NAN, f64::NAN, 0), None)
    } else {
        let lo = quantile(&samples, 0.97);
        let hi = q_hi;
        let grid: Vec<f64> = (0..8).map(|j| lo * (hi / lo).powf(j as f64 / 7.0)).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut last_plateau = Estimate::new(f64::NAN, f64::NAN, 0);
        for &u in &grid {
            let hits = samples.iter().filter(|&&w| w > u).count();
            if hits < 10 {
                continue;
            }
            let p = hits as f64 / n_samples as f64;
            xs.push(u.ln());
            ys.push(p.ln());
            let se = (p * (1.0 - p) / n_samples as f64).sqrt();
            last_plateau = Estimate::new(u.powf(alpha) * p, u.powf(alpha) * se, n_samples as u64);
        }
        if xs.len() >= 3 {
            (last_plateau, Some(fit_line(&xs, &ys)))
        } else {
            (Estimate::new(f64::NAN, f64::NAN, 0), None)
        }
    };

    let disagreement_sigma = if regression.value.is_finite() {
        (goldie.value - regression.value).abs()
            / (goldie.stderr.powi(2) + regression.stderr.powi(2)).sqrt()
    } else {
        0.0
    };

    CInfinityReport {
        goldie,
        regression,
        regression_fit,
        m_alpha_log,
        no_heavy_tail,
        disagreement_sigma,
        truncation_shift_sigma,
    }
}

/// One realization of `sum_{k>=0} e^{S_k}`, truncated once the running
/// product drops below `tol` (an `A = 0` draw terminates it exactly).
pub fn simulate_perpetuity(model: &Model, tol: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut total = 1.0f64;
    let mut product = 1.0f64;
    for _ in 0..10_000_000usize {
        let (a, _) = model.sample(rng);
        product *= a;
        if product < tol {
            break;
        }
        total += product;
    }
    total
}

/// The constants that drive every asymptotic downstream.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub alpha: f64,
    pub c_infinity: Estimate,
    pub c_plus: Estimate,
    pub c_minus: Estimate,
    pub e_r1: Estimate,
    pub mu: f64,
    pub survival_prob: Estimate,
    /// Survival probability at the doubled escape level.
    pub survival_prob_doubled: Estimate,
    pub escape_level: f64,
    pub c_infinity_report: CInfinityReport,
    /// Tilted runs that hit the step cap before classification.
    pub anomalies: u64,
}

/// Estimation knobs for [`estimate_cycle_constants`].
#[derive(Debug, Clone, Copy)]
pub struct ConstantsConfig {
    pub budget: usize,
    /// Escape level scale; the effective level is `scale * max(d, 1)`.
    pub escape_scale: f64,
    pub z_tol: f64,
    pub trunc_tol: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig { budget: 100_000, escape_scale: 1e4, z_tol: 1e-12, trunc_tol: 1e-12 }
    }
}

/// Estimate `C_inf`, `C+`, `C-`, `E r_1`, and `mu`.
///
/// Tilted split-chain runs from `X_0 ~ phi` accumulate `Z` and classify
/// `{r_1 = infinity}` by no regeneration before the escape level, with a
/// mandatory doubled-level sensitivity check.
pub fn estimate_cycle_constants(
    model: &Model,
    minor: &MinorizationParams,
    alpha: f64,
    cfg: &ConstantsConfig,
    streams: &StreamFactory,
) -> Result<ConstantsReport, MeasureError> {
    let tilted = tilt(model, alpha)?;
    let mut sampler = CycleSampler::for_regeneration(&tilted, minor)?;
    sampler.z_tol = cfg.z_tol;

    let u_esc = cfg.escape_scale * if minor.d.is_finite() { minor.d.max(1.0) } else { 1.0 };

    struct TiltedOutcome {
        z: f64,
        survived: bool,
        survived_doubled: bool,
        anomaly: bool,
    }

    let outcomes: Vec<TiltedOutcome> = (0..cfg.budget)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(StreamDomain::Tilted, i as u64);
            // Fully tilted run until the doubled escape level resolves the
            // classification at both levels (or the cycle closes first).
            let run = sampler.run_until(
                TiltPhase::Always,
                Some(2.0 * u_esc),
                StopRule::CrossingConverged,
                &mut rng,
            );
            if run.crossing().is_some() {
                // crossed the doubled level before any regeneration
                TiltedOutcome {
                    z: run.z_value,
                    survived: true,
                    survived_doubled: true,
                    anomaly: false,
                }
            } else if run.completed {
                // regenerated; it survives at the single level iff it had
                // already passed u_esc when it closed
                TiltedOutcome {
                    z: run.z_value,
                    survived: run.max_abs > u_esc,
                    survived_doubled: false,
                    anomaly: false,
                }
            } else {
                TiltedOutcome { z: run.z_value, survived: true, survived_doubled: true, anomaly: true }
            }
        })
        .collect();

    let anomalies = outcomes.iter().filter(|o| o.anomaly).count() as u64;
    let surv_vals: Vec<f64> = outcomes.iter().map(|o| if o.survived { 1.0 } else { 0.0 }).collect();
    let surv2_vals: Vec<f64> =
        outcomes.iter().map(|o| if o.survived_doubled { 1.0 } else { 0.0 }).collect();
    let survival_prob = mean_estimate(&surv_vals);
    let survival_prob_doubled = mean_estimate(&surv2_vals);
    let shift = (survival_prob.value - survival_prob_doubled.value).abs();
    if shift > 0.0 {
        let sigma =
            (survival_prob.stderr.powi(2) + survival_prob_doubled.stderr.powi(2)).sqrt();
        let shift_sigma = if sigma > 0.0 { shift / sigma } else { f64::INFINITY };
        if shift_sigma > 2.0 {
            return Err(MeasureError::EscapeAmbiguous { shift_sigma });
        }
    }

    let cinf_report = estimate_c_infinity(model, alpha, cfg.budget, cfg.trunc_tol, streams);
    let c_infinity = cinf_report.goldie;

    let plus_vals: Vec<f64> = outcomes
        .iter()
        .map(|o| if o.survived { o.z.max(0.0).powf(alpha) } else { 0.0 })
        .collect();
    let minus_vals: Vec<f64> = outcomes
        .iter()
        .map(|o| if o.survived { (-o.z).max(0.0).powf(alpha) } else { 0.0 })
        .collect();
    let c_plus = mean_estimate(&plus_vals).scaled_by(&c_infinity);
    let c_minus = mean_estimate(&minus_vals).scaled_by(&c_infinity);

    // E r_1 under the original measure by plain cycle averaging.
    let lens: Vec<f64> = (0..cfg.budget)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(StreamDomain::SplitChain, 500_000_000 + i as u64);
            sampler.run(TiltPhase::None, None, &mut rng).len as f64
        })
        .collect();
    let e_r1 = mean_estimate(&lens);

    Ok(ConstantsReport {
        alpha,
        c_infinity,
        c_plus,
        c_minus,
        e_r1,
        mu: model.fluid_mean(),
        survival_prob,
        survival_prob_doubled,
        escape_level: u_esc,
        c_infinity_report: cinf_report,
        anomalies,
    })
}

/// One point of a dual-importance-sampled tail curve.
#[derive(Debug, Clone, Serialize)]
pub struct TailPoint {
    pub u: f64,
    pub p_plus: Estimate,
    pub p_minus: Estimate,
    pub p_abs: Estimate,
    /// `u^alpha * p_plus`, the plateau value.
    pub u_alpha_p: f64,
    pub effective_samples: f64,
}

/// Tail curve of cycle areas under the dual change of measure.
#[derive(Debug, Clone, Serialize)]
pub struct TailCurve {
    pub alpha: f64,
    pub beta: f64,
    pub points: Vec<TailPoint>,
    /// Fit of `log p_plus` against `log u`.
    pub slope_plus: Option<LineFit>,
    pub slope_abs: Option<LineFit>,
}

/// Estimate `P(area > u)`, `P(area < -u)`, and the absolute-area variant
/// on a grid of levels by dual importance sampling with an untilted
/// complement term.
pub fn dual_is_tail(
    model: &Model,
    minor: Option<&MinorizationParams>,
    kind: CycleKind,
    alpha: f64,
    u_grid: &[f64],
    beta: f64,
    budget: usize,
    streams: &StreamFactory,
) -> Result<TailCurve, MeasureError> {
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    assert!(!u_grid.is_empty());
    let tilted = tilt(model, alpha)?;
    let sampler = match (kind, minor) {
        (CycleKind::Regeneration, Some(m)) => CycleSampler::for_regeneration(&tilted, m)?,
        (CycleKind::FirstReturn { d, x0 }, _) => CycleSampler::for_first_return(&tilted, d, x0),
        (CycleKind::Regeneration, None) => {
            return Err(MeasureError::UntiltableFamily(
                "regeneration tail needs minorization parameters".into(),
            ))
        }
    };

    let dual_budget = budget / 2;
    let plain_budget = budget - dual_budget;

    // Shared plain batch for the complement term
    // 1{area > u, |X| never exceeded u^beta}.
    let plain: Vec<(f64, f64, f64)> = (0..plain_budget)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(StreamDomain::DualIs, 2_000_000_000 + i as u64);
            let run = sampler.run(TiltPhase::None, None, &mut rng);
            (run.area, run.abs_area, run.max_abs)
        })
        .collect();

    let mut points = Vec::with_capacity(u_grid.len());
    for (ui, &u) in u_grid.iter().enumerate() {
        let threshold = u.powf(beta);
        let dual: Vec<(f64, f64, Option<f64>)> = (0..dual_budget)
            .into_par_iter()
            .map(|i| {
                let mut rng =
                    streams.stream(StreamDomain::DualIs, (ui as u64 + 1) * 10_000_000 + i as u64);
                let run = sampler.run(TiltPhase::UntilCrossing, Some(threshold), &mut rng);
                (run.area, run.abs_area, sampler.dual_weight(&run))
            })
            .collect();

        // Effective sample size of the terms that actually contribute to
        // the absolute-area tail (the most populated variant), plus the
        // untilted hits.
        let mut wsum = 0.0f64;
        let mut wsq = 0.0f64;
        for &(_, abs_area, w) in &dual {
            if let Some(w) = w {
                if abs_area > u {
                    wsum += w;
                    wsq += w * w;
                }
            }
        }
        let ess_dual = if wsq > 0.0 { wsum * wsum / wsq } else { 0.0 };
        let plain_hits =
            plain.iter().filter(|&&(_, abs_area, _)| abs_area > u).count() as f64;
        let effective_samples = ess_dual + plain_hits;
        if effective_samples < 100.0 {
            return Err(MeasureError::BudgetTooSmall(effective_samples, u));
        }

        let term = |pred: &dyn Fn(f64, f64) -> bool| -> Estimate {
            let vals: Vec<f64> = dual
                .iter()
                .map(|&(area, abs_area, w)| match w {
                    Some(w) if pred(area, abs_area) => w,
                    _ => 0.0,
                })
                .collect();
            mean_estimate(&vals)
        };
        let complement = |pred: &dyn Fn(f64, f64) -> bool| -> Estimate {
            let vals: Vec<f64> = plain
                .iter()
                .map(|&(area, abs_area, max_abs)| {
                    if max_abs <= threshold && pred(area, abs_area) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            mean_estimate(&vals)
        };
        let combine = |a: Estimate, b: Estimate| -> Estimate {
            Estimate::new(a.value + b.value, (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(), a.n + b.n)
        };

        let p_plus = combine(term(&|area, _| area > u), complement(&|area, _| area > u));
        let p_minus = combine(term(&|area, _| area < -u), complement(&|area, _| area < -u));
        let p_abs = combine(term(&|_, abs| abs > u), complement(&|_, abs| abs > u));
        points.push(TailPoint {
            u,
            u_alpha_p: u.powf(alpha) * p_plus.value,
            p_plus,
            p_minus,
            p_abs,
            effective_samples,
        });
    }

    let fit_of = |sel: &dyn Fn(&TailPoint) -> f64| -> Option<LineFit> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in &points {
            let v = sel(p);
            if v > 0.0 {
                xs.push(p.u.ln());
                ys.push(v.ln());
            }
        }
        (xs.len() >= 3).then(|| fit_line(&xs, &ys))
    };
    let slope_plus = fit_of(&|p| p.p_plus.value);
    let slope_abs = fit_of(&|p| p.p_abs.value);

    Ok(TailCurve { alpha, beta, points, slope_plus, slope_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regen::{find_minorization, MinorizationMode};

    fn two_point() -> Model {
        Model::build(CoupleLaw::DiscreteJoint { atoms: vec![(2.0, 1.0, 0.3), (0.5, 1.0, 0.7)] })
            .unwrap()
    }

    fn atom_model() -> Model {
        Model::build(CoupleLaw::DiscreteJoint {
            atoms: vec![(0.0, 1.0, 0.2), (2.0, 1.0, 0.3), (0.4, 1.0, 0.5)],
        })
        .unwrap()
    }

    #[test]
    fn alpha_of_two_point_model() {
        let cal = solve_alpha(&two_point(), 1e-12).unwrap();
        let exact = (7.0f64 / 3.0).log2();
        assert!((cal.alpha - exact).abs() < 1e-10, "alpha = {}", cal.alpha);
        assert!(cal.residual < 1e-10);
    }

    #[test]
    fn alpha_of_lognormal_model_is_closed_form() {
        let m = Model::build(CoupleLaw::LognormalNormalIndep {
            mu_a: -0.6,
            sigma_a: 0.8f64.sqrt(),
            mu_b: 0.0,
            sigma_b: 1.0,
        })
        .unwrap();
        let cal = solve_alpha(&m, 1e-12).unwrap();
        assert!((cal.alpha - 1.5).abs() < 1e-10);
        assert_eq!(cal.method, CalibrationMethod::ExactMoments);
    }

    #[test]
    fn no_alpha_root_when_a_bounded_below_one() {
        let m = Model::build(CoupleLaw::DiscreteJoint {
            atoms: vec![(0.3, 1.0, 0.5), (0.9, 1.0, 0.5)],
        })
        .unwrap();
        assert!(matches!(solve_alpha(&m, 1e-12), Err(MeasureError::NoAlphaRoot(_))));
    }

    #[test]
    fn mc_calibration_brackets_the_exact_root() {
        let streams = StreamFactory::new(8);
        let cal = solve_alpha_mc(&two_point(), 200_000, &streams).unwrap();
        let exact = (7.0f64 / 3.0).log2();
        assert!((cal.alpha - exact).abs() < 0.05, "alpha = {}", cal.alpha);
        assert_eq!(cal.method, CalibrationMethod::MonteCarloBracket);
    }

    #[test]
    fn tilt_of_two_point_model_swaps_probabilities() {
        let m = two_point();
        let alpha = (7.0f64 / 3.0).log2();
        let t = tilt(&m, alpha).unwrap();
        let CoupleLaw::DiscreteJoint { atoms } = t.tilted().law() else { panic!() };
        // 0.3 * 2^alpha = 0.7 and 0.7 * 0.5^alpha = 0.3
        assert!((atoms[0].2 - 0.7).abs() < 1e-12, "{atoms:?}");
        assert!((atoms[1].2 - 0.3).abs() < 1e-12, "{atoms:?}");
        assert!(t.tilted().e_log_a() > 0.0);
    }

    #[test]
    fn tilt_at_zero_is_identity() {
        let m = two_point();
        let t = tilt(&m, 0.0).unwrap();
        assert_eq!(t.tilted().law(), m.law());
    }

    #[test]
    fn tilt_round_trip_recovers_base_expectation() {
        // E[g(A,B)] = E_tilt[g * m * e^{-alpha log A}] for bounded g.
        let m = two_point();
        let alpha = (7.0f64 / 3.0).log2();
        let t = tilt(&m, alpha).unwrap();
        let streams = StreamFactory::new(77);
        let g = |a: f64, b: f64| (a + b).min(3.0);
        let n = 100_000;
        let mut rng = streams.stream(StreamDomain::Tilted, 9);
        let tilted_vals: Vec<f64> = (0..n)
            .map(|_| {
                let (a, b) = t.tilted().sample(&mut rng);
                g(a, b) * t.step_weight(a)
            })
            .collect();
        let mut rng = streams.stream(StreamDomain::Path, 9);
        let base_vals: Vec<f64> = (0..n)
            .map(|_| {
                let (a, b) = m.sample(&mut rng);
                g(a, b)
            })
            .collect();
        let te = mean_estimate(&tilted_vals);
        let be = mean_estimate(&base_vals);
        assert!(te.agrees_with(&be, 3.0), "tilted {} vs base {}", te.value, be.value);
    }

    #[test]
    fn deterministic_perpetuity_has_no_heavy_tail() {
        // A = 0.5 a.s. with two B values: the perpetuity is exactly 2.
        let m = Model::build(CoupleLaw::DiscreteJoint {
            atoms: vec![(0.5, 0.0, 0.5), (0.5, 1.0, 0.5)],
        })
        .unwrap();
        let streams = StreamFactory::new(4);
        let mut rng = streams.stream(StreamDomain::Perpetuity, 0);
        let w = simulate_perpetuity(&m, 1e-12, &mut rng);
        assert!((w - 2.0).abs() < 1e-9);
        let rep = estimate_c_infinity(&m, 1.5, 4_000, 1e-12, &streams);
        assert!(rep.no_heavy_tail);
    }

    #[test]
    fn goldie_estimator_is_truncation_stable_and_cross_checked() {
        let m = two_point();
        let alpha = (7.0f64 / 3.0).log2();
        let streams = StreamFactory::new(13);
        let rep = estimate_c_infinity(&m, alpha, 40_000, 1e-12, &streams);
        assert!(rep.goldie.value > 0.0);
        assert!(rep.truncation_shift_sigma < 1.0, "shift {} sigma", rep.truncation_shift_sigma);
        assert!(
            rep.disagreement_sigma < 3.0,
            "goldie {} vs regression {} ({} sigma)",
            rep.goldie.value,
            rep.regression.value,
            rep.disagreement_sigma
        );
    }

    #[test]
    fn full_splitting_is_untiltable() {
        // A = 0 with probability one: the tilt removes every atom.
        let m = Model::build_unchecked(CoupleLaw::DiscreteJoint { atoms: vec![(0.0, 1.0, 1.0)] });
        assert!(matches!(tilt(&m, 1.5), Err(MeasureError::UntiltableFamily(_))));
    }

    #[test]
    fn nonnegative_model_has_vanishing_c_minus() {
        let m = atom_model();
        let alpha = solve_alpha(&m, 1e-12).unwrap().alpha;
        let minor = find_minorization(&m, MinorizationMode::AtomAtZero).unwrap();
        let cfg = ConstantsConfig { budget: 20_000, ..Default::default() };
        let streams = StreamFactory::new(21);
        let rep = estimate_cycle_constants(&m, &minor, alpha, &cfg, &streams).unwrap();
        // B >= 0 and P(A=B=0) = 0: Z > 0 under the tilt, so C- is
        // statistically zero and C+ strictly positive.
        assert_eq!(rep.c_minus.value, 0.0);
        assert!(rep.c_plus.value > 0.0);
        // atom-mode regenerations are impossible under the tilt
        assert_eq!(rep.survival_prob.value, 1.0);
        assert!((rep.e_r1.value - 5.0).abs() < 3.0 * rep.e_r1.stderr);
    }

    #[test]
    fn dual_and_plain_tail_estimates_agree_at_small_u() {
        let m = atom_model();
        let alpha = solve_alpha(&m, 1e-12).unwrap().alpha;
        let minor = find_minorization(&m, MinorizationMode::AtomAtZero).unwrap();
        let streams = StreamFactory::new(31);
        let u = 30.0;
        let curve = dual_is_tail(
            &m,
            Some(&minor),
            CycleKind::Regeneration,
            alpha,
            &[u],
            0.7,
            60_000,
            &streams,
        )
        .unwrap();
        // plain Monte Carlo reference on independent streams
        let tilted = tilt(&m, alpha).unwrap();
        let sampler = CycleSampler::for_regeneration(&tilted, &minor).unwrap();
        let hits: Vec<f64> = (0..60_000u64)
            .map(|i| {
                let mut rng = streams.stream(StreamDomain::Path, 40_000_000 + i);
                let run = sampler.run(TiltPhase::None, None, &mut rng);
                if run.area > u {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let plain = mean_estimate(&hits);
        assert!(plain.value * 60_000.0 >= 100.0, "need plain hits for the check");
        let dual = curve.points[0].p_plus;
        assert!(
            dual.agrees_with(&plain, 3.0),
            "dual {} +- {} vs plain {} +- {}",
            dual.value,
            dual.stderr,
            plain.value,
            plain.stderr
        );
    }

    #[test]
    fn dual_weights_are_nonnegative_and_finite() {
        let m = atom_model();
        let alpha = solve_alpha(&m, 1e-12).unwrap().alpha;
        let minor = find_minorization(&m, MinorizationMode::AtomAtZero).unwrap();
        let tilted = tilt(&m, alpha).unwrap();
        let sampler = CycleSampler::for_regeneration(&tilted, &minor).unwrap();
        let streams = StreamFactory::new(41);
        for i in 0..2_000 {
            let mut rng = streams.stream(StreamDomain::DualIs, i);
            let run = sampler.run(TiltPhase::UntilCrossing, Some(50.0), &mut rng);
            if let Some(w) = sampler.dual_weight(&run) {
                assert!(w.is_finite() && w >= 0.0);
            }
        }
    }

    #[test]
    fn tilted_chain_escapes_to_infinity() {
        // Under the tilt, the fraction of paths back near the origin after
        // a long burn-in vanishes.
        let m = two_point();
        let alpha = (7.0f64 / 3.0).log2();
        let t = tilt(&m, alpha).unwrap();
        let streams = StreamFactory::new(51);
        let mut returns = 0;
        let paths = 1_000u64;
        for i in 0..paths {
            let mut rng = streams.stream(StreamDomain::Tilted, 900_000 + i);
            let mut x = 1.0f64;
            let mut came_back = false;
            for n in 0..10_000 {
                let (a, b) = t.tilted().sample(&mut rng);
                x = a * x + b;
                if n >= 1_000 && x.abs() <= 1.0 {
                    came_back = true;
                    break;
                }
            }
            if came_back {
                returns += 1;
            }
        }
        assert!(
            (returns as f64) < 0.01 * paths as f64,
            "{returns}/{paths} tilted paths returned to [-1, 1]"
        );
    }
}
