//! The affine recursion `X_{n+1} = A_{n+1} X_n + B_{n+1}` and its
//! coefficient laws.
//!
//! A [`CoupleLaw`] describes the joint distribution of `(A, B)`. The closed
//! set of families was chosen so that every member admits either exact
//! moments or an exact exponential tilt, which the measure-change machinery
//! requires. [`Model::build`] validates the stability and non-degeneracy
//! conditions (`E log A < 0`, the map `x -> Ax + B` does not fix a point
//! almost surely) before any simulation is allowed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pathspace::StepFn;
use crate::rng::{StreamDomain, StreamFactory};
use crate::stats::{mean_estimate, Estimate};

/// Relative tolerance for the discrepancy identity `Z_n e^{S_n} = X_n`.
pub const DISCREPANCY_TOL: f64 = 1e-12;

/// A scalar distribution used for the regeneration law `phi` and for the
/// `B`-component at an `A = 0` atom.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarLaw {
    Point { value: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
    Uniform { lo: f64, hi: f64 },
    Normal { mu: f64, sigma: f64 },
}

impl ScalarLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScalarLaw::Point { value } => *value,
            ScalarLaw::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().map(|&(v, _)| v).unwrap_or(0.0)
            }
            ScalarLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ScalarLaw::Normal { mu, sigma } => {
                if *sigma == 0.0 {
                    *mu
                } else {
                    mu + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Point { value } => *value,
            ScalarLaw::Discrete { atoms } => atoms.iter().map(|&(v, p)| v * p).sum(),
            ScalarLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarLaw::Normal { mu, .. } => *mu,
        }
    }

    /// CDF, used by the regeneration-law KS test.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ScalarLaw::Point { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarLaw::Discrete { atoms } => {
                atoms.iter().filter(|&&(v, _)| v <= x).map(|&(_, p)| p).sum()
            }
            ScalarLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            ScalarLaw::Normal { mu, sigma } => {
                if *sigma == 0.0 {
                    if x >= *mu {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf((x - mu) / sigma)
                }
            }
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        match self {
            ScalarLaw::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(ModelError::InvalidSpec("empty discrete scalar law".into()));
                }
                let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
                if atoms.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9
                {
                    return Err(ModelError::InvalidSpec(
                        "scalar law probabilities must lie in [0,1] and sum to 1".into(),
                    ));
                }
                Ok(())
            }
            ScalarLaw::Uniform { lo, hi } => {
                if lo < hi {
                    Ok(())
                } else {
                    Err(ModelError::InvalidSpec("uniform law needs lo < hi".into()))
                }
            }
            ScalarLaw::Normal { sigma, .. } => {
                if *sigma >= 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(ModelError::InvalidSpec("normal law needs sigma >= 0".into()))
                }
            }
            ScalarLaw::Point { .. } => Ok(()),
        }
    }
}

/// Standard normal CDF via the complementary error function (Abramowitz &
/// Stegun 7.1.26 rational approximation, |error| < 1.5e-7; adequate for
/// diagnostics and KS tests).
pub fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x >= 0.0 { erf } else { -erf };
    0.5 * (1.0 + erf)
}

/// Joint law of the coefficient pair `(A, B)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoupleLaw {
    /// Finitely many atoms `(a, b, p)` with `a >= 0`.
    DiscreteJoint { atoms: Vec<(f64, f64, f64)> },
    /// `A ~ LogNormal(mu_a, sigma_a)` independent of `B ~ Normal(mu_b, sigma_b)`.
    LognormalNormalIndep { mu_a: f64, sigma_a: f64, mu_b: f64, sigma_b: f64 },
    /// `P(A = 0) = p0` with `B | A=0 ~ b_at_zero`; given `A > 0` the pair is
    /// lognormal x normal as above.
    AtomPlusDensity {
        p0: f64,
        b_at_zero: ScalarLaw,
        mu_a: f64,
        sigma_a: f64,
        mu_b: f64,
        sigma_b: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unstable model: E[log A] = {elog} >= 0")]
    UnstableModel { elog: f64 },
    #[error("degenerate model: A x + B = x almost surely at x = {fixed_point}")]
    DegenerateModel { fixed_point: f64 },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
}

/// A validated coefficient law with cached exact moments.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Model {
    law: CoupleLaw,
    e_log_a: f64,
    e_a: f64,
    e_b: f64,
}

impl Model {
    pub fn build(law: CoupleLaw) -> Result<Model, ModelError> {
        match &law {
            CoupleLaw::DiscreteJoint { atoms } => {
                if atoms.is_empty() {
                    return Err(ModelError::InvalidSpec("no atoms".into()));
                }
                let total: f64 = atoms.iter().map(|&(_, _, p)| p).sum();
                if atoms.iter().any(|&(_, _, p)| !(0.0..=1.0).contains(&p))
                    || (total - 1.0).abs() > 1e-9
                {
                    return Err(ModelError::InvalidSpec(
                        "atom probabilities must lie in [0,1] and sum to 1".into(),
                    ));
                }
                if atoms.iter().any(|&(a, _, _)| a < 0.0 || !a.is_finite()) {
                    return Err(ModelError::InvalidSpec("A must be nonnegative".into()));
                }
            }
            CoupleLaw::LognormalNormalIndep { sigma_a, sigma_b, .. } => {
                if !(*sigma_a > 0.0) {
                    return Err(ModelError::InvalidSpec("sigma_a must be positive".into()));
                }
                if !(*sigma_b >= 0.0) {
                    return Err(ModelError::InvalidSpec("sigma_b must be nonnegative".into()));
                }
            }
            CoupleLaw::AtomPlusDensity { p0, b_at_zero, sigma_a, sigma_b, .. } => {
                if !(0.0..=1.0).contains(p0) {
                    return Err(ModelError::InvalidSpec("p0 must lie in [0,1]".into()));
                }
                if !(*sigma_a > 0.0) || !(*sigma_b >= 0.0) {
                    return Err(ModelError::InvalidSpec("invalid lognormal/normal scales".into()));
                }
                b_at_zero.validate()?;
            }
        }

        let e_log_a = exact_e_log_a(&law);
        // Strictly supercritical models are rejected before the degeneracy
        // check; the boundary case E[log A] = 0 is rejected after it, so an
        // identity-map law reports as degenerate rather than unstable.
        if e_log_a > 0.0 {
            return Err(ModelError::UnstableModel { elog: e_log_a });
        }
        if let Some(fixed_point) = degenerate_fixed_point(&law) {
            return Err(ModelError::DegenerateModel { fixed_point });
        }
        if e_log_a >= 0.0 {
            return Err(ModelError::UnstableModel { elog: e_log_a });
        }

        let e_a = exact_moment_a(&law, 1.0);
        let e_b = exact_e_b(&law);
        Ok(Model { law, e_log_a, e_a, e_b })
    }

    /// Build without the stability and degeneracy gate.
    ///
    /// Deterministic boundary fixtures (e.g. `A = 1/2`, `B = 1`, which fixes
    /// `x = 2`) are useful as arithmetic ground truth in tests and
    /// diagnostics even though they violate the standing assumptions.
    pub fn build_unchecked(law: CoupleLaw) -> Model {
        let e_log_a = exact_e_log_a(&law);
        let e_a = exact_moment_a(&law, 1.0);
        let e_b = exact_e_b(&law);
        Model { law, e_log_a, e_a, e_b }
    }

    pub fn law(&self) -> &CoupleLaw {
        &self.law
    }

    /// Draw one coefficient pair `(A, B)`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match &self.law {
            CoupleLaw::DiscreteJoint { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(a, b, p) in atoms {
                    acc += p;
                    if u < acc {
                        return (a, b);
                    }
                }
                let &(a, b, _) = atoms.last().expect("nonempty");
                (a, b)
            }
            CoupleLaw::LognormalNormalIndep { mu_a, sigma_a, mu_b, sigma_b } => {
                let a = (mu_a + sigma_a * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp();
                let b = if *sigma_b == 0.0 {
                    *mu_b
                } else {
                    Normal::new(*mu_b, *sigma_b).expect("validated").sample(rng)
                };
                (a, b)
            }
            CoupleLaw::AtomPlusDensity { p0, b_at_zero, mu_a, sigma_a, mu_b, sigma_b } => {
                let u: f64 = rng.random();
                if u < *p0 {
                    (0.0, b_at_zero.sample(rng))
                } else {
                    let a =
                        (mu_a + sigma_a * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp();
                    let b = if *sigma_b == 0.0 {
                        *mu_b
                    } else {
                        Normal::new(*mu_b, *sigma_b).expect("validated").sample(rng)
                    };
                    (a, b)
                }
            }
        }
    }

    /// Exact `E[A^s]` (with the convention `0^s = 0` for `s > 0`).
    pub fn moment_a(&self, s: f64) -> f64 {
        exact_moment_a(&self.law, s)
    }

    /// Exact `E[A^s log A]`; the `A = 0` atom contributes zero.
    pub fn moment_a_log(&self, s: f64) -> f64 {
        match &self.law {
            CoupleLaw::DiscreteJoint { atoms } => atoms
                .iter()
                .filter(|&&(a, _, _)| a > 0.0)
                .map(|&(a, _, p)| p * a.powf(s) * a.ln())
                .sum(),
            CoupleLaw::LognormalNormalIndep { mu_a, sigma_a, .. } => {
                let m = (mu_a * s + 0.5 * sigma_a * sigma_a * s * s).exp();
                m * (mu_a + sigma_a * sigma_a * s)
            }
            CoupleLaw::AtomPlusDensity { p0, mu_a, sigma_a, .. } => {
                let m = (mu_a * s + 0.5 * sigma_a * sigma_a * s * s).exp();
                (1.0 - p0) * m * (mu_a + sigma_a * sigma_a * s)
            }
        }
    }

    pub fn e_log_a(&self) -> f64 {
        self.e_log_a
    }

    pub fn e_a(&self) -> f64 {
        self.e_a
    }

    pub fn e_b(&self) -> f64 {
        self.e_b
    }

    /// Fluid drift `mu = E[B] / (1 - E[A])` of the scaled additive path.
    pub fn fluid_mean(&self) -> f64 {
        self.e_b / (1.0 - self.e_a)
    }

    /// Exact `E|B|^q` when the family admits one.
    pub fn abs_b_moment(&self, q: f64) -> Option<f64> {
        match &self.law {
            CoupleLaw::DiscreteJoint { atoms } => {
                Some(atoms.iter().map(|&(_, b, p)| p * b.abs().powf(q)).sum())
            }
            _ => None,
        }
    }

    /// Probability of the `A = 0` atom.
    pub fn atom_at_zero(&self) -> f64 {
        match &self.law {
            CoupleLaw::DiscreteJoint { atoms } => {
                atoms.iter().filter(|&&(a, _, _)| a == 0.0).map(|&(_, _, p)| p).sum()
            }
            CoupleLaw::LognormalNormalIndep { .. } => 0.0,
            CoupleLaw::AtomPlusDensity { p0, .. } => *p0,
        }
    }

    /// Law of `B` conditioned on `A = 0`, when the atom exists.
    pub fn b_given_zero(&self) -> Option<ScalarLaw> {
        match &self.law {
            CoupleLaw::DiscreteJoint { atoms } => {
                let p0: f64 =
                    atoms.iter().filter(|&&(a, _, _)| a == 0.0).map(|&(_, _, p)| p).sum();
                if p0 <= 0.0 {
                    return None;
                }
                let conditional: Vec<(f64, f64)> = atoms
                    .iter()
                    .filter(|&&(a, _, _)| a == 0.0)
                    .map(|&(_, b, p)| (b, p / p0))
                    .collect();
                Some(if conditional.len() == 1 {
                    ScalarLaw::Point { value: conditional[0].0 }
                } else {
                    ScalarLaw::Discrete { atoms: conditional }
                })
            }
            CoupleLaw::LognormalNormalIndep { .. } => None,
            CoupleLaw::AtomPlusDensity { p0, b_at_zero, .. } => {
                if *p0 > 0.0 {
                    Some(b_at_zero.clone())
                } else {
                    None
                }
            }
        }
    }

    /// Whether `A` has a continuous component (used by the degeneracy and
    /// lattice checks).
    pub fn is_continuous(&self) -> bool {
        !matches!(self.law, CoupleLaw::DiscreteJoint { .. })
    }
}

fn exact_moment_a(law: &CoupleLaw, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    match law {
        CoupleLaw::DiscreteJoint { atoms } => atoms
            .iter()
            .map(|&(a, _, p)| if a == 0.0 { 0.0 } else { p * a.powf(s) })
            .sum(),
        CoupleLaw::LognormalNormalIndep { mu_a, sigma_a, .. } => {
            (mu_a * s + 0.5 * sigma_a * sigma_a * s * s).exp()
        }
        CoupleLaw::AtomPlusDensity { p0, mu_a, sigma_a, .. } => {
            (1.0 - p0) * (mu_a * s + 0.5 * sigma_a * sigma_a * s * s).exp()
        }
    }
}

fn exact_e_log_a(law: &CoupleLaw) -> f64 {
    match law {
        CoupleLaw::DiscreteJoint { atoms } => {
            if atoms.iter().any(|&(a, _, p)| a == 0.0 && p > 0.0) {
                f64::NEG_INFINITY
            } else {
                atoms.iter().map(|&(a, _, p)| p * a.ln()).sum()
            }
        }
        CoupleLaw::LognormalNormalIndep { mu_a, .. } => *mu_a,
        CoupleLaw::AtomPlusDensity { p0, mu_a, .. } => {
            if *p0 > 0.0 {
                f64::NEG_INFINITY
            } else {
                *mu_a
            }
        }
    }
}

fn exact_e_b(law: &CoupleLaw) -> f64 {
    match law {
        CoupleLaw::DiscreteJoint { atoms } => atoms.iter().map(|&(_, b, p)| p * b).sum(),
        CoupleLaw::LognormalNormalIndep { mu_b, .. } => *mu_b,
        CoupleLaw::AtomPlusDensity { p0, b_at_zero, mu_b, .. } => {
            p0 * b_at_zero.mean() + (1.0 - p0) * mu_b
        }
    }
}

/// Fixed point `x*` with `P(A x* + B = x*) = 1`, if one exists.
///
/// Only atomic laws can fix a point with probability one; continuous
/// families can do so only via the degenerate pair `A` arbitrary, `B = 0`,
/// `x* = 0`.
fn degenerate_fixed_point(law: &CoupleLaw) -> Option<f64> {
    match law {
        CoupleLaw::DiscreteJoint { atoms } => {
            let live: Vec<(f64, f64)> =
                atoms.iter().filter(|&&(_, _, p)| p > 0.0).map(|&(a, b, _)| (a, b)).collect();
            // A candidate must satisfy a x + b = x for every live atom.
            // Atoms with a = 1 force b = 0 and leave x free.
            let mut candidate: Option<f64> = None;
            for &(a, b) in &live {
                if a == 1.0 {
                    if b != 0.0 {
                        return None;
                    }
                } else {
                    let x = b / (1.0 - a);
                    match candidate {
                        None => candidate = Some(x),
                        Some(c) => {
                            if (c - x).abs() > 1e-12 * c.abs().max(x.abs()).max(1.0) {
                                return None;
                            }
                        }
                    }
                }
            }
            if live.iter().all(|&(a, b)| a == 1.0 && b == 0.0) {
                return Some(0.0); // identity map fixes every x
            }
            candidate
        }
        CoupleLaw::LognormalNormalIndep { mu_b, sigma_b, .. } => {
            if *sigma_b == 0.0 && *mu_b == 0.0 {
                Some(0.0)
            } else {
                None
            }
        }
        CoupleLaw::AtomPlusDensity { p0, b_at_zero, mu_b, sigma_b, .. } => {
            let zero_at_atom = match b_at_zero {
                ScalarLaw::Point { value } => *value == 0.0,
                _ => false,
            };
            let b_zero_cont = *sigma_b == 0.0 && *mu_b == 0.0;
            if (*p0 == 0.0 || zero_at_atom) && (*p0 == 1.0 || b_zero_cont) {
                Some(0.0)
            } else {
                None
            }
        }
    }
}

/// One simulated trajectory of the recursion together with the
/// multiplicative walk `S_n = sum log A_i` and the discrepancy
/// `Z_n = X_n e^{-S_n}`.
#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub x0: f64,
    pub states: Vec<f64>,
    pub log_products: Vec<f64>,
    pub discrepancies: Vec<f64>,
    pub rng_stamp: (u64, u64),
}

/// Simulate `n` steps from `x0`; `states` has length `n + 1`.
///
/// The stream is consumed exactly once per step, so a fixed
/// `(seed, stream)` replays the identical trajectory.
pub fn simulate_path(
    model: &Model,
    n: usize,
    x0: f64,
    rng: &mut ChaCha8Rng,
    rng_stamp: (u64, u64),
) -> PathSample {
    assert!(n >= 1, "need at least one step");
    let mut states = Vec::with_capacity(n + 1);
    let mut log_products = Vec::with_capacity(n + 1);
    let mut discrepancies = Vec::with_capacity(n + 1);
    let mut x = x0;
    let mut s = 0.0f64;
    states.push(x);
    log_products.push(s);
    discrepancies.push(x);
    for _ in 0..n {
        let (a, b) = model.sample(rng);
        x = a * x + b;
        s += a.ln();
        states.push(x);
        log_products.push(s);
        discrepancies.push(x * (-s).exp());
    }
    PathSample { x0, states, log_products, discrepancies, rng_stamp }
}

/// The scaled additive path `t -> (1/n) sum_{i < floor(nt)} X_i` as a pure
/// step function on `[0, 1]` with jump times `k/n`.
pub fn scaled_additive_path(path: &PathSample, n: usize) -> StepFn {
    assert!(path.states.len() >= n, "path too short for horizon {n}");
    scaled_path_from_states(&path.states[..n], n)
}

/// Same as [`scaled_additive_path`] but directly from a state slice
/// `X_0 .. X_{n-1}`.
pub fn scaled_path_from_states(states: &[f64], n: usize) -> StepFn {
    assert!(states.len() <= n);
    let mut jumps = Vec::with_capacity(states.len());
    for (k, &x) in states.iter().enumerate() {
        if x != 0.0 {
            jumps.push(((k + 1) as f64 / n as f64, x / n as f64));
        }
    }
    StepFn::new(0.0, 0.0, jumps).expect("jump times strictly increasing by construction")
}

/// Drift-condition constants for `h(x) = |x|^eps + 1`.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCheck {
    pub eps: f64,
    pub gamma: f64,
    pub rho: f64,
    pub level_m: f64,
    pub pass: bool,
}

/// Numerical report on the standing assumptions. Diagnostics never abort.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDiagnostics {
    pub e_log_a: Estimate,
    pub e_a: f64,
    pub e_b: f64,
    pub alpha: f64,
    pub a_alpha_moment: f64,
    pub a_alpha_unit_pass: bool,
    pub a_alpha_log_stable: bool,
    pub abs_b_moment_stable: bool,
    pub arithmetic_log_support: bool,
    pub lattice_span: Option<f64>,
    pub drift: DriftCheck,
}

/// Check `E[A^alpha] = 1`, moment-stability proxies, the lattice structure
/// of `log A`, and the drift condition, at the given Monte Carlo budget.
pub fn check_assumptions(
    model: &Model,
    alpha: f64,
    mc_budget: usize,
    streams: &StreamFactory,
) -> ModelDiagnostics {
    assert!(alpha > 1.0, "alpha must exceed 1");
    let a_alpha_moment = model.moment_a(alpha);
    let a_alpha_unit_pass = (a_alpha_moment - 1.0).abs() < 1e-9;

    // Stability proxies: compare sample moments at budget and doubled budget.
    let moment_mc = |q_pow: &dyn Fn(f64, f64) -> f64, budget: usize, idx: u64| -> Estimate {
        let mut rng = streams.stream(StreamDomain::Diagnostics, idx);
        let vals: Vec<f64> = (0..budget)
            .map(|_| {
                let (a, b) = model.sample(&mut rng);
                q_pow(a, b)
            })
            .collect();
        mean_estimate(&vals)
    };
    let f_alog = |a: f64, _b: f64| {
        if a > 1.0 {
            a.powf(alpha) * a.ln()
        } else {
            0.0
        }
    };
    let eps = 0.5;
    let f_babs = |_a: f64, b: f64| b.abs().powf(alpha + eps);
    let m1 = moment_mc(&f_alog, mc_budget, 1);
    let m2 = moment_mc(&f_alog, 2 * mc_budget, 2);
    let a_alpha_log_stable = m1.agrees_with(&m2, 3.0);
    let b1 = moment_mc(&f_babs, mc_budget, 3);
    let b2 = moment_mc(&f_babs, 2 * mc_budget, 4);
    let abs_b_moment_stable = b1.agrees_with(&b2, 3.0);

    let (arithmetic_log_support, lattice_span) = lattice_check(model);

    // Drift bound: E h(Ax+B) <= E[A^eps] |x|^eps + E|B|^eps + 1 for eps <= 1,
    // so gamma halfway between E[A^eps] and 1 works outside a compact set.
    let d_eps = 0.5 * (alpha - 1.0).min(1.0);
    let kappa = model.moment_a(d_eps);
    let e_b_eps = model.abs_b_moment(d_eps).unwrap_or_else(|| {
        let mut rng = streams.stream(StreamDomain::Diagnostics, 5);
        let vals: Vec<f64> = (0..mc_budget)
            .map(|_| {
                let (_, b) = model.sample(&mut rng);
                b.abs().powf(d_eps)
            })
            .collect();
        mean_estimate(&vals).value
    });
    let gamma = 0.5 * (1.0 + kappa);
    let rho = e_b_eps + 1.0 - kappa;
    let level = (rho / (gamma - kappa) - 1.0).max(0.0).powf(1.0 / d_eps);
    let drift = DriftCheck {
        eps: d_eps,
        gamma,
        rho,
        level_m: level,
        pass: kappa < 1.0 && gamma < 1.0,
    };

    let e_log = if model.e_log_a().is_finite() {
        Estimate::new(model.e_log_a(), 0.0, 0)
    } else {
        Estimate::new(f64::NEG_INFINITY, 0.0, 0)
    };

    ModelDiagnostics {
        e_log_a: e_log,
        e_a: model.e_a(),
        e_b: model.e_b(),
        alpha,
        a_alpha_moment,
        a_alpha_unit_pass,
        a_alpha_log_stable,
        abs_b_moment_stable,
        arithmetic_log_support,
        lattice_span,
        drift,
    }
}

/// Exact lattice detection for discrete laws: `log A` restricted to
/// `{A > 0}` is arithmetic iff its support lies on `delta * Z` for some
/// `delta > 0`, i.e. the log-values share a real gcd (up to 1e-9).
/// Continuous families pass vacuously.
fn lattice_check(model: &Model) -> (bool, Option<f64>) {
    let CoupleLaw::DiscreteJoint { atoms } = model.law() else {
        return (false, None);
    };
    let mut logs: Vec<f64> = atoms
        .iter()
        .filter(|&&(a, _, p)| a > 0.0 && p > 0.0)
        .map(|&(a, _, _)| a.ln())
        .collect();
    logs.sort_by(f64::total_cmp);
    logs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let nonzero: Vec<f64> = logs.iter().map(|l| l.abs()).filter(|l| *l > 1e-12).collect();
    if nonzero.is_empty() {
        // A == 1 on {A > 0}: log-support {0} sits on every lattice.
        return (true, Some(0.0));
    }
    let mut g = nonzero[0];
    for &v in &nonzero[1..] {
        g = real_gcd(g, v, 1e-9);
        if g < 1e-9 {
            return (false, None);
        }
    }
    let on_lattice = |x: f64| (x / g - (x / g).round()).abs() < 1e-7;
    if nonzero.iter().all(|&v| on_lattice(v)) {
        (true, Some(g))
    } else {
        (false, None)
    }
}

fn real_gcd(a: f64, b: f64, tol: f64) -> f64 {
    let (mut x, mut y) = (a.max(b), a.min(b));
    while y > tol {
        let r = x % y;
        x = y;
        y = r;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamDomain;

    fn two_point() -> Model {
        Model::build(CoupleLaw::DiscreteJoint {
            atoms: vec![(2.0, 1.0, 0.3), (0.5, 1.0, 0.7)],
        })
        .unwrap()
    }

    #[test]
    fn two_point_model_is_stable() {
        let m = two_point();
        let expected = -0.4 * std::f64::consts::LN_2;
        assert!((m.e_log_a() - expected).abs() < 1e-14);
    }

    #[test]
    fn single_atom_above_one_is_unstable() {
        let err = Model::build(CoupleLaw::DiscreteJoint { atoms: vec![(1.5, 0.0, 1.0)] })
            .unwrap_err();
        assert!(matches!(err, ModelError::UnstableModel { .. }));
    }

    #[test]
    fn identity_map_is_degenerate() {
        let err =
            Model::build(CoupleLaw::DiscreteJoint { atoms: vec![(1.0, 0.0, 1.0)] }).unwrap_err();
        assert!(matches!(err, ModelError::DegenerateModel { .. }));
    }

    #[test]
    fn affine_fixed_point_is_degenerate() {
        // a = 0.5, b = 1 as the sole atom fixes x = 2 with probability one.
        let err = Model::build(CoupleLaw::DiscreteJoint { atoms: vec![(0.5, 1.0, 1.0)] })
            .unwrap_err();
        assert!(matches!(err, ModelError::DegenerateModel { fixed_point } if (fixed_point - 2.0).abs() < 1e-12));
    }

    #[test]
    fn deterministic_path_values() {
        let m = Model::build_unchecked(CoupleLaw::DiscreteJoint { atoms: vec![(0.5, 1.0, 1.0)] });
        let streams = StreamFactory::new(1);
        let mut rng = streams.stream(StreamDomain::Path, 0);
        let p = simulate_path(&m, 3, 0.0, &mut rng, (1, 0));
        assert_eq!(p.states, vec![0.0, 1.0, 1.5, 1.75]);
        // Z_2 = X_2 e^{-S_2} = 1.5 * 4 = 6
        assert!((p.discrepancies[2] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn replay_determinism_and_discrepancy_identity() {
        let m = two_point();
        let streams = StreamFactory::new(42);
        let mut r1 = streams.stream(StreamDomain::Path, 5);
        let mut r2 = streams.stream(StreamDomain::Path, 5);
        let p1 = simulate_path(&m, 2000, 0.0, &mut r1, (42, 5));
        let p2 = simulate_path(&m, 2000, 0.0, &mut r2, (42, 5));
        assert_eq!(p1.states, p2.states);
        for n in 0..p1.states.len() {
            let recon = p1.discrepancies[n] * p1.log_products[n].exp();
            let tol = DISCREPANCY_TOL * p1.states[n].abs().max(1.0);
            assert!((recon - p1.states[n]).abs() <= tol);
        }
    }

    #[test]
    fn stationary_mean_matches_fixed_point() {
        // E X = E B / (1 - E A) = 1 / 0.05 = 20 for the two-point law.
        let m = two_point();
        assert!((m.fluid_mean() - 20.0).abs() < 1e-12);
        let streams = StreamFactory::new(7);
        let mut rng = streams.stream(StreamDomain::Path, 0);
        let p = simulate_path(&m, 1_000_000, 0.0, &mut rng, (7, 0));
        let est = mean_estimate(&p.states[1000..]);
        // Dependent samples: compare against a generous multiple of the
        // i.i.d. stderr to keep the check meaningful but stable.
        assert!(
            (est.value - 20.0).abs() < 30.0 * est.stderr,
            "mean {} stderr {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn scaled_path_staircase() {
        let p = PathSample {
            x0: 1.0,
            states: vec![1.0, 2.0, 3.0],
            log_products: vec![0.0; 3],
            discrepancies: vec![0.0; 3],
            rng_stamp: (0, 0),
        };
        let f = scaled_additive_path(&p, 3);
        assert_eq!(f.eval(0.0), 0.0);
        assert!((f.eval(0.34) - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.eval(0.67) - 1.0).abs() < 1e-15);
        assert!((f.eval(1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn scaled_path_zero_states() {
        let p = PathSample {
            x0: 0.0,
            states: vec![0.0; 5],
            log_products: vec![0.0; 5],
            discrepancies: vec![0.0; 5],
            rng_stamp: (0, 0),
        };
        let f = scaled_additive_path(&p, 5);
        assert_eq!(f.jumps().len(), 0);
        assert_eq!(f.eval(1.0), 0.0);
    }

    #[test]
    fn scaled_path_tracks_fluid_line() {
        // Constant states X = 2 give the staircase of 2t with step 2/n.
        let n = 100;
        let states = vec![2.0; n];
        let f = scaled_path_from_states(&states, n);
        let mut worst: f64 = 0.0;
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            worst = worst.max((f.eval(t) - 2.0 * t).abs());
        }
        assert!(worst <= 2.0 / n as f64 + 1e-12, "worst deviation {worst}");
    }

    #[test]
    fn assumption_check_two_point() {
        let m = two_point();
        let alpha = (7.0f64 / 3.0).log2();
        let streams = StreamFactory::new(3);
        let d = check_assumptions(&m, alpha, 20_000, &streams);
        assert!(d.a_alpha_unit_pass, "E A^alpha = {}", d.a_alpha_moment);
        assert!((d.a_alpha_moment - 1.0).abs() < 1e-12);
        // log-support {ln 2, -ln 2} is a lattice with span ln 2
        assert!(d.arithmetic_log_support);
        assert!((d.lattice_span.unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(d.drift.pass && d.drift.gamma > 0.0 && d.drift.gamma < 1.0);
    }

    #[test]
    fn assumption_check_lognormal_exact_alpha() {
        let m = Model::build(CoupleLaw::LognormalNormalIndep {
            mu_a: -0.6,
            sigma_a: 0.8f64.sqrt(),
            mu_b: 0.0,
            sigma_b: 1.0,
        })
        .unwrap();
        // E A^1.5 = exp(-0.6*1.5 + 0.4*2.25) = exp(0) = 1
        assert!((m.moment_a(1.5) - 1.0).abs() < 1e-12);
        let streams = StreamFactory::new(3);
        let d = check_assumptions(&m, 1.5, 10_000, &streams);
        assert!(d.a_alpha_unit_pass);
        assert!(!d.arithmetic_log_support);
    }

    #[test]
    fn nonarithmetic_three_atom_support() {
        let m = Model::build(CoupleLaw::DiscreteJoint {
            atoms: vec![(0.0, 1.0, 0.2), (2.0, 1.0, 0.3), (0.4, 1.0, 0.5)],
        })
        .unwrap();
        let (arith, _) = lattice_check(&m);
        assert!(!arith, "ln 2 and ln 0.4 are incommensurable");
    }
}
