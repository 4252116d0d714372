//! Path events as a closed combinator language, and the minimal number of
//! jumps a drift path needs to realize them.
//!
//! Events are built from threshold primitives on the terminal value, the
//! running supremum/infimum, and time slices, combined with `And`/`Or`.
//! Membership is decided exactly for [`StepFn`] inputs.
//!
//! `jump_index` computes the smallest `j` such that some path
//! `z*id + sum_{i<=j} x_i 1_{[u_i,1]}` lies in the event (all `x_i > 0` in
//! nondecreasing mode). Fixing for each jump the zone it occupies relative
//! to the slice times, and for each running-extremum primitive the
//! breakpoint witnessing it, every primitive becomes an interval constraint
//! on the cumulative jump sums `C_r`, which decouples coordinate by
//! coordinate; the search enumerates those finitely many combinatorial
//! choices and verifies a constructed witness path exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::step_fn::StepFn;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SlicePred {
    AtLeast(f64),
    AtMost(f64),
}

/// A measurable path event with analyzable jump geometry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum EventSet {
    TerminalAtLeast(f64),
    TerminalAtMost(f64),
    RunningSupAtLeast(f64),
    RunningInfAtMost(f64),
    /// Closure complement of `RunningSupAtLeast`: the whole path stays at
    /// or below the level.
    RunningSupAtMost(f64),
    /// Closure complement of `RunningInfAtMost`: the whole path stays at
    /// or above the level.
    RunningInfAtLeast(f64),
    TimeSlice { t: f64, pred: SlicePred },
    And(Vec<EventSet>),
    Or(Vec<EventSet>),
}

impl EventSet {
    /// Uniform tube of radius `r` around the drift line `z * id`, as the
    /// conjunction of the two closure primitives (exact for `z = 0`;
    /// membership for general `z` should use shifted coordinates).
    pub fn centered_tube(r: f64) -> EventSet {
        EventSet::And(vec![EventSet::RunningSupAtMost(r), EventSet::RunningInfAtLeast(-r)])
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("unsupported event: {0}")]
    Unsupported(String),
    #[error("no path with at most {0} jumps satisfies the event")]
    JumpBudgetExceeded(usize),
}

/// Precomputed facts about one path, for bulk membership tests.
#[derive(Debug, Clone)]
pub struct PathFacts {
    pub terminal: f64,
    pub sup: f64,
    pub inf: f64,
    /// Values at the slice times requested via [`EventSet::slice_times`].
    pub slice_values: Vec<f64>,
}

impl PathFacts {
    /// Facts for the scaled additive path built from `states = X_0..X_{m-1}`
    /// over horizon `n` (partial sums at `k/n`).
    pub fn from_scaled_states(states: &[f64], n: usize, slice_times: &[f64]) -> PathFacts {
        let inv = 1.0 / n as f64;
        let mut sum = 0.0f64;
        let mut sup = 0.0f64;
        let mut inf = 0.0f64;
        let mut partial = Vec::with_capacity(states.len() + 1);
        partial.push(0.0);
        for &x in states {
            sum += x * inv;
            partial.push(sum);
            if sum > sup {
                sup = sum;
            }
            if sum < inf {
                inf = sum;
            }
        }
        let slice_values = slice_times
            .iter()
            .map(|&t| {
                let k = ((n as f64 * t).floor() as usize).min(partial.len() - 1);
                partial[k]
            })
            .collect();
        PathFacts { terminal: sum, sup, inf, slice_values }
    }

    pub fn from_step_fn(f: &StepFn, slice_times: &[f64]) -> PathFacts {
        PathFacts {
            terminal: f.terminal(),
            sup: f.sup(),
            inf: f.inf(),
            slice_values: slice_times.iter().map(|&t| f.eval(t)).collect(),
        }
    }
}

impl EventSet {
    /// The barrier event of a down-in option: `xi(1) >= a_plus` and
    /// `inf xi <= -a_minus`.
    pub fn barrier(a_minus: f64, a_plus: f64) -> EventSet {
        EventSet::And(vec![
            EventSet::TerminalAtLeast(a_plus),
            EventSet::RunningInfAtMost(-a_minus),
        ])
    }

    /// Distinct slice times appearing in the tree, sorted.
    pub fn slice_times(&self) -> Vec<f64> {
        let mut ts = Vec::new();
        self.collect_slices(&mut ts);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    fn collect_slices(&self, out: &mut Vec<f64>) {
        match self {
            EventSet::TimeSlice { t, .. } => out.push(*t),
            EventSet::And(v) | EventSet::Or(v) => v.iter().for_each(|e| e.collect_slices(out)),
            _ => {}
        }
    }

    /// Exact membership for a step function.
    pub fn contains(&self, f: &StepFn) -> bool {
        let slices = self.slice_times();
        let facts = PathFacts::from_step_fn(f, &slices);
        self.eval_facts(&facts, &slices)
    }

    /// Membership from precomputed path facts (the slice times must be the
    /// ones returned by [`EventSet::slice_times`]).
    pub fn eval_facts(&self, facts: &PathFacts, slice_times: &[f64]) -> bool {
        match self {
            EventSet::TerminalAtLeast(a) => facts.terminal >= *a,
            EventSet::TerminalAtMost(a) => facts.terminal <= *a,
            EventSet::RunningSupAtLeast(b) => facts.sup >= *b,
            EventSet::RunningInfAtMost(c) => facts.inf <= *c,
            EventSet::RunningSupAtMost(b) => facts.sup <= *b,
            EventSet::RunningInfAtLeast(c) => facts.inf >= *c,
            EventSet::TimeSlice { t, pred } => {
                let idx = slice_times
                    .iter()
                    .position(|s| s == t)
                    .expect("slice time collected from this tree");
                match pred {
                    SlicePred::AtLeast(a) => facts.slice_values[idx] >= *a,
                    SlicePred::AtMost(a) => facts.slice_values[idx] <= *a,
                }
            }
            EventSet::And(v) => v.iter().all(|e| e.eval_facts(facts, slice_times)),
            EventSet::Or(v) => v.iter().any(|e| e.eval_facts(facts, slice_times)),
        }
    }

    /// Disjunctive normal form over primitive leaves.
    fn dnf(&self) -> Result<Vec<Vec<EventSet>>, EventError> {
        match self {
            EventSet::And(v) => {
                let mut clauses: Vec<Vec<EventSet>> = vec![vec![]];
                for child in v {
                    let child_cl = child.dnf()?;
                    let mut merged = Vec::new();
                    for c in &clauses {
                        for d in &child_cl {
                            let mut m = c.clone();
                            m.extend(d.iter().cloned());
                            merged.push(m);
                        }
                    }
                    clauses = merged;
                }
                Ok(clauses)
            }
            EventSet::Or(v) => {
                let mut clauses = Vec::new();
                for child in v {
                    clauses.extend(child.dnf()?);
                }
                Ok(clauses)
            }
            leaf => Ok(vec![vec![leaf.clone()]]),
        }
    }
}

/// Whether jump sizes are sign-free or restricted to the nondecreasing
/// class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpMode {
    OneSided,
    TwoSided,
}

/// Result of the jump-count analysis.
#[derive(Debug, Clone, Serialize)]
pub struct JumpIndexReport {
    /// Minimal number of jumps of a drift-`z` step path inside the event.
    pub count: usize,
    /// Certified lower bound on the `M1'` distance from the event to the
    /// class of drift-`z` paths with fewer than `count` jumps, when the
    /// separation argument applies.
    pub separation: Option<f64>,
    /// A verified member path with exactly `count` jumps.
    #[serde(skip)]
    pub witness: StepFn,
}

const MAX_JUMPS: usize = 4;
const MAX_PRIMITIVES: usize = 6;

/// Minimal jump count `J_z(E)` (two-sided) or the nondecreasing variant
/// (one-sided), with a separation radius where the standard argument
/// applies.
pub fn jump_index(event: &EventSet, z: f64, mode: JumpMode) -> Result<JumpIndexReport, EventError> {
    let clauses = event.dnf()?;
    for clause in &clauses {
        if clause.len() > MAX_PRIMITIVES {
            return Err(EventError::Unsupported(format!(
                "clause with {} primitives exceeds the budget of {MAX_PRIMITIVES}",
                clause.len()
            )));
        }
        for p in clause {
            if let EventSet::TimeSlice { t, .. } = p {
                if !(*t > 0.0 && *t <= 1.0) {
                    return Err(EventError::Unsupported("slice time must lie in (0, 1]".into()));
                }
            }
        }
    }

    for j in 0..=MAX_JUMPS {
        let mut best: Option<StepFn> = None;
        for clause in &clauses {
            if let Some(w) = clause_witness(clause, event, z, j, mode) {
                best = Some(w);
                break;
            }
        }
        if let Some(witness) = best {
            let separation = separation_radius(&clauses, z, j, mode);
            return Ok(JumpIndexReport { count: j, separation, witness });
        }
    }
    Err(EventError::JumpBudgetExceeded(MAX_JUMPS))
}

/// Try to construct a verified witness with exactly `j` jumps for one
/// And-clause.
fn clause_witness(
    clause: &[EventSet],
    full_event: &EventSet,
    z: f64,
    j: usize,
    mode: JumpMode,
) -> Option<StepFn> {
    // Slice times partition (0, 1] into zones; a jump in zone k occurs at
    // or before slice k+1 and after slice k.
    let mut slice_ts: Vec<f64> = clause
        .iter()
        .filter_map(|p| match p {
            EventSet::TimeSlice { t, .. } => Some(*t),
            _ => None,
        })
        .collect();
    slice_ts.sort_by(f64::total_cmp);
    slice_ts.dedup();
    let zones: Vec<(f64, f64)> = {
        let mut edges = vec![0.0];
        edges.extend(slice_ts.iter().copied());
        if *edges.last().unwrap() < 1.0 {
            edges.push(1.0);
        }
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    };

    if j == 0 {
        let f = StepFn::linear(z);
        return full_event.contains(&f).then_some(f);
    }

    let running: Vec<&EventSet> = clause
        .iter()
        .filter(|p| {
            matches!(p, EventSet::RunningSupAtLeast(_) | EventSet::RunningInfAtMost(_))
        })
        .collect();

    // Witness options per running primitive: time 0, time 1, or the value
    // just before/after jump r at a zone endpoint.
    #[derive(Clone, Copy)]
    enum Witness {
        AtZero,
        AtOne,
        Jump { r: usize, pre: bool, tau_hi: bool },
    }
    let witness_options = |_p: &EventSet| -> Vec<Witness> {
        let mut v = vec![Witness::AtZero, Witness::AtOne];
        for r in 1..=j {
            for pre in [false, true] {
                for tau_hi in [false, true] {
                    v.push(Witness::Jump { r, pre, tau_hi });
                }
            }
        }
        v
    };

    // Enumerate jump counts per zone.
    let assignments = compositions(j, zones.len());
    let mut witness_choice_sets: Vec<Vec<Witness>> = vec![vec![]];
    for p in &running {
        let opts = witness_options(p);
        let mut next = Vec::new();
        for base in &witness_choice_sets {
            for &o in &opts {
                let mut b = base.clone();
                b.push(o);
                next.push(b);
            }
        }
        witness_choice_sets = next;
    }

    for assign in &assignments {
        // zone_of[r] for jump r (1-indexed), cumulative slice counts
        let mut zone_of = vec![0usize; j + 1];
        {
            let mut r = 1;
            for (zi, &cnt) in assign.iter().enumerate() {
                for _ in 0..cnt {
                    zone_of[r] = zi;
                    r += 1;
                }
            }
        }
        // jumps at or before slice k: zones 0..k hold them
        let cum_at_slice = |k: usize| -> usize {
            assign[..=k.min(assign.len() - 1)].iter().take(k).sum::<usize>()
        };

        'choices: for choice in &witness_choice_sets {
            // interval constraints on C_r, r = 0..j (C_0 = 0)
            let mut lo = vec![f64::NEG_INFINITY; j + 1];
            let mut hi = vec![f64::INFINITY; j + 1];
            lo[0] = 0.0;
            hi[0] = 0.0;
            let clamp_ge = |r: usize, v: f64, lo: &mut Vec<f64>| {
                if v > lo[r] {
                    lo[r] = v;
                }
            };
            let clamp_le = |r: usize, v: f64, hi: &mut Vec<f64>| {
                if v < hi[r] {
                    hi[r] = v;
                }
            };
            // Desired tau position per jump (fraction of its zone), refined
            // by witness choices.
            let mut tau_pref: Vec<Option<bool>> = vec![None; j + 1];

            let mut witness_iter = choice.iter();
            for p in clause {
                match p {
                    EventSet::TerminalAtLeast(a) => clamp_ge(j, a - z, &mut lo),
                    EventSet::TerminalAtMost(a) => clamp_le(j, a - z, &mut hi),
                    EventSet::TimeSlice { t, pred } => {
                        let k = slice_ts.iter().position(|s| s == t).unwrap() + 1;
                        let r = cum_at_slice(k);
                        match pred {
                            SlicePred::AtLeast(a) => clamp_ge(r, a - z * t, &mut lo),
                            SlicePred::AtMost(a) => clamp_le(r, a - z * t, &mut hi),
                        }
                    }
                    EventSet::RunningSupAtMost(b) | EventSet::RunningInfAtLeast(b) => {
                        // Universal constraint: every piece of the path must
                        // respect the level, using the worst-case drift
                        // contribution over the piece's possible time range.
                        let is_sup = matches!(p, EventSet::RunningSupAtMost(_));
                        for r in 0..=j {
                            let t_lo = if r == 0 { 0.0 } else { zones[zone_of[r]].0 };
                            let t_hi = if r == j { 1.0 } else { zones[zone_of[r + 1]].1 };
                            if is_sup {
                                let drift_max = (z * t_lo).max(z * t_hi);
                                clamp_le(r, b - drift_max, &mut hi);
                            } else {
                                let drift_min = (z * t_lo).min(z * t_hi);
                                clamp_ge(r, b - drift_min, &mut lo);
                            }
                        }
                    }
                    EventSet::RunningSupAtLeast(b) | EventSet::RunningInfAtMost(b) => {
                        let is_sup = matches!(p, EventSet::RunningSupAtLeast(_));
                        let w = *witness_iter.next().expect("one choice per running primitive");
                        match w {
                            Witness::AtZero => {
                                // value at 0 is exactly 0
                                let ok = if is_sup { 0.0 >= *b } else { 0.0 <= *b };
                                if !ok {
                                    continue 'choices;
                                }
                            }
                            Witness::AtOne => {
                                if is_sup {
                                    clamp_ge(j, b - z, &mut lo);
                                } else {
                                    clamp_le(j, b - z, &mut hi);
                                }
                            }
                            Witness::Jump { r, pre, tau_hi } => {
                                let (zl, zh) = zones[zone_of[r]];
                                let tau = if tau_hi { zh } else { zl };
                                if let Some(prev) = tau_pref[r] {
                                    if prev != tau_hi {
                                        continue 'choices;
                                    }
                                } else {
                                    tau_pref[r] = Some(tau_hi);
                                }
                                let idx = if pre { r - 1 } else { r };
                                if is_sup {
                                    clamp_ge(idx, b - z * tau, &mut lo);
                                } else {
                                    clamp_le(idx, b - z * tau, &mut hi);
                                }
                            }
                        }
                    }
                    EventSet::And(_) | EventSet::Or(_) => unreachable!("clause is flat"),
                }
            }

            // Feasibility of the interval chain (C_0 = 0 must satisfy any
            // tube constraints applied to it).
            let mut c = vec![0.0; j + 1];
            let mut ok = lo[0] <= 0.0 && hi[0] >= 0.0;
            match mode {
                JumpMode::TwoSided => {
                    for r in 1..=j {
                        if !ok || lo[r] > hi[r] {
                            ok = false;
                            break;
                        }
                        c[r] = pick_in(lo[r], hi[r]);
                    }
                }
                JumpMode::OneSided => {
                    let mut prev = 0.0f64;
                    for r in 1..=j {
                        let l = lo[r].max(prev);
                        if !ok || l > hi[r] {
                            ok = false;
                            break;
                        }
                        // keep strictly increasing with a visible margin
                        let v = pick_in(l, hi[r]);
                        let v = if v <= prev { prev + (hi[r] - prev) * 0.5 } else { v };
                        if v <= prev {
                            ok = false;
                            break;
                        }
                        c[r] = v;
                        prev = v;
                    }
                }
            }
            if !ok {
                continue;
            }

            // Construct candidate witnesses: jump times inside their zones
            // honoring tau preferences, sizes from the chain.
            for shrink in [0.25, 0.05, 0.005] {
                let mut times = vec![0.0; j + 1];
                for r in 1..=j {
                    let (zl, zh) = zones[zone_of[r]];
                    let width = zh - zl;
                    let base = match tau_pref[r] {
                        Some(true) => zh - shrink * width * 0.5,
                        Some(false) => zl + shrink * width * 0.5,
                        None => zl + width * 0.5,
                    };
                    times[r] = base;
                }
                // enforce strict increase without leaving zones
                for r in 2..=j {
                    if times[r] <= times[r - 1] {
                        let (zl, zh) = zones[zone_of[r]];
                        let candidate = (times[r - 1] + 1e-6).min(zh - 1e-12);
                        times[r] = candidate.max(zl + 1e-12);
                    }
                }
                let mut increasing = true;
                for r in 2..=j {
                    if times[r] <= times[r - 1] {
                        increasing = false;
                    }
                }
                if !increasing {
                    continue;
                }
                let mut jumps = Vec::with_capacity(j);
                let mut sizes_ok = true;
                for r in 1..=j {
                    let size = c[r] - c[r - 1];
                    if size == 0.0 || (mode == JumpMode::OneSided && size <= 0.0) {
                        sizes_ok = false;
                        break;
                    }
                    jumps.push((times[r], size));
                }
                if !sizes_ok {
                    continue;
                }
                if let Ok(f) = StepFn::new(0.0, z, jumps) {
                    if full_event.contains(&f) {
                        return Some(f);
                    }
                }
            }
        }
    }
    None
}

fn pick_in(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (false, false) => 1.0,
    }
}

/// Compositions of `j` into `parts` nonnegative summands.
fn compositions(j: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![j]];
    }
    let mut out = Vec::new();
    for head in 0..=j {
        for mut tail in compositions(j - head, parts - 1) {
            let mut v = vec![head];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Conservative separation radius between the event and the class of
/// drift-`z` paths with fewer than `count` jumps, for the clause shapes
/// where the parametric-representation argument applies.
fn separation_radius(clauses: &[Vec<EventSet>], z: f64, count: usize, mode: JumpMode) -> Option<f64> {
    if count == 0 {
        return None;
    }
    // Every clause must admit a positive radius; the event radius is the
    // minimum over clauses (the event is the union).
    let mut radius: f64 = f64::INFINITY;
    for clause in clauses {
        let r = match clause.as_slice() {
            [EventSet::TerminalAtLeast(a)] if count == 1 => {
                // |xi(1) - z| <= d for any parametric matching, so E is at
                // distance >= a - z from the zero-jump path.
                let gap = a - z;
                (gap > 0.0).then_some(gap)
            }
            [EventSet::RunningSupAtLeast(b)] if count == 1 => {
                let gap = b - z.max(0.0);
                (gap > 0.0).then_some(gap)
            }
            [EventSet::RunningInfAtMost(c)] if count == 1 && mode == JumpMode::TwoSided => {
                let gap = z.min(0.0) - c;
                (gap > 0.0).then_some(gap)
            }
            [EventSet::TimeSlice { t, pred: SlicePred::AtLeast(a) }] if count == 1 => {
                // A matched graph point near (xi(t), t) pins the drift path
                // to |a - z v| <= d with |v - t| <= d.
                let gap = (a - z * t) / (1.0 + z.abs());
                (gap > 0.0).then_some(gap)
            }
            _ => barrier_clause_radius(clause, z, count),
        };
        match r {
            Some(v) => radius = radius.min(v),
            None => return None,
        }
    }
    radius.is_finite().then_some(radius)
}

/// The two-jump barrier clause `{xi(1) >= a_plus, inf xi <= -a_minus}`:
/// the endpoint argument forces an up jump of at least `a_plus - max(z,0)`
/// and the barrier forces a down jump of at least `a_minus - max(-z,0)`,
/// so paths with a single jump stay away by half the smaller excess.
fn barrier_clause_radius(clause: &[EventSet], z: f64, count: usize) -> Option<f64> {
    if count != 2 || clause.len() != 2 {
        return None;
    }
    let mut a_plus = None;
    let mut a_minus = None;
    for p in clause {
        match p {
            EventSet::TerminalAtLeast(a) => a_plus = Some(*a),
            EventSet::RunningInfAtMost(c) => a_minus = Some(-*c),
            _ => return None,
        }
    }
    let (a_plus, a_minus) = (a_plus?, a_minus?);
    let up = a_plus - z.max(0.0);
    let down = a_minus - (-z).max(0.0);
    (up > 0.0 && down > 0.0).then(|| 0.5 * up.min(down))
}
