//! Cadlag paths of the form `xi(t) = xi(0) + z t + sum_{t_i <= t} s_i` on
//! `[0, 1]`: a linear drift plus finitely many jumps.
//!
//! The left limit at zero is fixed to `xi(0^-) = 0`, so a nonzero initial
//! value counts as a jump at time zero. This matters for the completed
//! graph, whose traversal starts at the anchor `(0, 0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Jump {
    pub t: f64,
    pub size: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepFnError {
    #[error("jump times must be strictly increasing within [0, 1]")]
    BadJumpTimes,
    #[error("jump sizes must be nonzero and finite")]
    BadJumpSize,
}

/// Drift-plus-jumps path on `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepFn {
    initial: f64,
    drift: f64,
    jumps: Vec<Jump>,
}

impl StepFn {
    /// Build from an initial value, drift coefficient, and `(time, size)`
    /// pairs. Times must be strictly increasing in `[0, 1]`; a jump at
    /// exactly `t = 0` is folded into the initial value.
    pub fn new(initial: f64, drift: f64, jumps: Vec<(f64, f64)>) -> Result<StepFn, StepFnError> {
        let mut initial = initial;
        let mut out = Vec::with_capacity(jumps.len());
        let mut prev = 0.0f64;
        for (i, &(t, s)) in jumps.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) || !t.is_finite() {
                return Err(StepFnError::BadJumpTimes);
            }
            if s == 0.0 || !s.is_finite() {
                return Err(StepFnError::BadJumpSize);
            }
            if t == 0.0 {
                if i != 0 {
                    return Err(StepFnError::BadJumpTimes);
                }
                initial += s;
                continue;
            }
            if !out.is_empty() && t <= prev {
                return Err(StepFnError::BadJumpTimes);
            }
            out.push(Jump { t, size: s });
            prev = t;
        }
        Ok(StepFn { initial, drift, jumps: out })
    }

    pub fn constant(v: f64) -> StepFn {
        StepFn { initial: v, drift: 0.0, jumps: vec![] }
    }

    pub fn linear(drift: f64) -> StepFn {
        StepFn { initial: 0.0, drift, jumps: vec![] }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// `xi(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&t));
        let mut v = self.initial + self.drift * t;
        for j in &self.jumps {
            if j.t <= t {
                v += j.size;
            } else {
                break;
            }
        }
        v
    }

    /// `xi(t^-)`, with `xi(0^-) = 0`.
    pub fn eval_left(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let mut v = self.initial + self.drift * t;
        for j in &self.jumps {
            if j.t < t {
                v += j.size;
            } else {
                break;
            }
        }
        v
    }

    pub fn terminal(&self) -> f64 {
        self.eval(1.0)
    }

    /// Supremum of `xi` over `[0, 1]` (left limits included; for a cadlag
    /// piecewise-affine path the supremum is a max over piece endpoints).
    pub fn sup(&self) -> f64 {
        self.extremum(true)
    }

    /// Infimum of `xi` over `[0, 1]`.
    pub fn inf(&self) -> f64 {
        self.extremum(false)
    }

    fn extremum(&self, max: bool) -> f64 {
        let mut best = self.initial; // value at t = 0
        let mut consider = |v: f64| {
            if (max && v > best) || (!max && v < best) {
                best = v;
            }
        };
        let mut cum = self.initial;
        for j in &self.jumps {
            // end of the piece before this jump, then the post-jump value
            consider(cum + self.drift * j.t);
            cum += j.size;
            consider(cum + self.drift * j.t);
        }
        consider(cum + self.drift);
        best
    }

    /// Jump discontinuities, including one at `t = 0` when `xi(0) != 0`.
    pub fn disc(&self) -> Vec<(f64, f64)> {
        let mut d = Vec::with_capacity(self.jumps.len() + 1);
        if self.initial != 0.0 {
            d.push((0.0, self.initial));
        }
        d.extend(self.jumps.iter().map(|j| (j.t, j.size)));
        d
    }

    /// Keep exactly the jumps of size `>= c` (or `|size| >= c` in the
    /// signed variant), dropping drift and initial value: the pure-jump
    /// skeleton of the path's large discontinuities.
    pub fn extract_big_jumps(&self, c: f64, signed: bool) -> StepFn {
        assert!(c > 0.0);
        let mut initial = 0.0;
        let mut jumps = Vec::new();
        for (t, s) in self.disc() {
            let keep = if signed { s.abs() >= c } else { s >= c };
            if keep {
                if t == 0.0 {
                    initial = s;
                } else {
                    jumps.push(Jump { t, size: s });
                }
            }
        }
        StepFn { initial, drift: 0.0, jumps }
    }

    /// Vertices of the extended completed graph as a polyline in the
    /// `(x, t)` plane, beginning at the anchor `(0, 0)`. Vertical segments
    /// realize the jumps; sloped segments realize the drift.
    pub fn completed_graph(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(2 * self.jumps.len() + 4);
        let push = |x: f64, t: f64, pts: &mut Vec<(f64, f64)>| {
            if pts.last().map(|&(px, pt)| px != x || pt != t).unwrap_or(true) {
                pts.push((x, t));
            }
        };
        push(0.0, 0.0, &mut pts);
        push(self.initial, 0.0, &mut pts);
        let mut cum = self.initial;
        for j in &self.jumps {
            push(cum + self.drift * j.t, j.t, &mut pts);
            cum += j.size;
            push(cum + self.drift * j.t, j.t, &mut pts);
        }
        push(cum + self.drift, 1.0, &mut pts);
        pts
    }

    /// Uniform distance to another step function (computed on the merged
    /// breakpoint set; exact for piecewise-affine paths with equal drift
    /// structure, an upper bound in general).
    pub fn uniform_distance(&self, other: &StepFn) -> f64 {
        let mut ts: Vec<f64> = vec![0.0, 1.0];
        ts.extend(self.jumps.iter().map(|j| j.t));
        ts.extend(other.jumps.iter().map(|j| j.t));
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut worst = 0.0f64;
        for &t in &ts {
            worst = worst.max((self.eval(t) - other.eval(t)).abs());
            worst = worst.max((self.eval_left(t) - other.eval_left(t)).abs());
        }
        worst
    }
}

/// Result of the oscillation analysis behind [`min_jumps_to_reach`].
#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    /// Maximal `k` such that times `t_0 < ... < t_k` exist with successive
    /// differences `|xi(t_i) - xi(t_{i-1})| > delta` (alternating in sign
    /// in signed mode).
    pub count: usize,
    /// Times realizing the maximal oscillation.
    pub witness_times: Vec<f64>,
    /// For pure step inputs in signed mode: a certified radius `r` such
    /// that every step path with fewer than `count` jumps is at `M1'`
    /// distance at least `r` from `xi`.
    pub lower_radius: Option<f64>,
}

/// Greedy oscillation count of `xi` at scale `delta`.
///
/// Evaluation points are taken at piece endpoints (the extremes of a
/// piecewise-affine path), so the count is exact for `StepFn` inputs. A
/// path with fewer than `count` sign blocks in its jump sequence cannot
/// shadow the witness within `min |diff|/2` in `M1'`, which yields the
/// certified lower radius in signed mode.
pub fn min_jumps_to_reach(xi: &StepFn, delta: f64, signed: bool) -> OscillationReport {
    assert!(delta > 0.0);
    // Candidate evaluation points: start and left-limit end of every piece.
    let mut cands: Vec<(f64, f64)> = Vec::new();
    let mut ts: Vec<f64> = vec![0.0];
    ts.extend(xi.jumps().iter().map(|j| j.t));
    ts.push(1.0);
    ts.dedup();
    for w in ts.windows(2) {
        let (u, v) = (w[0], w[1]);
        cands.push((u, xi.eval(u)));
        cands.push((v, xi.eval_left(v)));
    }
    cands.push((1.0, xi.eval(1.0)));
    cands.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    let n = cands.len();
    // longest[i] = (best count of differences for a chain ending at i, predecessor)
    let mut best: Vec<usize> = vec![0; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    // In signed mode we also track the sign of the last difference.
    let mut best_signed: Vec<[usize; 2]> = vec![[0, 0]; n]; // [last diff down, last diff up]
    let mut pred_signed: Vec<[Option<(usize, usize)>; 2]> = vec![[None, None]; n];

    for i in 0..n {
        for j in 0..i {
            if cands[j].0 > cands[i].0 {
                continue;
            }
            let diff = cands[i].1 - cands[j].1;
            if diff.abs() <= delta {
                continue;
            }
            if !signed {
                if best[j] + 1 > best[i] {
                    best[i] = best[j] + 1;
                    pred[i] = Some(j);
                }
            } else {
                let dir = if diff > 0.0 { 1 } else { 0 };
                // A chain arriving at j whose last difference had the
                // opposite direction can be extended; so can a fresh start.
                let base = best_signed[j][1 - dir];
                if base + 1 > best_signed[i][dir] {
                    best_signed[i][dir] = base + 1;
                    pred_signed[i][dir] =
                        Some((j, if best_signed[j][1 - dir] > 0 { 1 - dir } else { 2 }));
                }
            }
        }
    }

    let (count, witness_times) = if !signed {
        let (mut i, mut c) = (0, 0);
        for k in 0..n {
            if best[k] > c {
                c = best[k];
                i = k;
            }
        }
        let mut times = vec![cands[i].0];
        let mut cur = i;
        while let Some(p) = pred[cur] {
            times.push(cands[p].0);
            cur = p;
        }
        times.reverse();
        (c, if c == 0 { vec![] } else { times })
    } else {
        let (mut i, mut dir, mut c) = (0, 0, 0);
        for k in 0..n {
            for d in 0..2 {
                if best_signed[k][d] > c {
                    c = best_signed[k][d];
                    i = k;
                    dir = d;
                }
            }
        }
        let mut times = vec![];
        if c > 0 {
            times.push(cands[i].0);
            let (mut cur, mut cd) = (i, dir);
            while let Some((p, pd)) = pred_signed[cur][cd] {
                times.push(cands[p].0);
                if pd == 2 {
                    break;
                }
                cur = p;
                cd = pd;
            }
            times.reverse();
        }
        (c, times)
    };

    // Certified lower radius: in signed mode, the witness values alternate
    // by at least min|diff|; a step path shadowing xi within r makes the
    // same alternating moves of size > min|diff| - 2r, and a traversal of a
    // step-function graph needs one sign block per alternation.
    let lower_radius = if signed && count > 0 && xi.drift() == 0.0 {
        let vals: Vec<f64> = witness_times.iter().map(|&t| xi.eval(t)).collect();
        let min_diff = vals.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
        Some(0.5 * min_diff)
    } else {
        None
    };

    OscillationReport { count, witness_times, lower_radius }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(jumps: &[(f64, f64)]) -> StepFn {
        StepFn::new(0.0, 0.0, jumps.to_vec()).unwrap()
    }

    #[test]
    fn eval_and_left_limits() {
        let f = step(&[(0.5, 1.0)]);
        assert_eq!(f.eval(0.4), 0.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval_left(0.5), 0.0);
        assert_eq!(f.eval(1.0), 1.0);
        assert_eq!(f.eval_left(0.0), 0.0);
    }

    #[test]
    fn sup_inf_with_drift() {
        let f = StepFn::new(0.0, -1.0, vec![(0.5, 2.0)]).unwrap();
        // path: -t on [0, 0.5), 2 - t on [0.5, 1]
        assert!((f.sup() - 1.5).abs() < 1e-15);
        assert!((f.inf() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn big_jump_extraction_keeps_threshold_jumps() {
        let f = step(&[(0.2, 0.3), (0.6, 2.0)]);
        let g = f.extract_big_jumps(1.0, false);
        assert_eq!(g.jumps().len(), 1);
        assert_eq!(g.jumps()[0].t, 0.6);
        assert_eq!(g.jumps()[0].size, 2.0);
        // threshold above every jump: the zero path
        let h = f.extract_big_jumps(5.0, false);
        assert!(h.jumps().is_empty() && h.initial() == 0.0);
    }

    #[test]
    fn big_jump_extraction_is_idempotent() {
        let f = step(&[(0.2, 0.3), (0.4, -1.5), (0.6, 2.0)]);
        let once = f.extract_big_jumps(1.0, true);
        let twice = once.extract_big_jumps(1.0, true);
        assert_eq!(once, twice);
    }

    #[test]
    fn completed_graph_traces_anchor_and_verticals() {
        let f = step(&[(0.5, 1.0)]);
        let g = f.completed_graph();
        assert_eq!(g, vec![(0.0, 0.0), (0.0, 0.5), (1.0, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn oscillation_zero_path() {
        let f = step(&[]);
        let r = min_jumps_to_reach(&f, 0.3, false);
        assert_eq!(r.count, 0);
        let r = min_jumps_to_reach(&f, 0.3, true);
        assert_eq!(r.count, 0);
    }

    #[test]
    fn oscillation_alternating_square_wave() {
        // values 0, 1, 0, 1: three alternating differences of size 1
        let f = step(&[(0.3, 1.0), (0.6, -1.0), (0.9, 1.0)]);
        let r = min_jumps_to_reach(&f, 0.9, true);
        assert_eq!(r.count, 3);
        assert_eq!(r.lower_radius, Some(0.5));
    }

    #[test]
    fn oscillation_monotone_staircase() {
        // values 0,1,2,3: unsigned chains can reuse the total rise, but in
        // signed mode a monotone path has no alternation beyond one move.
        let f = step(&[(0.25, 1.0), (0.5, 1.0), (0.75, 1.0)]);
        let unsigned = min_jumps_to_reach(&f, 0.5, false);
        assert_eq!(unsigned.count, 3);
        let signed = min_jumps_to_reach(&f, 0.5, true);
        assert_eq!(signed.count, 1);
        let signed_big = min_jumps_to_reach(&f, 3.5, true);
        assert_eq!(signed_big.count, 0);
    }

    #[test]
    fn serde_round_trip() {
        let f = StepFn::new(0.5, -0.25, vec![(0.3, 1.0), (0.9, -2.0)]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: StepFn = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
    }
}
