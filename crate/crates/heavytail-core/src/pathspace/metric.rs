//! Skorokhod-type distances between step functions.
//!
//! `M1'` is the infimum over parametric representations of the extended
//! completed graphs of the larger of the two uniform gaps,
//! `||u_1 - u_2|| v ||v_1 - v_2||`. For step functions both graphs are
//! finite polylines in the `(x, t)` plane and the infimum is the monotone
//! traversal (Frechet) distance under the ground metric
//! `max(|dx|, |dt|)`. We sample the polylines at a certified resolution
//! and run the classical dynamic program, halving the resolution until the
//! value stabilizes.
//!
//! `J1` warps time only: `inf_lambda ||lambda - id|| v ||xi o lambda -
//! zeta||`. For piecewise-constant inputs feasibility of a candidate
//! distance is decidable exactly by propagating the admissible positions of
//! the warped jump times, so the distance is computed by bisection. Drift
//! is handled by staircase approximation at a resolution folded into the
//! error budget.

use thiserror::Error;

use super::step_fn::StepFn;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("resolution overflow: M1' sampling would need more than {0} points")]
    ResolutionOverflow(usize),
}

const MAX_SAMPLES: usize = 10_000_000;

fn ground(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).abs().max((p.1 - q.1).abs())
}

/// Sample a polyline at ground-metric spacing at most `h`, keeping vertices.
fn sample_polyline(pts: &[(f64, f64)], h: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        out.push(a);
        let len = ground(a, b);
        if len > h {
            let k = (len / h).ceil() as usize;
            for i in 1..k {
                let f = i as f64 / k as f64;
                out.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
            }
        }
    }
    out.push(*pts.last().expect("nonempty polyline"));
    out
}

/// Discrete Frechet distance between two point sequences under the
/// `max(|dx|, |dt|)` ground metric; O(N*M) time, two-row memory.
fn discrete_frechet(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    let (n, m) = (p.len(), q.len());
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for i in 0..n {
        for j in 0..m {
            let d = ground(p[i], q[j]);
            let best = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// `M1'` distance between two step functions, within `eps`.
///
/// The sampled discrete distance upper-bounds the continuous traversal
/// distance by at most the sampling resolution, so the loop starts at
/// `h = eps/2` and halves until two successive values differ by less than
/// `eps/4`.
pub fn m1_prime_distance(xi: &StepFn, zeta: &StepFn, eps: f64) -> Result<f64, MetricError> {
    assert!(eps > 0.0);
    let g1 = xi.completed_graph();
    let g2 = zeta.completed_graph();
    let mut h = 0.5 * eps;
    let mut last: Option<f64> = None;
    loop {
        let p = sample_polyline(&g1, h);
        let q = sample_polyline(&g2, h);
        if p.len().saturating_add(q.len()) > MAX_SAMPLES {
            return Err(MetricError::ResolutionOverflow(MAX_SAMPLES));
        }
        let d = discrete_frechet(&p, &q);
        if let Some(prev) = last {
            if (prev - d).abs() < 0.25 * eps {
                return Ok(d);
            }
        }
        last = Some(d);
        h *= 0.5;
    }
}

/// `J1` distance between two step functions, within `eps`.
pub fn j1_distance(xi: &StepFn, zeta: &StepFn, eps: f64) -> f64 {
    assert!(eps > 0.0);
    // Fold drift into small stairs so both paths are piecewise constant.
    let drift_scale = xi.drift().abs() + zeta.drift().abs();
    let (a, b) = if drift_scale > 0.0 {
        let h = 0.25 * eps / drift_scale;
        (staircase(xi, h), staircase(zeta, h))
    } else {
        (to_pieces(xi), to_pieces(zeta))
    };
    // d_J1 <= uniform distance (identity warp), so bisection starts there.
    let mut hi = uniform_upper(&a, &b);
    let mut lo = 0.0f64;
    if hi <= 0.0 {
        return 0.0;
    }
    while hi - lo > 0.5 * eps {
        let mid = 0.5 * (lo + hi);
        if j1_feasible(&a, &b, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Piecewise-constant view: values `v[i]` on `[t[i], t[i+1])` with
/// `t[0] = 0`, plus the closing value at `t = 1`.
struct Pieces {
    starts: Vec<f64>,
    values: Vec<f64>,
    at_one: f64,
}

fn to_pieces(f: &StepFn) -> Pieces {
    let mut starts = vec![0.0];
    let mut values = vec![f.eval(0.0)];
    for j in f.jumps() {
        if j.t == 1.0 {
            break;
        }
        starts.push(j.t);
        values.push(f.eval(j.t));
    }
    Pieces { starts, values, at_one: f.eval(1.0) }
}

fn staircase(f: &StepFn, h: f64) -> Pieces {
    let mut ts: Vec<f64> = vec![0.0];
    let grid = (1.0 / h).ceil() as usize;
    for i in 1..grid {
        ts.push(i as f64 / grid as f64);
    }
    for j in f.jumps() {
        if j.t < 1.0 {
            ts.push(j.t);
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let values = ts.iter().map(|&t| f.eval(t)).collect();
    Pieces { starts: ts, values, at_one: f.eval(1.0) }
}

fn uniform_upper(a: &Pieces, b: &Pieces) -> f64 {
    let mut worst = (a.at_one - b.at_one).abs();
    let mut ts: Vec<f64> = a.starts.iter().chain(b.starts.iter()).copied().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    for &t in &ts {
        worst = worst.max((piece_value(a, t) - piece_value(b, t)).abs());
    }
    worst
}

fn piece_value(p: &Pieces, t: f64) -> f64 {
    match p.starts.binary_search_by(|s| s.total_cmp(&t)) {
        Ok(i) => p.values[i],
        Err(i) => p.values[i - 1],
    }
}

/// Decide whether some warp `lambda` with `||lambda - id|| <= delta`
/// achieves `||xi o lambda - zeta|| <= delta`.
///
/// The warped jump times `u_i` of `xi` must be nondecreasing, lie within
/// `delta` of the original times, and between consecutive warped times the
/// active value of `xi` must agree with `zeta` within `delta`. Reachable
/// positions for each `u_i` form a union of intervals propagated forward.
fn j1_feasible(a: &Pieces, b: &Pieces, delta: f64) -> bool {
    // Closing values always compare at t = 1 (lambda fixes the endpoint).
    if (a.at_one - b.at_one).abs() > delta {
        return false;
    }
    // Cells of zeta compatible with a given value, as maximal intervals.
    let good = |value: f64| -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (k, &bv) in b.values.iter().enumerate() {
            if (value - bv).abs() <= delta {
                let lo = b.starts[k];
                let hi = if k + 1 < b.starts.len() { b.starts[k + 1] } else { 1.0 };
                match out.last_mut() {
                    Some(last) if last.1 >= lo => last.1 = hi,
                    _ => out.push((lo, hi)),
                }
            }
        }
        out
    };

    // reach = set of admissible positions for the warped time of the jump
    // that STARTS the current piece (u_0 = 0 for the initial piece).
    let mut reach: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for i in 0..a.values.len() {
        let comps = good(a.values[i]);
        let next_window = if i + 1 < a.values.len() {
            let s = a.starts[i + 1];
            ((s - delta).max(0.0), (s + delta).min(1.0))
        } else {
            // Final piece: it must stay compatible up to t = 1. Its
            // "next time" is pinned to 1.
            (1.0, 1.0)
        };
        let mut next: Vec<(f64, f64)> = Vec::new();
        // Even a piece of vanishing width exposes its left endpoint (the
        // composed path is right-continuous), so every piece must start
        // inside a compatible component and may end anywhere up to that
        // component's right edge.
        for &(glo, ghi) in &comps {
            // earliest admissible start of the piece within this component
            let mut start: Option<f64> = None;
            for &(lo, hi) in &reach {
                let l = lo.max(glo);
                let h = hi.min(ghi);
                if l <= h {
                    start = Some(match start {
                        Some(s) => s.min(l),
                        None => l,
                    });
                }
            }
            let Some(s) = start else { continue };
            if i + 1 < a.values.len() {
                // the piece may end anywhere in (s, ghi] within the window
                let l = s.max(next_window.0);
                let h = ghi.min(next_window.1);
                if l <= h {
                    next.push((l, h));
                }
            } else if ghi >= 1.0 {
                // final piece must cover [s, 1)
                return true;
            }
        }
        if i + 1 == a.values.len() {
            return false;
        }
        if next.is_empty() {
            return false;
        }
        next.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for iv in next {
            match merged.last_mut() {
                Some(last) if last.1 >= iv.0 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        reach = merged;
    }
    unreachable!("loop returns on the final piece")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(jumps: &[(f64, f64)]) -> StepFn {
        StepFn::new(0.0, 0.0, jumps.to_vec()).unwrap()
    }

    #[test]
    fn identical_paths_have_zero_distance() {
        let f = step(&[(0.25, 1.0), (0.75, -0.5)]);
        assert!(m1_prime_distance(&f, &f, 1e-3).unwrap() < 1e-3);
        assert!(j1_distance(&f, &f, 1e-3) < 1e-3);
    }

    #[test]
    fn unit_jump_versus_zero_path() {
        let f = step(&[(0.5, 1.0)]);
        let z = step(&[]);
        let d = m1_prime_distance(&f, &z, 1e-3).unwrap();
        assert!((d - 1.0).abs() < 2e-3, "d = {d}");
        let dj = j1_distance(&f, &z, 1e-3);
        assert!((dj - 1.0).abs() < 2e-3, "dj = {dj}");
    }

    #[test]
    fn same_sign_jumps_merge_in_m1_but_not_j1() {
        let delta = 0.01;
        let f = step(&[(0.5, 1.0)]);
        let g = step(&[(0.5 - delta, 0.5), (0.5, 0.5)]);
        let dm = m1_prime_distance(&f, &g, 2e-3).unwrap();
        assert!(dm <= delta + 2e-3, "m1' = {dm}");
        let dj = j1_distance(&f, &g, 2e-3);
        assert!(dj >= 0.49, "j1 = {dj}");
        assert!(dj <= 0.5 + 2e-3, "j1 = {dj}");
    }

    #[test]
    fn j1_time_shift_only() {
        // Same unit jump at slightly different times: both metrics see the
        // time offset.
        let f = step(&[(0.5, 1.0)]);
        let g = step(&[(0.55, 1.0)]);
        let dj = j1_distance(&f, &g, 1e-3);
        assert!((dj - 0.05).abs() < 3e-3, "dj = {dj}");
        let dm = m1_prime_distance(&f, &g, 1e-3).unwrap();
        assert!((dm - 0.05).abs() < 3e-3, "dm = {dm}");
    }

    #[test]
    fn m1_bounded_by_j1_on_examples() {
        let pairs = [
            (step(&[(0.3, 1.0), (0.6, -1.0)]), step(&[(0.35, 0.8)])),
            (step(&[(0.2, -0.7)]), step(&[(0.9, 0.4)])),
            (StepFn::new(0.0, 0.5, vec![(0.4, 1.0)]).unwrap(), StepFn::new(0.0, 0.5, vec![]).unwrap()),
        ];
        for (f, g) in &pairs {
            let eps = 2e-3;
            let dm = m1_prime_distance(f, g, eps).unwrap();
            let dj = j1_distance(f, g, eps);
            assert!(dm <= dj + 2.0 * eps, "m1'={dm} j1={dj}");
        }
    }

    #[test]
    fn j1_with_drift_staircase() {
        let f = StepFn::new(0.0, 1.0, vec![]).unwrap();
        let g = StepFn::new(0.2, 1.0, vec![]).unwrap();
        let dj = j1_distance(&f, &g, 5e-3);
        assert!((dj - 0.2).abs() < 1.5e-2, "dj = {dj}");
    }

    #[test]
    fn j1_constant_offset_cannot_be_warped_away() {
        // xi = 1 on [0.1, 1], zeta = 1 everywhere: lambda fixes t = 0 where
        // the values differ by 1, so the distance is 1 despite the tiny
        // time offset.
        let f = step(&[(0.1, 1.0)]);
        let g = StepFn::new(1.0, 0.0, vec![]).unwrap();
        let dj = j1_distance(&f, &g, 1e-3);
        assert!((dj - 1.0).abs() < 3e-3, "dj = {dj}");
    }
}
