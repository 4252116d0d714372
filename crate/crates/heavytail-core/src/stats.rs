//! Small statistical toolbox shared by the estimators: summary statistics,
//! least-squares slope fits, Kolmogorov-Smirnov tests, the Hill tail-index
//! estimator, elementary symmetric polynomials, and adaptive quadrature.

use serde::Serialize;

/// A point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: u64) -> Self {
        Self { value, stderr, n }
    }

    /// 99.7%-style interval used throughout the validation suite.
    pub fn ci3(&self) -> (f64, f64) {
        (self.value - 3.0 * self.stderr, self.value + 3.0 * self.stderr)
    }

    /// Whether two independent estimates agree within `k` combined sigmas.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        let s = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        (self.value - other.value).abs() <= k * s
    }

    /// Scale by an (independent) estimated factor, propagating both errors.
    pub fn scaled_by(&self, factor: &Estimate) -> Estimate {
        let value = self.value * factor.value;
        let var = (factor.value * self.stderr).powi(2) + (self.value * factor.stderr).powi(2);
        Estimate::new(value, var.sqrt(), self.n.min(factor.n))
    }

    /// Scale by an exactly known constant.
    pub fn scaled_exact(&self, c: f64) -> Estimate {
        Estimate::new(self.value * c, self.stderr * c.abs(), self.n)
    }
}

/// Sample mean with standard error of the mean.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN, 0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate::new(mean, f64::INFINITY, 1);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    Estimate::new(mean, (var / n as f64).sqrt(), n as u64)
}

/// Binomial proportion with its standard error.
pub fn proportion_estimate(hits: u64, n: u64) -> Estimate {
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN, 0);
    }
    let p = hits as f64 / n as f64;
    Estimate::new(p, (p * (1.0 - p) / n as f64).sqrt(), n)
}

/// Ordinary least-squares line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(xs.len() >= 2, "need at least two points to fit a line");
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let dof = (xs.len() as f64 - 2.0).max(1.0);
    let slope_stderr = (sse / dof / sxx).sqrt();
    LineFit { slope, intercept, r2, slope_stderr }
}

/// Asymptotic survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test; returns `(statistic, p_value)`.
///
/// The p-value uses the asymptotic Kolmogorov distribution, which is
/// conservative for discrete data.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    assert!(n > 0 && m > 0);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// One-sample KS test against an arbitrary CDF; returns `(statistic, p_value)`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> (f64, f64) {
    let mut xs: Vec<f64> = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    assert!(n > 0);
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n as f64).abs());
        d = d.max(((i as f64 + 1.0) / n as f64 - f).abs());
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    (d, kolmogorov_q(lambda))
}

/// Hill estimator of the tail index from the top `k` order statistics.
///
/// `alpha_hat = k / sum_{i<k} ln(x_(i) / x_(k))` with `x_(0) >= x_(1) >= ...`.
pub fn hill_estimator(samples: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k < samples.len());
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| b.total_cmp(a));
    let xk = xs[k];
    if xk <= 0.0 {
        return f64::NAN;
    }
    let sum_log: f64 = xs[..k].iter().map(|&x| (x / xk).ln()).sum();
    k as f64 / sum_log
}

/// Elementary symmetric polynomial `e_j(xs)` for all `j <= j_max`,
/// computed by the stable forward recurrence.
pub fn elementary_symmetric(xs: &[f64], j_max: usize) -> Vec<f64> {
    let mut e = vec![0.0; j_max + 1];
    e[0] = 1.0;
    for &x in xs {
        for j in (1..=j_max).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Empirical quantile (linear interpolation on order statistics).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let fit = fit_line(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn elementary_symmetric_matches_expansion() {
        // (1+2x)(1+3x)(1+5x) = 1 + 10x + 31x^2 + 30x^3
        let e = elementary_symmetric(&[2.0, 3.0, 5.0], 3);
        assert_eq!(e, vec![1.0, 10.0, 31.0, 30.0]);
    }

    #[test]
    fn simpson_integrates_power() {
        let v = adaptive_simpson(&|x: f64| x * x, 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn hill_on_exact_pareto_quantiles() {
        // Deterministic Pareto(2) quantile sample: x_i = (i/n)^{-1/2}.
        let n = 100_000;
        let xs: Vec<f64> = (1..=n).map(|i| (i as f64 / n as f64).powf(-0.5)).collect();
        let a = hill_estimator(&xs, 1000);
        assert!((a - 2.0).abs() < 0.1, "hill = {a}");
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let a = [1.0, 2.0, 3.0];
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
    }
}
