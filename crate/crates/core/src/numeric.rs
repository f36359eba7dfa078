//! Small numerical kit: compensated sums, log-sum-exp, Gaussian tails and
//! the summary statistics used by the experiment runners.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = NeumaierSum::new();
    for x in xs {
        s.add(x);
    }
    s.value()
}

/// Streaming log-sum-exp with running max rescaling.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    acc: NeumaierSum,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, acc: NeumaierSum::new() }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let scale = (self.max - x).exp();
            let old = self.acc.value() * scale;
            self.acc = NeumaierSum::new();
            self.acc.add(old);
            self.max = x;
        }
        self.acc.add((x - self.max).exp());
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.value().ln()
        }
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + neumaier_sum(xs.iter().map(|&x| (x - m).exp())).ln()
}

/// Upper standard normal tail P(Z > x).
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Harmonic number H_n, compensated.
pub fn harmonic(n: u64) -> f64 {
    let mut s = NeumaierSum::new();
    for k in 1..=n {
        s.add(1.0 / k as f64);
    }
    s.value()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub stderr: f64,
}

/// Pairwise (tree) reduction of `(count, mean, M2)` triples. The reduction
/// order depends only on slice positions.
fn pairwise_moments(xs: &[f64]) -> (f64, f64, f64) {
    if xs.len() <= 16 {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let mean = neumaier_sum(xs.iter().cloned()) / n;
        let m2 = neumaier_sum(xs.iter().map(|&x| (x - mean) * (x - mean)));
        return (n, mean, m2);
    }
    let mid = xs.len() / 2;
    let (na, ma, qa) = pairwise_moments(&xs[..mid]);
    let (nb, mb, qb) = pairwise_moments(&xs[mid..]);
    let n = na + nb;
    let d = mb - ma;
    (n, ma + d * nb / n, qa + qb + d * d * na * nb / n)
}

pub fn summarize(xs: &[f64]) -> Summary {
    let (n, mean, m2) = pairwise_moments(xs);
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    let stderr = if n > 0.0 { (var / n).sqrt() } else { f64::NAN };
    Summary { n: xs.len(), mean, var, stderr }
}

/// Sample covariance of paired data together with the standard error of
/// the estimator (delta-method via the centered products).
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let mx = summarize(x).mean;
    let my = summarize(y).mean;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let s = summarize(&prods);
    let n = x.len() as f64;
    (s.mean * n / (n - 1.0), s.stderr)
}

/// Linear quantile (type 7). Sorts a copy.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub dof: usize,
}

impl LinearFit {
    /// Two-sided confidence interval for the slope.
    pub fn slope_ci(&self, level: f64) -> (f64, f64) {
        if self.dof == 0 || !self.slope_se.is_finite() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let t = StudentsT::new(0.0, 1.0, self.dof as f64).unwrap();
        let q = t.inverse_cdf(0.5 + level / 2.0);
        (self.slope - q * self.slope_se, self.slope + q * self.slope_se)
    }
}

/// Ordinary least squares y = a + b x.
pub fn ols(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = neumaier_sum(x.iter().cloned()) / n;
    let my = neumaier_sum(y.iter().cloned()) / n;
    let sxx = neumaier_sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    let sxy = neumaier_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = neumaier_sum(x.iter().zip(y).map(|(&a, &b)| {
        let r = b - intercept - slope * a;
        r * r
    }));
    let dof = x.len().saturating_sub(2);
    let slope_se = if dof > 0 { (rss / dof as f64 / sxx).sqrt() } else { f64::NAN };
    LinearFit { slope, intercept, slope_se, dof }
}

/// One-sided sign test: P(X >= k) for X ~ Binomial(n, 1/2).
pub fn sign_test_upper(k: usize, n: usize) -> f64 {
    binomial_upper(k, n, 0.5)
}

/// P(X >= k) for X ~ Binomial(n, p).
pub fn binomial_upper(k: usize, n: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (k..=n).map(|i| ln_binomial(n, i) + i as f64 * lp + (n - i) as f64 * lq).collect();
    log_sum_exp(&terms).exp().min(1.0)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_upper_small_cases() {
        assert!((binomial_upper(1, 3, 0.2) - (1.0 - 0.8f64.powi(3))).abs() < 1e-14);
        assert!((binomial_upper(3, 3, 0.2) - 0.008).abs() < 1e-15);
        assert_eq!(binomial_upper(0, 5, 0.0), 1.0);
        assert_eq!(binomial_upper(2, 5, 0.0), 0.0);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(xs), 2.0);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.1, -3.0, 2.5, 700.0, 699.0];
        let direct = 700.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-12);
        let mut acc = LogSumExp::new();
        for &x in &xs {
            acc.add(x);
        }
        assert!((acc.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn normal_tail_reference_values() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        let v = normal_sf(1.959963984540054);
        assert!((v - 0.025).abs() < 1e-12, "{v:e}");
        assert!((normal_sf(8.0) / 6.22096057427174e-16 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn summary_is_order_independent() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 0.37).collect();
        let a = summarize(&xs);
        let mut ys = xs.clone();
        ys.sort_by(|a, b| a.total_cmp(b));
        let b = summarize(&ys);
        assert!((a.mean - b.mean).abs() < 1e-12 * a.mean.abs());
        assert!((a.var - b.var).abs() < 1e-10 * a.var);
    }

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = ols(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sign_test_known_values() {
        assert!((sign_test_upper(3, 3) - 0.125).abs() < 1e-14);
        assert!((sign_test_upper(0, 10) - 1.0).abs() < 1e-14);
        // P(X >= 8 | n = 10) = 56/1024
        assert!((sign_test_upper(8, 10) - 56.0 / 1024.0).abs() < 1e-13);
    }

    #[test]
    fn harmonic_small() {
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
    }
}
