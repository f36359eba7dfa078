//! Evaluation of real trigonometric polynomials
//! P(t) = Σ_f Re[c_f e^{2πi f t}].
//!
//! Two routes:
//! * `block_sums`: direct summation with an angle-addition recurrence,
//!   re-anchored to exactly reduced phases every `ANCHOR` steps. Frequency
//!   major, so the inner loop vectorizes across points.
//! * `SpectralEvaluator`: Taylor tables of P on an oversampled FFT grid;
//!   each point costs one short Horner evaluation. Used when a level has
//!   millions of nodes.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::numeric::NeumaierSum;

pub const ANCHOR: u64 = 256;
const TWO_PI: f64 = std::f64::consts::TAU;

/// Fractional part of k * t, computed from the exact binary expansion of
/// t so the phase does not lose digits for large k.
#[inline]
pub fn frac_mul(k: u64, t: f64) -> f64 {
    if t == 0.0 || k == 0 {
        return 0.0;
    }
    let neg = t < 0.0;
    let bits = t.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as u128;
    let (mant, shift) = if exp == 0 { (frac, 1074i64) } else { (frac | (1u128 << 52), 1075 - exp) };
    let r = if shift <= 0 {
        0.0
    } else if shift >= 120 {
        (k as f64 * t.abs()).fract()
    } else {
        let p = mant * k as u128;
        let mask = (1u128 << shift) - 1;
        (p & mask) as f64 / (1u128 << shift) as f64
    };
    if neg && r != 0.0 {
        1.0 - r
    } else {
        r
    }
}

#[inline]
pub fn phase(k: u64, t: f64) -> (f64, f64) {
    (TWO_PI * frac_mul(k, t)).sin_cos()
}

/// Σ_{k=k_lo}^{k_hi} (b1[k-1] cos 2πkt + b2[k-1] sin 2πkt) at each point,
/// where b1, b2 are already scaled coefficients indexed from k = 1.
pub fn block_sums(points: &[f64], b1: &[f64], b2: &[f64], k_lo: u64, k_hi: u64, out: &mut [f64]) {
    assert_eq!(points.len(), out.len());
    assert!(k_lo >= 1 && k_hi as usize <= b1.len() && k_hi as usize <= b2.len());
    let m = points.len();
    for o in out.iter_mut() {
        *o = 0.0;
    }
    if k_lo > k_hi || m == 0 {
        return;
    }
    let mut cd = vec![0.0; m];
    let mut sd = vec![0.0; m];
    for (i, &t) in points.iter().enumerate() {
        let (s, c) = phase(1, t);
        sd[i] = s;
        cd[i] = c;
    }
    let mut c = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut acc = vec![NeumaierSum::new(); m];
    let mut part = vec![0.0; m];
    let mut k = k_lo;
    while k <= k_hi {
        let end = (k + ANCHOR - 1).min(k_hi);
        for (i, &t) in points.iter().enumerate() {
            let (sv, cv) = phase(k, t);
            s[i] = sv;
            c[i] = cv;
            part[i] = 0.0;
        }
        let mut kk = k;
        loop {
            let x1 = b1[(kk - 1) as usize];
            let x2 = b2[(kk - 1) as usize];
            for i in 0..m {
                part[i] += x1 * c[i] + x2 * s[i];
            }
            if kk == end {
                break;
            }
            for i in 0..m {
                let cn = c[i] * cd[i] - s[i] * sd[i];
                let sn = s[i] * cd[i] + c[i] * sd[i];
                c[i] = cn;
                s[i] = sn;
            }
            kk += 1;
        }
        for i in 0..m {
            acc[i].add(part[i]);
        }
        k = end + 1;
    }
    for i in 0..m {
        out[i] = acc[i].value();
    }
}

/// Single-point direct sum with per-term compensated accumulation. The
/// reference route for identity tests.
pub fn block_sum_compensated(t: f64, b1: &[f64], b2: &[f64], k_lo: u64, k_hi: u64) -> f64 {
    let mut acc = NeumaierSum::new();
    if k_lo > k_hi {
        return 0.0;
    }
    let (sd, cd) = phase(1, t);
    let mut k = k_lo;
    while k <= k_hi {
        let end = (k + ANCHOR - 1).min(k_hi);
        let (mut s, mut c) = phase(k, t);
        let mut kk = k;
        loop {
            acc.add(b1[(kk - 1) as usize] * c);
            acc.add(b2[(kk - 1) as usize] * s);
            if kk == end {
                break;
            }
            let cn = c * cd - s * sd;
            s = s * cd + c * sd;
            c = cn;
            kk += 1;
        }
        k = end + 1;
    }
    acc.value()
}

/// Taylor-table evaluator on a uniform grid of size `n` (a power of two).
/// For |u| <= 1/2 grid cells, P(x_i + u/n) = Σ_r d_r(x_i) u^r with
/// d_r = P^{(r)} / (r! n^r).
#[derive(Clone, Debug)]
pub struct SpectralEvaluator {
    n: usize,
    order: usize,
    table: Vec<f64>,
    /// Σ |c_f|, the scale of the truncation error bound.
    pub l1: f64,
    /// (π f_max / n)^{R+1} / (R+1)! · l1.
    pub error_bound: f64,
}

impl SpectralEvaluator {
    /// `terms` lists (frequency, complex coefficient). `oversample` fixes
    /// n >= oversample * f_max; the Taylor order is the smallest meeting
    /// `rel_tol` relative to Σ|c_f|.
    pub fn new(terms: &[(u64, Complex64)], oversample: usize, rel_tol: f64, planner: &mut FftPlanner<f64>) -> Self {
        let fmax = terms.iter().map(|t| t.0).max().unwrap_or(0).max(1);
        let n = ((oversample as u64 * fmax).max(64)).next_power_of_two() as usize;
        let h = std::f64::consts::PI * fmax as f64 / n as f64;
        let mut order = 0usize;
        let mut bound = h;
        while bound > rel_tol && order < 40 {
            order += 1;
            bound *= h / (order + 1) as f64;
        }
        let l1: f64 = terms.iter().map(|t| t.1.norm()).sum();
        let fft = planner.plan_fft_inverse(n);
        let width = order + 1;
        let mut table = vec![0.0; n * width];
        let mut cur: Vec<Complex64> = terms.iter().map(|t| t.1).collect();
        let steps: Vec<Complex64> = terms.iter().map(|t| Complex64::new(0.0, TWO_PI * t.0 as f64 / n as f64)).collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for r in 0..=order {
            for b in buf.iter_mut() {
                *b = Complex64::new(0.0, 0.0);
            }
            for (i, t) in terms.iter().enumerate() {
                buf[(t.0 % n as u64) as usize] += cur[i];
            }
            fft.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                table[i * width + r] = b.re;
            }
            for (i, c) in cur.iter_mut().enumerate() {
                *c = *c * steps[i] / (r + 1) as f64;
            }
        }
        Self { n, order, table, l1, error_bound: bound * l1 }
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let x = t * self.n as f64;
        let r = x.round();
        let u = x - r;
        // n is a power of two
        let idx = (r as i64 as usize) & (self.n - 1);
        let width = self.order + 1;
        let row = &self.table[idx * width..idx * width + width];
        let mut acc = row[self.order];
        for k in (0..self.order).rev() {
            acc = acc * u + row[k];
        }
        acc
    }

    pub fn eval_many(&self, ts: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(ts) {
            *o = self.eval(t);
        }
    }

    /// Grid value of the polynomial at x_i = i / n.
    pub fn grid_value(&self, i: usize) -> f64 {
        self.table[i * (self.order + 1)]
    }
}

/// Spectral terms of a coefficient block: c_k = (b1_k - i b2_k).
pub fn block_terms(b1: &[f64], b2: &[f64], k_lo: u64, k_hi: u64) -> Vec<(u64, Complex64)> {
    (k_lo..=k_hi).map(|k| (k, Complex64::new(b1[(k - 1) as usize], -b2[(k - 1) as usize]))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(terms: &[(u64, Complex64)], t: f64) -> f64 {
        let mut acc = NeumaierSum::new();
        for &(f, c) in terms {
            let (s, co) = phase(f, t);
            acc.add(c.re * co - c.im * s);
        }
        acc.value()
    }

    #[test]
    fn frac_mul_exact_cases() {
        assert_eq!(frac_mul(3, 0.5), 0.5);
        assert_eq!(frac_mul(4, 0.25), 0.0);
        assert_eq!(frac_mul(1 << 40, 0.75), 0.0);
        let t = 0.1234567;
        assert!((frac_mul(7, t) - (7.0 * t).fract()).abs() < 1e-15);
        assert!((frac_mul(1, -0.25) - 0.75).abs() < 1e-16);
    }

    #[test]
    fn block_sums_match_direct() {
        let b1: Vec<f64> = (1..=600).map(|k| ((k * 37 % 11) as f64 - 5.0) / (k as f64).sqrt()).collect();
        let b2: Vec<f64> = (1..=600).map(|k| ((k * 13 % 7) as f64 - 3.0) / (k as f64).sqrt()).collect();
        let pts = [0.0, 0.1, 0.25, 0.333, 0.9999, 0.5];
        let mut out = vec![0.0; pts.len()];
        block_sums(&pts, &b1, &b2, 3, 590, &mut out);
        let terms = block_terms(&b1, &b2, 3, 590);
        for (i, &t) in pts.iter().enumerate() {
            let d = direct(&terms, t);
            assert!((out[i] - d).abs() < 1e-11, "{} vs {}", out[i], d);
            assert!((block_sum_compensated(t, &b1, &b2, 3, 590) - d).abs() < 1e-11);
        }
    }

    #[test]
    fn spectral_matches_direct() {
        let mut planner = FftPlanner::new();
        let b1: Vec<f64> = (1..=512).map(|k| (k as f64 * 0.77).sin() / (k as f64).sqrt()).collect();
        let b2: Vec<f64> = (1..=512).map(|k| (k as f64 * 1.31).cos() / (k as f64).sqrt()).collect();
        let terms = block_terms(&b1, &b2, 256, 511);
        let ev = SpectralEvaluator::new(&terms, 32, 1e-16, &mut planner);
        for i in 0..200 {
            let t = (i as f64 * 0.618_033_988_7).fract();
            let d = direct(&terms, t);
            assert!((ev.eval(t) - d).abs() < 1e-11, "t={t}");
        }
        assert!((ev.eval(1.0) - direct(&terms, 0.0)).abs() < 1e-11);
    }
}
