//! Coefficient laws. Every law is centered with unit variance and has a
//! closed-form log-MGF, so partition functions never need Monte Carlo.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Gaussian,
    Rademacher,
    UniformSym,
    TwoPointAsym,
}

impl Law {
    pub fn parse(name: &str) -> Result<Law> {
        match name {
            "gaussian" => Ok(Law::Gaussian),
            "rademacher" => Ok(Law::Rademacher),
            "uniform_sym" => Ok(Law::UniformSym),
            "two_point_asym" => Ok(Law::TwoPointAsym),
            other => Err(Error::Config(format!("unknown law '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Law::Gaussian => "gaussian",
            Law::Rademacher => "rademacher",
            Law::UniformSym => "uniform_sym",
            Law::TwoPointAsym => "two_point_asym",
        }
    }
}

/// An i.i.d. coefficient law. For `TwoPointAsym` the atoms are
/// `P(a = p) = q`, `P(a = -r) = 1 - q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub law: Law,
    pub params: Vec<f64>,
    pub third_moment: f64,
    #[serde(skip)]
    atoms: Option<(f64, f64, f64)>,
}

impl CoefficientModel {
    pub fn new(law: Law, params: &[f64]) -> Result<Self> {
        match law {
            Law::TwoPointAsym => {
                let s = params.first().copied().unwrap_or(1.0);
                if !s.is_finite() {
                    return Err(Error::Config("two_point_asym needs a finite third moment".into()));
                }
                let q = 0.5 * (1.0 - s / (s * s + 4.0).sqrt());
                let p = ((1.0 - q) / q).sqrt();
                let r = (q / (1.0 - q)).sqrt();
                Ok(Self { law, params: vec![s], third_moment: s, atoms: Some((p, r, q)) })
            }
            _ => Ok(Self { law, params: params.to_vec(), third_moment: 0.0, atoms: None }),
        }
    }

    pub fn gaussian() -> Self {
        Self::new(Law::Gaussian, &[]).unwrap()
    }

    pub fn rademacher() -> Self {
        Self::new(Law::Rademacher, &[]).unwrap()
    }

    pub fn uniform_sym() -> Self {
        Self::new(Law::UniformSym, &[]).unwrap()
    }

    pub fn two_point_asym(third_moment: f64) -> Self {
        Self::new(Law::TwoPointAsym, &[third_moment]).unwrap()
    }

    pub fn by_name(name: &str, params: &[f64]) -> Result<Self> {
        Self::new(Law::parse(name)?, params)
    }

    /// `(p, r, q)` for the two-point law.
    pub fn two_point_atoms(&self) -> Option<(f64, f64, f64)> {
        match self.law {
            Law::TwoPointAsym => Some(self.atoms.unwrap_or_else(|| {
                let s = self.third_moment;
                let q = 0.5 * (1.0 - s / (s * s + 4.0).sqrt());
                (((1.0 - q) / q).sqrt(), (q / (1.0 - q)).sqrt(), q)
            })),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        1.0
    }

    /// Upper bound on |a| (infinite for the Gaussian law).
    pub fn sup_abs(&self) -> f64 {
        match self.law {
            Law::Gaussian => f64::INFINITY,
            Law::Rademacher => 1.0,
            Law::UniformSym => SQRT3,
            Law::TwoPointAsym => {
                let (p, r, _) = self.two_point_atoms().unwrap();
                p.max(r)
            }
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.law {
            Law::Gaussian => rng.sample(StandardNormal),
            Law::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Law::UniformSym => SQRT3 * (2.0 * rng.random::<f64>() - 1.0),
            Law::TwoPointAsym => {
                let (p, r, q) = self.two_point_atoms().unwrap();
                if rng.random::<f64>() < q {
                    p
                } else {
                    -r
                }
            }
        }
    }

    /// Log-MGF Λ(λ) = log E[exp(λ a)].
    pub fn log_mgf(&self, lambda: f64) -> f64 {
        match self.law {
            Law::Gaussian => 0.5 * lambda * lambda,
            Law::Rademacher => log_cosh(lambda),
            Law::UniformSym => log_sinhc(SQRT3 * lambda),
            Law::TwoPointAsym => {
                let (p, r, q) = self.two_point_atoms().unwrap();
                if lambda.abs() * p.max(r) < 1.0 {
                    (q * (lambda * p).exp_m1() + (1.0 - q) * (-lambda * r).exp_m1()).ln_1p()
                } else {
                    let x = lambda * p + q.ln();
                    let y = -lambda * r + (1.0 - q).ln();
                    let m = x.max(y);
                    m + ((x - m).exp() + (y - m).exp()).ln()
                }
            }
        }
    }

    /// Λ(γ cos θ / √k) + Λ(γ sin θ / √k): the log-partition contribution of
    /// frequency `k` at phase θ = 2πkt. For the Gaussian law this is
    /// identically γ²/(2k).
    #[inline]
    pub fn pair_log_mgf(&self, gamma: f64, k: u64, cos_t: f64, sin_t: f64) -> f64 {
        match self.law {
            Law::Gaussian => 0.5 * gamma * gamma / k as f64,
            _ => {
                let s = gamma / (k as f64).sqrt();
                self.log_mgf(s * cos_t) + self.log_mgf(s * sin_t)
            }
        }
    }
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    if a < 20.0 {
        let h = (0.5 * a).sinh();
        (2.0 * h * h).ln_1p()
    } else {
        a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
    }
}

/// log(sinh(y)/y).
fn log_sinhc(y: f64) -> f64 {
    let a = y.abs();
    if a < 1.0 {
        // sinh(y)/y - 1 = Σ_{j>=1} y^{2j}/(2j+1)!
        let y2 = a * a;
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut j = 1u32;
        loop {
            term *= y2 / ((2 * j) as f64 * (2 * j + 1) as f64);
            sum += term;
            if term < 1e-18 * sum || j > 30 {
                break;
            }
            j += 1;
        }
        sum.ln_1p()
    } else if a < 20.0 {
        (a.sinh() / a).ln()
    } else {
        a - std::f64::consts::LN_2 + (-(-2.0 * a).exp()).ln_1p() - a.ln()
    }
}

pub fn sample_block<R: Rng + ?Sized>(model: &CoefficientModel, count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| model.sample(rng)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub law: Law,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub third_moment: f64,
    pub third_moment_se: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
    pub third_moment_ok: bool,
}

impl ValidationRecord {
    pub fn pass(&self) -> bool {
        self.mean_ok && self.variance_ok && self.third_moment_ok
    }
}

pub fn validate_model<R: Rng + ?Sized>(model: &CoefficientModel, samples: usize, rng: &mut R) -> Result<ValidationRecord> {
    if samples < 10_000 {
        return Err(Error::Config(format!("validate_model needs >= 10^4 samples, got {samples}")));
    }
    let xs = sample_block(model, samples, rng);
    let n = samples as f64;
    let s = crate::numeric::summarize(&xs);
    let cubes: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
    let c = crate::numeric::summarize(&cubes);
    let tol_mean = 4.0 / n.sqrt();
    let tol_var = 10.0 / n.sqrt();
    Ok(ValidationRecord {
        law: model.law,
        samples,
        mean: s.mean,
        variance: s.var,
        third_moment: c.mean,
        third_moment_se: c.stderr,
        mean_ok: s.mean.abs() <= tol_mean,
        variance_ok: (s.var - 1.0).abs() <= tol_var,
        third_moment_ok: (c.mean - model.third_moment).abs() <= 4.0 * c.stderr.max(1.0 / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn all_models() -> Vec<CoefficientModel> {
        vec![
            CoefficientModel::gaussian(),
            CoefficientModel::rademacher(),
            CoefficientModel::uniform_sym(),
            CoefficientModel::two_point_asym(1.0),
        ]
    }

    #[test]
    fn log_mgf_at_zero() {
        for m in all_models() {
            assert_eq!(m.log_mgf(0.0), 0.0, "{:?}", m.law);
        }
    }

    #[test]
    fn log_mgf_closed_forms() {
        assert_eq!(CoefficientModel::gaussian().log_mgf(1.5), 1.125);
        let oracle = 1.0f64.cosh().ln();
        assert!((CoefficientModel::rademacher().log_mgf(1.0) - oracle).abs() < 1e-15);
        assert!((oracle - 0.433_780_830_483_027).abs() < 1e-12);
        let y = SQRT3 * 0.7;
        let u = CoefficientModel::uniform_sym().log_mgf(0.7);
        assert!((u - (y.sinh() / y).ln()).abs() < 1e-14);
    }

    #[test]
    fn two_point_moments_analytic() {
        for s in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let m = CoefficientModel::two_point_asym(s);
            let (p, r, q) = m.two_point_atoms().unwrap();
            let mean = q * p - (1.0 - q) * r;
            let var = q * p * p + (1.0 - q) * r * r;
            let third = q * p.powi(3) - (1.0 - q) * r.powi(3);
            assert!(mean.abs() < 1e-14);
            assert!((var - 1.0).abs() < 1e-14);
            assert!((third - s).abs() < 1e-12, "s={s} third={third}");
        }
    }

    #[test]
    fn log_mgf_branches_are_continuous() {
        let m = CoefficientModel::two_point_asym(1.0);
        let (p, r, _) = m.two_point_atoms().unwrap();
        let edge = 1.0 / p.max(r);
        let a = m.log_mgf(edge * (1.0 - 1e-12));
        let b = m.log_mgf(edge * (1.0 + 1e-12));
        assert!((a - b).abs() < 1e-10);
        let r = CoefficientModel::rademacher();
        assert!((r.log_mgf(20.0 - 1e-12) - r.log_mgf(20.0 + 1e-12)).abs() < 1e-10);
        let u = CoefficientModel::uniform_sym();
        for y in [1.0, 20.0] {
            let l = y / SQRT3;
            assert!((u.log_mgf(l * (1.0 - 1e-13)) - u.log_mgf(l * (1.0 + 1e-13))).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_block_examples() {
        let mut rng = stream(11, "coeffs-test", 0);
        let r = sample_block(&CoefficientModel::rademacher(), 4, &mut rng);
        assert!(r.iter().all(|&x| x == 1.0 || x == -1.0));
        let g = sample_block(&CoefficientModel::gaussian(), 1_000_000, &mut rng);
        assert!(crate::numeric::summarize(&g).mean.abs() < 4e-3);
        let u = sample_block(&CoefficientModel::uniform_sym(), 1_000_000, &mut rng);
        assert!((crate::numeric::summarize(&u).var - 1.0).abs() < 1e-2);
    }

    #[test]
    fn validation_records() {
        let mut rng = stream(12, "coeffs-validate", 0);
        let r = validate_model(&CoefficientModel::rademacher(), 1_000_000, &mut rng).unwrap();
        assert!(r.pass() && r.third_moment.abs() < 4e-3);
        let t = validate_model(&CoefficientModel::two_point_asym(1.0), 1_000_000, &mut rng).unwrap();
        assert!(t.pass(), "{t:?}");
        let g = validate_model(&CoefficientModel::gaussian(), 10_000, &mut rng).unwrap();
        assert!(g.pass());
        assert!(validate_model(&CoefficientModel::gaussian(), 100, &mut rng).is_err());
    }

    #[test]
    fn gaussian_pair_is_exact() {
        let g = CoefficientModel::gaussian();
        let v = g.pair_log_mgf(1.2, 7, 0.3, 0.9);
        assert_eq!(v, 0.5 * 1.44 / 7.0);
    }
}
