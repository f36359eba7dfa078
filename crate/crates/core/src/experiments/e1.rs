//! Monte Carlo covariance of S_n against the exact covariance.

use rand::Rng;

use crate::error::Result;
use crate::field::{cov_exact, FieldRealization};
use crate::numeric::covariance_with_se;
use crate::par::map_indexed;
use crate::rng::stream;
use crate::spectral::block_sums;

use super::{ExperimentConfig, Metrics, Tables};

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let model = cfg.model()?;
    let replicas = cfg.replicas_or(20_000);
    let n_freq = cfg.override_usize("n_freq", 256) as u64;
    let pairs = cfg.override_usize("pairs", 20);
    let mut prng = stream(cfg.seed, "E1-pairs", 0);
    let pts: Vec<(f64, f64)> = (0..pairs).map(|_| (prng.random::<f64>(), prng.random::<f64>())).collect();
    let flat: Vec<f64> = pts.iter().flat_map(|&(t, s)| [t, s]).collect();
    let values: Vec<Vec<f64>> = map_indexed(replicas, |r| {
        let mut rng = stream(cfg.seed, "E1-field", r as u64);
        let fr = FieldRealization::sample(&model, n_freq, &mut rng);
        let (b1, b2) = fr.scaled();
        let mut out = vec![0.0; flat.len()];
        block_sums(&flat, b1, b2, 1, n_freq, &mut out);
        out
    });
    let mut csv = String::from("pair,t,s,cov_exact,cov_emp,stderr\n");
    for (i, &(t, s)) in pts.iter().enumerate() {
        let x: Vec<f64> = values.iter().map(|v| v[2 * i]).collect();
        let y: Vec<f64> = values.iter().map(|v| v[2 * i + 1]).collect();
        let (c, se) = covariance_with_se(&x, &y);
        let exact = cov_exact(n_freq, t, s);
        m.push("cov_emp", Some(i as i64), c, se, replicas);
        m.push("cov_exact", Some(i as i64), exact, 0.0, 0);
        csv.push_str(&format!("{i},{t:?},{s:?},{exact:?},{c:?},{se:?}\n"));
    }
    // |cov_exact - log 1/d| on d in [2^-8, 2^-2].
    let mut gap = 0.0f64;
    let mut gcsv = String::from("d,cov_exact,log_inv_d\n");
    for i in 0..=96 {
        let d = 2f64.powf(-8.0 + 6.0 * i as f64 / 96.0);
        let c = cov_exact(n_freq, d, 0.0);
        gap = gap.max((c - (1.0 / d).ln()).abs());
        gcsv.push_str(&format!("{d:?},{c:?},{:?}\n", (1.0 / d).ln()));
    }
    m.scalar("log_gap_max", gap);
    tables.insert("covariance_pairs.csv".into(), csv);
    tables.insert("log_gap.csv".into(), gcsv);
    Ok(())
}
