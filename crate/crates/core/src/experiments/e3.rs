//! Thick-point fractions and the first-moment descendant inequality.

use crate::error::Result;
use crate::thick::thick_count_scaling;

use super::{ExperimentConfig, Metrics, Tables};

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let model = cfg.model()?;
    let replicas = cfg.replicas_or(2000);
    let samples = cfg.override_usize("samples", 2048);
    let n_lo = cfg.override_usize("n_lo", 8);
    let n_hi = cfg.n_max.min(12);
    let sc = thick_count_scaling(&model, cfg.gamma, cfg.delta, n_lo..=n_hi, replicas, samples, cfg.seed)?;
    let mut csv = String::from("n,T_n,fraction,stderr,log2_fraction,threshold,exceed_prob,bound\n");
    for (row, bound) in sc.rows.iter().zip(&sc.inequality_bound) {
        let n = Some(row.n as i64);
        m.push("thick_fraction", n, row.fraction.mean, row.fraction.stderr, replicas);
        m.push("exceed_prob", n, row.exceed_prob, (row.exceed_prob * (1.0 - row.exceed_prob) / replicas as f64).sqrt(), replicas);
        m.push("exceed_bound", n, *bound, 0.0, 0);
        csv.push_str(&format!(
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            row.n, row.t_n, row.fraction.mean, row.fraction.stderr, row.log2_fraction, row.inequality_threshold, row.exceed_prob, bound
        ));
    }
    m.push("thick_slope", None, sc.fit.slope, sc.fit.slope_se, replicas);
    m.scalar("thick_slope_target", sc.predicted_slope);
    m.scalar("fitted_c", sc.fitted_c);
    tables.insert("thick_scaling.csv".into(), csv);
    Ok(())
}
