//! Chaining discrepancies sup|Y_m| over the level-m mesh.

use rustfft::FftPlanner;

use crate::error::Result;
use crate::field::{chaining_discrepancy, FieldRealization};
use crate::numeric::{ols, quantile, summarize};
use crate::par::map_indexed;
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let model = cfg.model()?;
    let replicas = cfg.replicas_or(1000);
    let depth = cfg.override_usize("mesh_depth", 12);
    let m_lo = 4usize;
    let m_hi = cfg.n_max.min(10);
    let ps = PartitionSystem::build(m_hi)?;
    let tree = ps.dense(m_hi)?;
    let k_max = 1u64 << (m_hi + 1);
    let sups: Vec<Vec<f64>> = map_indexed(replicas, |r| {
        let mut rng = stream(cfg.seed, "E4-field", r as u64);
        let fr = FieldRealization::sample(&model, k_max, &mut rng);
        let mut planner = FftPlanner::new();
        (m_lo..=m_hi).map(|lv| chaining_discrepancy(&fr, tree.level(lv), lv, depth, &mut planner).map(|c| c.sup).expect("levels within k_max")).collect()
    });
    let mut csv = String::from("m,mean,stderr,q50,q99\n");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, lv) in (m_lo..=m_hi).enumerate() {
        let v: Vec<f64> = sups.iter().map(|s| s[i]).collect();
        let s = summarize(&v);
        let q99 = quantile(&v, 0.99);
        let q50 = quantile(&v, 0.5);
        m.push("sup_mean", Some(lv as i64), s.mean, s.stderr, replicas);
        m.push("sup_q99", Some(lv as i64), q99, 0.0, replicas);
        csv.push_str(&format!("{lv},{:?},{:?},{q50:?},{q99:?}\n", s.mean, s.stderr));
        xs.push((lv as f64).ln());
        ys.push(q99.ln());
    }
    let fit = ols(&xs, &ys);
    m.push("power_p", None, -fit.slope, fit.slope_se, replicas);
    m.scalar("power_c", fit.intercept.exp());
    tables.insert("chaining.csv".into(), csv);
    Ok(())
}
