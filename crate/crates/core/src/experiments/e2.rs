//! Hierarchical partition functions: the gaussian closed form and the
//! growth rate for non-Gaussian laws.

use rand::Rng;

use crate::chaos::{block_log_partition, log_partition_hier};
use crate::coeffs::CoefficientModel;
use crate::error::Result;
use crate::numeric::{harmonic, ols, summarize};
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

/// Mean of log Z̃_n over a fixed node sample, for each n in the range.
pub(crate) fn log_partition_profile(model: &CoefficientModel, gamma: f64, ps: &PartitionSystem, levels: std::ops::RangeInclusive<usize>, nodes: usize, seed: u64) -> Result<Vec<(usize, f64, f64)>> {
    let mut rng = stream(seed, "E2-nodes", 0);
    let mut out = Vec::new();
    for n in levels {
        let t = ps.t_count(n);
        let mut vals = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            let j = rng.random_range(1..=t);
            vals.push(log_partition_hier(model, gamma, ps, n, j)?);
        }
        let s = summarize(&vals);
        out.push((n, s.mean, s.stderr));
    }
    Ok(out)
}

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let gamma = cfg.gamma;
    let n_hi = cfg.n_max.min(12);
    let ps = PartitionSystem::build(n_hi)?;
    let gauss = CoefficientModel::gaussian();
    let mut worst = 0.0f64;
    let mut chain = 0.0f64;
    let mut rng = stream(cfg.seed, "E2-gauss", 0);
    for n in 1..=n_hi {
        let want = 0.5 * gamma * gamma * harmonic((1u64 << n) - 1);
        for _ in 0..16 {
            let j = rng.random_range(1..=ps.t_count(n));
            worst = worst.max((log_partition_hier(&gauss, gamma, &ps, n, j)? - want).abs());
            // Block-by-block route, for the record.
            let t = ps.node(n, j)?.rep;
            let by_blocks: f64 = (1..=n).map(|b| block_log_partition(&gauss, gamma, b, t)).sum();
            chain = chain.max((by_blocks - want).abs() / want);
        }
    }
    m.scalar("gaussian_residual_max", worst);
    m.scalar("gaussian_block_route_rel", chain);
    let model = if cfg.coefficients.law == crate::coeffs::Law::Gaussian { CoefficientModel::rademacher() } else { cfg.model()? };
    let nodes = cfg.override_usize("nodes", 64);
    let prof = log_partition_profile(&model, gamma, &ps, 6..=n_hi, nodes, cfg.seed)?;
    let mut csv = String::from("n,mean_log_z,stderr\n");
    for &(n, mean, se) in &prof {
        m.push("logz", Some(n as i64), mean, se, nodes);
        csv.push_str(&format!("{n},{mean:?},{se:?}\n"));
    }
    let fit = ols(&prof.iter().map(|p| p.0 as f64).collect::<Vec<_>>(), &prof.iter().map(|p| p.1).collect::<Vec<_>>());
    m.push("logz_slope", None, fit.slope, fit.slope_se, nodes);
    m.scalar("logz_slope_target", 0.5 * gamma * gamma * std::f64::consts::LN_2);
    tables.insert("log_partition.csv".into(), csv);
    Ok(())
}
