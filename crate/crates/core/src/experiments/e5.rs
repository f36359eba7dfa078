//! Continuum versus hierarchical chaos masses on the level-4 intervals.

use rustfft::FftPlanner;

use crate::chaos::{dense_log_partition, measure_continuum_with, ContinuumNormalizer};
use crate::error::Result;
use crate::field::{dense_walks, FieldRealization};
use crate::numeric::{ols, summarize, NeumaierSum};
use crate::par::map_indexed;
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

const BASE: usize = 4;

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let model = cfg.model()?;
    let gamma = cfg.gamma;
    let replicas = cfg.replicas_or(200);
    let n_hi = cfg.n_max.min(10);
    let min_depth = cfg.override_usize("min_quadrature_depth", 16);
    let ps = PartitionSystem::build(n_hi)?;
    let tree = ps.dense(n_hi)?;
    let mut planner = FftPlanner::new();
    let logz = dense_log_partition(&model, gamma, &tree, n_hi, &mut planner);
    // Ancestor at the base level for every node of every level >= BASE.
    let mut anc: Vec<Vec<u32>> = vec![(0..tree.level(BASE).len_nodes() as u32).collect()];
    for n in BASE + 1..=n_hi {
        let p = tree.parents(n);
        let prev = anc.last().unwrap();
        anc.push(p.iter().map(|&i| prev[i as usize]).collect());
    }
    let norms: Vec<ContinuumNormalizer> = (BASE..=n_hi).map(|n| ContinuumNormalizer::new(&model, gamma, (1u64 << n) - 1, (n + 4).max(min_depth), &mut planner)).collect();
    let log_len: Vec<Vec<f64>> = (BASE..=n_hi).map(|n| tree.level(n).len.iter().map(|l| l.ln()).collect()).collect();
    let base_count = tree.level(BASE).len_nodes();
    let devs: Vec<Vec<f64>> = map_indexed(replicas, |r| {
        let mut rng = stream(cfg.seed, "E5-field", r as u64);
        let fr = FieldRealization::sample_levels(&model, n_hi, &mut rng);
        let mut planner = FftPlanner::new();
        let walks = dense_walks(&fr, &tree, n_hi, &mut planner).expect("levels within k_max");
        (BASE..=n_hi)
            .map(|n| {
                let i = n - BASE;
                let mut hier = vec![NeumaierSum::new(); base_count];
                let w = &walks[n - 1];
                let z = &logz[n - 1];
                for v in 0..w.len() {
                    hier[anc[i][v] as usize].add((log_len[i][v] + gamma * w[v] - z[v]).exp());
                }
                let cont = measure_continuum_with(&fr, &norms[i], tree.level(BASE), &mut planner).expect("frequencies within k_max");
                hier.iter().zip(&cont).map(|(h, c)| (c / h.value()).ln().abs()).fold(0.0f64, f64::max)
            })
            .collect()
    });
    let levels: Vec<usize> = (BASE..=n_hi).collect();
    let mut csv = String::from("n,mean_dev,stderr,max_dev\n");
    let mut bound = f64::NEG_INFINITY;
    let split = BASE + (levels.len() + 1) / 2;
    for (i, &n) in levels.iter().enumerate() {
        let v: Vec<f64> = devs.iter().map(|d| d[i]).collect();
        let s = summarize(&v);
        let mx = v.iter().cloned().fold(0.0f64, f64::max);
        m.push("dev", Some(n as i64), s.mean, s.stderr, replicas);
        m.push("dev_max", Some(n as i64), mx, 0.0, replicas);
        if n < split {
            bound = bound.max(s.mean + 4.0 * s.stderr);
        } else {
            m.push("dev_late", Some(n as i64), s.mean, s.stderr, replicas);
        }
        csv.push_str(&format!("{n},{:?},{:?},{mx:?}\n", s.mean, s.stderr));
    }
    let xs: Vec<f64> = levels.iter().map(|&n| n as f64).collect();
    let slopes: Vec<f64> = devs.iter().map(|d| ols(&xs, d).slope).collect();
    let s = summarize(&slopes);
    m.push("dev_slope", None, s.mean, s.stderr, replicas);
    m.scalar("dev_slope_lo", s.mean - 1.96 * s.stderr);
    m.scalar("dev_slope_hi", s.mean + 1.96 * s.stderr);
    m.scalar("dev_bound", bound);
    tables.insert("ratio_deviation.csv".into(), csv);
    Ok(())
}
