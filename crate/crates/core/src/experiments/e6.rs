//! Empirical optimal couplings against the Yurinskii bound.

use crate::coeffs::CoefficientModel;
use crate::coupling::{beta_from_summands, empirical_coupling, quantiles_of, sample_increment_pairs, summand_shapes, yurinskii_bound, CouplingReport};
use crate::error::Result;
use crate::field::IncrementMatrix;
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

pub(crate) const DELTAS: [f64; 3] = [0.05, 0.1, 0.2];
const POSITIONS: [f64; 4] = [0.1, 0.35, 0.6, 0.85];

fn spread_nodes(ps: &PartitionSystem, n: usize) -> Result<Vec<u64>> {
    POSITIONS.iter().map(|&t| ps.locate(n, t).map(|x| x.0)).collect()
}

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let level = cfg.override_usize("level", 7);
    let samples = cfg.coupling.m;
    let mc = cfg.override_usize("beta_mc", 100_000);
    let ps = PartitionSystem::build(level + 1)?;
    let mut csv = format!("law,{}\n", CouplingReport::csv_header());
    for (name, model) in [("rademacher", CoefficientModel::rademacher()), ("two_point_asym", CoefficientModel::two_point_asym(1.0))] {
        let nodes = spread_nodes(&ps, level)?;
        let mat = IncrementMatrix::build(&ps, level, &nodes)?;
        let mut rng = stream(cfg.seed, &format!("E6-{name}"), 0);
        let beta = beta_from_summands(&model, &summand_shapes(&mat), mc, &mut rng);
        let (s, t) = sample_increment_pairs(&model, &mat, samples, &mut rng);
        let dim = 2 * nodes.len();
        for (i, &delta) in DELTAS.iter().enumerate() {
            let ec = empirical_coupling(&s, &t, delta)?;
            let bound = yurinskii_bound(beta, delta, dim);
            let f = ec.failure_rate;
            m.push(&format!("failure_{name}"), Some(i as i64), f, (f * (1.0 - f) / samples as f64).sqrt(), samples);
            m.push(&format!("bound_{name}"), Some(i as i64), bound, 0.0, 0);
            let rep = CouplingReport {
                k_dim: dim,
                n_summands: mat.c1.nrows(),
                delta,
                beta,
                bound,
                empirical_failure: f,
                sample_size: samples,
                sup_quantiles: quantiles_of(&ec.sup_distances),
                method: ec.method,
                empty: false,
                candidates: nodes.len(),
                subsampled: false,
            };
            csv.push_str(&format!("{name},{}\n", rep.csv_row()));
        }
        // δ = n^{-2}/3 at n = 4, the proof's choice.
        let d0 = 1.0 / 48.0;
        let ex = empirical_coupling(&s, &t, d0)?;
        m.push(&format!("example_failure_{name}"), None, ex.failure_rate, 0.0, samples);
        m.push(&format!("example_bound_{name}"), None, yurinskii_bound(beta, d0, dim), 0.0, 0);
        m.push(&format!("beta_{name}"), None, beta, 0.0, mc);
        // N^{-1/2} scaling of β at fixed node positions.
        let next = IncrementMatrix::build(&ps, level + 1, &spread_nodes(&ps, level + 1)?)?;
        let beta2 = beta_from_summands(&model, &summand_shapes(&next), mc, &mut rng);
        m.push(&format!("beta_ratio_{name}"), None, beta2 / beta, 0.0, mc);
    }
    tables.insert("coupling.csv".into(), csv);
    Ok(())
}
