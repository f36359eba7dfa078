//! Total mass trend below and above the critical γ.

use rustfft::FftPlanner;

use crate::chaos::dense_log_partition;
use crate::error::Result;
use crate::field::{dense_walks, extend_walk, FieldRealization};
use crate::numeric::{median, sign_test_upper, NeumaierSum};
use crate::par::map_indexed;
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

const LEVELS: (usize, usize) = (6, 12);
const GAMMAS: [(&str, f64); 2] = [("supercritical", 1.6), ("subcritical", 1.0)];

/// log Σ_v exp(w0_v + γ walk_v) for each (w0, γ). Terms are rescaled by
/// the upper bound max w0 + γ max walk, so one pass over the data suffices.
fn log_totals(w0: &[&[f64]], walk: &[f64], gammas: &[f64]) -> Vec<f64> {
    const CHUNK: usize = 4096;
    let (lo, hi) = walk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let mut out = Vec::with_capacity(gammas.len());
    for (i, &g) in gammas.iter().enumerate() {
        let top = w0[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max) + if g >= 0.0 { g * hi } else { g * lo };
        let mut acc = NeumaierSum::new();
        for (a, b) in w0[i].chunks(CHUNK).zip(walk.chunks(CHUNK)) {
            acc.add(a.iter().zip(b).map(|(x, y)| (x + g * y - top).exp()).sum());
        }
        out.push(top + acc.value().ln());
    }
    out
}

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let model = cfg.model()?;
    let replicas = cfg.replicas_or(200);
    let (lo, hi) = LEVELS;
    let hi = hi.min(cfg.n_max);
    let ps = PartitionSystem::build(hi)?;
    let mut tree = ps.dense(hi)?;
    let mut planner = FftPlanner::new();
    // w0 = ln |I| - log Z̃ at the two compared levels, per γ.
    let mut w0: Vec<[Vec<f64>; 2]> = Vec::new();
    for &(_, g) in &GAMMAS {
        let z = dense_log_partition(&model, g, &tree, hi, &mut planner);
        let at = |n: usize| -> Vec<f64> { tree.level(n).len.iter().zip(&z[n - 1]).map(|(l, lz)| l.ln() - lz).collect() };
        w0.push([at(lo), at(hi)]);
    }
    for lv in tree.levels.iter_mut() {
        lv.len = Vec::new();
        lv.tau = Vec::new();
    }
    let totals: Vec<Vec<[f64; 2]>> = map_indexed(replicas, |r| {
        let mut rng = stream(cfg.seed, "E9-field", r as u64);
        let fr = FieldRealization::sample_levels(&model, hi, &mut rng);
        let mut planner = FftPlanner::new();
        let walks = dense_walks(&fr, &tree, hi - 1, &mut planner).expect("levels within realization");
        let mut top = fr.block_at_points_auto(hi, &tree.level(hi).rep, &mut planner).expect("levels within realization");
        extend_walk(&walks[hi - 2], &tree.level(hi - 1).nchild, &mut top);
        let gs: Vec<f64> = GAMMAS.iter().map(|x| x.1).collect();
        let at_lo = log_totals(&[&w0[0][0], &w0[1][0]], &walks[lo - 1], &gs);
        let at_hi = log_totals(&[&w0[0][1], &w0[1][1]], &top, &gs);
        (0..GAMMAS.len()).map(|i| [at_lo[i], at_hi[i]]).collect()
    });
    let mut csv = String::from("replica,regime,gamma,log_total_lo,log_total_hi\n");
    for (i, &(name, g)) in GAMMAS.iter().enumerate() {
        let mut decreases = 0usize;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (r, t) in totals.iter().enumerate() {
            let [x, y] = t[i];
            decreases += (y < x) as usize;
            a.push(x.exp());
            b.push(y.exp());
            csv.push_str(&format!("{r},{name},{g},{x:?},{y:?}\n"));
        }
        m.scalar(&format!("decreases_{name}"), decreases as f64);
        m.push(&format!("sign_p_{name}"), None, sign_test_upper(decreases, replicas), 0.0, replicas);
        m.push(&format!("median_total_{name}"), Some(lo as i64), median(&a), 0.0, replicas);
        m.push(&format!("median_total_{name}"), Some(hi as i64), median(&b), 0.0, replicas);
    }
    tables.insert("totals.csv".into(), csv);
    Ok(())
}
