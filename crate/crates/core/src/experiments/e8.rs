//! Coupled Radon-Nikodym candidate along the max-thick trajectory.

use rustfft::FftPlanner;

use crate::chaos::block_log_partition;
use crate::coeffs::CoefficientModel;
use crate::coupling::{empirical_coupling, sample_increment_pairs, thick_descendant_coupling};
use crate::error::Result;
use crate::field::{block_range, dense_walks, FieldRealization, IncrementMatrix};
use crate::numeric::{median, ols, quantile, summarize};
use crate::par::map_indexed;
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

const DENSE_DEPTH: usize = 10;
const TOP: usize = 12;
const COUPLED: std::ops::RangeInclusive<usize> = 6..=10;
const SMALL_M: usize = 256;

struct Replica {
    /// (level, q50 of matched sup-distance, failure, bound) per coupled level
    couplings: Vec<(usize, f64, f64, f64, bool)>,
    /// log R̃_n for n = 1..=TOP
    log_rn: Vec<f64>,
}

/// Node indices along the trajectory for levels 1..=TOP: argmax of the
/// walk at DENSE_DEPTH, extended by the largest child walk.
fn trajectory(fr: &FieldRealization, ps: &PartitionSystem, planner: &mut FftPlanner<f64>) -> Result<Vec<u64>> {
    let tree = ps.dense(DENSE_DEPTH)?;
    let walks = dense_walks(fr, &tree, DENSE_DEPTH, planner)?;
    let last = &walks[DENSE_DEPTH - 1];
    let (mut best, mut val) = (0usize, f64::NEG_INFINITY);
    for (i, &w) in last.iter().enumerate() {
        if w > val {
            best = i;
            val = w;
        }
    }
    let mut path = vec![0u64; TOP];
    path[DENSE_DEPTH - 1] = best as u64 + 1;
    for n in (1..DENSE_DEPTH).rev() {
        path[n - 1] = ps.ancestor(n + 1, path[n], n)?;
    }
    for n in DENSE_DEPTH + 1..=TOP {
        let (mut pick, mut pv) = (0u64, f64::NEG_INFINITY);
        for c in ps.children(n - 1, path[n - 2])? {
            let x = fr.block_at(n, ps.node(n, c)?.rep)?;
            if x > pv {
                pick = c;
                pv = x;
            }
        }
        path[n - 1] = pick;
    }
    Ok(path)
}

/// Coupled Gaussian partner of the realized block-n increment at one node:
/// the realized pair joins M - 1 fresh law samples and is matched.
fn coupled_step<R: rand::Rng + ?Sized>(fr: &FieldRealization, ps: &PartitionSystem, n: usize, j: u64, m: usize, rng: &mut R) -> Result<(f64, f64)> {
    let mat = IncrementMatrix::build(ps, n, &[j])?;
    let (lo, hi) = block_range(n);
    let a1 = &fr.a1[(lo - 1) as usize..hi as usize];
    let a2 = &fr.a2[(lo - 1) as usize..hi as usize];
    let (y1, y2) = mat.apply(a1, a2);
    let (mut s, t) = sample_increment_pairs(&fr.model, &mat, m, rng);
    s[0] = vec![y1[0], y2[0]];
    let ec = empirical_coupling(&s, &t, 1.0 / (3.0 * (n * n) as f64))?;
    let g = &t[ec.assignment[0]];
    Ok((y1[0] + y2[0], g[0] + g[1]))
}

fn replica(model: &CoefficientModel, cfg: &ExperimentConfig, ps: &PartitionSystem, r: usize) -> Result<Replica> {
    let mut rng = stream(cfg.seed, "E8-field", r as u64);
    let fr = FieldRealization::sample_levels(model, TOP, &mut rng);
    let mut planner = FftPlanner::new();
    let mut crng = stream(cfg.seed, "E8-coupling", r as u64);
    let mut couplings = Vec::new();
    for lv in COUPLED {
        let rep = thick_descendant_coupling(&fr, ps, cfg.gamma, cfg.delta, lv - 1, cfg.coupling.m, cfg.coupling.delta_override, &mut crng)?;
        let q = &rep.report;
        couplings.push((lv, q.sup_quantiles[0], q.empirical_failure, q.bound, q.empty));
    }
    let path = trajectory(&fr, ps, &mut planner)?;
    let gauss = CoefficientModel::gaussian();
    let mut trng = stream(cfg.seed, "E8-trajectory", r as u64);
    let mut acc = 0.0;
    let mut log_rn = Vec::with_capacity(TOP);
    for n in 1..=TOP {
        let j = path[n - 1];
        let m = if n >= *COUPLED.start() { cfg.coupling.m } else { SMALL_M };
        let (a, g) = coupled_step(&fr, ps, n, j, m, &mut trng)?;
        let t = ps.node(n, j)?.rep;
        acc += cfg.gamma * (g - a) + block_log_partition(model, cfg.gamma, n, t) - block_log_partition(&gauss, cfg.gamma, n, t);
        log_rn.push(acc);
    }
    Ok(Replica { couplings, log_rn })
}

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let mut model = cfg.model()?;
    if model.law == crate::coeffs::Law::Gaussian {
        model = CoefficientModel::rademacher();
    }
    let replicas = cfg.replicas_or(16);
    let ps = PartitionSystem::build(TOP)?;
    let reps = map_indexed(replicas, |r| replica(&model, cfg, &ps, r));
    let reps: Vec<Replica> = reps.into_iter().collect::<Result<_>>()?;

    let mut csv = String::from("replica,level,q50,failure,bound,empty\n");
    for (i, lv) in COUPLED.enumerate() {
        let rows: Vec<_> = reps.iter().map(|r| r.couplings[i]).collect();
        for (ri, c) in rows.iter().enumerate() {
            csv.push_str(&format!("{ri},{lv},{:?},{:?},{:?},{}\n", c.1, c.2, c.3, c.4 as u8));
        }
        let live: Vec<_> = rows.iter().filter(|c| !c.4).collect();
        let q50: Vec<f64> = live.iter().map(|c| c.1).collect();
        let meets = !live.is_empty() && live.iter().all(|c| c.2 <= c.3);
        let vn = Some(lv as i64);
        m.push("disc_median", vn, if q50.is_empty() { f64::NAN } else { median(&q50) }, 0.0, q50.len());
        m.push("meets_bound", vn, meets as u8 as f64, 0.0, live.len());
        m.push("thick_nonempty", vn, live.len() as f64, 0.0, replicas);
    }

    // Steps |log R̃_n - log R̃_{n-1}| for n = 2..=TOP.
    let step = |r: &Replica, n: usize| (r.log_rn[n - 1] - r.log_rn[n - 2]).abs();
    let mut rn_csv = String::from("replica,n,log_rn\n");
    for (ri, r) in reps.iter().enumerate() {
        for (i, v) in r.log_rn.iter().enumerate() {
            rn_csv.push_str(&format!("{ri},{},{v:?}\n", i + 1));
        }
    }
    let fit: Vec<f64> = reps.iter().flat_map(|r| [step(r, 9), step(r, 10)]).collect();
    let c = quantile(&fit, 0.95);
    let late: Vec<f64> = reps.iter().flat_map(|r| [step(r, 11), step(r, 12)]).collect();
    let late = summarize(&late);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for n in 8..=TOP {
        let v: Vec<f64> = reps.iter().map(|r| step(r, n)).collect();
        let s = summarize(&v);
        m.push("osc_step", Some(n as i64), s.mean, s.stderr, replicas);
        for x in v {
            xs.push(n as f64);
            ys.push(x);
        }
    }
    let f = ols(&xs, &ys);
    let (lo, _) = f.slope_ci(0.95);
    m.push("osc_late", None, late.mean, late.stderr, replicas);
    m.scalar("osc_bound", c);
    m.push("osc_slope", None, f.slope, f.slope_se, replicas);
    m.scalar("osc_slope_lo", lo);
    tables.insert("couplings.csv".into(), csv);
    tables.insert("log_rn.csv".into(), rn_csv);
    Ok(())
}
