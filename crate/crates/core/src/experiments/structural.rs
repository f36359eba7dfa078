//! Exhaustive partition invariants and the martingale conditional mean.

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use crate::chaos::dense_log_partition;
use crate::error::Result;
use crate::field::{dense_walks, FieldRealization, IncrementMatrix};
use crate::numeric::{summarize, LogSumExp};
use crate::partition::{f, lattice, PartitionSystem};
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

pub const EXHAUSTIVE_MAX: usize = 8;
pub const SUBTREE_MAX: usize = 10;
const WINDOWS: [f64; 4] = [1.0 / 512.0, 1.0 / 64.0, 0.125, 0.5];

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// T_n by inclusion-exclusion over the lattices D_1..D_{n-1}.
pub fn recount(ps: &PartitionSystem, n: usize) -> u64 {
    if n == 1 {
        return 1;
    }
    let l = ps.denominator();
    let steps: Vec<u128> = (1..n).map(|m| l / lattice(m)).collect();
    let mut total: i128 = 0;
    for mask in 1u32..(1 << steps.len()) {
        let mut step = 1u128;
        for (i, &s) in steps.iter().enumerate() {
            if mask >> i & 1 == 1 {
                step = step / gcd(step, s) * s;
            }
        }
        let term = (l / step) as i128;
        total += if mask.count_ones() % 2 == 1 { term } else { -term };
    }
    total as u64
}

/// Two-sided window count bound: 1 + 2 Σ_{k<n} (w D_k + 1).
pub fn window_bound(n: usize, w: f64) -> f64 {
    1.0 + 2.0 * (1..n).map(|k| w * lattice(k) as f64 + 1.0).sum::<f64>()
}

#[derive(Clone, Debug, Default)]
pub struct PartitionReport {
    pub nested: bool,
    pub tiling: bool,
    pub cardinality: bool,
    pub length: bool,
    pub subtree: bool,
    pub paircount: bool,
    pub length_literal_violations: u64,
    pub subtree_literal_violations: u64,
    pub paircount_literal_ratio: f64,
}

pub fn partition_report(ps: &PartitionSystem, n_hi: usize, sub_hi: usize) -> Result<PartitionReport> {
    let l = ps.denominator();
    let mut rep = PartitionReport { nested: true, tiling: true, cardinality: true, length: true, subtree: true, paircount: true, ..Default::default() };
    let bps: Vec<Vec<u128>> = (1..=n_hi).map(|n| ps.breakpoints(n)).collect::<Result<_>>()?;
    for n in 1..=n_hi {
        let bp = &bps[n - 1];
        let t = ps.t_count(n);
        rep.cardinality &= bp.len() as u64 - 1 == t && recount(ps, n) == t && (t as u128) <= f(n) << (n + 1);
        if n < n_hi {
            let next = &bps[n];
            let mut k = 0usize;
            for &x in bp {
                while k < next.len() && next[k] < x {
                    k += 1;
                }
                rep.nested &= k < next.len() && next[k] == x;
            }
            let mut expect = 1u64;
            for j in 1..=t {
                let c = ps.children(n, j)?;
                rep.tiling &= c.start == expect && c.end > c.start && next[(c.start - 1) as usize] == bp[(j - 1) as usize] && next[(c.end - 1) as usize] == bp[j as usize];
                expect = c.end;
            }
            rep.tiling &= expect == ps.t_count(n + 1) + 1;
        }
        let max_gap = bp.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(l);
        if n >= 2 {
            rep.length &= max_gap <= l / lattice(n - 1);
        }
        // literal: |I| <= 2^{-n} f(n)^{-1}, compared as gap * 2^n f(n) <= L
        rep.length_literal_violations += bp.windows(2).filter(|w| (w[1] - w[0]) * (f(n) << n) > l).count() as u64;

        for h in 1..=sub_hi.saturating_sub(n) {
            let lv = n + h;
            let shifted = if n == 1 { (f(h) << (h + 1)) as f64 } else { f(lv - 1) as f64 / f(n - 1) as f64 * (1u64 << (h + 1)) as f64 };
            let literal = f(lv) as f64 / f(n) as f64 * (1u64 << (h + 1)) as f64;
            for w in bp.windows(2) {
                let size = (ps.count_lt(lv, w[1]) - ps.count_lt(lv, w[0])) as f64;
                rep.subtree &= size <= shifted;
                rep.subtree_literal_violations += (size > literal) as u64;
            }
        }

        let reps: Vec<f64> = (1..=t).map(|j| ps.node_exact(n, j).rep).collect();
        for &w in &WINDOWS {
            let bound = window_bound(n, w);
            let mut worst = 0usize;
            for &x in &reps {
                let a = reps.partition_point(|&y| y < x - w);
                let b = reps.partition_point(|&y| y <= x + w);
                worst = worst.max(b - a);
            }
            rep.paircount &= worst as f64 <= bound;
            rep.paircount_literal_ratio = rep.paircount_literal_ratio.max((worst - 1) as f64 / (t as f64 * w));
        }
    }
    Ok(rep)
}

/// Pooled z of E[M_{n+1} / M_n | levels <= n] = 1 over outer states.
pub fn martingale_z(cfg: &ExperimentConfig, gamma: f64, n: usize, outer: usize, inner: usize) -> Result<(f64, f64)> {
    let model = cfg.model()?;
    let ps = PartitionSystem::build(n + 1)?;
    let tree = ps.dense(n + 1)?;
    let mut planner = FftPlanner::new();
    let lz = dense_log_partition(&model, gamma, &tree, n + 1, &mut planner);
    let parents = tree.parents(n + 1);
    let child = tree.level(n + 1);
    let mat = IncrementMatrix::from_reps(n + 1, &child.rep);
    let rows = mat.c1.nrows();
    let mut stacked = DMatrix::zeros(2 * rows, child.rep.len());
    stacked.view_mut((0, 0), (rows, child.rep.len())).copy_from(&mat.c1);
    stacked.view_mut((rows, 0), (rows, child.rep.len())).copy_from(&mat.c2);
    let mut means = Vec::with_capacity(outer);
    let mut worst = 0.0f64;
    for o in 0..outer {
        let mut rng = stream(cfg.seed, &format!("S-martingale-outer-{gamma}"), o as u64);
        let fr = FieldRealization::sample_levels(&model, n, &mut rng);
        let walks = dense_walks(&fr, &tree, n, &mut planner)?;
        let w = &walks[n - 1];
        let mut acc = LogSumExp::new();
        for ((len, x), z) in tree.level(n).len.iter().zip(w).zip(&lz[n - 1]) {
            acc.add(len.ln() + gamma * x - z);
        }
        let log_mn = acc.value();
        let base: Vec<f64> = child.len.iter().zip(&parents).zip(&lz[n]).map(|((len, &p), z)| len.ln() + gamma * w[p as usize] - z - log_mn).collect();
        let mut irng = stream(cfg.seed, &format!("S-martingale-inner-{gamma}"), o as u64);
        let a = DMatrix::from_fn(2 * rows, inner, |_, _| model.sample(&mut irng));
        let inc = stacked.tr_mul(&a);
        let ratios: Vec<f64> = (0..inner)
            .map(|c| {
                let col = inc.column(c);
                let mut s = LogSumExp::new();
                for (b, x) in base.iter().zip(col.iter()) {
                    s.add(b + gamma * x);
                }
                s.value().exp()
            })
            .collect();
        let s = summarize(&ratios);
        worst = worst.max(((s.mean - 1.0) / s.stderr).abs());
        means.push(s.mean);
    }
    let s = summarize(&means);
    Ok((((s.mean - 1.0) / s.stderr).abs(), worst))
}

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let n_hi = cfg.n_max.min(EXHAUSTIVE_MAX);
    let sub_hi = cfg.n_max.min(SUBTREE_MAX);
    let ps = PartitionSystem::build(sub_hi.max(n_hi))?;
    let rep = partition_report(&ps, n_hi, sub_hi)?;
    for (name, ok) in [
        ("nested_ok", rep.nested),
        ("tiling_ok", rep.tiling),
        ("cardinality_ok", rep.cardinality),
        ("length_ok", rep.length),
        ("subtree_ok", rep.subtree),
        ("paircount_ok", rep.paircount),
    ] {
        m.scalar(name, ok as u8 as f64);
    }
    m.scalar("length_literal_violations", rep.length_literal_violations as f64);
    m.scalar("subtree_literal_violations", rep.subtree_literal_violations as f64);
    m.scalar("paircount_literal_ratio", rep.paircount_literal_ratio);

    let outer = cfg.replicas_or(100);
    let inner = cfg.override_usize("inner", 1000);
    let mut csv = String::from("gamma,pooled_z,max_outer_z\n");
    let mut worst = 0.0f64;
    for gamma in [0.5, 1.2] {
        let (z, raw) = martingale_z(cfg, gamma, 4, outer, inner)?;
        worst = worst.max(z);
        m.scalar(&format!("martingale_outer_maxz_{gamma}"), raw);
        csv.push_str(&format!("{gamma},{z:.4},{raw:.4}\n"));
    }
    m.push("martingale_maxz", None, worst, 0.0, outer * inner);
    tables.insert("martingale.csv".into(), csv);
    Ok(())
}
