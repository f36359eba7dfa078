//! Thick points, barrier events and the M^{(1)}/M^{(2)} split.

use std::ops::RangeInclusive;

use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chaos::{ChaosApproximant, SubtreePlan, SubtreeWalk};
use crate::coeffs::CoefficientModel;
use crate::error::{Error, Result};
use crate::field::{dense_walks, AncestorSample, FieldRealization};
use crate::numeric::{ols, summarize, LinearFit, NeumaierSum, Summary};
use crate::par::map_indexed;
use crate::partition::PartitionSystem;
use crate::rng::stream;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    G,
    Either,
}

/// log(2)(γ - δ) n.
pub fn thick_threshold(gamma: f64, delta: f64, n: usize) -> f64 {
    LN2 * (gamma - delta) * n as f64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThickSet {
    pub level: usize,
    pub gamma: f64,
    pub delta: f64,
    pub side: Side,
    /// 1-based node indices in increasing order.
    pub members: Vec<u64>,
    /// Set when γ - δ <= 1, outside the coupling regime.
    pub below_regime: bool,
}

impl ThickSet {
    /// Membership by threshold comparison on cached level-n walks.
    pub fn from_walks(walk_a: &[f64], walk_g: Option<&[f64]>, gamma: f64, delta: f64, n: usize, side: Side) -> Result<Self> {
        let thr = thick_threshold(gamma, delta, n);
        if side != Side::A && walk_g.is_none() {
            return Err(Error::Domain("g-side thickness needs a g-side walk".into()));
        }
        let mut members = Vec::new();
        for i in 0..walk_a.len() {
            let a = walk_a[i] >= thr;
            let g = walk_g.map(|w| w[i] >= thr).unwrap_or(false);
            let hit = match side {
                Side::A => a,
                Side::G => g,
                Side::Either => a || g,
            };
            if hit {
                members.push(i as u64 + 1);
            }
        }
        Ok(Self { level: n, gamma, delta, side, members, below_regime: gamma - delta <= 1.0 })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: u64) -> bool {
        self.members.binary_search(&j).is_ok()
    }
}

/// 𝒯_{n,γ} from realizations: a-side only, or either side when fr_g is given.
pub fn thick_points(fr_a: &FieldRealization, fr_g: Option<&FieldRealization>, ps: &PartitionSystem, gamma: f64, delta: f64, n: usize) -> Result<ThickSet> {
    let tree = ps.dense(n)?;
    let mut planner = FftPlanner::new();
    let wa = dense_walks(fr_a, &tree, n, &mut planner)?;
    match fr_g {
        Some(g) => {
            let wg = dense_walks(g, &tree, n, &mut planner)?;
            ThickSet::from_walks(&wa[n - 1], Some(&wg[n - 1]), gamma, delta, n, Side::Either)
        }
        None => ThickSet::from_walks(&wa[n - 1], None, gamma, delta, n, Side::A),
    }
}

/// Stratified sample of `count` distinct node indices of a level with `total` nodes.
pub fn stratified_nodes<R: Rng + ?Sized>(total: u64, count: usize, rng: &mut R) -> Vec<u64> {
    if count as u64 >= total {
        return (1..=total).collect();
    }
    let step = total as f64 / count as f64;
    let mut out: Vec<u64> = (0..count)
        .map(|i| {
            let x = (i as f64 + rng.random::<f64>()) * step;
            (x as u64).min(total - 1) + 1
        })
        .collect();
    out.dedup();
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThickLevelRow {
    pub n: usize,
    pub t_n: u64,
    /// Estimated E|𝒯_n| / T_n with its standard error over replicas.
    pub fraction: Summary,
    pub log2_fraction: f64,
    /// Per-replica estimates of |𝒩_{n+1}(𝒯_n)| / |𝒩_{n+1}|.
    pub descendant_fraction: Vec<f64>,
    /// 2^{-(1 + (γ-δ)^2) n / 4}.
    pub inequality_threshold: f64,
    /// Empirical P(descendant fraction > threshold).
    pub exceed_prob: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThickScaling {
    pub gamma: f64,
    pub delta: f64,
    pub replicas: usize,
    pub samples: usize,
    pub rows: Vec<ThickLevelRow>,
    pub fit: LinearFit,
    /// -(γ - δ)^2 / 2.
    pub predicted_slope: f64,
    /// Fitted C of the inequality, from the first level of the window.
    pub fitted_c: f64,
    /// C 2^{-((γ-δ)^2 - 1) n / 4} per level.
    pub inequality_bound: Vec<f64>,
}

/// Thick-point fraction per level on a fixed node sample shared across
/// replicas, plus the descendant fractions for the first-moment inequality.
pub fn thick_count_scaling(
    model: &CoefficientModel,
    gamma: f64,
    delta: f64,
    n_range: RangeInclusive<usize>,
    replicas: usize,
    samples: usize,
    seed: u64,
) -> Result<ThickScaling> {
    let n_lo = *n_range.start();
    let n_hi = *n_range.end();
    if n_lo < 1 || n_hi < n_lo {
        return Err(Error::Config(format!("bad level range {n_lo}..={n_hi}")));
    }
    let ps = PartitionSystem::build(n_hi + 1)?;
    let mut srng = stream(seed, "thick-sample", 0);
    let mut targets: Vec<(usize, u64)> = Vec::new();
    let mut own: Vec<(usize, usize)> = Vec::new();
    let mut desc: Vec<(usize, usize)> = Vec::new();
    for n in n_lo..=n_hi {
        let own_nodes = stratified_nodes(ps.t_count(n), samples, &mut srng);
        let start = targets.len();
        targets.extend(own_nodes.iter().map(|&j| (n, j)));
        own.push((start, targets.len()));
        let kids = stratified_nodes(ps.t_count(n + 1), samples, &mut srng);
        let start = targets.len();
        for &c in &kids {
            targets.push((n, ps.ancestor(n + 1, c, n)?));
        }
        desc.push((start, targets.len()));
    }
    let sample = AncestorSample::build(&ps, &targets)?;
    let k_max = (1u64 << n_hi) - 1;
    let per_replica: Vec<(Vec<f64>, Vec<f64>)> = map_indexed(replicas, |r| {
        let mut rng = stream(seed, "thick-field", r as u64);
        let fr = FieldRealization::sample(model, k_max, &mut rng);
        let mut planner = FftPlanner::new();
        let inc = sample.increments(&fr, &mut planner).expect("levels within k_max");
        let w = sample.walks(&inc);
        let mut fo = Vec::new();
        let mut fd = Vec::new();
        for (i, n) in (n_lo..=n_hi).enumerate() {
            let thr = thick_threshold(gamma, delta, n);
            let frac = |(a, b): (usize, usize)| w[a..b].iter().filter(|&&x| x >= thr).count() as f64 / (b - a) as f64;
            fo.push(frac(own[i]));
            fd.push(frac(desc[i]));
        }
        (fo, fd)
    });
    let gd2 = (gamma - delta).powi(2);
    let mut rows = Vec::new();
    for (i, n) in (n_lo..=n_hi).enumerate() {
        let fr: Vec<f64> = per_replica.iter().map(|p| p.0[i]).collect();
        let fd: Vec<f64> = per_replica.iter().map(|p| p.1[i]).collect();
        let s = summarize(&fr);
        let thr = 2f64.powf(-(1.0 + gd2) * n as f64 / 4.0);
        let exceed = fd.iter().filter(|&&x| x > thr).count() as f64 / replicas as f64;
        rows.push(ThickLevelRow { n, t_n: ps.t_count(n), log2_fraction: s.mean.log2(), fraction: s, descendant_fraction: fd, inequality_threshold: thr, exceed_prob: exceed });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.log2_fraction).collect();
    let fit = ols(&xs, &ys);
    let rate = |n: usize| 2f64.powf(-(gd2 - 1.0) * n as f64 / 4.0);
    let fitted_c = rows[0].exceed_prob.max(1.0 / replicas as f64) / rate(n_lo);
    let inequality_bound = rows.iter().map(|r| fitted_c * rate(r.n)).collect();
    Ok(ThickScaling { gamma, delta, replicas, samples, rows, fit, predicted_slope: -gd2 / 2.0, fitted_c, inequality_bound })
}

/// α and the barrier windows. Levels l are counted after the base level n;
/// the post-n walk must stay below α log2 · l for l in [start_after, horizon].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BarrierConfig {
    pub alpha: f64,
    pub start_after: usize,
    pub start_before: usize,
    pub horizon: usize,
}

impl BarrierConfig {
    /// Offsets ceil(log(n)^2) and ceil(log(n)^1.5).
    pub fn standard(gamma: f64, alpha: f64, n: usize, horizon: usize) -> Result<Self> {
        if !(alpha > gamma) {
            return Err(Error::Config(format!("alpha {alpha} must exceed gamma {gamma}")));
        }
        let ln = (n.max(1) as f64).ln();
        Ok(Self { alpha, start_after: ln.powi(2).ceil() as usize, start_before: ln.powf(1.5).ceil() as usize, horizon })
    }

    pub fn with_start(alpha: f64, start_after: usize, horizon: usize) -> Self {
        Self { alpha, start_after, start_before: 0, horizon }
    }
}

/// (M^{(1)}, M^{(2)}, M) of a subtree under a barrier.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BarrierSplit {
    pub good: f64,
    pub bad: f64,
    pub total: f64,
}

/// Splits the subtree mass by whether each leaf's post-n walk stays below
/// the barrier over the constrained window.
pub fn barrier_split_walk(plan: &SubtreePlan, walk: &SubtreeWalk, cfg: &BarrierConfig) -> BarrierSplit {
    let r = plan.r.min(cfg.horizon);
    let mut ok: Vec<bool> = vec![true];
    for l in 1..=plan.r {
        let w = &walk.walks[l - 1];
        let pa = &plan.parent[l - 1];
        let constrained = l >= cfg.start_after.max(1) && l <= r;
        let barrier = cfg.alpha * LN2 * l as f64;
        ok = (0..w.len()).map(|i| ok[pa[i] as usize] && !(constrained && w[i] >= barrier)).collect();
    }
    let terms = plan.leaf_log_terms(walk);
    let mut good = NeumaierSum::new();
    let mut bad = NeumaierSum::new();
    let mut total = NeumaierSum::new();
    for (t, o) in terms.iter().zip(&ok) {
        let e = t.exp();
        total.add(e);
        if *o {
            good.add(e);
        } else {
            bad.add(e);
        }
    }
    BarrierSplit { good: good.value(), bad: bad.value(), total: total.value() }
}

pub fn barrier_split(fr: &FieldRealization, ps: &PartitionSystem, gamma: f64, cfg: &BarrierConfig, n: usize, j: u64, r: usize) -> Result<BarrierSplit> {
    let plan = SubtreePlan::build(ps, &fr.model, gamma, n, j, r)?;
    let mut planner = FftPlanner::new();
    let walk = plan.walk(fr, &mut planner)?;
    Ok(barrier_split_walk(&plan, &walk, cfg))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub statistic: String,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

/// Distances |t_n(w1) - t_n(w2)| used by the covariance scan.
pub const COVARIANCE_DISTANCES: [f64; 4] = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];

/// E[(M^{(1)})^2], E[M^{(2)}] and Cov[M^{(1)}(w1), M^{(1)}(w2)] at the
/// distances above. Each replica draws one field and reuses it for every n.
pub fn moment_scan(
    model: &CoefficientModel,
    gamma: f64,
    alpha: f64,
    n_values: &[usize],
    r: usize,
    start_override: Option<usize>,
    replicas: usize,
    seed: u64,
) -> Result<Vec<MomentRow>> {
    let n_top = n_values.iter().max().copied().unwrap_or(1) + r;
    let ps = PartitionSystem::build(n_top)?;
    struct Job {
        n: usize,
        cfg: BarrierConfig,
        plans: Vec<SubtreePlan>,
    }
    let mut jobs = Vec::new();
    for &n in n_values {
        let cfg = match start_override {
            Some(s) => BarrierConfig::with_start(alpha, s, r),
            None => BarrierConfig::standard(gamma, alpha, n, r)?,
        };
        let (base, _) = ps.locate(n, 0.25)?;
        let mut plans = vec![SubtreePlan::build(&ps, model, gamma, n, base, r)?];
        for d in COVARIANCE_DISTANCES {
            let (j, _) = ps.locate(n, 0.25 + d)?;
            plans.push(SubtreePlan::build(&ps, model, gamma, n, j, r)?);
        }
        jobs.push(Job { n, cfg, plans });
    }
    let k_max = (1u64 << n_top) - 1;
    let per: Vec<Vec<Vec<BarrierSplit>>> = map_indexed(replicas, |rep| {
        let mut rng = stream(seed, "moment-scan", rep as u64);
        let fr = FieldRealization::sample(model, k_max, &mut rng);
        let mut planner = FftPlanner::new();
        jobs.iter()
            .map(|job| {
                job.plans
                    .iter()
                    .map(|p| {
                        let w = p.walk(&fr, &mut planner).expect("plan within k_max");
                        barrier_split_walk(p, &w, &job.cfg)
                    })
                    .collect()
            })
            .collect()
    });
    let mut rows = Vec::new();
    for (ji, job) in jobs.iter().enumerate() {
        let row = |statistic: String, xs: &[f64]| {
            let s = summarize(xs);
            MomentRow { n: job.n, alpha, gamma, statistic, mean: s.mean, stderr: s.stderr, replicas }
        };
        let g0: Vec<f64> = per.iter().map(|p| p[ji][0].good).collect();
        let m2: Vec<f64> = per.iter().map(|p| p[ji][0].bad).collect();
        let tot: Vec<f64> = per.iter().map(|p| p[ji][0].total).collect();
        rows.push(row("second_moment_good".into(), &g0.iter().map(|x| x * x).collect::<Vec<_>>()));
        rows.push(row("mean_bad".into(), &m2));
        rows.push(row("mean_total".into(), &tot));
        for (di, d) in COVARIANCE_DISTANCES.iter().enumerate() {
            let g1: Vec<f64> = per.iter().map(|p| p[ji][di + 1].good).collect();
            let (c, se) = crate::numeric::covariance_with_se(&g0, &g1);
            rows.push(MomentRow { n: job.n, alpha, gamma, statistic: format!("cov_good_d{d}"), mean: c, stderr: se, replicas });
        }
    }
    Ok(rows)
}

/// μ̃-masses of E^+_{n,j} (walk above (γ + 1/j) log2 n) and E^-_{n,j}
/// (walk below (γ - 1/j) log2 n).
pub fn nonthick_mass_walk(mu: &ChaosApproximant, walk: &[f64], j: u32) -> Result<(f64, f64)> {
    if !(mu.gamma > 0.0) || j == 0 {
        return Err(Error::Domain("thickness needs gamma > 0 and j >= 1".into()));
    }
    let n = mu.level as f64;
    let hi = (mu.gamma + 1.0 / j as f64) * LN2 * n;
    let lo = (mu.gamma - 1.0 / j as f64) * LN2 * n;
    let mut plus = NeumaierSum::new();
    let mut minus = NeumaierSum::new();
    for (lw, w) in mu.log_weights.iter().zip(walk) {
        if *w > hi {
            plus.add(lw.exp());
        } else if *w < lo {
            minus.add(lw.exp());
        }
    }
    Ok((plus.value(), minus.value()))
}

pub fn nonthick_mass(fr: &FieldRealization, ps: &PartitionSystem, gamma: f64, j: u32, n: usize) -> Result<(f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::Domain("thickness undefined at gamma = 0".into()));
    }
    let tree = ps.dense(n)?;
    let mut planner = FftPlanner::new();
    let walks = dense_walks(fr, &tree, n, &mut planner)?;
    let logz = crate::chaos::dense_log_partition(&fr.model, gamma, &tree, n, &mut planner);
    let mu = ChaosApproximant::from_parts(n, gamma, &tree.level(n).len, &walks[n - 1], &logz[n - 1]);
    nonthick_mass_walk(&mu, &walks[n - 1], j)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonthickRow {
    pub n: usize,
    pub j: u32,
    pub plus: Summary,
    pub minus: Summary,
}

/// E[μ̃(E^±_{n,j})] by length-biased sampling: for t uniform on [0, 1), the
/// node containing t is drawn with probability |I_n(v)|, so the mean of
/// e^{γ S̃ - log Z̃} 1{E^±} over points and replicas is unbiased.
pub fn nonthick_mass_scan(model: &CoefficientModel, gamma: f64, js: &[u32], n_values: &[usize], replicas: usize, points: usize, seed: u64) -> Result<Vec<NonthickRow>> {
    let n_top = *n_values.iter().max().unwrap_or(&1);
    let ps = PartitionSystem::build(n_top)?;
    let mut srng = stream(seed, "nonthick-points", 0);
    let mut targets = Vec::new();
    for &n in n_values {
        for i in 0..points {
            let t = (i as f64 + srng.random::<f64>()) / points as f64;
            targets.push((n, ps.locate(n, t)?.0));
        }
    }
    let sample = AncestorSample::build(&ps, &targets)?;
    let mut planner = FftPlanner::new();
    let logz: Vec<Vec<f64>> = (1..=n_top).map(|m| crate::chaos::block_log_partition_at_points(model, gamma, m, &sample.reps[m - 1], &mut planner)).collect();
    let target_logz = sample.walks(&logz);
    let k_max = (1u64 << n_top) - 1;
    let per: Vec<Vec<(f64, f64)>> = map_indexed(replicas, |rep| {
        let mut rng = stream(seed, "nonthick-field", rep as u64);
        let fr = FieldRealization::sample(model, k_max, &mut rng);
        let mut planner = FftPlanner::new();
        let inc = sample.increments(&fr, &mut planner).expect("levels within k_max");
        let w = sample.walks(&inc);
        let mut out = Vec::new();
        for (ni, &n) in n_values.iter().enumerate() {
            for &j in js {
                let hi = (gamma + 1.0 / j as f64) * LN2 * n as f64;
                let lo = (gamma - 1.0 / j as f64) * LN2 * n as f64;
                let (mut p, mut m) = (0.0, 0.0);
                for i in ni * points..(ni + 1) * points {
                    let e = (gamma * w[i] - target_logz[i]).exp();
                    if w[i] > hi {
                        p += e;
                    } else if w[i] < lo {
                        m += e;
                    }
                }
                out.push((p / points as f64, m / points as f64));
            }
        }
        out
    });
    let mut rows = Vec::new();
    let mut idx = 0;
    for &n in n_values {
        for &j in js {
            let p: Vec<f64> = per.iter().map(|v| v[idx].0).collect();
            let m: Vec<f64> = per.iter().map(|v| v[idx].1).collect();
            rows.push(NonthickRow { n, j, plus: summarize(&p), minus: summarize(&m) });
            idx += 1;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_has_no_thick_points() {
        let ps = PartitionSystem::build(5).unwrap();
        let zero = FieldRealization::zeros(CoefficientModel::rademacher(), 31);
        for n in 1..=5 {
            assert!(thick_points(&zero, None, &ps, 1.2, 0.1, n).unwrap().is_empty());
        }
    }

    #[test]
    fn sides_nest() {
        let ps = PartitionSystem::build(6).unwrap();
        let mut rng = stream(21, "thick-test", 0);
        let fa = FieldRealization::sample_levels(&CoefficientModel::rademacher(), 6, &mut rng);
        let fg = FieldRealization::sample_levels(&CoefficientModel::gaussian(), 6, &mut rng);
        let a = thick_points(&fa, None, &ps, 1.2, 0.1, 6).unwrap();
        let e = thick_points(&fa, Some(&fg), &ps, 1.2, 0.1, 6).unwrap();
        assert!(a.members.iter().all(|j| e.contains(*j)));
        let wider = thick_points(&fa, None, &ps, 1.2, 0.3, 6).unwrap();
        assert!(a.members.iter().all(|j| wider.contains(*j)));
    }

    #[test]
    fn barrier_examples() {
        let ps = PartitionSystem::build(8).unwrap();
        let m = CoefficientModel::rademacher();
        let mut rng = stream(22, "thick-test", 0);
        let fr = FieldRealization::sample_levels(&m, 8, &mut rng);
        let plan = SubtreePlan::build(&ps, &m, 1.2, 4, 100, 4).unwrap();
        let mut planner = FftPlanner::new();
        let walk = plan.walk(&fr, &mut planner).unwrap();
        let mass = plan.mass(&walk);
        let big = barrier_split_walk(&plan, &walk, &BarrierConfig::with_start(10.0, 1, 4));
        assert_eq!(big.bad, 0.0);
        assert!((big.good - mass).abs() <= 1e-12 * mass);
        let late = barrier_split_walk(&plan, &walk, &BarrierConfig::with_start(1.3, 5, 4));
        assert_eq!(late.bad, 0.0);
        let tight = barrier_split_walk(&plan, &walk, &BarrierConfig::with_start(1.21, 1, 4));
        assert!((tight.good + tight.bad - mass).abs() <= 1e-12 * mass);
        assert!(BarrierConfig::standard(1.2, 1.1, 6, 4).is_err());
        let std6 = BarrierConfig::standard(1.2, 1.3, 6, 4).unwrap();
        assert_eq!(std6.start_after, 4);
    }

    #[test]
    fn nonthick_nests_in_j() {
        let ps = PartitionSystem::build(6).unwrap();
        let mut rng = stream(23, "thick-test", 0);
        let fr = FieldRealization::sample_levels(&CoefficientModel::rademacher(), 6, &mut rng);
        let total = crate::chaos::measure_level(&fr, &ps, 1.2, 6).unwrap().total;
        let mut prev = 0.0;
        for j in 1..6 {
            let (p, m) = nonthick_mass(&fr, &ps, 1.2, j, 6).unwrap();
            assert!(p + m >= prev - 1e-15 && p + m <= total * (1.0 + 1e-12));
            prev = p + m;
        }
        assert!(nonthick_mass(&fr, &ps, 0.0, 2, 6).is_err());
    }

    #[test]
    fn stratified_nodes_are_distinct_and_in_range() {
        let mut rng = stream(24, "thick-test", 0);
        let v = stratified_nodes(1000, 100, &mut rng);
        assert_eq!(v.len(), 100);
        assert!(v.windows(2).all(|w| w[0] < w[1]) && v[0] >= 1 && *v.last().unwrap() <= 1000);
    }
}
