//! Partition functions, hierarchical and continuum chaos approximants,
//! subtree masses and the Radon-Nikodym candidate.
//!
//! Masses are carried in log space: log weight = log |I| + γ S̃ - log Z̃.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::coeffs::{CoefficientModel, Law};
use crate::error::{Error, Result};
use crate::field::{block_range, extend_walk, FieldRealization};
use crate::numeric::{LogSumExp, NeumaierSum};
use crate::partition::{DenseLevel, DenseLevels, PartitionSystem, DENSE_LEVEL_LIMIT};
use crate::spectral::{phase, SpectralEvaluator};

const HARMONIC_GRID: usize = 256;
const HARMONIC_CUTOFF: f64 = 1e-20;

/// Σ_{k=k_lo}^{k_hi} Λ(γ cos 2πkt/√k) + Λ(γ sin 2πkt/√k).
pub fn log_partition_range(model: &CoefficientModel, gamma: f64, k_lo: u64, k_hi: u64, t: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    for k in k_lo..=k_hi {
        let (s, c) = phase(k, t);
        acc.add(model.pair_log_mgf(gamma, k, c, s));
    }
    acc.value()
}

/// Contribution of block m at the point t.
pub fn block_log_partition(model: &CoefficientModel, gamma: f64, m: usize, t: f64) -> f64 {
    let (lo, hi) = block_range(m);
    log_partition_range(model, gamma, lo, hi, t)
}

/// log Z̃_{n,γ,ã}(t_n(v)) for node (n, j), summed along the ancestor chain.
pub fn log_partition_hier(model: &CoefficientModel, gamma: f64, ps: &PartitionSystem, n: usize, j: u64) -> Result<f64> {
    let node = ps.node(n, j)?;
    if model.law == Law::Gaussian {
        return Ok(0.5 * gamma * gamma * crate::numeric::harmonic((1u64 << n) - 1));
    }
    let mut acc = NeumaierSum::new();
    for m in 1..=n {
        let rep = ps.node(m, ps.count_le(m, node.tau_num))?.rep;
        acc.add(block_log_partition(model, gamma, m, rep));
    }
    Ok(acc.value())
}

/// log Z_{n_freq}(t) for the continuum series.
pub fn log_partition_series(model: &CoefficientModel, gamma: f64, n_freq: u64, t: f64) -> f64 {
    log_partition_range(model, gamma, 1, n_freq, t)
}

/// The map t -> Σ_{k in range} Λ(γ cos 2πkt/√k) + Λ(γ sin 2πkt/√k) as a
/// trigonometric polynomial in t: each frequency contributes harmonics qk of
/// the θ-periodic function θ -> Λ(γ cos θ/√k) + Λ(γ sin θ/√k).
pub fn log_partition_terms(model: &CoefficientModel, gamma: f64, k_lo: u64, k_hi: u64, planner: &mut FftPlanner<f64>) -> Vec<(u64, Complex64)> {
    if model.law == Law::Gaussian {
        let mut acc = NeumaierSum::new();
        for k in k_lo..=k_hi {
            acc.add(0.5 * gamma * gamma / k as f64);
        }
        return vec![(0, Complex64::new(acc.value(), 0.0))];
    }
    let g = HARMONIC_GRID;
    let fft = planner.plan_fft_forward(g);
    let trig: Vec<(f64, f64)> = (0..g).map(|i| (std::f64::consts::TAU * i as f64 / g as f64).sin_cos()).collect();
    let mut constant = NeumaierSum::new();
    let mut out = Vec::new();
    let mut buf = vec![Complex64::new(0.0, 0.0); g];
    for k in k_lo..=k_hi {
        for (b, &(s, c)) in buf.iter_mut().zip(&trig) {
            *b = Complex64::new(model.pair_log_mgf(gamma, k, c, s), 0.0);
        }
        fft.process(&mut buf);
        constant.add(buf[0].re / g as f64);
        for (q, b) in buf.iter().enumerate().take(g / 2).skip(1) {
            let h = *b * (2.0 / g as f64);
            if h.norm() > HARMONIC_CUTOFF {
                out.push((q as u64 * k, h));
            }
        }
    }
    out.push((0, Complex64::new(constant.value(), 0.0)));
    out
}

/// Block-m log partition at many points: direct for small blocks, the
/// harmonic expansion otherwise.
pub fn block_log_partition_at_points(model: &CoefficientModel, gamma: f64, m: usize, points: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let (lo, hi) = block_range(m);
    log_partition_range_at_points(model, gamma, lo, hi, points, planner)
}

pub fn log_partition_range_at_points(model: &CoefficientModel, gamma: f64, lo: u64, hi: u64, points: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let width = hi - lo + 1;
    if model.law == Law::Gaussian {
        let v = log_partition_range(model, gamma, lo, hi, 0.0);
        return vec![v; points.len()];
    }
    if width * (points.len() as u64) <= 1 << 15 {
        return points.iter().map(|&t| log_partition_range(model, gamma, lo, hi, t)).collect();
    }
    let terms = log_partition_terms(model, gamma, lo, hi, planner);
    let ev = SpectralEvaluator::new(&terms, 16, 1e-17, planner);
    let mut out = vec![0.0; points.len()];
    ev.eval_many(points, &mut out);
    out
}

/// Cumulative log Z̃ for every node at levels 1..=depth.
pub fn dense_log_partition(model: &CoefficientModel, gamma: f64, tree: &DenseLevels, depth: usize, planner: &mut FftPlanner<f64>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for n in 1..=depth {
        let mut z = block_log_partition_at_points(model, gamma, n, &tree.level(n).rep, planner);
        if n > 1 {
            extend_walk(&out[n - 2], &tree.level(n - 1).nchild, &mut z);
        }
        out.push(z);
    }
    out
}

/// The level-n hierarchical chaos measure as per-node weights.
#[derive(Clone, Debug)]
pub struct ChaosApproximant {
    pub level: usize,
    pub gamma: f64,
    pub log_weights: Vec<f64>,
    pub total: f64,
    pub log_total: f64,
}

impl ChaosApproximant {
    /// Weights |I| exp(γ S̃ - log Z̃) from per-node lengths, walks and log Z̃.
    pub fn from_parts(level: usize, gamma: f64, len: &[f64], walk: &[f64], log_z: &[f64]) -> Self {
        let log_weights: Vec<f64> = len.iter().zip(walk).zip(log_z).map(|((l, w), z)| l.ln() + gamma * w - z).collect();
        Self::from_log_weights(level, gamma, log_weights)
    }

    pub fn from_log_weights(level: usize, gamma: f64, log_weights: Vec<f64>) -> Self {
        let mut sum = NeumaierSum::new();
        let mut lse = LogSumExp::new();
        for &w in &log_weights {
            sum.add(w.exp());
            lse.add(w);
        }
        Self { level, gamma, log_weights, total: sum.value(), log_total: lse.value() }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// CSV with columns level, node, log_weight, weight.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,node,log_weight,weight\n");
        for (i, w) in self.log_weights.iter().enumerate() {
            s.push_str(&format!("{},{},{:.17e},{:.17e}\n", self.level, i + 1, w, w.exp()));
        }
        s
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// μ̃_{n,γ,ã} from scratch: dense tree, walks and normalizers to level n.
pub fn measure_level(fr: &FieldRealization, ps: &PartitionSystem, gamma: f64, n: usize) -> Result<ChaosApproximant> {
    check_gamma(gamma)?;
    if n > DENSE_LEVEL_LIMIT {
        return Err(Error::Capacity { level: n, count: ps.t_count(n).to_string(), limit: DENSE_LEVEL_LIMIT });
    }
    let tree = ps.dense(n)?;
    let mut planner = FftPlanner::new();
    let walks = crate::field::dense_walks(fr, &tree, n, &mut planner)?;
    let logz = dense_log_partition(&fr.model, gamma, &tree, n, &mut planner);
    Ok(ChaosApproximant::from_parts(n, gamma, &tree.level(n).len, &walks[n - 1], &logz[n - 1]))
}

/// Deterministic normalizer of the continuum measure on a midpoint grid.
#[derive(Clone, Debug)]
pub struct ContinuumNormalizer {
    pub depth: usize,
    pub n_freq: u64,
    pub gamma: f64,
    pub log_z: Vec<f64>,
}

pub fn midpoint_grid(depth: usize) -> Vec<f64> {
    let n = 1usize << depth;
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

impl ContinuumNormalizer {
    pub fn new(model: &CoefficientModel, gamma: f64, n_freq: u64, depth: usize, planner: &mut FftPlanner<f64>) -> Self {
        let grid = midpoint_grid(depth);
        let log_z = log_partition_range_at_points(model, gamma, 1, n_freq, &grid, planner);
        Self { depth, n_freq, gamma, log_z }
    }
}

/// Masses ∫_{I} e^{γ S_{n_freq}(t)} / Z(t) dt over the intervals of `level`,
/// by midpoint quadrature with 2^depth points.
pub fn measure_continuum_with(fr: &FieldRealization, norm: &ContinuumNormalizer, level: &DenseLevel, planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
    check_gamma(norm.gamma)?;
    let grid = midpoint_grid(norm.depth);
    let s = series_at_points(fr, norm.n_freq, &grid, planner)?;
    let h = 1.0 / grid.len() as f64;
    let log_density: Vec<f64> = s.iter().zip(&norm.log_z).map(|(s, z)| norm.gamma * s - z).collect();
    Ok(aggregate_grid(&grid, &log_density, h, level))
}

/// Convenience form that builds the normalizer and level on the fly.
pub fn measure_continuum(fr: &FieldRealization, ps: &PartitionSystem, gamma: f64, n_freq: u64, n: usize, quadrature_depth: usize) -> Result<Vec<f64>> {
    if quadrature_depth < n + 2 {
        return Err(Error::Domain(format!("quadrature depth {quadrature_depth} below n + 2 = {}", n + 2)));
    }
    let mut planner = FftPlanner::new();
    let tree = ps.dense(n)?;
    let norm = ContinuumNormalizer::new(&fr.model, gamma, n_freq, quadrature_depth, &mut planner);
    measure_continuum_with(fr, &norm, tree.level(n), &mut planner)
}

/// S_{n_freq} at many points.
pub fn series_at_points(fr: &FieldRealization, n_freq: u64, points: &[f64], planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
    if n_freq > fr.k_max {
        return Err(Error::Domain(format!("frequency {n_freq} beyond K_max = {}", fr.k_max)));
    }
    let (b1, b2) = fr.scaled();
    if n_freq * points.len() as u64 <= 1 << 16 {
        let mut out = vec![0.0; points.len()];
        crate::spectral::block_sums(points, b1, b2, 1, n_freq, &mut out);
        return Ok(out);
    }
    let ev = SpectralEvaluator::new(&crate::spectral::block_terms(b1, b2, 1, n_freq), 16, 1e-17, planner);
    let mut out = vec![0.0; points.len()];
    ev.eval_many(points, &mut out);
    Ok(out)
}

/// Sums h·exp(log_density) over the sorted grid into the intervals of `level`.
fn aggregate_grid(grid: &[f64], log_density: &[f64], h: f64, level: &DenseLevel) -> Vec<f64> {
    let count = level.len_nodes();
    let mut acc: Vec<NeumaierSum> = vec![NeumaierSum::new(); count];
    let mut j = 0usize;
    for (x, ld) in grid.iter().zip(log_density) {
        while j + 1 < count && level.tau[j + 1] <= *x {
            j += 1;
        }
        acc[j].add(h * ld.exp());
    }
    acc.iter().map(|a| a.value()).collect()
}

/// Level-by-level description of the subtree of node w = (n, j) down to
/// level n + r, with the deterministic parts (lengths, normalizers)
/// precomputed for one law and γ.
#[derive(Clone, Debug)]
pub struct SubtreePlan {
    pub n: usize,
    pub j: u64,
    pub r: usize,
    pub gamma: f64,
    /// reps[l] and parent[l] describe level n + 1 + l; parent indexes level n + l.
    pub reps: Vec<Vec<f64>>,
    pub parent: Vec<Vec<u32>>,
    /// Cumulative log Z̃_{(n, n+l]} per node.
    pub log_z: Vec<Vec<f64>>,
    /// |I_{n+r}(u)| / |I_n(w)| per leaf.
    pub rel_len: Vec<f64>,
}

/// Post-n walk values S̃_{(n, n+l]} per level of a plan.
#[derive(Clone, Debug)]
pub struct SubtreeWalk {
    pub walks: Vec<Vec<f64>>,
}

impl SubtreePlan {
    pub fn build(ps: &PartitionSystem, model: &CoefficientModel, gamma: f64, n: usize, j: u64, r: usize) -> Result<Self> {
        if n + r > ps.n_max() {
            return Err(Error::Domain(format!("n + r = {} exceeds n_max = {}", n + r, ps.n_max())));
        }
        let root = ps.node(n, j)?;
        let mut reps = Vec::with_capacity(r);
        let mut parent = Vec::with_capacity(r);
        let mut log_z: Vec<Vec<f64>> = Vec::with_capacity(r);
        let mut prev = (root.index..root.index + 1, vec![root.tau_num]);
        let mut planner = FftPlanner::new();
        let mut last_len = vec![root.len];
        for l in 1..=r {
            let level = n + l;
            let range = ps.subtree_of(&root, level);
            let mut rp = Vec::with_capacity((range.end - range.start) as usize);
            let mut pa = Vec::with_capacity(rp.capacity());
            let mut taus = Vec::with_capacity(rp.capacity());
            let mut lens = Vec::with_capacity(rp.capacity());
            let mut p = 0usize;
            for idx in range.clone() {
                let node = ps.node(level, idx)?;
                while p + 1 < prev.1.len() && prev.1[p + 1] <= node.tau_num {
                    p += 1;
                }
                rp.push(node.rep);
                pa.push(p as u32);
                taus.push(node.tau_num);
                lens.push(node.len);
            }
            let mut z = block_log_partition_at_points(model, gamma, level, &rp, &mut planner);
            if l > 1 {
                for (zi, &pi) in z.iter_mut().zip(&pa) {
                    *zi += log_z[l - 2][pi as usize];
                }
            }
            reps.push(rp);
            parent.push(pa);
            log_z.push(z);
            prev = (range, taus);
            last_len = lens;
        }
        let rel_len = last_len.iter().map(|l| l / root.len).collect();
        Ok(Self { n, j, r, gamma, reps, parent, log_z, rel_len })
    }

    pub fn leaves(&self) -> usize {
        self.rel_len.len()
    }

    pub fn walk(&self, fr: &FieldRealization, planner: &mut FftPlanner<f64>) -> Result<SubtreeWalk> {
        let mut walks: Vec<Vec<f64>> = Vec::with_capacity(self.r);
        for l in 1..=self.r {
            let mut w = fr.block_at_points_auto(self.n + l, &self.reps[l - 1], planner)?;
            if l > 1 {
                for (wi, &pi) in w.iter_mut().zip(&self.parent[l - 1]) {
                    *wi += walks[l - 2][pi as usize];
                }
            }
            walks.push(w);
        }
        Ok(SubtreeWalk { walks })
    }

    /// Per-leaf log of |I_{n+r}(u)|/|I_n(w)| e^{γ S̃_{(n,n+r]}} / Z̃_{(n,n+r]}.
    pub fn leaf_log_terms(&self, walk: &SubtreeWalk) -> Vec<f64> {
        if self.r == 0 {
            return vec![0.0];
        }
        let w = &walk.walks[self.r - 1];
        let z = &self.log_z[self.r - 1];
        (0..self.leaves()).map(|i| self.rel_len[i].ln() + self.gamma * w[i] - z[i]).collect()
    }

    pub fn mass(&self, walk: &SubtreeWalk) -> f64 {
        let mut acc = NeumaierSum::new();
        for t in self.leaf_log_terms(walk) {
            acc.add(t.exp());
        }
        acc.value()
    }
}

/// M_{n,ã}(w) truncated at depth r.
pub fn subtree_mass(fr: &FieldRealization, ps: &PartitionSystem, gamma: f64, n: usize, j: u64, r: usize) -> Result<f64> {
    let plan = SubtreePlan::build(ps, &fr.model, gamma, n, j, r)?;
    let mut planner = FftPlanner::new();
    let walk = plan.walk(fr, &mut planner)?;
    Ok(plan.mass(&walk))
}

/// log R̃_{n,γ}(t) = γ(S̃_g - S̃_a) + log Z̃_a - log Z̃_g at the level-n node
/// containing t.
pub fn log_rn_candidate(fr_a: &FieldRealization, fr_g: &FieldRealization, ps: &PartitionSystem, gamma: f64, n: usize, t: f64) -> Result<f64> {
    let (j, _) = ps.locate(n, t)?;
    let sa = *fr_a.tree_walk(ps, n, j)?.last().unwrap();
    let sg = *fr_g.tree_walk(ps, n, j)?.last().unwrap();
    let za = log_partition_hier(&fr_a.model, gamma, ps, n, j)?;
    let zg = log_partition_hier(&fr_g.model, gamma, ps, n, j)?;
    Ok(gamma * (sg - sa) + za - zg)
}

pub fn rn_candidate(fr_a: &FieldRealization, fr_g: &FieldRealization, ps: &PartitionSystem, gamma: f64, n: usize, t: f64) -> Result<f64> {
    Ok(log_rn_candidate(fr_a, fr_g, ps, gamma, n, t)?.exp())
}
