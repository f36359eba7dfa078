//! Random Fourier series, dyadic-block increments, and the tree field.
//!
//! Block n collects frequencies k in [2^{n-1}, 2^n - 1]. The increment of
//! node v at level n is that block evaluated at the representative t_n(v);
//! the walk of v is the sum of increments of its ancestors.

use nalgebra::DMatrix;
use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::coeffs::CoefficientModel;
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::partition::{DenseLevel, DenseLevels, PartitionSystem};
use crate::spectral::{self, block_sums, block_terms, phase, SpectralEvaluator};

/// Frequencies of block n.
pub fn block_range(n: usize) -> (u64, u64) {
    (1u64 << (n - 1), (1u64 << n) - 1)
}

/// One sampled coefficient sequence (a_k^{(1)}, a_k^{(2)}), k = 1..=k_max.
#[derive(Clone, Debug)]
pub struct FieldRealization {
    pub model: CoefficientModel,
    pub k_max: u64,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

impl FieldRealization {
    /// Draws are interleaved per frequency, (a1_1, a2_1, a1_2, ...), so a
    /// realization with a larger k_max extends a smaller one drawn from the
    /// same stream.
    pub fn sample<R: Rng + ?Sized>(model: &CoefficientModel, k_max: u64, rng: &mut R) -> Self {
        let mut a1 = Vec::with_capacity(k_max as usize);
        let mut a2 = Vec::with_capacity(k_max as usize);
        for _ in 0..k_max {
            a1.push(model.sample(rng));
            a2.push(model.sample(rng));
        }
        Self::from_coefficients(model.clone(), a1, a2)
    }

    /// Realization with K = 2^{n_max} - 1 frequencies.
    pub fn sample_levels<R: Rng + ?Sized>(model: &CoefficientModel, n_max: usize, rng: &mut R) -> Self {
        Self::sample(model, (1u64 << n_max) - 1, rng)
    }

    pub fn from_coefficients(model: CoefficientModel, a1: Vec<f64>, a2: Vec<f64>) -> Self {
        assert_eq!(a1.len(), a2.len());
        let k_max = a1.len() as u64;
        let mut fr = Self { model, k_max, a1, a2, b1: Vec::new(), b2: Vec::new() };
        fr.rescale();
        fr
    }

    pub fn zeros(model: CoefficientModel, k_max: u64) -> Self {
        Self::from_coefficients(model, vec![0.0; k_max as usize], vec![0.0; k_max as usize])
    }

    fn rescale(&mut self) {
        let s: Vec<f64> = (1..=self.k_max).map(|k| 1.0 / (k as f64).sqrt()).collect();
        self.b1 = self.a1.iter().zip(&s).map(|(a, s)| a * s).collect();
        self.b2 = self.a2.iter().zip(&s).map(|(a, s)| a * s).collect();
    }

    /// Replaces the coefficients of block n with fresh draws.
    pub fn resample_block<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) {
        let (lo, hi) = block_range(n);
        for k in lo..=hi.min(self.k_max) {
            let i = (k - 1) as usize;
            self.a1[i] = self.model.sample(rng);
            self.a2[i] = self.model.sample(rng);
            let s = 1.0 / (k as f64).sqrt();
            self.b1[i] = self.a1[i] * s;
            self.b2[i] = self.a2[i] * s;
        }
    }

    /// Overwrites block n with the given coefficient vectors.
    pub fn set_block(&mut self, n: usize, a1: &[f64], a2: &[f64]) {
        let (lo, hi) = block_range(n);
        assert_eq!(a1.len() as u64, hi - lo + 1);
        for (off, k) in (lo..=hi).enumerate() {
            let i = (k - 1) as usize;
            self.a1[i] = a1[off];
            self.a2[i] = a2[off];
            let s = 1.0 / (k as f64).sqrt();
            self.b1[i] = a1[off] * s;
            self.b2[i] = a2[off] * s;
        }
    }

    pub fn scaled(&self) -> (&[f64], &[f64]) {
        (&self.b1, &self.b2)
    }

    pub fn levels_available(&self) -> usize {
        (64 - (self.k_max + 1).leading_zeros() - 1) as usize
    }

    fn need(&self, k_hi: u64) -> Result<()> {
        if k_hi > self.k_max {
            return Err(Error::Domain(format!("frequency {k_hi} beyond K_max = {}", self.k_max)));
        }
        Ok(())
    }

    /// X_k(t).
    pub fn summand(&self, k: u64, t: f64) -> f64 {
        let (s, c) = phase(k, t);
        self.b1[(k - 1) as usize] * c + self.b2[(k - 1) as usize] * s
    }

    /// S_{n_freq}(t) by trigonometric recurrence with compensated summation.
    pub fn eval_series(&self, n_freq: u64, t: f64) -> Result<f64> {
        self.need(n_freq)?;
        Ok(spectral::block_sum_compensated(t, &self.b1, &self.b2, 1, n_freq))
    }

    /// Σ_{k=k_lo}^{k_hi} X_k(t), compensated.
    pub fn partial_sum(&self, k_lo: u64, k_hi: u64, t: f64) -> Result<f64> {
        self.need(k_hi)?;
        Ok(spectral::block_sum_compensated(t, &self.b1, &self.b2, k_lo, k_hi))
    }

    /// Block n evaluated at t (ã_n at any point of the form t_n(v)).
    pub fn block_at(&self, n: usize, t: f64) -> Result<f64> {
        let (lo, hi) = block_range(n);
        self.partial_sum(lo, hi, t)
    }

    /// Block n at many points, vectorized direct summation.
    pub fn block_at_points(&self, n: usize, points: &[f64]) -> Result<Vec<f64>> {
        let (lo, hi) = block_range(n);
        self.need(hi)?;
        let mut out = vec![0.0; points.len()];
        block_sums(points, &self.b1, &self.b2, lo, hi, &mut out);
        Ok(out)
    }

    /// Block n at many sorted points through the FFT Taylor tables.
    pub fn block_at_points_spectral(&self, n: usize, points: &[f64], planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
        let (lo, hi) = block_range(n);
        self.need(hi)?;
        let ev = SpectralEvaluator::new(&block_terms(&self.b1, &self.b2, lo, hi), 8, 1e-17, planner);
        let mut out = vec![0.0; points.len()];
        ev.eval_many(points, &mut out);
        Ok(out)
    }

    /// Block n at every point, choosing the cheaper route.
    pub fn block_at_points_auto(&self, n: usize, points: &[f64], planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
        let width = 1u64 << (n - 1);
        if width * points.len() as u64 <= 1 << 16 || width <= 16 {
            self.block_at_points(n, points)
        } else {
            self.block_at_points_spectral(n, points, planner)
        }
    }

    /// (ã_n(v))_{v in N_n} for all nodes of level n (compensated route).
    pub fn increment_vector(&self, ps: &PartitionSystem, n: usize) -> Result<Vec<f64>> {
        let t = ps.t_count(n);
        let mut out = Vec::with_capacity(t as usize);
        for j in 1..=t {
            out.push(self.block_at(n, ps.node(n, j)?.rep)?);
        }
        Ok(out)
    }

    /// S̃_{1,a}(v), ..., S̃_{n,a}(v) for node (n, j).
    pub fn tree_walk(&self, ps: &PartitionSystem, n: usize, j: u64) -> Result<Vec<f64>> {
        let node = ps.node(n, j)?;
        let mut walk = Vec::with_capacity(n);
        let mut acc = NeumaierSum::new();
        for m in 1..=n {
            let jm = ps.count_le(m, node.tau_num);
            let rep = ps.node(m, jm)?.rep;
            acc.add(self.block_at(m, rep)?);
            walk.push(acc.value());
        }
        Ok(walk)
    }
}

/// Exact covariance Σ_{k<=n} cos(2πk(t - s)) / k of S_n(t) and S_n(s).
pub fn cov_exact(n_freq: u64, t: f64, s: f64) -> f64 {
    let d = t - s;
    let mut acc = NeumaierSum::new();
    for k in 1..=n_freq {
        acc.add(phase(k, d).1 / k as f64);
    }
    acc.value()
}

/// C^{(1)}_{k,n}(v) and C^{(2)}_{k,n}(v) for the given nodes; rows are
/// frequencies of block n, columns are nodes.
#[derive(Clone, Debug)]
pub struct IncrementMatrix {
    pub level: usize,
    pub reps: Vec<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
}

impl IncrementMatrix {
    pub fn from_reps(level: usize, reps: &[f64]) -> Self {
        let (lo, hi) = block_range(level);
        let rows = (hi - lo + 1) as usize;
        let mut c1 = DMatrix::zeros(rows, reps.len());
        let mut c2 = DMatrix::zeros(rows, reps.len());
        for (col, &t) in reps.iter().enumerate() {
            for (row, k) in (lo..=hi).enumerate() {
                let (s, c) = phase(k, t);
                let w = 1.0 / (k as f64).sqrt();
                c1[(row, col)] = c * w;
                c2[(row, col)] = s * w;
            }
        }
        Self { level, reps: reps.to_vec(), c1, c2 }
    }

    pub fn build(ps: &PartitionSystem, level: usize, nodes: &[u64]) -> Result<Self> {
        let reps = nodes.iter().map(|&j| ps.node(level, j).map(|n| n.rep)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_reps(level, &reps))
    }

    /// (ã^{(1)}, ã^{(2)}) = (C1ᵀ a1, C2ᵀ a2) for a coefficient block.
    pub fn apply(&self, a1: &[f64], a2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x1 = nalgebra::DVector::from_column_slice(a1);
        let x2 = nalgebra::DVector::from_column_slice(a2);
        let y1 = self.c1.tr_mul(&x1);
        let y2 = self.c2.tr_mul(&x2);
        (y1.iter().cloned().collect(), y2.iter().cloned().collect())
    }

    /// Analytic covariance of (ã^{(1)}(v), ã^{(2)}(v))_v, ordered
    /// [family 1 nodes..., family 2 nodes...].
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.reps.len();
        let mut cov = DMatrix::zeros(2 * m, 2 * m);
        let g1 = self.c1.tr_mul(&self.c1);
        let g2 = self.c2.tr_mul(&self.c2);
        cov.view_mut((0, 0), (m, m)).copy_from(&g1);
        cov.view_mut((m, m), (m, m)).copy_from(&g2);
        cov
    }
}

/// Walks of every node at levels 1..=depth, level by level.
pub fn dense_walks(fr: &FieldRealization, tree: &DenseLevels, depth: usize, planner: &mut FftPlanner<f64>) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(depth);
    for n in 1..=depth {
        let lv = tree.level(n);
        let inc = fr.block_at_points_auto(n, &lv.rep, planner)?;
        if n == 1 {
            out.push(inc);
        } else {
            let prev = &out[n - 2];
            let mut w = inc;
            extend_walk(prev, &tree.level(n - 1).nchild, &mut w);
            out.push(w);
        }
    }
    Ok(out)
}

/// Adds each parent's walk value onto its children's increments.
pub fn extend_walk(parent_walk: &[f64], nchild: &[u8], increments: &mut [f64]) {
    let mut i = 0usize;
    for (p, &c) in nchild.iter().enumerate() {
        let base = parent_walk[p];
        for _ in 0..c {
            increments[i] += base;
            i += 1;
        }
    }
    debug_assert_eq!(i, increments.len());
}

/// Walks at a sparse set of target nodes, sharing ancestor evaluations.
#[derive(Clone, Debug)]
pub struct AncestorSample {
    pub targets: Vec<(usize, u64)>,
    /// Per level m (index m - 1): sorted node indices and their reps.
    pub nodes: Vec<Vec<u64>>,
    pub reps: Vec<Vec<f64>>,
    /// chains[i][m - 1]: position of target i's level-m ancestor in nodes[m - 1].
    pub chains: Vec<Vec<u32>>,
}

impl AncestorSample {
    pub fn build(ps: &PartitionSystem, targets: &[(usize, u64)]) -> Result<Self> {
        let depth = targets.iter().map(|t| t.0).max().unwrap_or(0);
        let mut sets: Vec<std::collections::BTreeMap<u64, u32>> = vec![Default::default(); depth];
        let mut raw: Vec<Vec<u64>> = Vec::with_capacity(targets.len());
        for &(n, j) in targets {
            let node = ps.node(n, j)?;
            let mut chain = Vec::with_capacity(n);
            for m in 1..=n {
                let a = if m == n { j } else { ps.count_le(m, node.tau_num) };
                sets[m - 1].insert(a, 0);
                chain.push(a);
            }
            raw.push(chain);
        }
        let mut nodes = Vec::with_capacity(depth);
        let mut reps = Vec::with_capacity(depth);
        for (m, set) in sets.iter_mut().enumerate() {
            let mut ns = Vec::with_capacity(set.len());
            let mut rs = Vec::with_capacity(set.len());
            for (pos, (j, slot)) in set.iter_mut().enumerate() {
                *slot = pos as u32;
                ns.push(*j);
                rs.push(ps.node(m + 1, *j)?.rep);
            }
            nodes.push(ns);
            reps.push(rs);
        }
        let chains = raw.iter().map(|c| c.iter().enumerate().map(|(m, j)| sets[m][j]).collect()).collect();
        Ok(Self { targets: targets.to_vec(), nodes, reps, chains })
    }

    pub fn depth(&self) -> usize {
        self.nodes.len()
    }

    /// Block-m increments at the stored level-m nodes, m = 1..=depth.
    pub fn increments(&self, fr: &FieldRealization, planner: &mut FftPlanner<f64>) -> Result<Vec<Vec<f64>>> {
        (1..=self.depth()).map(|m| fr.block_at_points_auto(m, &self.reps[m - 1], planner)).collect()
    }

    /// S̃ of every target at its own level.
    pub fn walks(&self, increments: &[Vec<f64>]) -> Vec<f64> {
        self.chains
            .iter()
            .map(|c| c.iter().enumerate().map(|(m, &p)| increments[m][p as usize]).sum())
            .collect()
    }

    /// S̃_1, ..., S̃_n of target i.
    pub fn walk_chain(&self, i: usize, increments: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = 0.0;
        self.chains[i]
            .iter()
            .enumerate()
            .map(|(m, &p)| {
                acc += increments[m][p as usize];
                acc
            })
            .collect()
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ChainingResult {
    pub level: usize,
    pub sup: f64,
    pub argmax_node: u64,
    pub argmax_t: f64,
    pub mesh_depth: usize,
    pub candidates: usize,
}

/// sup over the mesh {τ_j + i 2^{-ℓ} |I_j| : 0 <= i < 2^ℓ} of
/// |Σ_{k=2^m+1}^{2^{m+1}} X_k(t) - X_k(π_m(t))|.
///
/// Intervals are pruned with a certified bound: |P(t) - P(t_j)| <=
/// dist(t, t_j) · sup_{I_j} |P'|, where sup |P'| over each FFT grid cell is
/// bounded by Bernstein's inequality. Survivors are evaluated exactly on
/// the mesh through a Taylor expansion about t_j whose derivatives are
/// direct sums.
pub fn chaining_discrepancy(
    fr: &FieldRealization,
    level: &DenseLevel,
    m: usize,
    grid_depth: usize,
    planner: &mut FftPlanner<f64>,
) -> Result<ChainingResult> {
    if grid_depth > 14 {
        return Err(Error::Domain(format!("grid depth {grid_depth} above 14")));
    }
    let k_lo = (1u64 << m) + 1;
    let k_hi = 1u64 << (m + 1);
    fr.need(k_hi)?;
    let (b1, b2) = fr.scaled();
    let fmax = k_hi as f64;
    let n_grid = ((64 * k_hi) as usize).next_power_of_two();
    let ratio = std::f64::consts::PI * fmax / n_grid as f64;

    // P' on the grid.
    let mut buf = vec![Complex64::new(0.0, 0.0); n_grid];
    let mut l1 = 0.0;
    for k in k_lo..=k_hi {
        let c = Complex64::new(b1[(k - 1) as usize], -b2[(k - 1) as usize]);
        let d = c * Complex64::new(0.0, std::f64::consts::TAU * k as f64);
        l1 += d.norm();
        buf[(k as usize) % n_grid] += d;
    }
    planner.plan_fft_inverse(n_grid).process(&mut buf);
    let grid: Vec<f64> = buf.iter().map(|z| z.re.abs()).collect();
    let slack = 1e-12 * l1;
    let gmax = grid.iter().cloned().fold(0.0, f64::max) + slack;
    let sup_dp = gmax / (1.0 - ratio);
    let cell_extra = ratio * sup_dp + slack;
    let cell: Vec<f64> = (0..n_grid).map(|i| grid[i].max(grid[(i + 1) % n_grid]) + cell_extra).collect();

    let mesh_n = 1usize << grid_depth;
    let mesh_last = 1.0 - 1.0 / mesh_n as f64;
    let nf = n_grid as f64;
    let bound = |j: usize| -> f64 {
        let tau = level.tau[j];
        let len = level.len[j];
        let t = level.rep[j];
        let dist = (t - tau).max(tau + len * mesh_last - t);
        let i0 = (tau * nf).floor() as i64;
        let i1 = ((tau + len) * nf).floor() as i64;
        let mut u = 0.0f64;
        for i in i0..=i1 {
            u = u.max(cell[i.rem_euclid(n_grid as i64) as usize]);
        }
        dist * u * (1.0 + 1e-9)
    };

    let count = level.len_nodes();
    let bounds: Vec<f64> = (0..count).map(bound).collect();
    // Seed the incumbent with the most promising intervals.
    const SEED: usize = 16;
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(SEED + 1);
    for (j, &b) in bounds.iter().enumerate() {
        if top.len() < SEED || b > top[top.len() - 1].0 {
            let pos = top.partition_point(|x| x.0 >= b);
            top.insert(pos, (b, j));
            top.truncate(SEED);
        }
    }
    let mut best = ChainingResult { level: m, sup: 0.0, argmax_node: 1, argmax_t: level.rep[0], mesh_depth: grid_depth, candidates: 0 };
    let mut evaluated = vec![false; count];
    let exact = |j: usize, best: &mut ChainingResult| {
        let (v, t) = mesh_max(b1, b2, k_lo, k_hi, level.tau[j], level.len[j], level.rep[j], mesh_n);
        best.candidates += 1;
        if v > best.sup {
            best.sup = v;
            best.argmax_node = j as u64 + 1;
            best.argmax_t = t;
        }
    };
    for &(_, j) in &top {
        exact(j, &mut best);
        evaluated[j] = true;
    }
    for j in 0..count {
        if !evaluated[j] && bounds[j] > best.sup {
            exact(j, &mut best);
        }
    }
    Ok(best)
}

/// max over the mesh of |P(t) - P(t_j)| for one interval.
fn mesh_max(b1: &[f64], b2: &[f64], k_lo: u64, k_hi: u64, tau: f64, len: f64, rep: f64, mesh_n: usize) -> (f64, f64) {
    let w = std::f64::consts::TAU * k_hi as f64 * len;
    let mut order = 1usize;
    let mut term = w;
    while term > 1e-18 && order < 30 {
        order += 1;
        term *= w / order as f64;
    }
    // d[r] = P^{(r)}(rep) / r!
    let mut d = vec![0.0f64; order + 1];
    for k in k_lo..=k_hi {
        let (s, c) = phase(k, rep);
        let x1 = b1[(k - 1) as usize];
        let x2 = b2[(k - 1) as usize];
        let a = x1 * c + x2 * s;
        let b = -x1 * s + x2 * c;
        let om = std::f64::consts::TAU * k as f64;
        let mut p = 1.0;
        for (r, dr) in d.iter_mut().enumerate().skip(1) {
            p *= om / r as f64;
            let v = match r % 4 {
                1 => b,
                2 => -a,
                3 => -b,
                _ => a,
            };
            *dr += p * v;
        }
    }
    let mut best = (0.0f64, rep);
    let step = len / mesh_n as f64;
    for i in 0..mesh_n {
        let t = tau + i as f64 * step;
        let h = t - rep;
        let mut acc = d[order];
        for r in (1..order).rev() {
            acc = acc * h + d[r];
        }
        let v = (acc * h).abs();
        if v > best.0 {
            best = (v, t);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn series_examples() {
        let m = CoefficientModel::rademacher();
        let z = FieldRealization::zeros(m.clone(), 8);
        assert_eq!(z.eval_series(8, 0.37).unwrap(), 0.0);
        let one = FieldRealization::from_coefficients(m.clone(), vec![1.0], vec![0.0]);
        assert_eq!(one.eval_series(1, 0.0).unwrap(), 1.0);
        let two = FieldRealization::from_coefficients(m, vec![1.0, 1.0], vec![0.0, 0.0]);
        let v = two.eval_series(2, 0.25).unwrap();
        assert!((v + 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cov_exact_examples() {
        assert!((cov_exact(10, 0.3, 0.3) - crate::numeric::harmonic(10)).abs() < 1e-15);
        assert!((cov_exact(1, 0.75, 0.25) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn increments_match_matrix_product() {
        let ps = PartitionSystem::build(6).unwrap();
        let mut rng = stream(3, "field-test", 0);
        let fr = FieldRealization::sample_levels(&CoefficientModel::two_point_asym(1.0), 6, &mut rng);
        for n in 1..=6 {
            let direct = fr.increment_vector(&ps, n).unwrap();
            let nodes: Vec<u64> = (1..=ps.t_count(n)).collect();
            let mat = IncrementMatrix::build(&ps, n, &nodes).unwrap();
            let (lo, hi) = block_range(n);
            let a1 = &fr.a1[(lo - 1) as usize..hi as usize];
            let a2 = &fr.a2[(lo - 1) as usize..hi as usize];
            let (y1, y2) = mat.apply(a1, a2);
            for v in 0..nodes.len() {
                let m = y1[v] + y2[v];
                let scale = direct[v].abs().max(1.0);
                assert!((m - direct[v]).abs() <= 1e-12 * scale, "level {n} node {v}: {m} vs {}", direct[v]);
            }
        }
    }

    #[test]
    fn dense_walks_match_tree_walk() {
        let ps = PartitionSystem::build(8).unwrap();
        let tree = ps.dense(8).unwrap();
        let mut rng = stream(4, "field-test", 0);
        let fr = FieldRealization::sample_levels(&CoefficientModel::rademacher(), 8, &mut rng);
        let mut planner = FftPlanner::new();
        let walks = dense_walks(&fr, &tree, 8, &mut planner).unwrap();
        for n in [1usize, 3, 5, 8] {
            let t = ps.t_count(n);
            for j in (1..=t).step_by((t as usize / 7).max(1)) {
                let w = fr.tree_walk(&ps, n, j).unwrap();
                assert!((walks[n - 1][(j - 1) as usize] - w[n - 1]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn chaining_matches_brute_force() {
        let ps = PartitionSystem::build(5).unwrap();
        let tree = ps.dense(5).unwrap();
        let mut rng = stream(5, "field-test", 0);
        let fr = FieldRealization::sample(&CoefficientModel::rademacher(), 64, &mut rng);
        let mut planner = FftPlanner::new();
        for m in [3usize, 4, 5] {
            let lv = tree.level(m);
            let depth = 6;
            let res = chaining_discrepancy(&fr, lv, m, depth, &mut planner).unwrap();
            let (lo, hi) = ((1u64 << m) + 1, 1u64 << (m + 1));
            let mut brute = 0.0f64;
            for j in 0..lv.len_nodes() {
                let base = fr.partial_sum(lo, hi, lv.rep[j]).unwrap();
                for i in 0..(1usize << depth) {
                    let t = lv.tau[j] + i as f64 * lv.len[j] / (1u64 << depth) as f64;
                    brute = brute.max((fr.partial_sum(lo, hi, t).unwrap() - base).abs());
                }
            }
            assert!((res.sup - brute).abs() <= 1e-10 * brute.max(1.0), "m={m}: {} vs {brute}", res.sup);
            assert!(res.candidates < lv.len_nodes() || lv.len_nodes() < 64);
        }
    }

    #[test]
    fn ancestor_sample_matches_tree_walk() {
        let ps = PartitionSystem::build(9).unwrap();
        let targets = vec![(9usize, 1u64), (9, 4000), (9, ps.t_count(9)), (5, 77), (7, 3)];
        let sample = AncestorSample::build(&ps, &targets).unwrap();
        let mut rng = stream(6, "field-test", 0);
        let fr = FieldRealization::sample_levels(&CoefficientModel::uniform_sym(), 9, &mut rng);
        let mut planner = FftPlanner::new();
        let inc = sample.increments(&fr, &mut planner).unwrap();
        let w = sample.walks(&inc);
        for (i, &(n, j)) in targets.iter().enumerate() {
            let want = fr.tree_walk(&ps, n, j).unwrap();
            assert!((w[i] - want[n - 1]).abs() < 1e-11);
            let chain = sample.walk_chain(i, &inc);
            for m in 0..n {
                assert!((chain[m] - want[m]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn chaining_zero_field() {
        let ps = PartitionSystem::build(4).unwrap();
        let tree = ps.dense(4).unwrap();
        let fr = FieldRealization::zeros(CoefficientModel::rademacher(), 32);
        let mut planner = FftPlanner::new();
        let res = chaining_discrepancy(&fr, tree.level(4), 4, 8, &mut planner).unwrap();
        assert_eq!(res.sup, 0.0);
    }
}
