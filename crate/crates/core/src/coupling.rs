//! Yurinskii error functional, empirical optimal couplings, the
//! thick-descendant coupling pipeline and Gaussian reconstruction through
//! the increment matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientModel, Law};
use crate::error::{Error, Result};
use crate::field::{block_range, dense_walks, FieldRealization, IncrementMatrix};
use crate::numeric::{normal_sf, quantile};
use crate::partition::PartitionSystem;
use crate::thick::ThickSet;

pub const CONDITION_LIMIT: f64 = 1e8;
pub const HUNGARIAN_LIMIT: usize = 1024;
pub const MAX_SAMPLES: usize = 4096;
pub const MAX_DIM: usize = 32;

/// P(||Z||_∞ > t) for a K-dimensional standard Gaussian.
pub fn gaussian_sup_tail(t: f64, k: usize) -> f64 {
    let p = 2.0 * normal_sf(t);
    if p >= 1.0 {
        return 1.0;
    }
    -(k as f64 * (-p).ln_1p()).exp_m1()
}

/// min over an evenly spaced grid on [0, √(2 log K) + 8] of
/// 2P(||Z||_∞ > t) + β t² / δ³, with the minimizing t.
pub fn yurinskii_bound_grid(beta: f64, delta: f64, k: usize, points: usize) -> (f64, f64) {
    let t_max = (2.0 * (k.max(1) as f64).ln()).sqrt() + 8.0;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..points {
        let t = t_max * i as f64 / (points - 1) as f64;
        let v = 2.0 * gaussian_sup_tail(t, k) + beta * t * t / delta.powi(3);
        if v < best.0 {
            best = (v, t);
        }
    }
    best
}

pub fn yurinskii_bound(beta: f64, delta: f64, k: usize) -> f64 {
    yurinskii_bound_grid(beta, delta, k, 512).0
}

/// One summand ξ_k = (a1 u, a2 w) of a sum of independent vectors, where
/// (a1, a2) are independent coefficient draws.
#[derive(Clone, Debug)]
pub struct SummandShape {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn cubic_functional(x1: f64, x2: f64, su: f64, sw: f64, mu: f64, mw: f64) -> f64 {
    let l2 = x1 * x1 * su + x2 * x2 * sw;
    let linf = (x1.abs() * mu).max(x2.abs() * mw);
    l2 * linf
}

/// β = Σ_k E[||ξ_k||₂² ||ξ_k||_∞] + E[||𝔤_k||₂² ||𝔤_k||_∞], with 𝔤_k the
/// Gaussian vector of the same covariance. The ξ part is exact for the
/// discrete laws and by Monte Carlo otherwise; the Gaussian part uses
/// `mc_samples` common draws.
pub fn beta_from_summands<R: Rng + ?Sized>(model: &CoefficientModel, summands: &[SummandShape], mc_samples: usize, rng: &mut R) -> f64 {
    let atoms: Option<Vec<(f64, f64)>> = match model.law {
        Law::Rademacher => Some(vec![(1.0, 0.5), (-1.0, 0.5)]),
        Law::TwoPointAsym => model.two_point_atoms().map(|(p, r, q)| vec![(p, q), (-r, 1.0 - q)]),
        _ => None,
    };
    let gauss: Vec<(f64, f64)> = (0..mc_samples).map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let own: Vec<(f64, f64)> = match atoms {
        Some(_) => Vec::new(),
        None => (0..mc_samples).map(|_| (model.sample(rng), model.sample(rng))).collect(),
    };
    let mut total = 0.0;
    for s in summands {
        let (su, sw, mu, mw) = (sq(&s.u), sq(&s.w), sup_abs(&s.u), sup_abs(&s.w));
        let xi = match &atoms {
            Some(a) => {
                let mut e = 0.0;
                for &(x1, p1) in a {
                    for &(x2, p2) in a {
                        e += p1 * p2 * cubic_functional(x1, x2, su, sw, mu, mw);
                    }
                }
                e
            }
            None => own.iter().map(|&(x1, x2)| cubic_functional(x1, x2, su, sw, mu, mw)).sum::<f64>() / mc_samples as f64,
        };
        let g = gauss.iter().map(|&(x1, x2)| cubic_functional(x1, x2, su, sw, mu, mw)).sum::<f64>() / mc_samples as f64;
        total += xi + g;
    }
    total
}

/// β for the increment vector (ã^{(1)}_n(v), ã^{(2)}_n(v))_{v in 𝒦}.
pub fn yurinskii_beta<R: Rng + ?Sized>(model: &CoefficientModel, ps: &PartitionSystem, n: usize, nodes: &[u64], mc_samples: usize, rng: &mut R) -> Result<f64> {
    if nodes.len() > 64 {
        return Err(Error::Domain(format!("|K| = {} above 64", nodes.len())));
    }
    let mat = IncrementMatrix::build(ps, n, nodes)?;
    Ok(beta_from_summands(model, &summand_shapes(&mat), mc_samples, rng))
}

pub fn summand_shapes(mat: &IncrementMatrix) -> Vec<SummandShape> {
    (0..mat.c1.nrows())
        .map(|row| SummandShape { u: mat.c1.row(row).iter().cloned().collect(), w: mat.c2.row(row).iter().cloned().collect() })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMethod {
    /// Exact minimum-cost assignment with lexicographic (failure, sup-distance) cost.
    Hungarian,
    /// Exact minimum failure count by maximum matching on the 3δ-graph.
    MaxMatching,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalCoupling {
    /// assignment[i] = index of the T sample paired with S sample i.
    pub assignment: Vec<usize>,
    pub failures: usize,
    pub failure_rate: f64,
    pub sup_distances: Vec<f64>,
    pub method: MatchingMethod,
    /// Upper bound on failures(found) - failures(optimal).
    pub gap: usize,
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Best empirical coupling between two equal-size samples: a bijection
/// minimizing the number of pairs with ||S - T||_∞ > 3δ.
pub fn empirical_coupling(s: &[Vec<f64>], t: &[Vec<f64>], delta: f64) -> Result<EmpiricalCoupling> {
    let m = s.len();
    if t.len() != m || m == 0 {
        return Err(Error::Domain("samples must be non-empty and of equal size".into()));
    }
    if m > MAX_SAMPLES {
        return Err(Error::Domain(format!("M = {m} above {MAX_SAMPLES}")));
    }
    let dim = s[0].len();
    if dim > MAX_DIM || s.iter().chain(t).any(|v| v.len() != dim) {
        return Err(Error::Domain(format!("vectors must share a dimension <= {MAX_DIM}")));
    }
    let thr = 3.0 * delta;
    let dist: Vec<f64> = (0..m * m).map(|ij| sup_dist(&s[ij / m], &t[ij % m])).collect();
    let (assignment, method) = if m <= HUNGARIAN_LIMIT {
        let dmax = dist.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
        let eps = 1.0 / (2.0 * m as f64 * dmax);
        let cost: Vec<f64> = dist.iter().map(|&d| if d > thr { 1.0 } else { 0.0 } + eps * d).collect();
        (hungarian(&cost, m), MatchingMethod::Hungarian)
    } else {
        (complete_matching(&max_matching(&dist, m, thr), m), MatchingMethod::MaxMatching)
    };
    let sup_distances: Vec<f64> = (0..m).map(|i| dist[i * m + assignment[i]]).collect();
    let failures = sup_distances.iter().filter(|&&d| d > thr).count();
    Ok(EmpiricalCoupling { assignment, failures, failure_rate: failures as f64 / m as f64, sup_distances, method, gap: 0 })
}

/// Minimum failure count M - |maximum matching| on the 3δ-graph.
pub fn min_failures(s: &[Vec<f64>], t: &[Vec<f64>], delta: f64) -> usize {
    let m = s.len();
    let dist: Vec<f64> = (0..m * m).map(|ij| sup_dist(&s[ij / m], &t[ij % m])).collect();
    let mate = max_matching(&dist, m, 3.0 * delta);
    mate.iter().filter(|x| x.is_none()).count()
}

/// O(n³) assignment with potentials; returns row -> column.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0usize; n];
    for j in 1..=n {
        ans[p[j] - 1] = j - 1;
    }
    ans
}

/// Hopcroft-Karp on edges {(i, j) : dist[i m + j] <= thr}; returns the
/// partner of each left vertex.
fn max_matching(dist: &[f64], m: usize, thr: f64) -> Vec<Option<usize>> {
    let adj: Vec<Vec<usize>> = (0..m).map(|i| (0..m).filter(|&j| dist[i * m + j] <= thr).collect()).collect();
    let none = usize::MAX;
    let mut mate_l = vec![none; m];
    let mut mate_r = vec![none; m];
    let mut level = vec![0usize; m];
    loop {
        // BFS layering from free left vertices.
        let mut queue = std::collections::VecDeque::new();
        for i in 0..m {
            if mate_l[i] == none {
                level[i] = 0;
                queue.push_back(i);
            } else {
                level[i] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                let k = mate_r[j];
                if k == none {
                    found = true;
                } else if level[k] == usize::MAX {
                    level[k] = level[i] + 1;
                    queue.push_back(k);
                }
            }
        }
        if !found {
            break;
        }
        let mut it = vec![0usize; m];
        for i in 0..m {
            if mate_l[i] == none {
                augment(i, &adj, &mut mate_l, &mut mate_r, &mut level, &mut it);
            }
        }
    }
    mate_l.iter().map(|&j| if j == none { None } else { Some(j) }).collect()
}

fn augment(start: usize, adj: &[Vec<usize>], mate_l: &mut [usize], mate_r: &mut [usize], level: &mut [usize], it: &mut [usize]) -> bool {
    // Iterative DFS along the BFS layers.
    let none = usize::MAX;
    let mut stack = vec![start];
    let mut path: Vec<(usize, usize)> = Vec::new();
    while let Some(&i) = stack.last() {
        if it[i] >= adj[i].len() {
            level[i] = usize::MAX;
            stack.pop();
            path.pop();
            continue;
        }
        let j = adj[i][it[i]];
        it[i] += 1;
        let k = mate_r[j];
        if k == none {
            path.push((i, j));
            for &(a, b) in &path {
                mate_l[a] = b;
                mate_r[b] = a;
            }
            return true;
        }
        if level[k] == level[i] + 1 {
            path.push((i, j));
            stack.push(k);
        }
    }
    false
}

fn complete_matching(mate: &[Option<usize>], m: usize) -> Vec<usize> {
    let mut used = vec![false; m];
    for j in mate.iter().flatten() {
        used[*j] = true;
    }
    let mut free = (0..m).filter(|&j| !used[j]);
    mate.iter().map(|x| x.unwrap_or_else(|| free.next().unwrap())).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingReport {
    /// Vector dimension 2|𝒦|.
    pub k_dim: usize,
    /// Summand count (block width).
    pub n_summands: usize,
    pub delta: f64,
    pub beta: f64,
    pub bound: f64,
    pub empirical_failure: f64,
    pub sample_size: usize,
    /// q50, q90, q99 of the matched sup-distances.
    pub sup_quantiles: [f64; 3],
    pub method: MatchingMethod,
    pub empty: bool,
    /// Number of thick descendants before subsampling.
    pub candidates: usize,
    pub subsampled: bool,
}

impl CouplingReport {
    pub fn csv_header() -> &'static str {
        "K,N,M,delta,beta,bound,empirical_failure,q50,q90,q99"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.k_dim, self.n_summands, self.sample_size, self.delta, self.beta, self.bound, self.empirical_failure, self.sup_quantiles[0], self.sup_quantiles[1], self.sup_quantiles[2]
        )
    }

    fn empty(delta: f64) -> Self {
        Self { k_dim: 0, n_summands: 0, delta, beta: 0.0, bound: 0.0, empirical_failure: 0.0, sample_size: 0, sup_quantiles: [0.0; 3], method: MatchingMethod::Hungarian, empty: true, candidates: 0, subsampled: false }
    }
}

/// M independent draws of the increment vector and of its covariance-matched
/// Gaussian counterpart, both as [family 1 | family 2] vectors.
pub fn sample_increment_pairs<R: Rng + ?Sized>(model: &CoefficientModel, mat: &IncrementMatrix, m: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = mat.c1.nrows();
    let draw = |f: &mut dyn FnMut() -> f64| -> Vec<f64> {
        let a1: Vec<f64> = (0..rows).map(|_| f()).collect();
        let a2: Vec<f64> = (0..rows).map(|_| f()).collect();
        let (y1, y2) = mat.apply(&a1, &a2);
        y1.into_iter().chain(y2).collect()
    };
    let mut s = Vec::with_capacity(m);
    let mut t = Vec::with_capacity(m);
    for _ in 0..m {
        s.push(draw(&mut || model.sample(rng)));
        t.push(draw(&mut || rng.sample(StandardNormal)));
    }
    (s, t)
}

/// q50, q90, q99.
pub fn quantiles_of(v: &[f64]) -> [f64; 3] {
    [quantile(v, 0.5), quantile(v, 0.9), quantile(v, 0.99)]
}

/// Full coupling experiment for a node set at level n.
pub fn coupling_report<R: Rng + ?Sized>(model: &CoefficientModel, mat: &IncrementMatrix, m: usize, delta: f64, mc_samples: usize, rng: &mut R) -> Result<CouplingReport> {
    let beta = beta_from_summands(model, &summand_shapes(mat), mc_samples, rng);
    let k_dim = 2 * mat.reps.len();
    let bound = yurinskii_bound(beta, delta, k_dim);
    let (s, t) = sample_increment_pairs(model, mat, m, rng);
    let ec = empirical_coupling(&s, &t, delta)?;
    let q = quantiles_of(&ec.sup_distances);
    Ok(CouplingReport {
        k_dim,
        n_summands: mat.c1.nrows(),
        delta,
        beta,
        bound,
        empirical_failure: ec.failure_rate,
        sample_size: m,
        sup_quantiles: q,
        method: ec.method,
        empty: false,
        candidates: mat.reps.len(),
        subsampled: false,
    })
}

/// Level-(n+1) children of the members of a level-n thick set.
pub fn thick_descendants(ps: &PartitionSystem, thick: &ThickSet) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for &j in &thick.members {
        out.extend(ps.children(thick.level, j)?);
    }
    Ok(out)
}

/// Evenly spaced subsample of `count` items.
pub fn even_subsample(v: &[u64], count: usize) -> Vec<u64> {
    if v.len() <= count {
        return v.to_vec();
    }
    (0..count).map(|i| v[i * v.len() / count]).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThickCouplingReport {
    pub report: CouplingReport,
    pub thick_size: usize,
    pub nodes: Vec<u64>,
    /// Thick set unchanged after redrawing the level-(n+1) block.
    pub independent_of_future: bool,
    /// Largest |empirical - analytic| / SE over the Gaussian covariance entries.
    pub cov_max_z: f64,
}

/// Coupling of the thick descendants: thick set from levels
/// <= n (a-side), increments from level n + 1 only, threshold 3δ = n^{-2}
/// unless overridden.
pub fn thick_descendant_coupling<R: Rng + ?Sized>(
    fr_a: &FieldRealization,
    ps: &PartitionSystem,
    gamma: f64,
    delta: f64,
    n: usize,
    m: usize,
    delta_override: Option<f64>,
    rng: &mut R,
) -> Result<ThickCouplingReport> {
    let tree = ps.dense(n)?;
    let mut planner = FftPlanner::new();
    let walks = dense_walks(fr_a, &tree, n, &mut planner)?;
    let thick = ThickSet::from_walks(&walks[n - 1], None, gamma, delta, n, crate::thick::Side::A)?;
    // Redraw block n + 1 and recompute: membership must not move.
    let mut fr_b = fr_a.clone();
    if fr_b.levels_available() > n {
        fr_b.resample_block(n + 1, rng);
    }
    let walks_b = dense_walks(&fr_b, &tree, n, &mut planner)?;
    let thick_b = ThickSet::from_walks(&walks_b[n - 1], None, gamma, delta, n, crate::thick::Side::A)?;
    let independent = thick.members == thick_b.members;
    let cdelta = delta_override.unwrap_or(1.0 / (3.0 * (n * n) as f64));
    let desc = thick_descendants(ps, &thick)?;
    if desc.is_empty() {
        return Ok(ThickCouplingReport { report: CouplingReport::empty(cdelta), thick_size: 0, nodes: Vec::new(), independent_of_future: independent, cov_max_z: 0.0 });
    }
    let nodes = even_subsample(&desc, 16);
    let mat = IncrementMatrix::build(ps, n + 1, &nodes)?;
    let mut report = coupling_report(&fr_a.model, &mat, m, cdelta, 4096, rng)?;
    report.candidates = desc.len();
    report.subsampled = desc.len() > nodes.len();
    let (_, t) = sample_increment_pairs(&fr_a.model, &mat, m, rng);
    let cov_max_z = covariance_max_z(&t, &mat.covariance());
    Ok(ThickCouplingReport { report, thick_size: thick.len(), nodes, independent_of_future: independent, cov_max_z })
}

/// max over entries of |Cov_emp - Cov| / SE, with SE from the fourth moments.
pub fn covariance_max_z(samples: &[Vec<f64>], cov: &DMatrix<f64>) -> f64 {
    let d = cov.nrows();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in a..d {
            let prods: Vec<f64> = samples.iter().map(|v| v[a] * v[b]).collect();
            let s = crate::numeric::summarize(&prods);
            let se = s.stderr.max(1e-300);
            worst = worst.max((s.mean - cov[(a, b)]).abs() / se);
        }
    }
    worst
}

/// Square submatrix of the increment matrices over a chosen node subset.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub level: usize,
    pub nodes: Vec<u64>,
    pub mat: IncrementMatrix,
    pub cond: [f64; 2],
    lu1: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu2: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Greedy column pivoting over a candidate pool: at each step take the
/// column whose smaller (relative) residual across the two families is
/// largest, then orthogonalize both families against it.
pub fn select_nodes(ps: &PartitionSystem, n: usize, pool: &[u64]) -> Result<Vec<u64>> {
    let need = 1usize << (n - 1);
    if pool.len() < need {
        return Err(Error::Domain(format!("pool of {} below 2^(n-1) = {need}", pool.len())));
    }
    let mat = IncrementMatrix::build(ps, n, pool)?;
    let mut r1 = mat.c1.clone();
    let mut r2 = mat.c2.clone();
    let norm0: Vec<(f64, f64)> = (0..pool.len()).map(|j| (r1.column(j).norm(), r2.column(j).norm())).collect();
    let mut chosen = Vec::with_capacity(need);
    let mut taken = vec![false; pool.len()];
    for _ in 0..need {
        let mut best = (-1.0, usize::MAX);
        for j in 0..pool.len() {
            if taken[j] {
                continue;
            }
            let score = (r1.column(j).norm() / norm0[j].0).min(r2.column(j).norm() / norm0[j].1);
            if score > best.0 {
                best = (score, j);
            }
        }
        let p = best.1;
        taken[p] = true;
        chosen.push(p);
        for r in [&mut r1, &mut r2] {
            let q = r.column(p).normalize();
            for _ in 0..2 {
                let proj = r.tr_mul(&q);
                for j in 0..pool.len() {
                    if !taken[j] {
                        let c = proj[j];
                        let mut col = r.column_mut(j);
                        col.axpy(-c, &q, 1.0);
                    }
                }
            }
            r.column_mut(p).fill(0.0);
        }
    }
    chosen.sort_unstable();
    Ok(chosen.iter().map(|&i| pool[i]).collect())
}

/// Pool of candidates: the given priority nodes plus nodes spread evenly
/// over level n, `factor` times the target size in total.
pub fn candidate_pool(ps: &PartitionSystem, n: usize, priority: &[u64], factor: usize) -> Vec<u64> {
    let total = ps.t_count(n);
    let want = ((1u64 << (n - 1)) * factor as u64).min(total);
    let mut set: std::collections::BTreeSet<u64> = priority.iter().cloned().collect();
    let mut i = 0u64;
    while (set.len() as u64) < want && i < want * 2 {
        let j = 1 + (i as u128 * total as u128 / want as u128) as u64;
        set.insert(j.min(total));
        i += 1;
    }
    set.into_iter().collect()
}

impl Reconstruction {
    pub fn new(ps: &PartitionSystem, n: usize, nodes: &[u64]) -> Result<Self> {
        let need = 1usize << (n - 1);
        if nodes.len() != need {
            return Err(Error::Domain(format!("need {need} nodes, got {}", nodes.len())));
        }
        let mat = IncrementMatrix::build(ps, n, nodes)?;
        let cond = [condition_number(&mat.c1), condition_number(&mat.c2)];
        let worst = cond[0].max(cond[1]);
        if !(worst <= CONDITION_LIMIT) {
            return Err(Error::IllConditioned { cond: worst, limit: CONDITION_LIMIT });
        }
        let lu1 = mat.c1.transpose().lu();
        let lu2 = mat.c2.transpose().lu();
        Ok(Self { level: n, nodes: nodes.to_vec(), mat, cond, lu1, lu2 })
    }

    /// Selects a well-conditioned subset from `priority` plus spread nodes.
    pub fn select(ps: &PartitionSystem, n: usize, priority: &[u64]) -> Result<Self> {
        let pool = candidate_pool(ps, n, priority, 4);
        let nodes = select_nodes(ps, n, &pool)?;
        Self::new(ps, n, &nodes)
    }

    /// Solves C_N̄ᵀ g = g̃ for each family.
    pub fn solve(&self, tilde1: &[f64], tilde2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let s1 = self.lu1.solve(&DVector::from_column_slice(tilde1)).ok_or(Error::IllConditioned { cond: f64::INFINITY, limit: CONDITION_LIMIT })?;
        let s2 = self.lu2.solve(&DVector::from_column_slice(tilde2)).ok_or(Error::IllConditioned { cond: f64::INFINITY, limit: CONDITION_LIMIT })?;
        Ok((s1.iter().cloned().collect(), s2.iter().cloned().collect()))
    }

    /// Column-wise solve for many right-hand sides at once.
    pub fn solve_matrix(&self, tilde1: &DMatrix<f64>, tilde2: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let err = || Error::IllConditioned { cond: f64::INFINITY, limit: CONDITION_LIMIT };
        Ok((self.lu1.solve(tilde1).ok_or_else(err)?, self.lu2.solve(tilde2).ok_or_else(err)?))
    }

    /// Relative roundtrip error ||C_N̄ᵀ g - g̃|| / ||g̃||.
    pub fn roundtrip_error(&self, tilde1: &[f64], tilde2: &[f64], g1: &[f64], g2: &[f64]) -> f64 {
        let (y1, y2) = self.mat.apply(g1, g2);
        let num: f64 = y1.iter().zip(tilde1).chain(y2.iter().zip(tilde2)).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = tilde1.iter().chain(tilde2).map(|x| x * x).sum();
        (num / den.max(1e-300)).sqrt()
    }
}

/// Values of the extended Gaussian field on chosen level-n nodes from a
/// coefficient block: g̃^{(i)}(v) = Σ_k C^{(i)}_{k,n}(v) g^{(i)}_k.
pub fn extend_to_nodes(ps: &PartitionSystem, n: usize, g1: &[f64], g2: &[f64], nodes: &[u64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mat = IncrementMatrix::build(ps, n, nodes)?;
    Ok(mat.apply(g1, g2))
}

/// Per-family values on all of level n from a coefficient block, by direct
/// block sums at the representatives.
pub fn extend_full_level(ps: &PartitionSystem, n: usize, g1: &[f64], g2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lo, hi) = block_range(n);
    let width = (hi - lo + 1) as usize;
    let reps: Vec<f64> = (1..=ps.t_count(n)).map(|j| ps.node(n, j).map(|v| v.rep)).collect::<Result<_>>()?;
    let family = |g: &[f64], first: bool| -> Result<Vec<f64>> {
        let mut a1 = vec![0.0; hi as usize];
        let mut a2 = vec![0.0; hi as usize];
        let dst = if first { &mut a1 } else { &mut a2 };
        dst[(lo - 1) as usize..].copy_from_slice(&g[..width]);
        FieldRealization::from_coefficients(CoefficientModel::gaussian(), a1, a2).block_at_points(n, &reps)
    };
    Ok((family(g1, true)?, family(g2, false)?))
}

/// Coefficient block and per-family full-level values from g̃ on 𝒩̄_n.
pub fn reconstruct_gaussian(rec: &Reconstruction, ps: &PartitionSystem, tilde1: &[f64], tilde2: &[f64]) -> Result<ReconstructedBlock> {
    let (g1, g2) = rec.solve(tilde1, tilde2)?;
    let roundtrip = rec.roundtrip_error(tilde1, tilde2, &g1, &g2);
    let (full1, full2) = extend_full_level(ps, rec.level, &g1, &g2)?;
    Ok(ReconstructedBlock { g1, g2, full1, full2, roundtrip })
}

#[derive(Clone, Debug)]
pub struct ReconstructedBlock {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub full1: Vec<f64>,
    pub full2: Vec<f64>,
    pub roundtrip: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn bound_limits_and_grid() {
        assert!(yurinskii_bound(1e-14, 0.1, 4) < 1e-6);
        assert!(yurinskii_bound(1e-3, 1e6, 4) < 1e-12);
        let coarse = yurinskii_bound(1e-3, 0.1, 4);
        let (fine, _) = yurinskii_bound_grid(1e-3, 0.1, 4, 100_000);
        assert!(coarse >= fine && coarse - fine < 1e-2, "{coarse} {fine}");
        assert!((gaussian_sup_tail(0.0, 3) - 1.0).abs() < 1e-15);
        assert!(gaussian_sup_tail(40.0, 8) == 0.0 || gaussian_sup_tail(40.0, 8) < 1e-300);
    }

    #[test]
    fn single_bounded_summand() {
        let mut rng = stream(31, "coupling-test", 0);
        let c = 0.37;
        let s = [SummandShape { u: vec![c], w: vec![] }];
        let b = beta_from_summands(&CoefficientModel::rademacher(), &s, 200_000, &mut rng);
        // ξ part |c|^3 exactly; Gaussian part E|g|^3 |c|^3 = 2√(2/π) |c|^3.
        let want = c * c * c * (1.0 + 2.0 * (2.0 / std::f64::consts::PI).sqrt());
        assert!((b - want).abs() < 0.02 * want, "{b} vs {want}");
    }

    #[test]
    fn identity_coupling_is_optimal() {
        let mut rng = stream(32, "coupling-test", 0);
        let s: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let ec = empirical_coupling(&s, &s, 1e-9).unwrap();
        assert_eq!(ec.failures, 0);
        let mut t = s.clone();
        t.reverse();
        let ec = empirical_coupling(&s, &t, 1e-9).unwrap();
        assert_eq!(ec.failures, 0);
    }

    #[test]
    fn hungarian_agrees_with_matching() {
        let mut rng = stream(33, "coupling-test", 0);
        for trial in 0..5 {
            let m = 60 + 10 * trial;
            let s: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
            let t: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
            for delta in [0.05, 0.15, 0.3] {
                let ec = empirical_coupling(&s, &t, delta).unwrap();
                assert_eq!(ec.failures, min_failures(&s, &t, delta));
                let mut seen = vec![false; m];
                for &j in &ec.assignment {
                    assert!(!seen[j]);
                    seen[j] = true;
                }
            }
        }
    }

    #[test]
    fn hungarian_small_exact() {
        let cost = vec![4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        assert_eq!(hungarian(&cost, 3), vec![1, 0, 2]);
    }

    #[test]
    fn reconstruction_level_two_and_known_block() {
        let ps = PartitionSystem::build(6).unwrap();
        let rec = Reconstruction::select(&ps, 2, &[]).unwrap();
        assert_eq!(rec.nodes.len(), 2);
        let mut rng = stream(34, "coupling-test", 0);
        for n in [2usize, 4, 6] {
            let rec = Reconstruction::select(&ps, n, &[]).unwrap();
            assert!(rec.cond[0] <= CONDITION_LIMIT && rec.cond[1] <= CONDITION_LIMIT);
            let w = 1usize << (n - 1);
            let g1: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
            let g2: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
            let (t1, t2) = rec.mat.apply(&g1, &g2);
            let (h1, h2) = rec.solve(&t1, &t2).unwrap();
            let tol = if n == 2 { 1e-12 } else { 1e-8 };
            for i in 0..w {
                assert!((h1[i] - g1[i]).abs() < tol && (h2[i] - g2[i]).abs() < tol);
            }
            assert!(rec.roundtrip_error(&t1, &t2, &h1, &h2) < 1e-12);
            let block = reconstruct_gaussian(&rec, &ps, &t1, &t2).unwrap();
            for (i, &j) in rec.nodes.iter().enumerate() {
                assert!((block.full1[(j - 1) as usize] - t1[i]).abs() < 1e-9);
                assert!((block.full2[(j - 1) as usize] - t2[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ill_conditioned_subset_refused() {
        let ps = PartitionSystem::build(4).unwrap();
        // Adjacent nodes are nearly collinear columns.
        let nodes: Vec<u64> = (1..=8).collect();
        match Reconstruction::new(&ps, 4, &nodes) {
            Err(Error::IllConditioned { cond, .. }) => assert!(cond > CONDITION_LIMIT),
            Ok(r) => assert!(r.cond[0] <= CONDITION_LIMIT),
            Err(e) => panic!("{e}"),
        }
    }
}
