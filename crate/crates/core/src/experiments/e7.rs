//! Gaussian reconstruction through square increment submatrices.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::coupling::{covariance_max_z, reconstruct_gaussian, Reconstruction};
use crate::error::{Error, Result};
use crate::field::IncrementMatrix;
use crate::partition::PartitionSystem;
use crate::rng::stream;

use super::{ExperimentConfig, Metrics, Tables};

const FULLCOV_NODES: usize = 4;

fn normals<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Aggregated z of a set of approximately independent N(0,1) scores:
/// (Σ z² - P) / √(2P).
fn chi_z(zs: &[f64]) -> f64 {
    let p = zs.len() as f64;
    if p == 0.0 {
        return 0.0;
    }
    ((zs.iter().map(|z| z * z).sum::<f64>() - p) / (2.0 * p).sqrt()).abs()
}

/// z-scores of the sample cross moments E[x_i y_j] against zero, columns
/// are variables, rows are replays. Only i < j when `same` is set.
fn cross_scores(x: &DMatrix<f64>, y: &DMatrix<f64>, same: bool) -> Vec<f64> {
    let r = x.nrows() as f64;
    let m1 = x.tr_mul(y) / r;
    let x2 = x.component_mul(x);
    let y2 = y.component_mul(y);
    let m2 = x2.tr_mul(&y2) / r;
    let mut out = Vec::new();
    for i in 0..x.ncols() {
        for j in 0..y.ncols() {
            if same && j <= i {
                continue;
            }
            let c = m1[(i, j)];
            let se = ((m2[(i, j)] - c * c) / r).sqrt().max(1e-300);
            out.push(c / se);
        }
    }
    out
}

/// Level-n coefficient reconstruction from replayed node values.
struct LevelReplay {
    cond: f64,
    roundtrip: f64,
    /// replays × 2w, columns [g1..., g2...]
    coeffs: DMatrix<f64>,
    fullcov_maxz: f64,
}

fn replay_level(ps: &PartitionSystem, n: usize, replays: usize, seed: u64) -> Result<LevelReplay> {
    let rec = Reconstruction::select(ps, n, &[])?;
    let w = rec.nodes.len();
    let mut rng = stream(seed, "E7-known", n as u64);
    // Known coefficients through the selected nodes and back.
    let g1: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
    let g2: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
    let (t1, t2) = rec.mat.apply(&g1, &g2);
    let block = reconstruct_gaussian(&rec, ps, &t1, &t2)?;
    let coef_err = block.g1.iter().zip(&g1).chain(block.g2.iter().zip(&g2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let coef_scale = g1.iter().chain(&g2).map(|x| x.abs()).fold(0.0, f64::max);
    let full_err = rec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let k = (j - 1) as usize;
            (block.full1[k] - t1[i]).abs().max((block.full2[k] - t2[i]).abs())
        })
        .fold(0.0, f64::max);
    let t_scale = t1.iter().chain(&t2).map(|x| x.abs()).fold(0.0, f64::max);
    let roundtrip = block.roundtrip.max(coef_err / coef_scale).max(full_err / t_scale);

    // Replays of g̃ on the selected nodes: g̃ = L z with L Lᵀ = CᵀC.
    let mut rng = stream(seed, "E7-replay", n as u64);
    let chol = |c: &DMatrix<f64>| c.tr_mul(c).cholesky().map(|ch| ch.l()).ok_or_else(|| Error::Domain(format!("Gram matrix at level {n} not positive definite")));
    let l1 = chol(&rec.mat.c1)?;
    let l2 = chol(&rec.mat.c2)?;
    let tilde1 = &l1 * normals(w, replays, &mut rng);
    let tilde2 = &l2 * normals(w, replays, &mut rng);
    let (s1, s2) = rec.solve_matrix(&tilde1, &tilde2)?;
    let mut coeffs = DMatrix::zeros(replays, 2 * w);
    coeffs.view_mut((0, 0), (replays, w)).copy_from(&s1.transpose());
    coeffs.view_mut((0, w), (replays, w)).copy_from(&s2.transpose());

    // Values on nodes outside the selection against the analytic covariance.
    let total = ps.t_count(n);
    let mut others = Vec::new();
    let want = FULLCOV_NODES.min((total as usize).saturating_sub(w));
    let mut i = 0u64;
    while others.len() < want && i < total {
        let j = 1 + (i * 7919 + 3) % total;
        if !rec.nodes.contains(&j) && !others.contains(&j) {
            others.push(j);
        }
        i += 1;
    }
    let fullcov_maxz = if others.is_empty() {
        0.0
    } else {
        let mat = IncrementMatrix::build(ps, n, &others)?;
        let y1 = mat.c1.tr_mul(&s1);
        let y2 = mat.c2.tr_mul(&s2);
        let samples: Vec<Vec<f64>> = (0..replays).map(|r| y1.column(r).iter().chain(y2.column(r).iter()).cloned().collect()).collect();
        covariance_max_z(&samples, &mat.covariance())
    };
    Ok(LevelReplay { cond: rec.cond[0].max(rec.cond[1]), roundtrip, coeffs, fullcov_maxz })
}

pub(super) fn run(cfg: &ExperimentConfig, m: &mut Metrics, tables: &mut Tables) -> Result<()> {
    let replays = cfg.replicas_or(10_000);
    let n_hi = cfg.n_max.min(8);
    let ps = PartitionSystem::build(n_hi)?;
    let mut csv = String::from("n,nodes,cond,roundtrip,mean_z,var_z,xcov_z,fullcov_maxz\n");
    let mut prev: Option<DMatrix<f64>> = None;
    for n in 2..=n_hi {
        let lr = replay_level(&ps, n, replays, cfg.seed)?;
        let x = &lr.coeffs;
        let mut mean_z = Vec::new();
        let mut var_z = Vec::new();
        for c in x.column_iter() {
            let v: Vec<f64> = c.iter().cloned().collect();
            let s = crate::numeric::summarize(&v);
            mean_z.push(s.mean / s.stderr.max(1e-300));
            let sq: Vec<f64> = v.iter().map(|a| a * a).collect();
            let q = crate::numeric::summarize(&sq);
            var_z.push((q.mean - 1.0) / q.stderr.max(1e-300));
        }
        let xcov = chi_z(&cross_scores(x, x, true));
        let (mz, vz) = (chi_z(&mean_z), chi_z(&var_z));
        let vn = Some(n as i64);
        m.push("cond", vn, lr.cond, 0.0, 1);
        m.push("roundtrip", vn, lr.roundtrip, 0.0, 1);
        m.push("mean_maxz", vn, mz, 0.0, replays);
        m.push("var_maxz", vn, vz, 0.0, replays);
        m.push("xcov_z", vn, xcov, 0.0, replays);
        m.push("fullcov_maxz", vn, lr.fullcov_maxz, 0.0, replays);
        if let Some(p) = &prev {
            m.push("levels_maxz", vn, chi_z(&cross_scores(p, x, false)), 0.0, replays);
        }
        csv.push_str(&format!("{n},{},{:e},{:e},{mz:.4},{vz:.4},{xcov:.4},{:.4}\n", x.ncols() / 2, lr.cond, lr.roundtrip, lr.fullcov_maxz));
        prev = Some(lr.coeffs);
    }
    tables.insert("reconstruction.csv".into(), csv);
    Ok(())
}
