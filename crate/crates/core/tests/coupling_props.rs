use chaoslab::coupling::{empirical_coupling, min_failures, yurinskii_beta, yurinskii_bound, Reconstruction, thick_descendant_coupling};
use chaoslab::field::IncrementMatrix;
use chaoslab::rng::stream;
use chaoslab::{CoefficientModel, FieldRealization, PartitionSystem};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn cloud(seed: u64, label: &str, m: usize, k: usize, scale: f64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, label, 0);
    (0..m).map(|_| (0..k).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn failure_rate_non_increasing_in_delta(seed in any::<u64>(), m in 4usize..48, k in 1usize..5, d1 in 0.01f64..0.5, extra in 0.0f64..0.5) {
        let s = cloud(seed, "S", m, k, 1.0);
        let t = cloud(seed, "T", m, k, 1.0);
        let a = empirical_coupling(&s, &t, d1).unwrap();
        let b = empirical_coupling(&s, &t, d1 + extra).unwrap();
        prop_assert!(b.failure_rate <= a.failure_rate);
        // the assignment solver and the matching count agree
        prop_assert_eq!(a.failures, min_failures(&s, &t, d1));
    }

    #[test]
    fn bound_monotone_in_beta_and_delta(beta in 1e-6f64..1.0, fb in 1.0f64..4.0, delta in 0.01f64..2.0, fd in 1.0f64..4.0, k in 1usize..33) {
        let base = yurinskii_bound(beta, delta, k);
        prop_assert!(yurinskii_bound(beta * fb, delta, k) >= base);
        prop_assert!(yurinskii_bound(beta, delta * fd, k) <= base);
        prop_assert!((0.0..=2.0).contains(&base));
    }
}

#[test]
fn identical_samples_couple_perfectly() {
    let s = cloud(3, "same", 200, 4, 1.0);
    let c = empirical_coupling(&s, &s, 1e-9).unwrap();
    assert_eq!(c.failures, 0);
}

#[test]
fn wide_threshold_never_fails() {
    let s = cloud(4, "S", 100, 1, 0.1);
    let t = cloud(4, "T", 100, 1, 0.1);
    assert_eq!(empirical_coupling(&s, &t, 10.0).unwrap().failure_rate, 0.0);
}

#[test]
fn beta_scales_as_inverse_root_of_block_size() {
    let ps = PartitionSystem::build(8).unwrap();
    let pos = [0.1, 0.35, 0.6, 0.85];
    for model in [CoefficientModel::rademacher(), CoefficientModel::two_point_asym(1.0)] {
        let b = |n: usize| {
            let nodes: Vec<u64> = pos.iter().map(|&t| ps.locate(n, t).unwrap().0).collect();
            yurinskii_beta(&model, &ps, n, &nodes, 100_000, &mut stream(5, "beta", n as u64)).unwrap()
        };
        let ratio = b(8) / b(7);
        assert!((0.6..=0.85).contains(&ratio), "{ratio}");
    }
}

#[test]
fn reconstruction_recovers_known_block() {
    let ps = PartitionSystem::build(8).unwrap();
    for n in 2..=8 {
        let rec = Reconstruction::select(&ps, n, &[]).unwrap();
        let w = rec.nodes.len();
        let mut rng = stream(9, "known", n as u64);
        let g1: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
        let g2: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
        let (t1, t2) = rec.mat.apply(&g1, &g2);
        let (h1, h2) = rec.solve(&t1, &t2).unwrap();
        let err = h1.iter().zip(&g1).chain(h2.iter().zip(&g2)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "n = {n}: {err}");
        if n == 2 {
            assert!(rec.roundtrip_error(&t1, &t2, &h1, &h2) < 1e-12);
        }
    }
}

#[test]
fn singular_selection_is_refused() {
    let ps = PartitionSystem::build(3).unwrap();
    // two copies of one node make the square submatrix singular
    let err = Reconstruction::new(&ps, 2, &[1, 1]).unwrap_err();
    assert!(err.to_string().contains("condition number"));
}

#[test]
fn thick_descendants_pipeline() {
    let ps = PartitionSystem::build(9).unwrap();
    let model = CoefficientModel::rademacher();
    let fr = FieldRealization::sample_levels(&model, 9, &mut stream(21, "thick-pipe", 0));
    let rep = thick_descendant_coupling(&fr, &ps, 1.2, 0.1, 8, 512, None, &mut stream(21, "thick-pipe-c", 0)).unwrap();
    assert!(rep.independent_of_future);
    if rep.thick_size > 0 {
        assert!(rep.report.empirical_failure <= rep.report.bound);
        assert!(rep.cov_max_z <= 4.0, "{}", rep.cov_max_z);
        assert!(rep.nodes.len() <= 16);
    } else {
        assert!(rep.report.empty);
    }
}

#[test]
fn increment_covariance_is_gram_matrix() {
    let ps = PartitionSystem::build(6).unwrap();
    let mat = IncrementMatrix::build(&ps, 5, &[1, 9, 400]).unwrap();
    let cov = mat.covariance();
    let g = mat.c1.tr_mul(&mat.c1);
    assert!((cov[(0, 2)] - g[(0, 2)]).abs() < 1e-15);
    assert_eq!(cov[(0, 4)], 0.0);
}
