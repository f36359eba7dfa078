use chaoslab::chaos::{log_partition_hier, measure_level, subtree_mass, SubtreePlan};
use chaoslab::numeric::{ols, summarize};
use chaoslab::rng::stream;
use chaoslab::thick::{thick_threshold, Side, ThickSet};
use chaoslab::{CoefficientModel, FieldRealization, PartitionSystem};
use proptest::prelude::*;
use rustfft::FftPlanner;

fn laws() -> Vec<CoefficientModel> {
    vec![CoefficientModel::gaussian(), CoefficientModel::rademacher(), CoefficientModel::uniform_sym(), CoefficientModel::two_point_asym(1.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn children_reaggregate_to_parent(seed in any::<u64>(), law in 0usize..4, n in 2usize..6, u in 0.0f64..1.0, gamma in 0.3f64..1.8) {
        let ps = PartitionSystem::build(n + 1).unwrap();
        let model = laws()[law].clone();
        let fr = FieldRealization::sample_levels(&model, n + 1, &mut stream(seed, "reaggregate", 0));
        let lo = measure_level(&fr, &ps, gamma, n).unwrap();
        let hi = measure_level(&fr, &ps, gamma, n + 1).unwrap();
        let j = 1 + ((u * ps.t_count(n) as f64) as u64).min(ps.t_count(n) - 1);
        let kids = ps.children(n, j).unwrap();
        let sum: f64 = kids.map(|c| hi.log_weights[(c - 1) as usize].exp()).sum();
        let expect = lo.log_weights[(j - 1) as usize].exp() * subtree_mass(&fr, &ps, gamma, n, j, 1).unwrap();
        prop_assert!(hi.log_weights.iter().all(|w| w.is_finite()));
        prop_assert!(((sum - expect) / expect).abs() < 1e-10, "{} vs {}", sum, expect);
    }

    #[test]
    fn thick_sets_grow_with_delta(seed in any::<u64>(), gamma in 1.05f64..1.9, d1 in 0.0f64..0.5, extra in 0.0f64..0.5) {
        let mut rng = stream(seed, "thick-monotone", 0);
        let walk: Vec<f64> = (0..500).map(|_| rand::Rng::random_range(&mut rng, -1.0..8.0)).collect();
        let a = ThickSet::from_walks(&walk, None, gamma, d1, 8, Side::A).unwrap();
        let b = ThickSet::from_walks(&walk, None, gamma, d1 + extra, 8, Side::A).unwrap();
        prop_assert!(a.members.iter().all(|j| b.contains(*j)));
        prop_assert!(thick_threshold(gamma, d1 + extra, 8) <= thick_threshold(gamma, d1, 8));
    }
}

#[test]
fn subtree_mass_has_unit_mean() {
    let ps = PartitionSystem::build(8).unwrap();
    let model = CoefficientModel::rademacher();
    let j = ps.locate(4, 0.37).unwrap().0;
    let plan = SubtreePlan::build(&ps, &model, 1.2, 4, j, 4).unwrap();
    let mut planner = FftPlanner::new();
    let masses: Vec<f64> = (0..10_000)
        .map(|r| {
            let fr = FieldRealization::sample_levels(&model, 8, &mut stream(11, "subtree-mean", r));
            plan.mass(&plan.walk(&fr, &mut planner).unwrap())
        })
        .collect();
    let s = summarize(&masses);
    assert!(((s.mean - 1.0) / s.stderr).abs() < 4.0, "mean {} se {}", s.mean, s.stderr);
}

#[test]
fn zero_depth_subtree_is_one() {
    let ps = PartitionSystem::build(4).unwrap();
    let fr = FieldRealization::sample_levels(&CoefficientModel::rademacher(), 4, &mut stream(1, "r0", 0));
    assert_eq!(subtree_mass(&fr, &ps, 1.1, 3, 5, 0).unwrap(), 1.0);
}

#[test]
fn partition_function_slope_for_all_laws() {
    let ps = PartitionSystem::build(12).unwrap();
    let gamma = 1.2;
    let target = gamma * gamma / 2.0 * std::f64::consts::LN_2;
    let points = [0.05, 0.17, 0.29, 0.41, 0.53, 0.67, 0.79, 0.91];
    for model in laws() {
        let ns: Vec<f64> = (6..=12).map(|n| n as f64).collect();
        let ys: Vec<f64> = (6..=12)
            .map(|n| {
                let v: Vec<f64> = points.iter().map(|&t| log_partition_hier(&model, gamma, &ps, n, ps.locate(n, t).unwrap().0).unwrap()).collect();
                summarize(&v).mean
            })
            .collect();
        let fit = ols(&ns, &ys);
        assert!(((fit.slope - target) / target).abs() < 0.02, "{:?}: slope {} target {}", model.law, fit.slope, target);
    }
}
