use chaoslab::partition::{f, PartitionSystem};
use proptest::prelude::*;
use std::sync::OnceLock;

fn system() -> &'static PartitionSystem {
    static PS: OnceLock<PartitionSystem> = OnceLock::new();
    PS.get_or_init(|| PartitionSystem::build(10).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn children_tile_parent(n in 1usize..9, u in 0.0f64..1.0) {
        let ps = system();
        let j = 1 + ((u * ps.t_count(n) as f64) as u64).min(ps.t_count(n) - 1);
        let parent = ps.node(n, j).unwrap();
        let kids = ps.children(n, j).unwrap();
        prop_assert!(!kids.is_empty());
        let first = ps.node(n + 1, kids.start).unwrap();
        let last = ps.node(n + 1, kids.end - 1).unwrap();
        prop_assert_eq!(first.tau_num, parent.tau_num);
        prop_assert_eq!(last.end_num, parent.end_num);
        for c in kids.start + 1..kids.end {
            prop_assert_eq!(ps.node(n + 1, c).unwrap().tau_num, ps.node(n + 1, c - 1).unwrap().end_num);
        }
    }

    #[test]
    fn representative_inside_and_located(n in 1usize..11, u in 0.0f64..1.0) {
        let ps = system();
        let j = 1 + ((u * ps.t_count(n) as f64) as u64).min(ps.t_count(n) - 1);
        let v = ps.node(n, j).unwrap();
        prop_assert!(v.rep > v.tau && v.rep < v.tau + v.len);
        prop_assert_eq!(ps.locate(n, v.rep).unwrap().0, j);
    }

    #[test]
    fn locator_agrees_with_ancestors(n in 2usize..11, t in 0.0f64..1.0) {
        let ps = system();
        let (j, _) = ps.locate(n, t).unwrap();
        for m in 1..n {
            prop_assert_eq!(ps.locate(m, t).unwrap().0, ps.ancestor(n, j, m).unwrap());
        }
    }

    #[test]
    fn subtree_is_union_of_children(n in 1usize..8, h in 1usize..3, u in 0.0f64..1.0) {
        let ps = system();
        let j = 1 + ((u * ps.t_count(n) as f64) as u64).min(ps.t_count(n) - 1);
        let sub = ps.subtree_nodes(n, h, j).unwrap();
        let mut expect = ps.children(n, j).unwrap();
        for _ in 1..h {
            let a = ps.children(n + 1, expect.start).unwrap().start;
            let b = ps.children(n + 1, expect.end - 1).unwrap().end;
            expect = a..b;
        }
        prop_assert_eq!(sub, expect);
    }
}

#[test]
fn cardinality_bound_holds_to_ten() {
    let ps = system();
    for n in 1..=10 {
        assert!((ps.t_count(n) as u128) <= f(n) << (n + 1), "T_{n}");
    }
}

#[test]
fn two_builds_identical() {
    let a = PartitionSystem::build(7).unwrap();
    let b = PartitionSystem::build(7).unwrap();
    for j in (1..=a.t_count(7)).step_by(997) {
        assert_eq!(a.node(7, j).unwrap().rep.to_bits(), b.node(7, j).unwrap().rep.to_bits());
    }
}

#[test]
fn refuses_oversized_levels() {
    assert!(PartitionSystem::build(17).is_err());
    assert!(PartitionSystem::build(0).is_err());
}

#[test]
fn pair_count_example_level_three() {
    // Level 3 is the 1/64 grid: a window of half-width 1/8 holds at most 17
    // representatives, the two-sided bound there is 1 + 2 Σ (D_k/8 + 1).
    let ps = system();
    let reps: Vec<f64> = (1..=64).map(|j| ps.node(3, j).unwrap().rep).collect();
    let w = 0.125;
    let worst = reps.iter().map(|&x| reps.iter().filter(|&&y| (y - x).abs() <= w).count()).max().unwrap();
    assert!(worst as f64 <= chaoslab::experiments::structural::window_bound(3, w));
    assert!(worst > 8, "the literal one-sided count would be T_3/8 = 8");
}
