use chaoslab_wasm::Demo;

#[test]
fn level_info_matches_partition() {
    let d = Demo::new("uniform_sym", 9).unwrap();
    let info = d.level_info(3).unwrap();
    assert_eq!(info, vec![64.0, 1.0 / 64.0]);
}

#[test]
fn series_has_requested_length() {
    let d = Demo::new("two_point_asym", 2).unwrap();
    let s = d.series(100, 257).unwrap();
    assert_eq!(s.len(), 257);
    assert!(s.iter().all(|x| x.is_finite()));
}

#[test]
fn masses_have_unit_scale() {
    let d = Demo::new("rademacher", 5).unwrap();
    let m = d.masses(0.5, 6, 16).unwrap();
    let total = m[16];
    assert!(total > 0.2 && total < 5.0, "{total}");
}
