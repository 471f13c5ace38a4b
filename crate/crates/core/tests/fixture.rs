use tagbias::synthetic::{fixture_stats, make_paper_scale_fixture, FIXTURE_CATEGORIES};

#[test]
fn paper_scale_fixture_meets_its_targets() {
    for seed in [1u64, 2, 3] {
        let data = make_paper_scale_fixture(seed).unwrap();
        let stats = fixture_stats(&data);
        eprintln!("{stats:?}");
        assert_eq!(data.len(), FIXTURE_CATEGORIES);
        assert!(stats.meets_targets());
        let zero_fraction = stats.zero_counts as f64 / 6096.0;
        assert!((zero_fraction - 3560.0 / 6096.0).abs() <= 0.05 * 3560.0 / 6096.0);
        assert!((14_000.0..=19_000.0).contains(&stats.natural_estimate));
        assert!(stats.phi_min >= 0.003 && stats.phi_max <= 1.0);
    }
}

#[test]
fn fixture_is_reproducible() {
    assert_eq!(
        make_paper_scale_fixture(7).unwrap(),
        make_paper_scale_fixture(7).unwrap()
    );
}
