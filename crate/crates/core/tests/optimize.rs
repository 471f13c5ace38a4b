use proptest::prelude::*;
use tagbias::optimize::{
    dpb_lindley_smith, md_exact_mean, md_mode_iteration, select_gamma_by_mode_distance,
    Termination, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE,
};
use tagbias::synthetic::make_paper_scale_fixture;
use tagbias::{corrected_mle, AlphaSpec, Hyperparams, TagDataset};

#[test]
fn lindley_smith_on_library_scale_data() {
    let data = make_paper_scale_fixture(1).unwrap();
    let k = data.len();
    let alpha = AlphaSpec::OverK.resolve(k).unwrap();
    let target = corrected_mle(&data).unwrap();
    let selection = select_gamma_by_mode_distance(
        &data,
        &alpha,
        &[1.0, 10.0, 100.0, 1000.0],
        &[0.0005, 0.005, 0.05],
        &target,
        DEFAULT_TOLERANCE,
        DEFAULT_MAX_ITER,
    )
    .unwrap();
    let result = &selection.result;
    assert_eq!(result.termination, Termination::Converged);
    assert!(result.final_residual <= DEFAULT_TOLERANCE);
    assert!(result.iterations_used <= DEFAULT_MAX_ITER);
    assert!(result.m.l1_distance(&target) <= 0.05);
}

#[test]
fn exact_mean_in_the_weak_prior_limit() {
    let data = TagDataset::from_counts(&[2, 1, 1], &[1.0, 0.5, 0.5]).unwrap();
    let m = md_exact_mean(&data, &[1e-15; 3]).unwrap();
    for v in m.iter() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn md_mode_at_flat_prior_is_corrected_mle(
        counts in prop::collection::vec(0u64..200, 2..60),
        phi in prop::collection::vec(0.001f64..1.0, 60),
        mu in 0.5f64..1e5,
    ) {
        prop_assume!(counts.iter().any(|&t| t > 0));
        let k = counts.len();
        let data = TagDataset::from_counts(&counts, &phi[..k]).unwrap();
        let res = md_mode_iteration(&data, &vec![1.0; k], mu, 1e-12, 1000).unwrap();
        prop_assert!(res.m.l1_distance(&corrected_mle(&data).unwrap()) < 1e-9);
    }

    #[test]
    fn lindley_smith_fixed_point_is_idempotent(
        counts in prop::collection::vec(0u64..100, 2..30),
        phi in prop::collection::vec(0.01f64..1.0, 30),
        alpha in 0.01f64..3.0,
    ) {
        let k = counts.len();
        let data = TagDataset::from_counts(&counts, &phi[..k]).unwrap();
        let h = Hyperparams::new(vec![alpha; k], 100.0, 0.005, 1.0, 1.0).unwrap();
        let a = dpb_lindley_smith(&data, &h, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
        let b = dpb_lindley_smith(&data, &h, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((a.m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        if a.termination == Termination::Converged {
            prop_assert!(a.final_residual <= DEFAULT_TOLERANCE);
        }
    }

    #[test]
    fn exact_mean_is_scale_free_in_phi(
        counts in prop::collection::vec(0u64..50, 2..20),
        phi in prop::collection::vec(0.01f64..1.0, 20),
        c in 0.01f64..1.0,
        alpha in 0.01f64..2.0,
    ) {
        let k = counts.len();
        let a = TagDataset::from_counts(&counts, &phi[..k]).unwrap();
        let scaled: Vec<f64> = phi[..k].iter().map(|p| p * c).collect();
        let b = TagDataset::from_counts(&counts, &scaled).unwrap();
        let alpha = vec![alpha; k];
        let ma = md_exact_mean(&a, &alpha).unwrap();
        let mb = md_exact_mean(&b, &alpha).unwrap();
        prop_assert!(ma.l1_distance(&mb) < 1e-12);
    }
}
