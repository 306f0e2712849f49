mod common;

use common::*;
use proptest::prelude::*;
use sxmc::metrics::{nmse, rnmse};
use sxmc::synth::{
    add_measurement_noise, add_model_noise, generate_ground_truth, sample_pattern, GmmNoise, SubspaceModel,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_match_loop_oracle(seed in any::<u64>(), m in 1usize..12, n in 1usize..12) {
        let mut rng = rng(seed);
        let a = gaussian(m, n, &mut rng);
        let b = gaussian(m, n, &mut rng);
        let omega = bernoulli_pattern(m, n, 0.5, &mut rng);
        let got = nmse(&a, &b).unwrap();
        let want = loop_nmse(&a, &b);
        prop_assert!((got - want).abs() <= 1e-12 * want);
        if omega.observed_count() > 0 {
            let got = rnmse(&a, &b, &omega).unwrap();
            let want = loop_rnmse(&a, &b, &omega);
            prop_assert!((got - want).abs() <= 1e-12 * want);
            prop_assert!(got >= 0.0);
        }
    }

    #[test]
    fn measurement_snr_is_exact(seed in any::<u64>(), target in -10.0f64..40.0, p in 0.2f64..1.0) {
        let mut rng = rng(seed);
        let model = SubspaceModel::uniform(3, 4, 12, 20).unwrap();
        let truth = generate_ground_truth(&model, 20, &mut rng).unwrap();
        let pattern = sample_pattern(20, 60, p, &mut rng).unwrap();
        let clean = pattern.apply(&truth.m).unwrap();
        let noisy = add_measurement_noise(&truth.m, &pattern, &GmmNoise::default(), target, &mut rng).unwrap();
        prop_assume!(noisy.corrupted > 0);
        prop_assert!((noisy.realized_snr_db(&clean) - target).abs() <= 1e-9);
        for i in 0..20 {
            for j in 0..60 {
                if !pattern.contains(i, j) {
                    prop_assert_eq!(noisy.observed[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn model_snr_is_exact(seed in any::<u64>(), snr in -5.0f64..100.0) {
        let mut rng = rng(seed);
        let b = gaussian(30, 8, &mut rng);
        let noisy = add_model_noise(&b, snr, &mut rng).unwrap();
        let realized = 10.0 * (b.norm_squared() / (&noisy - &b).norm_squared()).log10();
        prop_assert!((realized - snr).abs() <= 1e-9);
    }

    #[test]
    fn ground_truth_has_union_of_subspaces_structure(seed in any::<u64>(), s in 1usize..5, d in 1usize..4) {
        let mut rng = rng(seed);
        let r = (s * d).min(12);
        let model = SubspaceModel::uniform(s, d, r, 6).unwrap();
        let truth = generate_ground_truth(&model, 15, &mut rng).unwrap();
        prop_assert_eq!(truth.m.shape(), (15, 6 * s));
        prop_assert!((&truth.m - &truth.a * &truth.z * truth.b.transpose()).norm() <= 1e-12 * truth.m.norm());
        let rank = oracle_rank(&truth.m, 1e-10);
        prop_assert_eq!(rank, model.target_rank(15));
        for (j, &label) in truth.labels.iter().enumerate() {
            let basis = &truth.bases[label];
            let row = truth.b.row(j).transpose();
            let resid = &row - basis * (basis.transpose() * &row);
            prop_assert!(resid.norm() <= 1e-10 * row.norm().max(1.0));
        }
    }
}

#[test]
fn mask_density_within_three_sigma() {
    for (i, &p) in [0.05, 0.3, 0.5, 0.8].iter().enumerate() {
        let mut rng = rng(40 + i as u64);
        let pattern = sample_pattern(150, 200, p, &mut rng).unwrap();
        let total = 30_000.0;
        let sd = (total * p * (1.0 - p)).sqrt();
        assert!((pattern.observed_count() as f64 - total * p).abs() <= 3.0 * sd);
    }
}

#[test]
fn mixture_mean_monte_carlo() {
    let gmm = GmmNoise::default();
    let mut rng = rng(3);
    let draws = 1_000_000;
    let mean = (0..draws).map(|_| gmm.sample(&mut rng)).sum::<f64>() / draws as f64;
    assert!((mean + 0.11).abs() <= 1e-3, "{mean}");
    assert!((gmm.mean() + 0.11).abs() <= 1e-15);
}
