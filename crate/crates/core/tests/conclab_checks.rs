use linucb_lab::conclab::{
    azuma_bound, elliptical_count_experiment, elliptical_study, freedman_bound, scalar_check, violation_rate,
    FeatureModel, MartingaleSpec, NoiseModel, ScalarBound, SelfNormalizedBound, StepModel,
};
use linucb_lab::rng::seeded;

#[test]
fn scalar_bounds_hold_at_level() {
    let delta = 0.05;
    for steps in [StepModel::Rademacher { scale: 1.0 }, StepModel::Sparse { c: 1.0, p: 0.05 }] {
        for bound in [ScalarBound::Azuma, ScalarBound::Freedman, ScalarBound::UniformBernstein] {
            let (s, records) = scalar_check(steps, 400, bound, delta, 4000, 17).unwrap();
            assert_eq!(records.len(), 4000);
            assert!(s.within_allowance(), "{steps:?} {bound:?}: rate {}", s.rate);
        }
    }
}

#[test]
fn freedman_is_tighter_for_low_variance_steps() {
    let steps = StepModel::Sparse { c: 1.0, p: 0.05 };
    let (azuma, _) = scalar_check(steps, 400, ScalarBound::Azuma, 0.05, 2000, 3).unwrap();
    let (freedman, _) = scalar_check(steps, 400, ScalarBound::Freedman, 0.05, 2000, 3).unwrap();
    assert!(freedman.mean_tightness > 2.0 * azuma.mean_tightness);
    // Same paths, so the ratio of tightness equals the ratio of bounds.
    let ratio = azuma_bound(1.0, 400, 0.05) / freedman_bound(0.05 * 400.0, 1.0, 0.05);
    assert!((freedman.mean_tightness / azuma.mean_tightness - ratio).abs() < 1e-9);
}

#[test]
fn zero_steps_never_violate() {
    let (s, _) = scalar_check(StepModel::Zero, 50, ScalarBound::Freedman, 0.1, 100, 0).unwrap();
    assert_eq!(s.violations, 0);
    assert_eq!(s.max_tightness, 0.0);
}

fn rademacher_spec(d: usize, t_max: usize, sigma: f64, r_cap: Option<f64>) -> MartingaleSpec {
    MartingaleSpec {
        d,
        t_max,
        lambda: 1.0,
        l2_cap: 1.0,
        sigma,
        r_cap,
        noise: NoiseModel::RademacherScaled,
        features: FeatureModel::IidSphere,
    }
}

#[test]
fn bernstein_check_holds_for_all_noise_families() {
    for noise in [NoiseModel::UniformBounded, NoiseModel::TruncatedGaussian, NoiseModel::RademacherScaled] {
        let spec = MartingaleSpec { noise, ..rademacher_spec(3, 150, 0.5, Some(1.0)) };
        let (s, _) = violation_rate(&spec, SelfNormalizedBound::Bernstein, 0.05, 1000, 21).unwrap();
        assert!(s.rate <= 0.05, "{noise:?}: {}", s.rate);
    }
}

/// The classical self-normalised bound carries `2·ln(1/δ)`, which is the
/// one-log radius evaluated at `δ²`.
#[test]
fn hoeffding_check_with_two_log_confidence_holds() {
    let delta: f64 = 0.05;
    for noise in [NoiseModel::UniformBounded, NoiseModel::TruncatedGaussian, NoiseModel::RademacherScaled] {
        for d in [1, 3] {
            let spec = MartingaleSpec { noise, ..rademacher_spec(d, 200, 1.0, None) };
            let (s, _) = violation_rate(&spec, SelfNormalizedBound::Hoeffding, delta * delta, 4000, 22).unwrap();
            assert!(s.rate <= delta, "{noise:?} d={d}: {}", s.rate);
        }
    }
}

/// With a single log term the radius undercovers worst-case bounded noise.
#[test]
fn hoeffding_one_log_radius_undercovers_in_one_dimension() {
    let (s, _) = violation_rate(&rademacher_spec(1, 200, 1.0, None), SelfNormalizedBound::Hoeffding, 0.05, 4000, 77).unwrap();
    assert!(!s.within_allowance(), "rate {}", s.rate);
}

#[test]
fn trials_are_reproducible() {
    let spec = MartingaleSpec {
        d: 2,
        t_max: 50,
        lambda: 1.0,
        l2_cap: 1.0,
        sigma: 1.0,
        r_cap: None,
        noise: NoiseModel::UniformBounded,
        features: FeatureModel::AdversarialRepeat,
    };
    let (_, a) = violation_rate(&spec, SelfNormalizedBound::Hoeffding, 0.1, 64, 5).unwrap();
    let (_, b) = violation_rate(&spec, SelfNormalizedBound::Hoeffding, 0.1, 64, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().enumerate().all(|(i, r)| r.trial_id == i));
}

#[test]
fn elliptical_lemma_holds_pathwise() {
    for features in [FeatureModel::IidSphere, FeatureModel::AdversarialRepeat, FeatureModel::Decaying, FeatureModel::Zero] {
        for (d, lam) in [(1, 0.5), (3, 1.0), (6, 2.0)] {
            let (s, outcomes) = elliptical_study(d, 300, 1.0, lam, 0.3, features, 200, 8).unwrap();
            assert_eq!(s.violations, 0, "{features:?} d={d}");
            assert_eq!(outcomes.len(), 200);
            assert!(outcomes.iter().all(|o| o.holds()));
        }
    }
    assert!(elliptical_count_experiment(2, 100, 1.0, 1.0, 0.5, FeatureModel::IidSphere, &mut seeded(1)).is_ok());
}

#[test]
fn rejects_bad_inputs() {
    assert!(scalar_check(StepModel::Zero, 10, ScalarBound::Azuma, 0.05, 0, 0).is_err());
    assert!(scalar_check(StepModel::Zero, 10, ScalarBound::Azuma, 1.5, 10, 0).is_err());
    assert!(elliptical_study(2, 10, 1.0, 1.0, 0.5, FeatureModel::IidSphere, 0, 0).is_err());
}
