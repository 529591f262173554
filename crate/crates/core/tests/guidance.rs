mod common;

use common::oracle;
use mobsim::generator::{population, Backend};
use mobsim::guidance::*;
use mobsim::{Error, GridSpec, PromptSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const EPS: f64 = 1e-9;

fn positive_samples(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0e6, 1..max_len)
}

#[test]
fn w1_matches_sorted_brute_force_on_random_pairs() {
    let mut r = oracle::rng(11);
    for _ in 0..100 {
        let n = r.gen_range(1..=1000);
        let scale = 10f64.powf(r.gen_range(0.0..5.0));
        let a: Vec<f64> = (0..n).map(|_| r.gen::<f64>() * scale).collect();
        let b: Vec<f64> = (0..n).map(|_| r.gen::<f64>().powi(3) * scale * 3.0).collect();
        let got = w1_log(&a, &b, EPS).unwrap();
        let want = oracle::w1_log_brute(&a, &b, EPS);
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

#[test]
fn l1_matches_step_integral_on_random_pairs() {
    let mut r = oracle::rng(12);
    for _ in 0..100 {
        let (n, m) = (r.gen_range(1..=1000), r.gen_range(1..=1000));
        let a: Vec<f64> = (0..n).map(|_| (r.gen_range(0..200) as f64) * 50.0).collect();
        let b: Vec<f64> = (0..m).map(|_| r.gen::<f64>() * 1.0e4).collect();
        let got = l1_ccdf(&a, &b, CcdfCoords::Log, EPS).unwrap();
        let want = oracle::l1_ccdf_steps(&a, &b, EPS);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn w1_is_a_symmetric_scale_free_distance(a in positive_samples(200), shift in 0.1f64..10.0) {
        let b: Vec<f64> = a.iter().map(|x| x * shift + 1.0).collect();
        let d = w1_log(&a, &b, EPS).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - w1_log(&b, &a, EPS).unwrap()).abs() < 1e-12);
        prop_assert_eq!(w1_log(&a, &a, EPS).unwrap(), 0.0);
    }

    #[test]
    fn l1_on_log_ccdf_equals_log_w1_for_equal_sizes(
        pair in (1usize..300).prop_flat_map(|n| (prop::collection::vec(1.0f64..1e6, n), prop::collection::vec(1.0f64..1e6, n)))
    ) {
        let (a, b) = pair;
        let l1 = l1_ccdf(&a, &b, CcdfCoords::Log, EPS).unwrap();
        let w1 = w1_log(&a, &b, EPS).unwrap();
        prop_assert!((l1 - w1).abs() <= 1e-9 * w1.max(1.0));
    }

    #[test]
    fn l1_is_symmetric(a in positive_samples(300), b in positive_samples(300)) {
        let x = l1_ccdf(&a, &b, CcdfCoords::Linear, 0.0).unwrap();
        let y = l1_ccdf(&b, &a, CcdfCoords::Linear, 0.0).unwrap();
        prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
    }
}

#[test]
fn aggregate_is_permutation_invariant_and_monotone() {
    let mut r = oracle::rng(13);
    for _ in 0..1000 {
        let n = r.gen_range(1..=8);
        let gs: Vec<f64> = (0..n).map(|_| r.gen::<f64>() * 3.0).collect();
        let base = aggregate_r(&gs, DEFAULT_EPSILON_REWARD);
        let mut perm = gs.clone();
        perm.shuffle(&mut r);
        assert_eq!(aggregate_r(&perm, DEFAULT_EPSILON_REWARD), base);
        let i = r.gen_range(0..n);
        let mut up = gs.clone();
        up[i] += r.gen::<f64>() * 2.0 + 1e-6;
        assert!(aggregate_r(&up, DEFAULT_EPSILON_REWARD) > base);
        let mut down = gs.clone();
        down[i] *= r.gen::<f64>();
        assert!(aggregate_r(&down, DEFAULT_EPSILON_REWARD) <= base);
    }
}

#[test]
fn aggregate_is_the_geometric_mean() {
    let gs = [0.5, 2.0, 1.0];
    let want = (0.5f64 * 2.0 * 1.0).powf(1.0 / 3.0);
    assert!((aggregate_r(&gs, 0.0) - want).abs() < 1e-15);
}

#[test]
fn step_rewards_telescope() {
    let mut r = oracle::rng(14);
    for _ in 0..200 {
        let chain: Vec<f64> = (0..11).map(|_| r.gen::<f64>() * 5.0).collect();
        let total: f64 = chain.windows(2).map(|w| step_reward(w[0], w[1])).sum();
        assert!((total - (chain[0] - chain[10])).abs() <= 1e-12);
    }
}

#[test]
fn target_of_the_reference_scores_near_zero_against_itself() {
    let g = GridSpec::default();
    let ps = PromptSet::new(3, population::default_prompts(40, 5, &g, 1)).unwrap();
    let trajs = Backend::Synthetic.generate(&ps, &g).trajectories();
    for sdt in [SharedDataType::Sd1, SharedDataType::Sd2, SharedDataType::Sd3] {
        let target = make_target(&trajs, sdt, &g).unwrap();
        assert_eq!(target.objectives.len(), sdt.default_measures().len());
        let cfg = GuidanceConfig::new(target, &GuidanceParams::default()).unwrap();
        let e = evaluate_objectives(&cfg, &trajs, &g).unwrap();
        assert!(e.gs.iter().all(|x| x.abs() < 1e-9), "{sdt:?}: {:?}", e.gs);
        assert!(e.r < 1e-5);
    }
}

#[test]
fn user_level_target_needs_ids() {
    let g = GridSpec::default();
    let ps = PromptSet::new(3, population::default_prompts(10, 3, &g, 1)).unwrap();
    let mut trajs = Backend::Synthetic.generate(&ps, &g).trajectories();
    for t in &mut trajs {
        t.user_id = None;
    }
    assert!(matches!(make_target(&trajs, SharedDataType::Sd1, &g), Err(Error::InvalidTarget(_))));
    assert!(make_target(&trajs, SharedDataType::Sd2, &g).is_ok());
}

#[test]
fn targets_of_the_wrong_kind_are_rejected() {
    let bad = TargetSpec {
        shared_data_type: SharedDataType::Sd3,
        objectives: vec![ObjectiveSpec {
            measure_id: MeasureId::Radius,
            target: TargetValue::Samples { samples: vec![1.0] },
        }],
    };
    assert!(GuidanceConfig::new(bad, &GuidanceParams::default()).is_err());
    let zero = TargetSpec {
        shared_data_type: SharedDataType::Sd3,
        objectives: vec![ObjectiveSpec {
            measure_id: MeasureId::DistanceBeta,
            target: TargetValue::Scalar { value: 0.0 },
        }],
    };
    assert!(matches!(zero.validate(), Err(Error::InvalidTarget(_))));
}
