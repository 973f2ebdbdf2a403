mod common;

use common::{naive_gain, naive_rate, random_psd, random_vector, rng, scenario};
use fas_isac::beamforming::Covariance;
use fas_isac::channel::{channel_vector, min_distance_ok, AntennaLayout, Position, Scenario, ScenarioConfig};
use fas_isac::environment::{
    action_bound, apply_action, build_state, fpa_grid, random_valid_layout, realized_displacement, reward_terms,
    EnvAction, EnvConfig, FasEnv, RewardSignConvention, RewardWeights,
};
use proptest::prelude::*;
use rand::Rng;

fn k1_scenario(seed: u64) -> Scenario {
    scenario(seed, &ScenarioConfig { num_targets: 1, ..Default::default() })
}

fn in_regions(layout: &AntennaLayout, s: &Scenario) -> bool {
    layout.bs_positions.iter().all(|p| s.region_bs.contains(p)) && s.region_ut.contains(&layout.ut_position)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn layouts_stay_valid_under_random_actions(seed in 0u64..10_000, n in 1usize..7, scale in 0.1..10.0f64) {
        let s = k1_scenario(seed % 50);
        let mut r = rng(seed);
        let mut layout = random_valid_layout(n, &s, &mut r).unwrap();
        let bound = action_bound(&s);
        for _ in 0..40 {
            let action = EnvAction {
                vector: (0..EnvAction::dim(n)).map(|_| scale * bound * r.random_range(-1.0..1.0)).collect(),
            };
            let next = apply_action(&layout, &action, &s).unwrap();
            prop_assert!(in_regions(&next, &s));
            prop_assert!(min_distance_ok(&next, s.d_s));
            for d in realized_displacement(&layout, &next).vector {
                prop_assert!(d.abs() <= bound * (1.0 + 1e-12));
            }
            layout = next;
        }
    }
}

#[test]
fn reward_decreases_strictly_with_sensing_shortfall() {
    let base = k1_scenario(3);
    let layout = fpa_grid(4, &base).unwrap();
    let cov = Covariance::isotropic(4, base.p_max);
    let gain = naive_gain(&base.target_matrices(&layout.bs_positions)[0], cov.matrix());
    let zero = EnvAction::zeros(4);
    let w = RewardWeights::default();
    let mut previous = f64::INFINITY;
    for extra in [0.0, 0.1, 0.5, 1.0, 3.0] {
        let s = base.with_gamma(gain + extra);
        let t = reward_terms(&layout, &cov, &s, &w, &zero, RewardSignConvention::Violations).unwrap();
        assert!((t.sensing_penalty - w.alpha1 * extra).abs() < 1e-9);
        assert!(t.total < previous, "shortfall {extra}");
        previous = t.total;
    }
    let relaxed = base.with_gamma(gain - 1.0);
    let t = reward_terms(&layout, &cov, &relaxed, &w, &zero, RewardSignConvention::Violations).unwrap();
    assert_eq!(t.sensing_penalty, 0.0);
}

#[test]
fn movement_penalty_vanishes_only_without_displacement() {
    let s = k1_scenario(4);
    let layout = fpa_grid(2, &s).unwrap();
    let cov = Covariance::isotropic(2, 1.0);
    let w = RewardWeights::default();
    let terms = |v: Vec<f64>| {
        reward_terms(&layout, &cov, &s, &w, &EnvAction { vector: v }, RewardSignConvention::Violations).unwrap()
    };
    assert_eq!(terms(vec![0.0; 6]).movement_penalty, 0.0);
    let mut r = rng(5);
    for _ in 0..50 {
        let mut v = vec![0.0; 6];
        let idx = r.random_range(0..6);
        v[idx] = r.random_range(-0.5..0.5);
        if v[idx] == 0.0 {
            continue;
        }
        let t = terms(v.clone());
        assert!(t.movement_penalty > 0.0);
        let want = w.alpha3 * v.chunks(2).map(|d| d[0].hypot(d[1])).sum::<f64>() / 3.0;
        assert!((t.movement_penalty - want).abs() < 1e-15);
    }
}

#[test]
fn step_reward_matches_standalone_evaluation() {
    for seed in 0..10 {
        let s = scenario(20 + seed, &ScenarioConfig::default());
        let mut r = rng(seed);
        let start = random_valid_layout(3, &s, &mut r).unwrap();
        let cov = Covariance::new(random_psd(&mut r, 3, s.p_max)).unwrap();
        let cfg = EnvConfig { episode_len: 15, ..Default::default() };
        let mut env = FasEnv::new(s.clone(), start, cov.clone(), cfg.clone()).unwrap();
        let bound = action_bound(&s);
        for step in 0..15 {
            let before = env.layout().clone();
            let action = EnvAction { vector: (0..8).map(|_| r.random_range(-bound..bound)).collect() };
            let out = env.step_action(&action).unwrap();
            let after = env.layout().clone();
            let realized = realized_displacement(&before, &after);
            let t = reward_terms(&after, &cov, &s, &cfg.weights, &realized, cfg.reward_sign_convention).unwrap();
            assert_eq!(out.reward, t.total);
            let f = channel_vector(&after, &s).unwrap();
            assert!((out.rate - naive_rate(&f, cov.matrix(), s.noise_power)).abs() < 1e-10);
            for (g, e) in out.sensing_gains.iter().zip(s.target_matrices(&after.bs_positions)) {
                assert!((g - naive_gain(&e, cov.matrix())).abs() < 1e-10 * g.abs().max(1.0));
            }
            for (v, g) in out.violated.sensing.iter().zip(&out.sensing_gains) {
                assert_eq!(*v, *g < s.gamma);
            }
            assert_eq!(out.next_state, build_state(&after, &cov));
            assert_eq!(out.done, step == 14);
        }
        assert_eq!(env.reset_to_start(), build_state(&env.layout().clone(), &cov));
    }
}

#[test]
fn golden_states_for_grid_layouts() {
    let s = k1_scenario(6);
    let expected: [(usize, &[(f64, f64)]); 3] = [
        (2, &[(-0.25, 0.0), (0.25, 0.0)]),
        (4, &[(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)]),
        (8, &[(-0.5, -0.5), (0.0, -0.5), (0.5, -0.5), (-0.5, 0.0), (0.0, 0.0), (0.5, 0.0), (-0.5, 0.5), (0.0, 0.5)]),
    ];
    for (n, coords) in expected {
        let layout = fpa_grid(n, &s).unwrap();
        let state = build_state(&layout, &Covariance::isotropic(n, 2.0));
        let mut want: Vec<f64> = coords.iter().flat_map(|&(x, y)| [x, y]).collect();
        want.extend([0.0, 0.0, 2.0, 2.0 / n as f64, 2.0 / n as f64]);
        assert_eq!(state.vector.len(), want.len());
        for (i, (g, w)) in state.vector.iter().zip(&want).enumerate() {
            assert!((g - w).abs() < 1e-12, "N = {n}, component {i}: {g} vs {w}");
        }
    }
}

#[test]
fn rank_one_features() {
    let s = k1_scenario(7);
    let mut r = rng(8);
    for n in [2, 4, 8] {
        let layout = fpa_grid(n, &s).unwrap();
        let u = random_vector(&mut r, n);
        let power = u.norm_squared();
        let state = build_state(&layout, &Covariance::from_factor(u));
        let feats = &state.vector[state.vector.len() - 3..];
        assert!((feats[0] - power).abs() < 1e-10 * power);
        assert!((feats[1] - power).abs() < 1e-10 * power);
        assert!((feats[2] - power / n as f64).abs() < 1e-10 * power);
    }
}

#[test]
fn moves_blocked_by_spacing_leave_the_antenna_in_place() {
    let s = k1_scenario(9);
    let layout = AntennaLayout {
        bs_positions: vec![Position::new(0.0, 0.0), Position::new(0.6, 0.0)],
        ut_position: Position::new(0.0, 0.0),
    };
    // Antenna 0 would land 0.1 from antenna 1 and must stay put.
    let action = EnvAction { vector: vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0] };
    let next = apply_action(&layout, &action, &s).unwrap();
    assert_eq!(next.bs_positions, layout.bs_positions);
    let zero = realized_displacement(&layout, &next);
    assert!(zero.vector.iter().all(|d| *d == 0.0));
}
