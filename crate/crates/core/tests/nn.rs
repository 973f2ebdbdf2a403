mod common;

use common::gradcheck::{all_params, check_inputs, check_params, random_inputs, sampled_params};
use common::rng;
use fas_isac::nn::{soft_update, Mlp, OutputActivation};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

/// Forward pass written out with explicit loops.
fn naive_forward(net: &Mlp, x: &[f64], aux: Option<&[f64]>) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        if l == 1 {
            if let Some(a) = aux {
                h.extend_from_slice(a);
            }
        }
        let mut out = vec![0.0; layer.bias.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let mut z = layer.bias[i];
            for (j, hj) in h.iter().enumerate() {
                z += layer.weights[(i, j)] * hj;
            }
            *o = if l < last {
                z.max(0.0)
            } else {
                match net.output_activation() {
                    OutputActivation::Linear => z,
                    OutputActivation::TanhScaled(s) => s * z.tanh(),
                }
            };
        }
        h = out;
    }
    h
}

#[test]
fn forward_matches_naive_loops() {
    let mut r = rng(1);
    for draw in 0..10 {
        let actor = Mlp::new(&[9, 12, 7, 6], OutputActivation::TanhScaled(0.5), None, 0.3, &mut r).unwrap();
        let critic = Mlp::new(&[9, 12, 7, 1], OutputActivation::Linear, Some(6), 0.3, &mut r).unwrap();
        let x: Vec<f64> = (0..9).map(|_| r.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..6).map(|_| r.random_range(-0.5..0.5)).collect();
        for (got, want) in actor.predict(&x, None).unwrap().iter().zip(naive_forward(&actor, &x, None)) {
            assert!((got - want).abs() <= 1e-12, "draw {draw}");
        }
        let got = critic.predict(&x, Some(&a)).unwrap()[0];
        let want = naive_forward(&critic, &x, Some(&a))[0];
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "draw {draw}");
    }
}

#[test]
fn small_actor_and_critic_gradients_match_differences() {
    let mut r = rng(2);
    for draw in 0..10 {
        let mut actor = Mlp::new(&[9, 10, 8, 6], OutputActivation::TanhScaled(0.5), None, 0.5, &mut r).unwrap();
        let x = random_inputs(&mut r, 9, 4);
        let c = random_inputs(&mut r, 6, 4);
        let picks = all_params(&actor);
        let out = check_params(&mut actor, &x, None, &c, &picks);
        assert!(out.worst < 1e-4, "actor draw {draw}: {}", out.worst);
        assert!(out.kinks * 50 < picks.len(), "actor draw {draw}: {} kinks", out.kinks);

        let mut critic = Mlp::new(&[9, 10, 8, 1], OutputActivation::Linear, Some(6), 0.5, &mut r).unwrap();
        let a = random_inputs(&mut r, 6, 4);
        let c = random_inputs(&mut r, 1, 4);
        let picks = all_params(&critic);
        let out = check_params(&mut critic, &x, Some(&a), &c, &picks);
        assert!(out.worst < 1e-4, "critic draw {draw}: {}", out.worst);
        assert!(out.kinks * 50 < picks.len(), "critic draw {draw}: {} kinks", out.kinks);
        assert!(check_inputs(&critic, &x, &a, &c) < 1e-4, "critic draw {draw} action gradient");
    }
}

#[test]
fn default_sized_networks_pass_sampled_gradient_checks() {
    let mut r = rng(3);
    for draw in 0..10 {
        let mut actor = Mlp::new(&[11, 400, 300, 8], OutputActivation::TanhScaled(0.5), None, 3e-3, &mut r).unwrap();
        let x = random_inputs(&mut r, 11, 2);
        let c = random_inputs(&mut r, 8, 2);
        let picks = sampled_params(&actor, 60, &mut r);
        let out = check_params(&mut actor, &x, None, &c, &picks);
        assert!(out.worst < 1e-4 && out.checked > 40, "actor draw {draw}: {} over {}", out.worst, out.checked);

        let mut critic = Mlp::new(&[11, 400, 300, 1], OutputActivation::Linear, Some(8), 3e-3, &mut r).unwrap();
        let a = random_inputs(&mut r, 8, 2);
        let c = random_inputs(&mut r, 1, 2);
        let picks = sampled_params(&critic, 60, &mut r);
        let out = check_params(&mut critic, &x, Some(&a), &c, &picks);
        assert!(out.worst < 1e-4 && out.checked > 40, "critic draw {draw}: {} over {}", out.worst, out.checked);
    }
}

proptest! {
    #[test]
    fn soft_update_is_a_convex_combination(seed in 0u64..10_000, tau in 1e-4..1.0f64) {
        let mut r = rng(seed);
        let online = Mlp::new(&[3, 4, 2], OutputActivation::Linear, None, 1.0, &mut r).unwrap();
        let mut target = Mlp::new(&[3, 4, 2], OutputActivation::Linear, None, 1.0, &mut r).unwrap();
        let before = target.flat_params();
        soft_update(&mut target, &online, tau).unwrap();
        for ((t, o), b) in target.flat_params().iter().zip(online.flat_params()).zip(before) {
            let (lo, hi) = if o <= b { (o, b) } else { (b, o) };
            prop_assert!(*t >= lo - 1e-15 && *t <= hi + 1e-15);
        }
    }
}

#[test]
fn soft_update_fixed_point_and_full_copy() {
    let mut r = rng(4);
    let online = Mlp::new(&[2, 3, 1], OutputActivation::Linear, None, 1.0, &mut r).unwrap();
    let mut same = online.clone();
    soft_update(&mut same, &online, 0.3).unwrap();
    for (a, b) in same.flat_params().iter().zip(online.flat_params()) {
        assert!((a - b).abs() <= 1e-15);
    }
    let mut other = Mlp::new(&[2, 3, 1], OutputActivation::Linear, None, 1.0, &mut r).unwrap();
    soft_update(&mut other, &online, 1.0).unwrap();
    assert_eq!(other.flat_params(), online.flat_params());
    let v: DVector<f64> = DVector::from_vec(other.flat_params());
    assert_eq!(v.len(), online.num_params());
}
