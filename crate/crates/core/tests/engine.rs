use proptest::prelude::*;
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use sensocom::engine::{
    brute_force_scp_discrete, check_equivalence, compute_residue_free_space, estimate_scp, estimate_scp_from_start,
    run_sc_experiment, sample_permutation, sample_sequence, scp_trial, CommandSampler, ScpParams,
};
use sensocom::sim::{dof, StartPose};
use sensocom::stats::{derived_rng, wilson_interval, Z95};
use sensocom::{fixtures, ActionSequence, EnvironmentSpec, Error, Metric, MorphologySpec, World, WorldState, NUM_DOFS};

fn empty_world() -> World {
    World::load(EnvironmentSpec::empty(10.0), MorphologySpec::default()).unwrap()
}

fn sorted_bits(seq: &ActionSequence) -> Vec<Vec<u64>> {
    let mut v: Vec<Vec<u64>> = seq.actions().iter().map(|a| a.iter().map(|x| x.to_bits()).collect()).collect();
    v.sort();
    v
}

#[test]
fn sampled_sequences_are_single_dof() {
    let mut rng = derived_rng(1, 0, 0);
    let s = sample_sequence(3, 5, &mut rng);
    assert_eq!(s.len(), 5);
    for a in s.actions() {
        assert_eq!(a.iter().enumerate().filter(|(k, v)| *k != 3 && **v == 0.0).count(), 7);
    }
    assert_eq!(s, sample_sequence(3, 5, &mut derived_rng(1, 0, 0)));
}

#[test]
fn sampled_commands_are_centered_uniform() {
    let mut rng = derived_rng(2, 0, 0);
    let v = sample_sequence(0, 100_000, &mut rng).dof_values(0);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    assert!((var - 1.0 / 3.0).abs() < 0.01, "variance {var}");
}

#[test]
fn permutations_of_three_are_uniform_over_non_identity() {
    let seq = ActionSequence::single_dof(0, &[0.1, 0.2, 0.3]);
    let mut rng = derived_rng(3, 0, 0);
    let mut counts: HashMap<Vec<u64>, usize> = HashMap::new();
    let n = 10_000;
    for _ in 0..n {
        let p = sample_permutation(&seq, &mut rng);
        assert_ne!(p, seq);
        *counts.entry(p.dof_values(0).iter().map(|x| x.to_bits()).collect()).or_default() += 1;
    }
    assert_eq!(counts.len(), 5);
    for c in counts.values() {
        let f = *c as f64 / n as f64;
        assert!((f - 0.2).abs() <= 0.02, "frequency {f}");
    }
}

#[test]
fn degenerate_permutations() {
    let mut rng = derived_rng(4, 0, 0);
    let constant = ActionSequence::single_dof(2, &[0.4, 0.4, 0.4]);
    assert_eq!(sample_permutation(&constant, &mut rng), constant);
    let single = ActionSequence::single_dof(2, &[0.7]);
    assert_eq!(sample_permutation(&single, &mut rng), single);
}

#[test]
fn constant_sequence_commutes() {
    let mut w = fixtures::world("room12").unwrap();
    let start = w.sample_free_state(&mut derived_rng(5, 0, 0)).unwrap();
    let seq = ActionSequence::single_dof(dof::BASE_LONGITUDINAL, &[0.6; 10]);
    let r = run_sc_experiment(&mut w, &start, &seq, &seq.clone(), 0.0, &Metric::Mse).unwrap();
    assert!(r.commuted && r.obs1.bits_eq(&r.obs2));
    assert!(w.snapshot().bits_eq(&start));
}

#[test]
fn pushing_the_disc_does_not_commute() {
    let mut w = fixtures::world("fig2").unwrap();
    let start = w.snapshot();
    let mut v = vec![1.0; 8];
    v.extend([-1.0; 8]);
    let seq = ActionSequence::single_dof(dof::BASE_LONGITUDINAL, &v);
    let mut idx: Vec<usize> = (8..16).collect();
    idx.extend(0..8);
    let r = run_sc_experiment(&mut w, &start, &seq, &seq.permuted(&idx), 0.0, &Metric::Mse).unwrap();
    assert!(!r.commuted);
    assert_eq!(r.collision_flags, [true, false]);
    assert!((r.end_states[0].entity(0) - r.end_states[1].entity(0)).norm() > 1e-3);
}

#[test]
fn head_rotation_commutes_everywhere() {
    let params = ScpParams { n_trials: 25, ..Default::default() };
    for name in fixtures::scene_names() {
        let mut w = fixtures::world(name).unwrap();
        for i in 0..params.n_trials {
            assert!(scp_trial(&mut w, dof::HEAD_ROTATION, &params, i).unwrap().commuted, "{name} trial {i}");
        }
    }
}

#[test]
fn trial_records_are_consistent() {
    let mut w = fixtures::world("room12").unwrap();
    let params = ScpParams { n_trials: 40, master_seed: 9, ..Default::default() };
    for k in 0..NUM_DOFS {
        for i in 0..params.n_trials {
            let r = scp_trial(&mut w, k, &params, i).unwrap();
            assert_eq!(r.dof_index, k);
            assert_eq!(sorted_bits(&r.sequence), sorted_bits(&r.permutation));
            assert_eq!(r.commuted, r.distance_value <= params.threshold);
            assert!(w.snapshot().bits_eq(&r.start_state));
        }
    }
}

#[test]
fn equivalence_examples() {
    let mut w = empty_world();
    let s = w.snapshot();
    let h = ActionSequence::single_dof(dof::SHOULDER_LEFT, &[0.3, 0.7]);
    let g = ActionSequence::single_dof(dof::SHOULDER_LEFT, &[0.7, 0.0, 0.3]);
    let other = ActionSequence::single_dof(dof::HEAD_ROTATION, &[1.0]);
    assert!(check_equivalence(&mut w, &s, &h, &h, 0.0, &Metric::Mse).unwrap());
    assert!(check_equivalence(&mut w, &s, &h, &g, 0.0, &Metric::Mse).unwrap());
    let ab = check_equivalence(&mut w, &s, &h, &other, 0.0, &Metric::Mse).unwrap();
    let ba = check_equivalence(&mut w, &s, &other, &h, 0.0, &Metric::Mse).unwrap();
    assert_eq!(ab, ba);
    assert!(!ab);
    assert!(w.snapshot().bits_eq(&s));
}

#[test]
fn estimates_are_reproducible_and_bounded() {
    let w = fixtures::world("room12").unwrap();
    let params = ScpParams { n_trials: 60, master_seed: 21, ..Default::default() };
    let before = w.snapshot();
    let a = estimate_scp(&w, dof::SHOULDER_LEFT, &params).unwrap();
    let b = estimate_scp(&w, dof::SHOULDER_LEFT, &params).unwrap();
    assert_eq!(a, b);
    assert!(w.snapshot().bits_eq(&before));
    assert!(a.wilson_low <= a.estimate && a.estimate <= a.wilson_high);
    assert_eq!(a.estimate, a.commuted as f64 / a.n_trials as f64);
    let loose = estimate_scp(&w, dof::SHOULDER_LEFT, &ScpParams { threshold: 1e-3, ..params.clone() }).unwrap();
    assert!(loose.estimate >= a.estimate);
    let rows: Vec<_> = (0..5).map(|k| estimate_scp(&w, k, &params).unwrap()).collect();
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.estimate)));
}

#[test]
fn invalid_parameters_are_rejected() {
    let w = empty_world();
    assert!(matches!(estimate_scp(&w, 0, &ScpParams { n_trials: 0, ..Default::default() }), Err(Error::Validation(_))));
    assert!(matches!(estimate_scp(&w, 0, &ScpParams { seq_len: 0, ..Default::default() }), Err(Error::Validation(_))));
}

#[test]
fn oracle_is_one_in_free_space() {
    let mut w = empty_world();
    let s = w.snapshot();
    for k in 0..NUM_DOFS {
        assert_eq!(brute_force_scp_discrete(&mut w, &s, k, &[-1.0, 0.0, 1.0], 3, 0.0).unwrap(), 1.0, "dof {k}");
        assert_eq!(brute_force_scp_discrete(&mut w, &s, k, &[-1.0, 0.0, 1.0], 1, 0.0).unwrap(), 1.0);
    }
    assert!(w.snapshot().bits_eq(&s));
    assert!(matches!(brute_force_scp_discrete(&mut w, &s, 0, &[-1.0, 0.0, 1.0], 8, 0.0), Err(Error::Budget { .. })));
}

fn near_wall() -> (World, WorldState) {
    let mut env = EnvironmentSpec::empty(10.0);
    env.agent_start = Some(StartPose { x: 10.0 - 0.3 - 0.15, y: 5.0, heading: 0.0 });
    let w = World::load(env, MorphologySpec::default()).unwrap();
    let s = w.snapshot();
    (w, s)
}

/// Enumerates sequences and their changing rearrangements with plain
/// equivalence checks.
fn enumerate_commuting(w: &mut World, s: &WorldState, set: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for a in set {
        for b in set {
            for c in set {
                let v = [*a, *b, *c];
                let h = ActionSequence::single_dof(dof::BASE_LONGITUDINAL, &v);
                let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                let perms: Vec<ActionSequence> = orders.iter().map(|o| h.permuted(o)).filter(|p| *p != h).collect();
                total += if perms.is_empty() {
                    1.0
                } else {
                    let ok = perms.iter().filter(|p| check_equivalence(w, s, &h, p, 0.0, &Metric::Mse).unwrap()).count();
                    ok as f64 / perms.len() as f64
                };
                n += 1;
            }
        }
    }
    total / n as f64
}

#[test]
fn oracle_near_wall_matches_enumeration_and_sampling() {
    let (mut w, s) = near_wall();
    let set = [-1.0, 0.0, 1.0];
    let exact = brute_force_scp_discrete(&mut w, &s, dof::BASE_LONGITUDINAL, &set, 3, 0.0).unwrap();
    let enumerated = enumerate_commuting(&mut w, &s, &set);
    assert_eq!(exact, enumerated);
    // Only the arrangements of {1, 1, -1} disagree: two forward steps in a row
    // reach the wall. Those three sequences score 0, 1/2 and 1/2.
    assert!((exact - 25.0 / 27.0).abs() < 1e-12, "exact {exact}");
    let mc = estimate_scp_from_start(&w, &s, dof::BASE_LONGITUDINAL, &CommandSampler::Discrete(set.to_vec()), 3, 5000, 0.0, 1)
        .unwrap();
    assert!((mc - exact).abs() <= 0.03, "monte carlo {mc} vs {exact}");
}

#[test]
fn residue_of_turn_and_advance() {
    let mut w = empty_world();
    let s = w.snapshot();
    let h1 = ActionSequence::single_dof(dof::BASE_ROTATION, &[FRAC_PI_2 / 1.6; 16]);
    let h2 = ActionSequence::single_dof(dof::BASE_LONGITUDINAL, &[1.0; 10]);
    let end = |w: &mut World, seq: &ActionSequence| {
        w.restore(&s).unwrap();
        w.apply_sequence(seq);
        w.snapshot().base_pose
    };
    let a = end(&mut w, &h1.compose(&h2));
    let b = end(&mut w, &h2.compose(&h1));
    assert!((a.x - 5.0).abs() < 1e-9 && (a.y - 6.0).abs() < 1e-9 && (a.heading - FRAC_PI_2).abs() < 1e-9);
    assert!((b.x - 6.0).abs() < 1e-9 && (b.y - 5.0).abs() < 1e-9 && (b.heading - FRAC_PI_2).abs() < 1e-9);

    w.restore(&s).unwrap();
    let r = compute_residue_free_space(&mut w, &s, &h1, &h2, 0.0).unwrap();
    assert!(r.verified && r.pose_error < 1e-6 && r.distance == 0.0);
    let c = end(&mut w, &h2.compose(&h1).compose(&r.g));
    assert!((c.x - 5.0).abs() < 1e-6 && (c.y - 6.0).abs() < 1e-6 && (c.heading - FRAC_PI_2).abs() < 1e-6);
}

#[test]
fn trivial_residues_are_empty() {
    let mut w = empty_world();
    let s = w.snapshot();
    let h1 = ActionSequence::single_dof(dof::SHOULDER_RIGHT, &[0.5, -0.2]);
    let h2 = ActionSequence::single_dof(dof::SHOULDER_RIGHT, &[0.9]);
    assert!(compute_residue_free_space(&mut w, &s, &h1, &h2, 0.0).unwrap().g.is_empty());
    assert!(compute_residue_free_space(&mut w, &s, &h1, &ActionSequence::empty(), 0.0).unwrap().g.is_empty());
    assert!(w.snapshot().bits_eq(&s));
}

#[test]
fn residue_refuses_contact() {
    let (mut w, s) = near_wall();
    let h1 = ActionSequence::single_dof(dof::BASE_LONGITUDINAL, &[1.0; 3]);
    let h2 = ActionSequence::single_dof(dof::BASE_ROTATION, &[1.0; 3]);
    assert!(matches!(compute_residue_free_space(&mut w, &s, &h1, &h2, 0.0), Err(Error::NotFreeSpace(_))));
}

proptest! {
    #[test]
    fn permutation_preserves_multiset(v in prop::collection::vec(-1.0f64..=1.0, 1..12), seed in any::<u64>()) {
        let s = ActionSequence::single_dof(1, &v);
        let p = sample_permutation(&s, &mut derived_rng(seed, 0, 0));
        prop_assert_eq!(sorted_bits(&s), sorted_bits(&p));
        let distinct = v.iter().any(|x| *x != v[0]);
        prop_assert_eq!(p != s, distinct);
    }

    #[test]
    fn wilson_brackets_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }
}
