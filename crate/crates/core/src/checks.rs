//! Property suite: sequence group laws, free-space inverses and permutation
//! invariance, residues, and agreement of the estimator with the exhaustive
//! oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    brute_force_scp_discrete, compute_residue_free_space, estimate_scp_from_start, sample_permutation,
    sample_sequence, CommandSampler,
};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::geom::Vec2;
use crate::sensor::render;
use crate::sim::{dof, ActionSequence, EnvironmentSpec, MorphologySpec, World, WorldState, NUM_DOFS};
use crate::stats::derived_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    pub failures: usize,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, trials: usize, failures: usize, detail: String) -> Self {
        CheckResult { name: name.into(), passed: failures == 0 && trials > 0, trials, failures, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Agent used by the free-space checks.
    pub morphology: MorphologySpec,
    pub trials: usize,
    pub residue_pairs: usize,
    pub oracle_starts: usize,
    pub oracle_n: usize,
    pub oracle_tolerance: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            morphology: MorphologySpec::default(),
            trials: 1000,
            residue_pairs: 200,
            oracle_starts: 5,
            oracle_n: 5000,
            oracle_tolerance: 0.03,
            seed: 0,
        }
    }
}

/// Multi-DOF sequence of up to `max_len` uniform actions.
pub fn random_sequence<R: Rng + ?Sized>(max_len: usize, rng: &mut R) -> ActionSequence {
    let n = rng.gen_range(0..=max_len);
    ActionSequence::new((0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..=1.0))).collect())
}

fn free_world(morph: &MorphologySpec) -> Result<World> {
    World::load(EnvironmentSpec::empty(10.0), morph.clone())
}

/// Random heading and arm posture with the base at the room center.
fn central_start<R: Rng + ?Sized>(world: &World, rng: &mut R) -> Result<WorldState> {
    let c = world.env().room.center();
    world.sample_state_at(Vec2::new(c.x, c.y), rng)
}

fn end_state(world: &mut World, start: &WorldState, seq: &ActionSequence) -> Result<WorldState> {
    world.restore(start)?;
    world.apply_sequence(seq);
    Ok(world.snapshot())
}

pub fn check_associativity(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut w = free_world(&cfg.morphology)?;
    let mut failures = 0;
    for i in 0..cfg.trials {
        let mut rng = derived_rng(cfg.seed, 0xa550, i as u64);
        let (a, b, c) = (random_sequence(5, &mut rng), random_sequence(5, &mut rng), random_sequence(5, &mut rng));
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        let start = central_start(&w, &mut rng)?;
        let same_states = end_state(&mut w, &start, &left)?.bits_eq(&end_state(&mut w, &start, &right)?);
        if left != right || !same_states {
            failures += 1;
        }
    }
    Ok(CheckResult::new("associativity", cfg.trials, failures, "(a.b).c == a.(b.c), sequences and end states".into()))
}

pub fn check_identity(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut w = free_world(&cfg.morphology)?;
    let e = ActionSequence::empty();
    let mut failures = 0;
    for i in 0..cfg.trials {
        let mut rng = derived_rng(cfg.seed, 0x1d, i as u64);
        let s = random_sequence(5, &mut rng);
        let start = central_start(&w, &mut rng)?;
        let plain = end_state(&mut w, &start, &s)?;
        let ok = s.compose(&e) == s
            && e.compose(&s) == s
            && end_state(&mut w, &start, &e)?.bits_eq(&start)
            && end_state(&mut w, &start, &s.compose(&e))?.bits_eq(&plain);
        if !ok {
            failures += 1;
        }
    }
    Ok(CheckResult::new("identity", cfg.trials, failures, "empty sequence is a two-sided identity".into()))
}

/// Random sequences followed by their inverse restore the agent. Any contact
/// is reported as an error.
pub fn check_inverse(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut w = free_world(&cfg.morphology)?;
    let (mut failures, mut worst) = (0, 0.0f64);
    for i in 0..cfg.trials {
        let mut rng = derived_rng(cfg.seed, 0x1b, i as u64);
        let s = random_sequence(10, &mut rng);
        let start = central_start(&w, &mut rng)?;
        w.restore(&start)?;
        let before = w.collision_events();
        w.apply_sequence(&s.compose(&s.invert()));
        if w.collision_events() != before {
            return Err(Error::NotFreeSpace(format!("inverse trial {i} touched geometry")));
        }
        let err = start.agent_pose_error(w.state());
        worst = worst.max(err);
        if err > 1e-9 {
            failures += 1;
        }
    }
    Ok(CheckResult::new("inverse", cfg.trials, failures, format!("max agent pose error {worst:.3e} (limit 1e-9)")))
}

/// In free space every single-DOF sequence ends in the same state as any
/// rearrangement of it.
pub fn check_permutation_invariance(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut w = free_world(&cfg.morphology)?;
    let mut failures = 0;
    for i in 0..cfg.trials {
        let mut rng = derived_rng(cfg.seed, 0x9e, i as u64);
        let k = i % NUM_DOFS;
        let s = sample_sequence(k, 20, &mut rng);
        let p = sample_permutation(&s, &mut rng);
        let start = central_start(&w, &mut rng)?;
        if !end_state(&mut w, &start, &s)?.bits_eq(&end_state(&mut w, &start, &p)?) {
            failures += 1;
        }
    }
    Ok(CheckResult::new(
        "permutation_invariance",
        cfg.trials,
        failures,
        "single-DOF sequence and permutation end bit-identical in free space".into(),
    ))
}

/// The scripted push scene has a pair whose orders end in different states.
pub fn check_noncommuting_pair() -> Result<CheckResult> {
    let mut w = fixtures::world("fig2")?;
    let start = w.snapshot();
    let forward = ActionSequence::single_dof(dof::BASE_LONGITUDINAL, &[1.0; 6]);
    let turn = ActionSequence::single_dof(dof::BASE_ROTATION, &[1.0; 8]);
    let a = end_state(&mut w, &start, &forward.compose(&turn))?;
    let b = end_state(&mut w, &start, &turn.compose(&forward))?;
    w.restore(&start)?;
    let entity_gap = (a.entity(0) - b.entity(0)).norm();
    let d = a.agent_pose_error(&b).max(entity_gap);
    let failures = usize::from(!(d > 1e-3));
    Ok(CheckResult::new("noncommuting_pair", 1, failures, format!("final-state difference {d:.4} (needs > 1e-3)")))
}

/// Corrective sequences close h1.h2 against h2.h1 in free space. Pairs use
/// two distinct DOFs.
pub fn check_residues(cfg: &SuiteConfig) -> Result<CheckResult> {
    let mut w = free_world(&cfg.morphology)?;
    let (mut failures, mut worst) = (0, 0.0f64);
    for i in 0..cfg.residue_pairs {
        let mut rng = derived_rng(cfg.seed, 0x2e, i as u64);
        let k1 = rng.gen_range(0..NUM_DOFS);
        let k2 = (k1 + rng.gen_range(1..NUM_DOFS)) % NUM_DOFS;
        let h1 = sample_sequence(k1, rng.gen_range(1..=8), &mut rng);
        let h2 = sample_sequence(k2, rng.gen_range(1..=8), &mut rng);
        let start = central_start(&w, &mut rng)?;
        let r = compute_residue_free_space(&mut w, &start, &h1, &h2, 0.0)?;
        worst = worst.max(r.pose_error);
        if !(r.distance == 0.0 && r.pose_error <= 1e-6) {
            failures += 1;
        }
    }
    Ok(CheckResult::new(
        "residues",
        cfg.residue_pairs,
        failures,
        format!("observation distance 0 and max pose error {worst:.3e} (limit 1e-6)"),
    ))
}

/// Per-start Monte-Carlo and exhaustive commuting probabilities.
const ORACLE_CANDIDATES: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub start_index: usize,
    pub monte_carlo: f64,
    pub exhaustive: f64,
}

/// Compares the estimator with the exhaustive oracle on `cfg.oracle_starts`
/// start states. Starts are the first sampled free states whose exhaustive
/// probability is below 1, so every comparison involves non-commuting
/// sequences.
pub fn oracle_comparisons(world: &World, dof_index: usize, cfg: &SuiteConfig) -> Result<Vec<OracleComparison>> {
    let set = vec![-1.0, 0.0, 1.0];
    let sampler = CommandSampler::Discrete(set.clone());
    let mut w = world.clone();
    let mut rows = Vec::with_capacity(cfg.oracle_starts);
    let mut candidate = 0u64;
    while rows.len() < cfg.oracle_starts {
        if candidate >= ORACLE_CANDIDATES {
            return Err(Error::Placement { attempts: candidate as usize });
        }
        let mut rng = derived_rng(cfg.seed, 0x0c, candidate);
        candidate += 1;
        let start = w.sample_free_state(&mut rng)?;
        let ex = brute_force_scp_discrete(&mut w, &start, dof_index, &set, 3, 0.0)?;
        if ex >= 1.0 {
            continue;
        }
        let i = rows.len();
        let mc = estimate_scp_from_start(&w, &start, dof_index, &sampler, 3, cfg.oracle_n, 0.0, cfg.seed + i as u64)?;
        rows.push(OracleComparison { start_index: i, monte_carlo: mc, exhaustive: ex });
    }
    Ok(rows)
}

pub fn check_oracle_equivalence(cfg: &SuiteConfig) -> Result<CheckResult> {
    let world = fixtures::world("room12")?;
    let rows = oracle_comparisons(&world, dof::SHOULDER_LEFT, cfg)?;
    let worst = rows.iter().map(|r| (r.monte_carlo - r.exhaustive).abs()).fold(0.0, f64::max);
    let failures = rows.iter().filter(|r| (r.monte_carlo - r.exhaustive).abs() > cfg.oracle_tolerance).count();
    Ok(CheckResult::new(
        "oracle_equivalence",
        rows.len(),
        failures,
        format!("max |MC - exhaustive| {worst:.4} (limit {})", cfg.oracle_tolerance),
    ))
}

/// Observation of `world` after `seq` from `start`; the world is left at the end.
pub fn observe_after(world: &mut World, start: &WorldState, seq: &ActionSequence) -> Result<crate::Observation> {
    world.restore(start)?;
    world.apply_sequence(seq);
    Ok(render(world))
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_associativity(cfg)?,
        check_identity(cfg)?,
        check_inverse(cfg)?,
        check_permutation_invariance(cfg)?,
        check_noncommuting_pair()?,
        check_residues(cfg)?,
        check_oracle_equivalence(cfg)?,
    ])
}
