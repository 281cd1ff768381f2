//! SC-experiments and the sensory commutativity probability estimator.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sensor::{render, Distance, Metric, Observation};
use crate::sim::{dof, quantize, ActionSequence, DofKind, World, WorldState, NUM_DOFS, QUANTUM};
use crate::stats::{derived_rng, wilson_interval, Z95};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpParams {
    pub n_trials: usize,
    pub seq_len: usize,
    pub threshold: f64,
    pub distance: Metric,
    pub master_seed: u64,
}

impl Default for ScpParams {
    fn default() -> Self {
        ScpParams { n_trials: 1000, seq_len: 20, threshold: 0.0, distance: Metric::Mse, master_seed: 0 }
    }
}

impl ScpParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 || self.seq_len < 1 {
            return Err(Error::Validation("n_trials and seq_len must be at least 1".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::Validation("threshold must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScExperimentRecord {
    pub dof_index: usize,
    pub start_state: WorldState,
    pub sequence: ActionSequence,
    pub permutation: ActionSequence,
    pub obs1: Observation,
    pub obs2: Observation,
    pub distance_value: f64,
    pub commuted: bool,
    pub collision_flags: [bool; 2],
    pub end_states: [WorldState; 2],
}

impl ScExperimentRecord {
    /// One JSON line; observations are dropped unless requested.
    pub fn to_json_line(&self, with_observations: bool) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if !with_observations {
            if let Some(m) = v.as_object_mut() {
                m.remove("obs1");
                m.remove("obs2");
            }
        }
        Ok(serde_json::to_string(&v)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpRow {
    pub dof_index: usize,
    pub dof_kind: DofKind,
    pub estimate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub n_trials: usize,
    pub commuted: usize,
    pub collided_trials: usize,
}

impl ScpRow {
    pub fn interval(&self) -> (f64, f64) {
        (self.wilson_low, self.wilson_high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpTable {
    pub rows: Vec<ScpRow>,
    pub params: ScpParams,
}

impl ScpTable {
    pub fn row(&self, dof_index: usize) -> &ScpRow {
        self.rows.iter().find(|r| r.dof_index == dof_index).expect("dof present in table")
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dof_index,dof_kind,scp,wilson_low,wilson_high,n_trials,seq_len,threshold,seed\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.dof_index,
                dof_kind_name(r.dof_kind),
                r.estimate,
                r.wilson_low,
                r.wilson_high,
                r.n_trials,
                self.params.seq_len,
                self.params.threshold,
                self.params.master_seed
            ));
        }
        s
    }
}

pub fn dof_kind_name(k: DofKind) -> &'static str {
    match k {
        DofKind::BaseLongitudinal => "base_longitudinal",
        DofKind::BaseRotation => "base_rotation",
        DofKind::HeadRotation => "head_rotation",
        DofKind::Shoulder => "shoulder",
        DofKind::Elbow => "elbow",
        DofKind::Eyelid => "eyelid",
    }
}

/// How single-DOF commands are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandSampler {
    Uniform,
    Discrete(Vec<f64>),
}

impl CommandSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CommandSampler::Uniform => rng.gen_range(-1.0..=1.0),
            CommandSampler::Discrete(set) => set[rng.gen_range(0..set.len())],
        }
    }
}

/// Single-DOF sequence with commands uniform in [-1, 1].
pub fn sample_sequence<R: Rng + ?Sized>(dof_index: usize, seq_len: usize, rng: &mut R) -> ActionSequence {
    sample_sequence_with(dof_index, seq_len, &CommandSampler::Uniform, rng)
}

pub fn sample_sequence_with<R: Rng + ?Sized>(
    dof_index: usize,
    seq_len: usize,
    sampler: &CommandSampler,
    rng: &mut R,
) -> ActionSequence {
    let values: Vec<f64> = (0..seq_len).map(|_| sampler.draw(rng)).collect();
    ActionSequence::single_dof(dof_index, &values)
}

fn all_equal(seq: &ActionSequence) -> bool {
    let a = seq.actions();
    a.iter().all(|x| x == &a[0])
}

/// Uniform random rearrangement of `seq`, re-drawn until it differs from
/// `seq` at some position. Sequences whose elements are all equal are
/// returned unchanged.
pub fn sample_permutation<R: Rng + ?Sized>(seq: &ActionSequence, rng: &mut R) -> ActionSequence {
    if seq.len() <= 1 || all_equal(seq) {
        return seq.clone();
    }
    let mut idx: Vec<usize> = (0..seq.len()).collect();
    loop {
        idx.shuffle(rng);
        let p = seq.permuted(&idx);
        if p != *seq {
            return p;
        }
    }
}

fn run_branch(world: &mut World, start: &WorldState, seq: &ActionSequence) -> Result<(Observation, WorldState, bool)> {
    world.restore(start)?;
    let before = world.collision_events();
    world.apply_sequence(seq);
    let collided = world.collision_events() != before;
    Ok((render(world), world.snapshot(), collided))
}

/// Plays `seq` and `perm` from `start` and compares the final observations.
/// The world is left in `start`.
pub fn run_sc_experiment(
    world: &mut World,
    start: &WorldState,
    seq: &ActionSequence,
    perm: &ActionSequence,
    threshold: f64,
    distance: &dyn Distance,
) -> Result<ScExperimentRecord> {
    let (obs1, end1, c1) = run_branch(world, start, seq)?;
    let (obs2, end2, c2) = run_branch(world, start, perm)?;
    world.restore(start)?;
    let d = distance.distance(&obs1, &obs2)?;
    Ok(ScExperimentRecord {
        dof_index: dominant_dof(seq),
        start_state: start.clone(),
        sequence: seq.clone(),
        permutation: perm.clone(),
        obs1,
        obs2,
        distance_value: d,
        commuted: d <= threshold,
        collision_flags: [c1, c2],
        end_states: [end1, end2],
    })
}

/// Index of the first DOF with a non-zero command (0 for a null sequence).
fn dominant_dof(seq: &ActionSequence) -> usize {
    (0..NUM_DOFS).find(|&k| seq.actions().iter().any(|a| a[k] != 0.0)).unwrap_or(0)
}

/// True iff `h` and `g` played from `state` end in observations within
/// `threshold`. The world is restored to its pre-call state.
pub fn check_equivalence(
    world: &mut World,
    state: &WorldState,
    h: &ActionSequence,
    g: &ActionSequence,
    threshold: f64,
    distance: &dyn Distance,
) -> Result<bool> {
    let saved = world.snapshot();
    let r = (|| {
        let (o1, _, _) = run_branch(world, state, h)?;
        let (o2, _, _) = run_branch(world, state, g)?;
        Ok::<_, Error>(distance.distance(&o1, &o2)? <= threshold)
    })();
    world.restore(&saved)?;
    r
}

/// Runs trial `i` of the estimator for `dof_index`.
pub fn scp_trial(world: &mut World, dof_index: usize, params: &ScpParams, i: usize) -> Result<ScExperimentRecord> {
    let mut rng = derived_rng(params.master_seed, dof_index as u64, i as u64);
    let start = world.sample_free_state(&mut rng)?;
    let seq = sample_sequence(dof_index, params.seq_len, &mut rng);
    let perm = sample_permutation(&seq, &mut rng);
    let mut rec = run_sc_experiment(world, &start, &seq, &perm, params.threshold, &params.distance)?;
    rec.dof_index = dof_index;
    Ok(rec)
}

fn row_from(dof_index: usize, world: &World, outcomes: &[(bool, bool)]) -> ScpRow {
    let n = outcomes.len();
    let k = outcomes.iter().filter(|o| o.0).count();
    let (lo, hi) = wilson_interval(k, n, Z95);
    ScpRow {
        dof_index,
        dof_kind: world.morphology().dof_list[dof_index].kind,
        estimate: k as f64 / n as f64,
        wilson_low: lo,
        wilson_high: hi,
        n_trials: n,
        commuted: k,
        collided_trials: outcomes.iter().filter(|o| o.1).count(),
    }
}

/// Monte-Carlo SCP estimate for one DOF. Trials are independent and seeded
/// from `(master_seed, dof_index, trial)`, so the result does not depend on
/// scheduling. The world is restored to its pre-call state.
pub fn estimate_scp(world: &World, dof_index: usize, params: &ScpParams) -> Result<ScpRow> {
    params.validate()?;
    let outcomes: Vec<(bool, bool)> = (0..params.n_trials)
        .into_par_iter()
        .map_init(
            || world.clone(),
            |w, i| scp_trial(w, dof_index, params, i).map(|r| (r.commuted, r.collision_flags.iter().any(|c| *c))),
        )
        .collect::<Result<_>>()?;
    Ok(row_from(dof_index, world, &outcomes))
}

pub fn estimate_scp_all(world: &World, params: &ScpParams) -> Result<ScpTable> {
    let rows = (0..NUM_DOFS).map(|k| estimate_scp(world, k, params)).collect::<Result<_>>()?;
    Ok(ScpTable { rows, params: params.clone() })
}

/// Monte-Carlo SCP over sequences only, from a fixed start state.
#[allow(clippy::too_many_arguments)]
pub fn estimate_scp_from_start(
    world: &World,
    start: &WorldState,
    dof_index: usize,
    sampler: &CommandSampler,
    seq_len: usize,
    n: usize,
    threshold: f64,
    seed: u64,
) -> Result<f64> {
    let hits: Vec<bool> = (0..n)
        .into_par_iter()
        .map_init(
            || world.clone(),
            |w, i| {
                let mut rng = derived_rng(seed, dof_index as u64, i as u64);
                let seq = sample_sequence_with(dof_index, seq_len, sampler, &mut rng);
                let perm = sample_permutation(&seq, &mut rng);
                run_sc_experiment(w, start, &seq, &perm, threshold, &Metric::Mse).map(|r| r.commuted)
            },
        )
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / n as f64)
}

/// Evaluation budget of the exhaustive oracle.
pub const ORACLE_BUDGET: u128 = 1_000_000;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Exact commuting probability from a fixed start when commands are drawn
/// uniformly from `action_set`: every sequence is weighted equally, and for
/// each sequence the permutation is uniform over the index permutations that
/// change it (or the identity when none does).
pub fn brute_force_scp_discrete(
    world: &mut World,
    start: &WorldState,
    dof_index: usize,
    action_set: &[f64],
    seq_len: usize,
    threshold: f64,
) -> Result<f64> {
    if action_set.is_empty() || seq_len == 0 {
        return Err(Error::Validation("action set and sequence length must be non-empty".into()));
    }
    let n_seq = (action_set.len() as u128).checked_pow(seq_len as u32).unwrap_or(u128::MAX);
    let n_perm: u128 = (1..=seq_len as u128).product();
    let required = n_seq.saturating_mul(n_perm);
    if required > ORACLE_BUDGET {
        return Err(Error::Budget { required, budget: ORACLE_BUDGET });
    }
    let saved = world.snapshot();
    let perms = permutations(seq_len);
    let mut cache: HashMap<Vec<u64>, Observation> = HashMap::new();
    let mut observe = |w: &mut World, vals: &[f64]| -> Result<Observation> {
        let key: Vec<u64> = vals.iter().map(|v| v.to_bits()).collect();
        if let Some(o) = cache.get(&key) {
            return Ok(o.clone());
        }
        w.restore(start)?;
        w.apply_sequence(&ActionSequence::single_dof(dof_index, vals));
        let o = render(w);
        cache.insert(key, o.clone());
        Ok(o)
    };
    let mut total = 0.0;
    let mut digits = vec![0usize; seq_len];
    for _ in 0..n_seq {
        let vals: Vec<f64> = digits.iter().map(|&d| action_set[d]).collect();
        let base = observe(world, &vals)?;
        let mut differing = 0usize;
        let mut commuting = 0usize;
        for p in &perms {
            let pv: Vec<f64> = p.iter().map(|&i| vals[i]).collect();
            if pv == vals {
                continue;
            }
            differing += 1;
            let o = observe(world, &pv)?;
            if Metric::Mse.distance(&base, &o)? <= threshold {
                commuting += 1;
            }
        }
        total += if differing == 0 { 1.0 } else { commuting as f64 / differing as f64 };
        for d in digits.iter_mut() {
            *d += 1;
            if *d < action_set.len() {
                break;
            }
            *d = 0;
        }
    }
    world.restore(&saved)?;
    Ok(total / n_seq as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residue {
    pub g: ActionSequence,
    /// Pose error between the ends of h1∘h2 and h2∘h1∘g.
    pub pose_error: f64,
    pub distance: f64,
    pub verified: bool,
}

/// Commands that move a DOF with unit speed `speed` by exactly `delta`, a
/// multiple of the pose quantum. Each step moves a whole number of quanta and
/// at most one full command.
fn grid_commands(delta: f64, speed: f64, dt: f64) -> Vec<f64> {
    let unit = speed * dt;
    let total = (delta / QUANTUM).round() as i64;
    if total == 0 {
        return Vec::new();
    }
    let per_step = ((unit / QUANTUM).floor() as i64).max(1);
    let n = (total.abs() + per_step - 1) / per_step;
    let (q, r) = (total / n, total % n);
    (0..n).map(|i| (q + if i < r.abs() { r.signum() } else { 0 }) as f64 * QUANTUM / unit).collect()
}

/// Quantized multiple of `PI / 2` nearest to `heading` with the given parity
/// (`odd` selects headings along the y axis).
fn axis_heading(heading: f64, odd: bool) -> f64 {
    let half = PI / 2.0;
    let mut m = (heading / half).round() as i64;
    if (m.rem_euclid(2) == 1) != odd {
        m += if heading >= m as f64 * half { 1 } else { -1 };
    }
    quantize(m as f64 * half)
}

/// Closed-form corrective sequence `g` such that h2∘h1∘g reproduces the end
/// of h1∘h2 in free space: joint differences are closed directly and the base
/// turns onto the x axis, advances, turns onto the y axis, advances and turns
/// to the target heading. The world is restored to its
/// pre-call state.
pub fn compute_residue_free_space(
    world: &mut World,
    start: &WorldState,
    h1: &ActionSequence,
    h2: &ActionSequence,
    threshold: f64,
) -> Result<Residue> {
    let saved = world.snapshot();
    let r = residue_inner(world, start, h1, h2, threshold);
    world.restore(&saved)?;
    r
}

fn residue_inner(
    world: &mut World,
    start: &WorldState,
    h1: &ActionSequence,
    h2: &ActionSequence,
    threshold: f64,
) -> Result<Residue> {
    let h12 = h1.compose(h2);
    let h21 = h2.compose(h1);
    let (obs_a, a, ca) = run_branch(world, start, &h12)?;
    if ca {
        return Err(Error::NotFreeSpace("h1 then h2 collides".into()));
    }
    let (_, b, cb) = run_branch(world, start, &h21)?;
    if cb {
        return Err(Error::NotFreeSpace("h2 then h1 collides".into()));
    }
    let morph = world.morphology().clone();
    let dt = world.dt();
    let mut actions = Vec::new();
    let push = |actions: &mut Vec<[f64; NUM_DOFS]>, k: usize, cmds: Vec<f64>| {
        for c in cmds {
            let mut v = [0.0; NUM_DOFS];
            v[k] = c;
            actions.push(v);
        }
    };
    for k in [dof::HEAD_ROTATION, dof::SHOULDER_LEFT, dof::ELBOW_LEFT, dof::SHOULDER_RIGHT, dof::ELBOW_RIGHT] {
        let delta = a.dof_positions[k] - b.dof_positions[k];
        push(&mut actions, k, grid_commands(delta, morph.max_speed(k), dt));
    }
    let w = morph.max_speed(dof::BASE_ROTATION);
    let v = morph.max_speed(dof::BASE_LONGITUDINAL);
    let diff = a.base_pose.position() - b.base_pose.position();
    let mut heading = b.base_pose.heading;
    for (along, odd) in [(diff.x, false), (diff.y, true)] {
        if along == 0.0 {
            continue;
        }
        let axis = axis_heading(heading, odd);
        push(&mut actions, dof::BASE_ROTATION, grid_commands(axis - heading, w, dt));
        heading = axis;
        let dir = if odd { axis.sin() } else { axis.cos() };
        push(&mut actions, dof::BASE_LONGITUDINAL, grid_commands(along * dir.signum(), v, dt));
    }
    push(&mut actions, dof::BASE_ROTATION, grid_commands(a.base_pose.heading - heading, w, dt));
    let g = ActionSequence::new(actions);

    world.restore(start)?;
    world.apply_sequence(&h21);
    let before = world.collision_events();
    world.apply_sequence(&g);
    if world.collision_events() != before {
        return Err(Error::CollisionDuringResidue);
    }
    let c = world.snapshot();
    let obs_c = render(world);
    let d = crate::sensor::distance_mse(&obs_a, &obs_c)?;
    Ok(Residue { g, pose_error: a.agent_pose_error(&c), distance: d, verified: d <= threshold })
}
