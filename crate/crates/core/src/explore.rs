//! Goal-reaching task with dead zones, SCP-based action-space shaping, and
//! two small benchmarks: random exploration and cross-entropy policy search.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::engine::ScpTable;
use crate::error::{Error, Result};
use crate::sensor::{render, Observation};
use crate::sim::{quantize, Action, World, WorldState, ZoneKind, NUM_DOFS};
use crate::stats::{derived_rng, mann_whitney_u, median, MIN_GROUP};

pub const DEFAULT_MAX_EPISODE_STEPS: usize = 1000;
pub const DEFAULT_STEP_CAP: usize = 50_000;

/// A world with exactly one goal zone. Episodes start at the world's start
/// position with a uniformly drawn heading and end when the base center enters
/// a goal or dead zone.
#[derive(Debug, Clone)]
pub struct Task {
    world: World,
    initial: WorldState,
    pub max_episode_steps: usize,
    steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    /// Entered a goal or dead zone.
    pub terminal: bool,
    pub reached_goal: bool,
    /// Terminal or episode step cap reached.
    pub done: bool,
}

impl Task {
    pub fn new(world: World, max_episode_steps: usize) -> Result<Task> {
        let env = world.env();
        let goals = env.zones.iter().filter(|z| z.kind == ZoneKind::Goal).count();
        if goals != 1 {
            return Err(Error::Validation(format!("task needs exactly one goal zone, found {goals}")));
        }
        for z in &env.zones {
            if !env.room.contains_disc(crate::geom::Vec2::new(z.center[0], z.center[1]), z.radius) {
                return Err(Error::Validation("zone extends outside the room".into()));
            }
        }
        if max_episode_steps < 1 {
            return Err(Error::Validation("max_episode_steps must be at least 1".into()));
        }
        let initial = world.snapshot();
        Ok(Task { world, initial, max_episode_steps, steps: 0 })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Resets to the start position with a random heading.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut s = self.initial.clone();
        s.base_pose.heading = quantize(rng.gen::<f64>() * TAU);
        self.world.restore(&s)?;
        if self.world.min_clearance() < 0.0 {
            return Err(Error::NotFreeSpace("task start pose is in collision".into()));
        }
        self.steps = 0;
        Ok(())
    }

    pub fn observe(&self) -> Observation {
        render(&self.world)
    }

    pub fn step(&mut self, action: &Action) -> StepOutcome {
        let dt = self.world.dt();
        self.world.step(action, dt);
        self.steps += 1;
        let p = self.world.state().base_pose.position();
        let mut out = StepOutcome { reward: 0.0, terminal: false, reached_goal: false, done: false };
        for z in &self.world.env().zones {
            if (p - crate::geom::Vec2::new(z.center[0], z.center[1])).norm() <= z.radius {
                out.reward = z.reward;
                out.terminal = true;
                out.reached_goal = z.kind == ZoneKind::Goal;
                break;
            }
        }
        out.done = out.terminal || self.steps >= self.max_episode_steps;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpaceTransform {
    Full,
    Truncated(Vec<usize>),
    Adapted([f64; NUM_DOFS]),
}

impl ActionSpaceTransform {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSpaceTransform::Full => "full",
            ActionSpaceTransform::Truncated(_) => "truncated",
            ActionSpaceTransform::Adapted(_) => "adapted",
        }
    }

    /// Half-width of the sampling interval per DOF.
    pub fn scales(&self) -> [f64; NUM_DOFS] {
        match self {
            ActionSpaceTransform::Full => [1.0; NUM_DOFS],
            ActionSpaceTransform::Truncated(kept) => std::array::from_fn(|k| if kept.contains(&k) { 1.0 } else { 0.0 }),
            ActionSpaceTransform::Adapted(s) => *s,
        }
    }

    /// Clamps every component into its transformed interval.
    pub fn apply(&self, a: &Action) -> Action {
        let s = self.scales();
        std::array::from_fn(|k| a[k].clamp(-s[k], s[k]))
    }
}

/// Keeps the `k` DOFs with the lowest SCP, lowest index first on ties.
pub fn truncate_action_space(table: &ScpTable, k: usize) -> Result<ActionSpaceTransform> {
    if k < 1 || k > table.rows.len() {
        return Err(Error::Validation(format!("k must be in 1..={}, got {k}", table.rows.len())));
    }
    let mut rows: Vec<(f64, usize)> = table.rows.iter().map(|r| (r.estimate, r.dof_index)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = rows[..k].iter().map(|r| r.1).collect();
    kept.sort_unstable();
    Ok(ActionSpaceTransform::Truncated(kept))
}

/// Scales each DOF linearly from 1 at the lowest SCP to 0 at the highest.
pub fn adapt_action_space(table: &ScpTable) -> ActionSpaceTransform {
    let mut scales = [1.0; NUM_DOFS];
    let max = table.rows.iter().map(|r| r.estimate).fold(f64::NEG_INFINITY, f64::max);
    let min = table.rows.iter().map(|r| r.estimate).fold(f64::INFINITY, f64::min);
    if max > min {
        for r in &table.rows {
            scales[r.dof_index] = (max - r.estimate) / (max - min);
        }
    }
    ActionSpaceTransform::Adapted(scales)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Every DOF uniform in its interval.
    BoxUniform,
    /// One DOF with a non-empty interval per step, chosen uniformly, commanded
    /// uniformly in its interval; the others stay at 0.
    #[default]
    SingleDof,
}

pub fn sample_action<R: Rng + ?Sized>(t: &ActionSpaceTransform, sampler: Sampler, rng: &mut R) -> Action {
    let s = t.scales();
    let mut a = [0.0; NUM_DOFS];
    match sampler {
        Sampler::BoxUniform => {
            for k in 0..NUM_DOFS {
                if s[k] > 0.0 {
                    a[k] = rng.gen_range(-s[k]..=s[k]);
                }
            }
        }
        Sampler::SingleDof => {
            let active: Vec<usize> = (0..NUM_DOFS).filter(|&k| s[k] > 0.0).collect();
            if !active.is_empty() {
                let k = active[rng.gen_range(0..active.len())];
                a[k] = rng.gen_range(-s[k]..=s[k]);
            }
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Environment steps until the goal was first entered; `None` if censored.
    pub steps_to_first_goal: Option<usize>,
    pub episode_returns: Vec<f64>,
    /// Best mean return per CEM iteration.
    pub curve: Vec<f64>,
    /// First CEM iteration (1-based) whose best mean return reached the target.
    pub iterations_to_target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub variant: String,
    pub runs: Vec<SeedRun>,
    /// Value used for censored runs when ranking.
    pub cap: usize,
}

impl RunStats {
    /// Steps to first goal with censored runs at the cap.
    pub fn steps(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.steps_to_first_goal.unwrap_or(self.cap) as f64).collect()
    }

    /// Iterations to target with censored runs at the cap.
    pub fn iterations(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.iterations_to_target.unwrap_or(self.cap) as f64).collect()
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Validation("at least one seed is required".into()));
    }
    let mut s = seeds.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != seeds.len() {
        return Err(Error::Validation("seeds must be distinct".into()));
    }
    Ok(())
}

/// Random actions until the goal is first reached or `step_cap` steps have
/// been taken; episodes restart on termination or the episode cap.
pub fn run_random_exploration(
    task: &Task,
    transform: &ActionSpaceTransform,
    sampler: Sampler,
    seeds: &[u64],
    step_cap: usize,
) -> Result<RunStats> {
    check_seeds(seeds)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let mut task = task.clone();
            let mut rng = derived_rng(seed, 0x5eed, 0);
            task.reset(&mut rng)?;
            let mut returns = Vec::new();
            let mut ret = 0.0;
            let mut first = None;
            for step in 1..=step_cap {
                let a = sample_action(transform, sampler, &mut rng);
                let o = task.step(&a);
                ret += o.reward;
                if o.reached_goal && first.is_none() {
                    first = Some(step);
                }
                if o.done {
                    returns.push(ret);
                    ret = 0.0;
                    if first.is_some() {
                        break;
                    }
                    task.reset(&mut rng)?;
                }
            }
            Ok(SeedRun { seed, steps_to_first_goal: first, episode_returns: returns, curve: vec![], iterations_to_target: None })
        })
        .collect::<Result<_>>()?;
    Ok(RunStats { variant: transform.name().into(), runs, cap: step_cap })
}

pub const FEATURE_BINS: usize = 16;
pub const N_FEATURES: usize = FEATURE_BINS + 1;
pub const N_PARAMS: usize = NUM_DOFS * N_FEATURES;

/// Grayscale line averaged into 16 bins, plus a constant 1.
pub fn features(obs: &Observation) -> [f64; N_FEATURES] {
    let mut f = [0.0; N_FEATURES];
    let w = obs.width();
    for b in 0..FEATURE_BINS {
        let (lo, hi) = (b * w / FEATURE_BINS, ((b + 1) * w / FEATURE_BINS).max(b * w / FEATURE_BINS + 1).min(w));
        if lo >= w {
            continue;
        }
        let sum: f64 = obs.pixels[lo..hi].iter().map(|p| (p[0] + p[1] + p[2]) / 3.0).sum();
        f[b] = sum / (hi - lo) as f64;
    }
    f[FEATURE_BINS] = 1.0;
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub action_noise: f64,
    pub episodes: usize,
    pub episode_cap: usize,
    pub init_std: f64,
    pub target_return: f64,
    /// Stop a seed once the target is reached.
    pub early_stop: bool,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 32,
            elites: 8,
            iterations: 50,
            action_noise: 0.1,
            episodes: 3,
            episode_cap: 300,
            init_std: 1.0,
            target_return: 40.0,
            early_stop: false,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 1 || self.elites < 1 || self.elites > self.population {
            return Err(Error::Validation("need 1 <= elites <= population".into()));
        }
        if self.iterations < 1 || self.episodes < 1 || self.episode_cap < 1 {
            return Err(Error::Validation("iterations, episodes and episode_cap must be positive".into()));
        }
        if !(self.action_noise >= 0.0 && self.init_std > 0.0) {
            return Err(Error::Validation("noise must be non-negative and init_std positive".into()));
        }
        Ok(())
    }
}

/// Linear policy: action k is `scale_k * clamp(theta_k . features + noise)`.
pub fn policy_action<R: Rng + ?Sized>(
    theta: &[f64],
    f: &[f64; N_FEATURES],
    scales: &[f64; NUM_DOFS],
    noise: f64,
    rng: &mut R,
) -> Action {
    std::array::from_fn(|k| {
        if scales[k] == 0.0 {
            return 0.0;
        }
        let row = &theta[k * N_FEATURES..(k + 1) * N_FEATURES];
        let z: f64 = row.iter().zip(f).map(|(w, x)| w * x).sum();
        let eps: f64 = rng.sample(StandardNormal);
        scales[k] * (z + noise * eps).clamp(-1.0, 1.0)
    })
}

/// Mean return of `cfg.episodes` episodes. Episode `e` of iteration `it`
/// starts from the same heading for every member.
#[allow(clippy::too_many_arguments)]
fn fitness(
    task: &mut Task,
    theta: &[f64],
    scales: &[f64; NUM_DOFS],
    cfg: &CemConfig,
    seed: u64,
    it: usize,
    member: usize,
) -> Result<f64> {
    let mut noise_rng = derived_rng(seed, 1 + it as u64, member as u64);
    let mut total = 0.0;
    for e in 0..cfg.episodes {
        let mut start_rng = derived_rng(seed, 0xe9, (it * cfg.episodes + e) as u64);
        task.reset(&mut start_rng)?;
        for _ in 0..cfg.episode_cap {
            let f = features(&task.observe());
            let a = policy_action(theta, &f, scales, cfg.action_noise, &mut noise_rng);
            let o = task.step(&a);
            total += o.reward;
            if o.terminal {
                break;
            }
        }
    }
    let v = total / cfg.episodes as f64;
    if !v.is_finite() {
        return Err(Error::Divergence(format!("fitness {v}")));
    }
    Ok(v)
}

fn cem_seed(task: &Task, transform: &ActionSpaceTransform, seed: u64, cfg: &CemConfig) -> Result<SeedRun> {
    let scales = transform.scales();
    let mut mean = vec![0.0; N_PARAMS];
    let mut std = vec![cfg.init_std; N_PARAMS];
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut reached = None;
    for it in 0..cfg.iterations {
        let mut rng = derived_rng(seed, 0xce, it as u64);
        let pop: Vec<Vec<f64>> = (0..cfg.population)
            .map(|_| {
                (0..N_PARAMS)
                    .map(|j| {
                        let z: f64 = rng.sample(StandardNormal);
                        mean[j] + std[j] * z
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = pop
            .par_iter()
            .enumerate()
            .map_init(|| task.clone(), |t, (m, theta)| fitness(t, theta, &scales, cfg, seed, it, m))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..cfg.population).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let best = scores[order[0]];
        curve.push(best);
        if reached.is_none() && best >= cfg.target_return {
            reached = Some(it + 1);
            if cfg.early_stop {
                break;
            }
        }
        let elites = &order[..cfg.elites];
        for j in 0..N_PARAMS {
            let m = elites.iter().map(|&i| pop[i][j]).sum::<f64>() / cfg.elites as f64;
            let v = elites.iter().map(|&i| (pop[i][j] - m).powi(2)).sum::<f64>() / cfg.elites as f64;
            mean[j] = m;
            std[j] = v.sqrt();
        }
    }
    Ok(SeedRun { seed, steps_to_first_goal: None, episode_returns: vec![], curve, iterations_to_target: reached })
}

/// Cross-entropy search over linear policies, one run per seed.
pub fn cem_train(task: &Task, transform: &ActionSpaceTransform, seeds: &[u64], cfg: &CemConfig) -> Result<RunStats> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let runs = seeds.par_iter().map(|&s| cem_seed(task, transform, s, cfg)).collect::<Result<_>>()?;
    Ok(RunStats { variant: transform.name().into(), runs, cap: cfg.iterations + 1 })
}

pub fn steps_csv(stats: &[RunStats]) -> String {
    let mut s = String::from("seed,variant,steps_to_goal\n");
    for st in stats {
        for r in &st.runs {
            let v = r.steps_to_first_goal.map_or_else(|| format!("censored_{}", st.cap), |x| x.to_string());
            s.push_str(&format!("{},{},{}\n", r.seed, st.variant, v));
        }
    }
    s
}

pub fn curves_csv(stats: &[RunStats]) -> String {
    let mut s = String::from("seed,variant,iteration,best_return\n");
    for st in stats {
        for r in &st.runs {
            for (i, v) in r.curve.iter().enumerate() {
                s.push_str(&format!("{},{},{},{}\n", r.seed, st.variant, i + 1, v));
            }
        }
    }
    s
}

/// Full, SCP-truncated (`k` lowest-SCP DOFs) and SCP-adapted transforms.
pub fn standard_variants(table: &ScpTable, k: usize) -> Result<[ActionSpaceTransform; 3]> {
    Ok([ActionSpaceTransform::Full, truncate_action_space(table, k)?, adapt_action_space(table)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub seeds: usize,
    pub median: f64,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variant: String,
    pub against: String,
    /// Absent when either group has fewer than the minimum sample size.
    pub u: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub cap: usize,
    pub variants: Vec<VariantSummary>,
    pub comparisons: Vec<Comparison>,
}

impl MetricReport {
    pub fn median_of(&self, variant: &str) -> Option<f64> {
        self.variants.iter().find(|v| v.variant == variant).map(|v| v.median)
    }

    pub fn p_value_of(&self, variant: &str) -> Option<f64> {
        self.comparisons.iter().find(|c| c.variant == variant).and_then(|c| c.p_value)
    }
}

/// Medians per variant (censored runs at the cap) and two-sided Mann-Whitney
/// tests of every variant against the first one.
pub fn metric_report(
    metric: &str,
    stats: &[RunStats],
    values: impl Fn(&RunStats) -> Vec<f64>,
    is_censored: impl Fn(&SeedRun) -> bool,
) -> Result<MetricReport> {
    let first = stats.first().ok_or_else(|| Error::Validation("no variants to compare".into()))?;
    let base = values(first);
    let variants = stats
        .iter()
        .map(|s| VariantSummary {
            variant: s.variant.clone(),
            seeds: s.runs.len(),
            median: median(&values(s)),
            censored: s.runs.iter().filter(|r| is_censored(r)).count(),
        })
        .collect();
    let mut comparisons = Vec::new();
    for s in &stats[1..] {
        let v = values(s);
        let (u, p_value) = if v.len() >= MIN_GROUP && base.len() >= MIN_GROUP {
            let mw = mann_whitney_u(&v, &base)?;
            (Some(mw.u), Some(mw.p_value))
        } else {
            (None, None)
        };
        comparisons.push(Comparison { variant: s.variant.clone(), against: first.variant.clone(), u, p_value });
    }
    Ok(MetricReport { metric: metric.into(), cap: first.cap, variants, comparisons })
}

pub fn steps_report(stats: &[RunStats]) -> Result<MetricReport> {
    metric_report("steps_to_first_goal", stats, RunStats::steps, |r| r.steps_to_first_goal.is_none())
}

pub fn iterations_report(stats: &[RunStats]) -> Result<MetricReport> {
    metric_report("cem_iterations_to_target", stats, RunStats::iterations, |r| r.iterations_to_target.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ScpRow;
    use crate::sim::DofKind;

    fn table(values: [f64; NUM_DOFS]) -> ScpTable {
        ScpTable {
            rows: values
                .iter()
                .enumerate()
                .map(|(i, &v)| ScpRow {
                    dof_index: i,
                    dof_kind: DofKind::Eyelid,
                    estimate: v,
                    wilson_low: v,
                    wilson_high: v,
                    n_trials: 1,
                    commuted: 0,
                    collided_trials: 0,
                })
                .collect(),
            params: Default::default(),
        }
    }

    #[test]
    fn truncation_keeps_lowest() {
        let t = table([0.2, 0.5, 1.0, 0.75, 0.88, 0.75, 0.87, 1.0]);
        assert_eq!(truncate_action_space(&t, 4).unwrap(), ActionSpaceTransform::Truncated(vec![0, 1, 3, 5]));
        assert_eq!(truncate_action_space(&table([0.5; 8]), 2).unwrap(), ActionSpaceTransform::Truncated(vec![0, 1]));
        assert!(truncate_action_space(&t, 0).is_err());
        assert_eq!(truncate_action_space(&t, 8).unwrap().scales(), [1.0; 8]);
    }

    #[test]
    fn adaptation_is_linear() {
        let t = table([0.2, 0.6, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let s = adapt_action_space(&t).scales();
        assert_eq!(s[0], 1.0);
        assert_eq!(s[2], 0.0);
        assert!((s[1] - 0.5).abs() < 1e-12);
        assert_eq!(adapt_action_space(&table([0.7; 8])).scales(), [1.0; 8]);
    }

    #[test]
    fn samples_respect_bounds() {
        let t = ActionSpaceTransform::Adapted([1.0, 0.5, 0.0, 0.25, 0.1, 0.25, 0.1, 0.0]);
        let s = t.scales();
        let mut rng = derived_rng(3, 0, 0);
        for sampler in [Sampler::BoxUniform, Sampler::SingleDof] {
            for _ in 0..2000 {
                let a = sample_action(&t, sampler, &mut rng);
                for k in 0..NUM_DOFS {
                    assert!(a[k].abs() <= s[k]);
                }
            }
        }
    }

    #[test]
    fn features_of_uniform_line() {
        let f = features(&Observation::filled(64, [0.3, 0.6, 0.9]));
        for b in 0..FEATURE_BINS {
            assert!((f[b] - 0.6).abs() < 1e-12);
        }
        assert_eq!(f[FEATURE_BINS], 1.0);
    }
}
