use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use sensocom::baselines::{baselines_csv, run_baselines, TrainConfig};
use sensocom::checks::{run_suite, SuiteConfig};
use sensocom::engine::{estimate_scp_all, ScpParams, ScpTable};
use sensocom::explore::{
    cem_train, curves_csv, iterations_report, run_random_exploration, standard_variants, steps_csv, steps_report,
    CemConfig, RunStats, Sampler, Task, DEFAULT_MAX_EPISODE_STEPS, DEFAULT_STEP_CAP,
};
use sensocom::objmap::{
    build_immovable_map, run_detection, select_probe_dof, summarize_detection, DetectMode, MapParams, DEFAULT_RHO,
};
use sensocom::sim::{canonical_dofs, SceneDocument};
use sensocom::stats::{median, MIN_GROUP};
use sensocom::{fixtures, Metric, World, NUM_DOFS};

use crate::output::Outputs;
use crate::svg;

const RECOMMENDED_SEEDS: usize = 30;

#[derive(Args, Serialize, Clone, Debug)]
pub struct SceneArgs {
    /// Built-in scene name or path to a scene JSON file.
    #[arg(long)]
    pub env: Option<String>,
    /// Built-in agent name or path to an agent JSON file.
    #[arg(long)]
    pub agent: Option<String>,
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
}

fn parse_dof(s: &str) -> std::result::Result<usize, String> {
    if let Ok(i) = s.parse::<usize>() {
        return if i < NUM_DOFS { Ok(i) } else { Err(format!("DOF index must be below {NUM_DOFS}")) };
    }
    canonical_dofs()
        .iter()
        .position(|d| d.name() == s)
        .ok_or_else(|| format!("unknown DOF `{s}`"))
}

fn dof_name(k: usize) -> &'static str {
    canonical_dofs()[k].name()
}

fn is_builtin_scene(s: &str) -> bool {
    fixtures::scene_names().any(|n| n == s)
}

fn is_builtin_agent(s: &str) -> bool {
    fixtures::agent_names().any(|n| n == s)
}

fn load_world(env: &str, agent: Option<&str>) -> Result<World> {
    let doc = if is_builtin_scene(env) {
        fixtures::scene_document(env)?
    } else {
        SceneDocument::load(Path::new(env)).with_context(|| format!("loading scene `{env}`"))?
    };
    let morph = match agent {
        None => doc.morphology_or_default()?,
        Some(a) if is_builtin_agent(a) => fixtures::agent(a)?,
        Some(a) => SceneDocument::load(Path::new(a))
            .with_context(|| format!("loading agent `{a}`"))?
            .morphology_or_default()?,
    };
    Ok(World::load(doc.environment()?, morph)?)
}

/// Short label for a scene or agent given by name or path.
fn label(s: &str) -> String {
    Path::new(s).file_stem().map_or_else(|| s.to_string(), |x| x.to_string_lossy().into_owned())
}

fn source(s: &str, builtin: bool) -> Value {
    if builtin {
        json!({ "builtin": s })
    } else {
        json!({ "path": s })
    }
}

fn fixture_record(env: &str, agent: Option<&str>) -> Value {
    json!({
        "env": source(env, is_builtin_scene(env)),
        "agent": agent.map(|a| source(a, is_builtin_agent(a))),
    })
}

fn scp_params(n: usize, seq_len: usize, threshold: f64, seed: u64) -> ScpParams {
    ScpParams { n_trials: n, seq_len, threshold, distance: Metric::Mse, master_seed: seed }
}

fn scp_bars(title: String, t: &ScpTable) -> svg::Bars {
    svg::Bars {
        title,
        labels: t.rows.iter().map(|r| dof_name(r.dof_index).to_string()).collect(),
        values: t.estimates(),
        errors: t.rows.iter().map(|r| Some(r.interval())).collect(),
    }
}

fn print_table(t: &ScpTable) {
    for r in &t.rows {
        println!("{:<18} {:.4} [{:.4}, {:.4}]", dof_name(r.dof_index), r.estimate, r.wilson_low, r.wilson_high);
    }
}

fn finish(out: Outputs, dir: &Path) -> Result<bool> {
    let written = out.commit(dir)?;
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(true)
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct ScpArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn scp(a: &ScpArgs) -> Result<bool> {
    let env = a.scene.env.as_deref().unwrap_or("room12");
    let agent = a.scene.agent.as_deref();
    let world = load_world(env, agent)?;
    let table = estimate_scp_all(&world, &scp_params(a.n, a.seq_len, a.threshold, a.common.seed))?;
    print_table(&table);
    let mut out = Outputs::default();
    out.add("scp.csv", table.to_csv());
    out.add_json("scp.json", &table)?;
    out.add("scp.svg", svg::bar_chart(&scp_bars(format!("SCP, {}", label(env)), &table)));
    out.add_manifest("scp", a.common.seed, a, fixture_record(env, agent))?;
    finish(out, &a.common.out)
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct SweepArgs {
    /// Scenes (names or paths), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "empty,room4,room8,room12")]
    pub envs: Vec<String>,
    /// Agents (names or paths), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "short,long")]
    pub agents: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn sweep(a: &SweepArgs) -> Result<bool> {
    if a.envs.is_empty() || a.agents.is_empty() {
        bail!("need at least one environment and one agent");
    }
    let params = scp_params(a.n, a.seq_len, a.threshold, a.common.seed);
    let mut out = Outputs::default();
    let mut summary = String::from("agent,env,dof_index,dof_name,scp,wilson_low,wilson_high\n");
    let mut panels = Vec::new();
    let mut records = Vec::new();
    for agent in &a.agents {
        for env in &a.envs {
            let world = load_world(env, Some(agent))?;
            let table = estimate_scp_all(&world, &params)?;
            let (al, el) = (label(agent), label(env));
            println!("{al} / {el}");
            print_table(&table);
            for r in &table.rows {
                summary.push_str(&format!(
                    "{al},{el},{},{},{},{},{}\n",
                    r.dof_index,
                    dof_name(r.dof_index),
                    r.estimate,
                    r.wilson_low,
                    r.wilson_high
                ));
            }
            out.add(format!("tables/scp_{al}_{el}.csv"), table.to_csv());
            panels.push(scp_bars(format!("{al} arms, {el}"), &table));
            records.push(fixture_record(env, Some(agent)));
        }
    }
    out.add("summary.csv", summary);
    out.add("sweep.svg", svg::bar_grid(&panels, a.envs.len()));
    out.add_manifest("sweep", a.common.seed, a, Value::Array(records))?;
    finish(out, &a.common.out)
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct ProbeArgs {
    /// DOF index or name; chosen from the probe scene's SCP table if absent.
    #[arg(long, value_parser = parse_dof)]
    pub dof: Option<usize>,
    #[arg(long, default_value = "room12")]
    pub probe_env: String,
    #[arg(long, default_value_t = 1000)]
    pub probe_n: usize,
}

/// Probe DOF and, when it was selected automatically, the table behind it.
fn probe(p: &ProbeArgs, agent: Option<&str>, seed: u64) -> Result<(usize, Option<ScpTable>)> {
    if let Some(d) = p.dof {
        return Ok((d, None));
    }
    let world = load_world(&p.probe_env, agent)?;
    let table = estimate_scp_all(&world, &scp_params(p.probe_n, 20, 0.0, seed))?;
    Ok((select_probe_dof(&table), Some(table)))
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct ObjmapArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[arg(long, default_value_t = 0.5)]
    pub cell: f64,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub seq_len: usize,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    #[arg(long, default_value_t = 5)]
    pub redraw_factor: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn objmap(a: &ObjmapArgs) -> Result<bool> {
    let env = a.scene.env.as_deref().unwrap_or("furniture");
    let agent = a.scene.agent.as_deref();
    let world = load_world(env, agent)?;
    let (dof, table) = probe(&a.probe, agent, a.common.seed)?;
    let params = MapParams {
        dof_index: dof,
        cell: a.cell,
        m: a.m,
        seq_len: a.seq_len,
        rho: a.rho,
        master_seed: a.common.seed,
        redraw_factor: a.redraw_factor,
    };
    let map = build_immovable_map(&world, &params)?;
    let values: Vec<Option<f64>> = map.cells.iter().map(|c| c.value()).collect();
    let reachable: Vec<f64> = values.iter().flatten().copied().collect();
    println!("probe dof {} ({}), {} reachable cells of {}", dof, dof_name(dof), reachable.len(), values.len());
    let mut out = Outputs::default();
    out.add("map.csv", map.to_csv());
    out.add(
        "map.svg",
        svg::heatmap(&format!("local SCP of {}, {}", dof_name(dof), label(env)), map.nx, map.ny, &values),
    );
    out.add_json("probe.json", &json!({ "dof_index": dof, "dof_name": dof_name(dof), "table": table }))?;
    out.add_manifest("objmap", a.common.seed, a, fixture_record(env, agent))?;
    finish(out, &a.common.out)
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Random,
    Sweep,
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub seq_len: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Random)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn detect(a: &DetectArgs) -> Result<bool> {
    let env = a.scene.env.as_deref().unwrap_or("room12");
    let agent = a.scene.agent.as_deref();
    let world = load_world(env, agent)?;
    let (dof, table) = probe(&a.probe, agent, a.common.seed)?;
    let mode = match a.mode {
        ModeArg::Random => DetectMode::Random,
        ModeArg::Sweep => DetectMode::SweepLeftRight,
    };
    let trials = run_detection(&world, dof, a.n, a.seq_len, mode, a.rho, a.common.seed)?;
    let summary = summarize_detection(&trials);
    println!(
        "identical {} / completely different {} / object moved {}; oracle agreement {:.3}; mean Jaccard {}",
        summary.identical,
        summary.completely_different,
        summary.object_moved,
        summary.oracle_agreement,
        summary.mean_jaccard.map_or_else(|| "n/a".into(), |j| format!("{j:.3}"))
    );
    let mut lines = String::new();
    for t in &trials {
        lines.push_str(&t.to_json_line()?);
        lines.push('\n');
    }
    let mut out = Outputs::default();
    out.add("records.jsonl", lines);
    out.add_json(
        "summary.json",
        &json!({ "dof_index": dof, "dof_name": dof_name(dof), "summary": summary, "probe_table": table }),
    )?;
    out.add_manifest("detect", a.common.seed, a, fixture_record(env, agent))?;
    finish(out, &a.common.out)
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "snake_case")]
pub enum SamplerArg {
    Single,
    Box,
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Scene whose SCP table defines the truncated and adapted action spaces.
    #[arg(long, default_value = "room12")]
    pub table_env: String,
    #[arg(long, default_value_t = 1000)]
    pub table_n: usize,
    /// DOFs kept by truncation.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Number of seeds per variant.
    #[arg(long, default_value_t = RECOMMENDED_SEEDS)]
    pub seeds: usize,
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    pub step_cap: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_EPISODE_STEPS)]
    pub max_episode_steps: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Single)]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 50)]
    pub cem_iterations: usize,
    /// Stop each CEM run once it reaches the target return.
    #[arg(long)]
    pub early_stop: bool,
    /// Skip the CEM benchmark.
    #[arg(long)]
    pub no_cem: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Per-iteration median of the best return over the runs that reached it.
fn median_curve(s: &RunStats) -> svg::Series {
    let len = s.runs.iter().map(|r| r.curve.len()).max().unwrap_or(0);
    let points = (0..len)
        .map(|i| {
            let v: Vec<f64> = s.runs.iter().filter_map(|r| r.curve.get(i).copied()).collect();
            ((i + 1) as f64, median(&v))
        })
        .collect();
    svg::Series { name: s.variant.clone(), points }
}

pub fn explore(a: &ExploreArgs) -> Result<bool> {
    let env = a.scene.env.as_deref().unwrap_or("explore_task");
    let agent = a.scene.agent.as_deref();
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let task = Task::new(load_world(env, agent)?, a.max_episode_steps)?;
    let table = estimate_scp_all(&load_world(&a.table_env, agent)?, &scp_params(a.table_n, 20, 0.0, a.common.seed))?;
    let variants = standard_variants(&table, a.k)?;
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| a.common.seed + i).collect();
    let mut warnings = Vec::new();
    if a.seeds < RECOMMENDED_SEEDS {
        warnings.push(format!("low power: {} seeds per variant ({RECOMMENDED_SEEDS} recommended)", a.seeds));
    }
    if a.seeds < MIN_GROUP {
        warnings.push(format!("fewer than {MIN_GROUP} seeds per variant: significance tests skipped"));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let sampler = match a.sampler {
        SamplerArg::Single => Sampler::SingleDof,
        SamplerArg::Box => Sampler::BoxUniform,
    };
    let random: Vec<RunStats> = variants
        .iter()
        .map(|v| run_random_exploration(&task, v, sampler, &seeds, a.step_cap))
        .collect::<sensocom::Result<_>>()?;
    let steps = steps_report(&random)?;
    let mut out = Outputs::default();
    out.add("steps.csv", steps_csv(&random));
    let mut report = json!({
        "transforms": variants.iter().map(|v| json!({ "variant": v.name(), "scales": v.scales() })).collect::<Vec<_>>(),
        "steps_to_first_goal": steps,
        "warnings": warnings,
    });
    print_metric(&steps);
    if !a.no_cem {
        let cfg = CemConfig { iterations: a.cem_iterations, early_stop: a.early_stop, ..Default::default() };
        let cem: Vec<RunStats> =
            variants.iter().map(|v| cem_train(&task, v, &seeds, &cfg)).collect::<sensocom::Result<_>>()?;
        let its = iterations_report(&cem)?;
        print_metric(&its);
        report["cem_iterations_to_target"] = serde_json::to_value(&its)?;
        report["cem_config"] = serde_json::to_value(cfg)?;
        out.add("curves.csv", curves_csv(&cem));
        let series: Vec<svg::Series> = cem.iter().map(median_curve).collect();
        out.add(
            "curves.svg",
            svg::line_chart("CEM best mean return (median over seeds)", "iteration", "return", &series),
        );
    }
    out.add_json("report.json", &report)?;
    out.add_manifest("explore", a.common.seed, a, fixture_record(env, agent))?;
    finish(out, &a.common.out)
}

fn print_metric(r: &sensocom::explore::MetricReport) {
    println!("{}", r.metric);
    for v in &r.variants {
        let p = r.p_value_of(&v.variant).map_or_else(String::new, |p| format!(", p vs full {p:.4}"));
        println!("  {:<10} median {} ({} censored){p}", v.variant, v.median, v.censored);
    }
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct BaselinesArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Transitions per DOF.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Trials per DOF for the SCP table on the same scene.
    #[arg(long, default_value_t = 1000)]
    pub scp_n: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// DOF indices ordered from most to least important under `key`.
fn ranking(key: &[f64], descending: bool) -> Vec<&'static str> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&i, &j| {
        let o = key[i].total_cmp(&key[j]);
        (if descending { o.reverse() } else { o }).then(i.cmp(&j))
    });
    idx.into_iter().map(dof_name).collect()
}

pub fn baselines(a: &BaselinesArgs) -> Result<bool> {
    let env = a.scene.env.as_deref().unwrap_or("room12");
    let agent = a.scene.agent.as_deref();
    let world = load_world(env, agent)?;
    let cfg = TrainConfig { epochs: a.epochs, lr: a.lr, batch: a.batch, seed: a.common.seed };
    let rows = run_baselines(&world, a.n, &cfg)?;
    let table = estimate_scp_all(&world, &scp_params(a.scp_n, 20, 0.0, a.common.seed))?;
    for r in &rows {
        println!(
            "{:<18} naive {:.6}  prediction {:.6}  excess {:.6}  scp {:.4}",
            dof_name(r.dof_index),
            r.naive_msd,
            r.pred_test_error,
            r.excess_error,
            table.row(r.dof_index).estimate
        );
    }
    let naive: Vec<f64> = rows.iter().map(|r| r.naive_msd).collect();
    let excess: Vec<f64> = rows.iter().map(|r| r.excess_error).collect();
    let summary = json!({
        "importance_by_naive_change": ranking(&naive, true),
        "importance_by_excess_error": ranking(&excess, true),
        "importance_by_scp": ranking(&table.estimates(), false),
        "train_config": cfg,
    });
    let mut out = Outputs::default();
    out.add("baselines.csv", baselines_csv(&rows));
    out.add("scp.csv", table.to_csv());
    out.add_json("summary.json", &summary)?;
    out.add_manifest("baselines", a.common.seed, a, fixture_record(env, agent))?;
    finish(out, &a.common.out)
}

#[derive(Args, Serialize, Clone, Debug)]
pub struct ValidateArgs {
    /// Agent for the free-space checks (name or path).
    #[arg(long)]
    pub agent: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 200)]
    pub residue_pairs: usize,
    #[arg(long, default_value_t = 5000)]
    pub oracle_n: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn validate(a: &ValidateArgs) -> Result<bool> {
    let morphology = match a.agent.as_deref() {
        None => Default::default(),
        Some(n) if is_builtin_agent(n) => fixtures::agent(n)?,
        Some(p) => SceneDocument::load(Path::new(p)).with_context(|| format!("loading agent `{p}`"))?.morphology_or_default()?,
    };
    let cfg = SuiteConfig {
        morphology,
        trials: a.trials,
        residue_pairs: a.residue_pairs,
        oracle_n: a.oracle_n,
        seed: a.common.seed,
        ..Default::default()
    };
    let checks = run_suite(&cfg)?;
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!("{} {:<24} {}/{} failed; {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.failures, c.trials, c.detail);
    }
    let mut out = Outputs::default();
    out.add_json("validate.json", &json!({ "passed": passed, "checks": checks }))?;
    let agent = a.agent.as_deref().map(|x| source(x, is_builtin_agent(x)));
    out.add_manifest("validate", a.common.seed, a, json!({ "agent": agent }))?;
    finish(out, &a.common.out)?;
    Ok(passed)
}
