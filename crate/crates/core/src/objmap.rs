//! Movable-object detection and local-SCP maps of immovable obstacles.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_sc_experiment, sample_permutation, sample_sequence, ScExperimentRecord, ScpTable};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sensor::{diff_mask, id_buffer, DiffMask, HitId, Metric};
use crate::sim::{dof, quantize, ActionSequence, EntitySpec, EnvironmentSpec, MorphologySpec, StartPose, Texture, World, WorldState};
use crate::stats::{derived_rng, mean};

pub const DEFAULT_RHO: f64 = 0.5;
/// Entity displacement above which an entity counts as moved.
pub const MOVED_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Identical,
    CompletelyDifferent,
    ObjectMoved,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Identical => "identical",
            Outcome::CompletelyDifferent => "completely_different",
            Outcome::ObjectMoved => "object_moved",
        }
    }
}

/// Splits a pair of observations into the three outcome classes by the
/// fraction of changed pixels.
pub fn classify_outcome(o1: &crate::Observation, o2: &crate::Observation, rho: f64) -> Result<(Outcome, DiffMask)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Validation(format!("rho must be in (0, 1], got {rho}")));
    }
    let mask = diff_mask(o1, o2, 0.0)?;
    let outcome = if mask.changed_fraction == 0.0 {
        Outcome::Identical
    } else if mask.changed_fraction >= rho {
        Outcome::CompletelyDifferent
    } else {
        Outcome::ObjectMoved
    };
    Ok((outcome, mask))
}

fn check_states(world: &World, a: &WorldState, b: &WorldState) -> Result<()> {
    let n = world.env().entities.len();
    if a.entity_poses.len() != n || b.entity_poses.len() != n {
        return Err(Error::SpecMismatch("entity count differs from the world".into()));
    }
    Ok(())
}

/// Entities whose position differs by more than [`MOVED_EPS`].
pub fn moved_entities(a: &WorldState, b: &WorldState) -> Vec<usize> {
    (0..a.entity_poses.len().min(b.entity_poses.len()))
        .filter(|&i| (a.entity(i) - b.entity(i)).norm() > MOVED_EPS)
        .collect()
}

/// Pixels whose ray hits a moved entity in either state.
pub fn ground_truth_object_mask(world: &World, before: &WorldState, after: &WorldState) -> Result<DiffMask> {
    check_states(world, before, after)?;
    let moved = moved_entities(before, after);
    let ids_a = id_buffer(world, before);
    let ids_b = id_buffer(world, after);
    let hit_moved = |h: &HitId| matches!(h, HitId::Entity(i) if moved.contains(i));
    Ok(DiffMask::from_bits(ids_a.iter().zip(&ids_b).map(|(a, b)| hit_moved(a) || hit_moved(b)).collect()))
}

/// Intersection over union; 1 when both masks are empty.
pub fn jaccard(pred: &DiffMask, gt: &DiffMask) -> Result<f64> {
    if pred.width() != gt.width() {
        return Err(Error::Shape { left: pred.width(), right: gt.width() });
    }
    let inter = pred.bits.iter().zip(&gt.bits).filter(|(a, b)| **a && **b).count();
    let union = pred.bits.iter().zip(&gt.bits).filter(|(a, b)| **a || **b).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn viewpoint_moved(a: &WorldState, b: &WorldState) -> bool {
    let h = dof::HEAD_ROTATION;
    a.base_pose.x != b.base_pose.x
        || a.base_pose.y != b.base_pose.y
        || a.base_pose.heading != b.base_pose.heading
        || a.dof_positions[h] != b.dof_positions[h]
}

/// Outcome derived from the two end states and their hit buffers instead of
/// pixel colors. A moved eye changes every ray. Otherwise a ray changes when
/// it hits a different surface, a moved entity, or a moved arm segment if
/// arms are drawn. The changed-ray fraction is split by `rho` as in
/// [`classify_outcome`].
pub fn state_oracle_outcome(world: &World, a: &WorldState, b: &WorldState, rho: f64) -> Outcome {
    if viewpoint_moved(a, b) {
        return Outcome::CompletelyDifferent;
    }
    let moved = moved_entities(a, b);
    let arm_moved = |side: usize, seg: usize| {
        let (s, e) = if side == 0 { (dof::SHOULDER_LEFT, dof::ELBOW_LEFT) } else { (dof::SHOULDER_RIGHT, dof::ELBOW_RIGHT) };
        let ds = a.dof_positions[s] != b.dof_positions[s];
        let de = a.dof_positions[e] != b.dof_positions[e];
        ds || (seg == 1 && de)
    };
    let changed = |h: &HitId| match *h {
        HitId::Entity(i) => moved.contains(&i),
        HitId::Arm(side, seg) => arm_moved(side, seg),
        _ => false,
    };
    let ia = id_buffer(world, a);
    let ib = id_buffer(world, b);
    let n = ia.iter().zip(&ib).filter(|(x, y)| x != y || changed(x) || changed(y)).count();
    let frac = if ia.is_empty() { 0.0 } else { n as f64 / ia.len() as f64 };
    if n == 0 {
        Outcome::Identical
    } else if frac >= rho {
        Outcome::CompletelyDifferent
    } else {
        Outcome::ObjectMoved
    }
}

/// Probe DOF for detection and mapping: SCP closest to 0.5, lowest index on
/// ties.
pub fn select_probe_dof(table: &ScpTable) -> usize {
    let mut best = table.rows[0].dof_index;
    let mut best_d = f64::INFINITY;
    for r in &table.rows {
        let d = (r.estimate - 0.5).abs();
        if d < best_d || (d == best_d && r.dof_index < best) {
            best = r.dof_index;
            best_d = d;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectMode {
    /// Uniform random commands.
    Random,
    /// Half the steps at +1 then half at -1; the permutation plays the halves
    /// in the opposite order.
    SweepLeftRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub record: ScExperimentRecord,
    pub outcome: Outcome,
    pub mask: DiffMask,
    pub moved_entity_indices: Vec<usize>,
}

/// Sequence and permutation for a detection experiment.
pub fn detection_sequences<R: Rng + ?Sized>(
    dof_index: usize,
    seq_len: usize,
    mode: DetectMode,
    rng: &mut R,
) -> (ActionSequence, ActionSequence) {
    match mode {
        DetectMode::Random => {
            let s = sample_sequence(dof_index, seq_len, rng);
            let p = sample_permutation(&s, rng);
            (s, p)
        }
        DetectMode::SweepLeftRight => {
            let half = seq_len / 2;
            let rest = seq_len - half;
            let mut v = vec![1.0; half];
            v.extend(std::iter::repeat_n(-1.0, rest));
            let s = ActionSequence::single_dof(dof_index, &v);
            let mut idx: Vec<usize> = (half..seq_len).collect();
            idx.extend(0..half);
            let p = s.permuted(&idx);
            (s, p)
        }
    }
}

/// Runs one SC-experiment from `start` and classifies it.
pub fn detect_movable<R: Rng + ?Sized>(
    world: &mut World,
    start: &WorldState,
    dof_index: usize,
    seq_len: usize,
    mode: DetectMode,
    rho: f64,
    rng: &mut R,
) -> Result<OutcomeRecord> {
    let (s, p) = detection_sequences(dof_index, seq_len, mode, rng);
    let mut record = run_sc_experiment(world, start, &s, &p, 0.0, &Metric::Mse)?;
    record.dof_index = dof_index;
    let (outcome, mask) = classify_outcome(&record.obs1, &record.obs2, rho)?;
    let moved_entity_indices = moved_entities(&record.end_states[0], &record.end_states[1]);
    Ok(OutcomeRecord { record, outcome, mask, moved_entity_indices })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapCell {
    Unreachable,
    Value { local_scp: f64, counted: usize, excluded: usize },
}

impl MapCell {
    pub fn value(&self) -> Option<f64> {
        match self {
            MapCell::Value { local_scp, .. } => Some(*local_scp),
            MapCell::Unreachable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub dof_index: usize,
    pub cell: f64,
    pub m: usize,
    pub seq_len: usize,
    pub rho: f64,
    pub master_seed: u64,
    /// Draw cap per cell, as a multiple of `m`, for re-drawing excluded trials.
    pub redraw_factor: usize,
}

impl MapParams {
    pub fn new(dof_index: usize) -> Self {
        MapParams { dof_index, cell: 0.5, m: 10, seq_len: 100, rho: DEFAULT_RHO, master_seed: 0, redraw_factor: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScpMap {
    pub origin: [f64; 2],
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `y` outer.
    pub cells: Vec<MapCell>,
    pub params: MapParams,
}

impl LocalScpMap {
    pub fn center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(self.origin[0] + (ix as f64 + 0.5) * self.cell, self.origin[1] + (iy as f64 + 0.5) * self.cell)
    }

    pub fn get(&self, ix: usize, iy: usize) -> MapCell {
        self.cells[iy * self.nx + ix]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec2, MapCell)> + '_ {
        (0..self.ny).flat_map(move |iy| (0..self.nx).map(move |ix| (self.center(ix, iy), self.get(ix, iy))))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,local_scp\n");
        for (c, v) in self.iter() {
            match v.value() {
                Some(x) => s.push_str(&format!("{},{},{}\n", c.x, c.y, x)),
                None => s.push_str(&format!("{},{},unreachable\n", c.x, c.y)),
            }
        }
        s
    }
}

/// True if the agent can stand at `p` and sweep its full reach without
/// leaving the room.
pub fn cell_reachable(world: &World, p: Vec2) -> bool {
    world.base_fits_at(p) && world.env().room.contains_disc(p, world.morphology().reach())
}

fn map_cell(world: &mut World, p: Vec2, idx: usize, params: &MapParams) -> Result<MapCell> {
    if !cell_reachable(world, p) {
        return Ok(MapCell::Unreachable);
    }
    let (mut counted, mut commuted, mut excluded) = (0usize, 0usize, 0usize);
    let cap = params.m * params.redraw_factor.max(1);
    let mut draw = 0u64;
    while counted < params.m && (draw as usize) < cap {
        let mut rng = derived_rng(params.master_seed, idx as u64, draw);
        draw += 1;
        let start = match world.sample_state_at(p, &mut rng) {
            Ok(s) => s,
            Err(Error::Placement { .. }) => return Ok(MapCell::Unreachable),
            Err(e) => return Err(e),
        };
        let r = detect_movable(world, &start, params.dof_index, params.seq_len, DetectMode::Random, params.rho, &mut rng)?;
        match r.outcome {
            Outcome::ObjectMoved => excluded += 1,
            Outcome::Identical => {
                counted += 1;
                commuted += 1;
            }
            Outcome::CompletelyDifferent => counted += 1,
        }
    }
    if counted == 0 {
        return Ok(MapCell::Unreachable);
    }
    Ok(MapCell::Value { local_scp: commuted as f64 / counted as f64, counted, excluded })
}

/// Local SCP of `params.dof_index` on a grid over the room. Cells where the
/// agent cannot stand, or whose reach leaves the room, are unreachable.
pub fn build_immovable_map(world: &World, params: &MapParams) -> Result<LocalScpMap> {
    if params.m < 1 || !(params.cell > 0.0) || params.seq_len < 1 {
        return Err(Error::Validation("map needs m >= 1, seq_len >= 1 and cell > 0".into()));
    }
    let room = world.env().room;
    let nx = (room.width() / params.cell).floor() as usize;
    let ny = (room.height() / params.cell).floor() as usize;
    let origin = room.min;
    let cells: Vec<MapCell> = (0..nx * ny)
        .into_par_iter()
        .map_init(
            || world.clone(),
            |w, i| {
                let (ix, iy) = (i % nx, i / nx);
                let p = Vec2::new(origin[0] + (ix as f64 + 0.5) * params.cell, origin[1] + (iy as f64 + 0.5) * params.cell);
                map_cell(w, p, i, params)
            },
        )
        .collect::<Result<_>>()?;
    Ok(LocalScpMap { origin, cell: params.cell, nx, ny, cells, params: params.clone() })
}

/// Gray 10 m room with one movable disc. The agent stands at the center facing
/// +x with its left arm stretched forward and its head turned 0.5 rad to the
/// left. The disc sits at `bearing` (radians, counterclockwise from the
/// heading) and `dist` from the left shoulder, so a left-right sweep of the
/// left shoulder pushes it in one order only.
pub fn single_disc_scene(bearing: f64, dist: f64, radius: f64) -> Result<(World, WorldState)> {
    let morph = MorphologySpec::default();
    let shoulder = Vec2::new(5.0, 5.0 + morph.base_radius);
    let c = shoulder + Vec2::from_angle(bearing) * dist;
    let mut env = EnvironmentSpec::empty(10.0);
    for w in &mut env.walls {
        w.color = [0.7, 0.7, 0.7];
    }
    env.entities.push(EntitySpec {
        radius,
        position: [c.x, c.y],
        color: [0.2, 0.4, 0.9],
        movable: true,
        scripted_velocity: None,
    });
    env.agent_start = Some(StartPose { x: 5.0, y: 5.0, heading: 0.0 });
    let mut world = World::load(env, morph)?;
    let mut start = world.snapshot();
    start.dof_positions[dof::SHOULDER_LEFT] = quantize(-std::f64::consts::FRAC_PI_2);
    start.dof_positions[dof::ELBOW_LEFT] = 0.0;
    start.dof_positions[dof::HEAD_ROTATION] = quantize(0.5);
    world.restore(&start)?;
    if world.min_clearance() <= 0.0 {
        return Err(Error::Overlap("disc touches the stretched arm".into()));
    }
    Ok((world, start))
}

/// Square room of side `side` with textured walls and `n` movable discs of
/// random size and color placed without overlap, keeping a 1 m clearing
/// around the center.
pub fn cluttered_scene(seed: u64, n: usize, side: f64) -> Result<World> {
    let mut env = EnvironmentSpec::empty(side);
    for w in &mut env.walls {
        w.texture = Some(Texture { period: 0.5, amplitude: 0.3 });
    }
    let mut rng = derived_rng(seed, 0xc1u64, 0);
    let center = env.room.center();
    let mut tries = 0usize;
    while env.entities.len() < n {
        tries += 1;
        if tries > 10_000 {
            return Err(Error::Placement { attempts: tries });
        }
        let r = rng.gen_range(0.12..0.3);
        let p = Vec2::new(rng.gen_range(r..side - r), rng.gen_range(r..side - r));
        if (p - center).norm() < 1.0 + r || env.entities.iter().any(|e| (e.pos() - p).norm() < e.radius + r + 0.05) {
            continue;
        }
        let color = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
        env.entities.push(EntitySpec { radius: r, position: [p.x, p.y], color, movable: true, scripted_velocity: None });
    }
    World::load(env, MorphologySpec::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrial {
    pub trial: usize,
    pub detected: OutcomeRecord,
    pub oracle: Outcome,
    pub ground_truth: DiffMask,
    /// Mask quality, for trials classified as ObjectMoved.
    pub jaccard: Option<f64>,
}

impl DetectionTrial {
    /// Compact JSON line without observations and end states.
    pub fn to_json_line(&self) -> Result<String> {
        let r = &self.detected.record;
        let v = serde_json::json!({
            "trial": self.trial,
            "dof_index": r.dof_index,
            "outcome": self.detected.outcome.name(),
            "oracle": self.oracle.name(),
            "changed_fraction": self.detected.mask.changed_fraction,
            "moved_entities": self.detected.moved_entity_indices,
            "mask": self.detected.mask.bits.iter().map(|&b| u8::from(b)).collect::<Vec<_>>(),
            "ground_truth": self.ground_truth.bits.iter().map(|&b| u8::from(b)).collect::<Vec<_>>(),
            "jaccard": self.jaccard,
        });
        Ok(serde_json::to_string(&v)?)
    }
}

/// Classifies one experiment and scores it against the state oracle and the
/// ground-truth object mask.
pub fn score_detection(world: &World, trial: usize, detected: OutcomeRecord, rho: f64) -> Result<DetectionTrial> {
    let [a, b] = &detected.record.end_states;
    let oracle = state_oracle_outcome(world, a, b, rho);
    let ground_truth = ground_truth_object_mask(world, a, b)?;
    let jaccard = match detected.outcome {
        Outcome::ObjectMoved => Some(jaccard(&detected.mask, &ground_truth)?),
        _ => None,
    };
    Ok(DetectionTrial { trial, detected, oracle, ground_truth, jaccard })
}

/// `n` detection experiments from random free starts, seeded per trial.
pub fn run_detection(
    world: &World,
    dof_index: usize,
    n: usize,
    seq_len: usize,
    mode: DetectMode,
    rho: f64,
    seed: u64,
) -> Result<Vec<DetectionTrial>> {
    (0..n)
        .into_par_iter()
        .map_init(
            || world.clone(),
            |w, i| {
                let mut rng = derived_rng(seed, 0xde7, i as u64);
                let start = w.sample_free_state(&mut rng)?;
                let d = detect_movable(w, &start, dof_index, seq_len, mode, rho, &mut rng)?;
                score_detection(w, i, d, rho)
            },
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub trials: usize,
    pub identical: usize,
    pub completely_different: usize,
    pub object_moved: usize,
    pub oracle_agreement: f64,
    pub mean_jaccard: Option<f64>,
}

pub fn summarize_detection(trials: &[DetectionTrial]) -> DetectSummary {
    let count = |o: Outcome| trials.iter().filter(|t| t.detected.outcome == o).count();
    let agree = trials.iter().filter(|t| t.detected.outcome == t.oracle).count();
    let js: Vec<f64> = trials.iter().filter_map(|t| t.jaccard).collect();
    DetectSummary {
        trials: trials.len(),
        identical: count(Outcome::Identical),
        completely_different: count(Outcome::CompletelyDifferent),
        object_moved: count(Outcome::ObjectMoved),
        oracle_agreement: if trials.is_empty() { 0.0 } else { agree as f64 / trials.len() as f64 },
        mean_jaccard: (!js.is_empty()).then(|| mean(&js)),
    }
}
