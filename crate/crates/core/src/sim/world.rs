use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use super::sequence::{Action, ActionSequence};
use super::spec::{dof, EnvironmentSpec, MorphologySpec, NUM_DOFS};
use crate::error::{Error, Result};
use crate::sensor::SensorSpec;
use crate::geom::{self, Capsule, Segment, Vec2};

/// Grid on which every stored pose coordinate lives. Sums of grid values stay
/// exact in `f64` while magnitudes remain below 2^12, which makes
/// collision-free motion independent of the order of the commands.
pub const QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

pub fn quantize(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

pub const DEFAULT_DT: f64 = 0.1;

/// Overlap tolerated before a contact is acted on.
const CONTACT_EPS: f64 = 1e-10;
/// Largest displacement of any agent point between two collision checks.
const MICRO_STEP: f64 = 0.02;
const BISECTION_ITERS: usize = 20;
const RESOLVE_PASSES: usize = 8;
const PLACEMENT_ATTEMPTS: usize = 10_000;
const ARM_POSTURE_TRIES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl BasePose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Full serializable snapshot of a world.
///
/// `dof_positions` holds joint angles for the head, shoulders and elbows. The
/// base slots (0 and 1) are always zero because the base is described by
/// `base_pose`; the eyelid slot is always zero because the eyelid carries no
/// persistent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub base_pose: BasePose,
    pub dof_positions: [f64; NUM_DOFS],
    pub entity_poses: Vec<[f64; 2]>,
    pub scripted_phases: Vec<f64>,
    pub time_step_index: u64,
}

impl WorldState {
    /// Bitwise equality of every scalar field.
    pub fn bits_eq(&self, o: &WorldState) -> bool {
        let b = |a: f64, b: f64| a.to_bits() == b.to_bits();
        b(self.base_pose.x, o.base_pose.x)
            && b(self.base_pose.y, o.base_pose.y)
            && b(self.base_pose.heading, o.base_pose.heading)
            && self.dof_positions.iter().zip(&o.dof_positions).all(|(x, y)| b(*x, *y))
            && self.entity_poses.len() == o.entity_poses.len()
            && self
                .entity_poses
                .iter()
                .zip(&o.entity_poses)
                .all(|(p, q)| b(p[0], q[0]) && b(p[1], q[1]))
            && self.scripted_phases.len() == o.scripted_phases.len()
            && self.scripted_phases.iter().zip(&o.scripted_phases).all(|(x, y)| b(*x, *y))
            && self.time_step_index == o.time_step_index
    }

    /// Largest absolute difference over base pose and joint angles.
    pub fn agent_pose_error(&self, o: &WorldState) -> f64 {
        let mut e = (self.base_pose.x - o.base_pose.x)
            .abs()
            .max((self.base_pose.y - o.base_pose.y).abs())
            .max((self.base_pose.heading - o.base_pose.heading).abs());
        for (a, b) in self.dof_positions.iter().zip(&o.dof_positions) {
            e = e.max((a - b).abs());
        }
        e
    }

    pub fn entity(&self, i: usize) -> Vec2 {
        Vec2::new(self.entity_poses[i][0], self.entity_poses[i][1])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Collision shapes of the agent in a given configuration.
#[derive(Debug, Clone, Copy)]
pub struct AgentShape {
    pub base: Vec2,
    pub radius: f64,
    /// Left upper arm, left forearm, right upper arm, right forearm.
    pub arms: [Capsule; 4],
}

impl AgentShape {
    pub fn compute(morph: &MorphologySpec, base: Vec2, heading: f64, q: &[f64; NUM_DOFS]) -> Self {
        let r = morph.base_radius;
        let mut arms = [Capsule { seg: Segment::new(base, base), radius: morph.arm_radius }; 4];
        for (side, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let (si, ei) = if side == 0 {
                (dof::SHOULDER_LEFT, dof::ELBOW_LEFT)
            } else {
                (dof::SHOULDER_RIGHT, dof::ELBOW_RIGHT)
            };
            let mount = heading + sign * morph.shoulder_mount;
            let shoulder = base + Vec2::from_angle(mount) * r;
            let upper = mount + q[si];
            let [l1, l2] = morph.arm_segment_lengths[side];
            let elbow = shoulder + Vec2::from_angle(upper) * l1;
            let hand = elbow + Vec2::from_angle(upper + q[ei]) * l2;
            arms[2 * side].seg = Segment::new(shoulder, elbow);
            arms[2 * side + 1].seg = Segment::new(elbow, hand);
        }
        AgentShape { base, radius: r, arms }
    }

    fn translated(&self, d: Vec2) -> Self {
        let mut s = *self;
        s.base += d;
        for c in &mut s.arms {
            c.seg.a += d;
            c.seg.b += d;
        }
        s
    }
}

/// Resolved configuration produced by one contact-resolution pass.
struct Resolved {
    base: Vec2,
    entities: Vec<Vec2>,
    contact: bool,
}

#[derive(Debug, Clone, Copy)]
enum Motion {
    Translate(Vec2),
    Rotate(f64),
    Joint(usize, f64),
}

/// A simulated room with one agent. Cloning is cheap: specifications are shared.
#[derive(Debug, Clone)]
pub struct World {
    env: Arc<EnvironmentSpec>,
    morph: Arc<MorphologySpec>,
    colliders: Arc<Vec<Segment>>,
    state: WorldState,
    dt: f64,
    sensor: SensorSpec,
    eyelid_closed: bool,
    collision_events: u64,
}

fn same_segment(a: &Segment, b: &Segment) -> bool {
    (a.a == b.a && a.b == b.b) || (a.a == b.b && a.b == b.a)
}

impl World {
    /// Builds a world with the agent at `agent_start` (or the room center,
    /// heading 0). Upper arms point straight back with the forearms folded
    /// onto them.
    pub fn load(env: EnvironmentSpec, morph: MorphologySpec) -> Result<World> {
        env.validate()?;
        morph.validate()?;
        let mut colliders: Vec<Segment> = env.walls.iter().map(|w| w.segment()).collect();
        for e in env.room.edges() {
            if !colliders.iter().any(|c| same_segment(c, &e)) {
                colliders.push(e);
            }
        }
        let start = env.agent_start;
        let (x, y, heading) = match start {
            Some(p) => (p.x, p.y, p.heading),
            None => {
                let c = env.room.center();
                (c.x, c.y, 0.0)
            }
        };
        let mut q = [0.0; NUM_DOFS];
        let back = PI - morph.shoulder_mount;
        q[dof::SHOULDER_LEFT] = quantize(back);
        q[dof::ELBOW_LEFT] = quantize(PI);
        q[dof::SHOULDER_RIGHT] = quantize(-back);
        q[dof::ELBOW_RIGHT] = quantize(-PI);
        let state = WorldState {
            base_pose: BasePose { x: quantize(x), y: quantize(y), heading: quantize(heading) },
            dof_positions: q,
            entity_poses: env.entities.iter().map(|e| [quantize(e.position[0]), quantize(e.position[1])]).collect(),
            scripted_phases: vec![0.0; env.entities.len()],
            time_step_index: 0,
        };
        let world = World {
            env: Arc::new(env),
            morph: Arc::new(morph),
            colliders: Arc::new(colliders),
            state,
            dt: DEFAULT_DT,
            sensor: SensorSpec::default(),
            eyelid_closed: false,
            collision_events: 0,
        };
        if let Some(what) = world.agent_overlap(&world.state) {
            return Err(Error::Overlap(what));
        }
        Ok(world)
    }

    pub fn env(&self) -> &EnvironmentSpec {
        &self.env
    }

    pub fn morphology(&self) -> &MorphologySpec {
        &self.morph
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        self.dt = dt;
    }

    pub fn sensor(&self) -> &SensorSpec {
        &self.sensor
    }

    pub fn set_sensor(&mut self, sensor: SensorSpec) {
        assert!(sensor.width > 0 && sensor.fov > 0.0, "invalid sensor");
        self.sensor = sensor;
    }

    pub fn eyelid_closed(&self) -> bool {
        self.eyelid_closed
    }

    /// Number of steps so far in which any contact was resolved.
    pub fn collision_events(&self) -> u64 {
        self.collision_events
    }

    /// Wall segments used for collisions (listed walls plus the room bounds).
    pub fn colliders(&self) -> &[Segment] {
        &self.colliders
    }

    pub fn snapshot(&self) -> WorldState {
        self.state.clone()
    }

    pub fn restore(&mut self, state: &WorldState) -> Result<()> {
        let n = self.env.entities.len();
        if state.entity_poses.len() != n || state.scripted_phases.len() != n {
            return Err(Error::SpecMismatch(format!(
                "state has {} entity poses and {} phases, world has {n} entities",
                state.entity_poses.len(),
                state.scripted_phases.len()
            )));
        }
        let finite = state.base_pose.x.is_finite()
            && state.base_pose.y.is_finite()
            && state.base_pose.heading.is_finite()
            && state.dof_positions.iter().all(|v| v.is_finite())
            && state.entity_poses.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::SpecMismatch("state contains non-finite values".into()));
        }
        self.state = state.clone();
        self.eyelid_closed = false;
        Ok(())
    }

    pub fn agent_shape(&self) -> AgentShape {
        Self::shape_of(&self.morph, &self.state)
    }

    pub fn shape_of(morph: &MorphologySpec, s: &WorldState) -> AgentShape {
        AgentShape::compute(morph, s.base_pose.position(), s.base_pose.heading, &s.dof_positions)
    }

    fn entity_positions(&self) -> Vec<Vec2> {
        (0..self.state.entity_poses.len()).map(|i| self.state.entity(i)).collect()
    }

    /// Describes the first overlap between the agent and the scene, if any.
    fn agent_overlap(&self, s: &WorldState) -> Option<String> {
        let shape = Self::shape_of(&self.morph, s);
        let ents: Vec<Vec2> = (0..s.entity_poses.len()).map(|i| s.entity(i)).collect();
        if let Some(w) = self.base_hits_scene(&shape, &ents, true) {
            return Some(w);
        }
        self.arms_hit_scene(&shape, &ents, true)
    }

    fn base_hits_scene(&self, shape: &AgentShape, ents: &[Vec2], include_movable: bool) -> Option<String> {
        for (k, w) in self.colliders.iter().enumerate() {
            if w.distance_to_point(shape.base) < shape.radius - CONTACT_EPS {
                return Some(format!("base penetrates wall {k}"));
            }
        }
        for (i, e) in self.env.entities.iter().enumerate() {
            if !include_movable && e.movable {
                continue;
            }
            if (shape.base - ents[i]).norm() < shape.radius + e.radius - CONTACT_EPS {
                return Some(format!("base overlaps entity {i}"));
            }
        }
        None
    }

    fn arms_hit_scene(&self, shape: &AgentShape, ents: &[Vec2], include_movable: bool) -> Option<String> {
        for cap in &shape.arms {
            for (k, w) in self.colliders.iter().enumerate() {
                if geom::capsule_segment(cap, w, shape.base).is_some_and(|(_, d)| d > CONTACT_EPS) {
                    return Some(format!("arm penetrates wall {k}"));
                }
            }
            for (i, e) in self.env.entities.iter().enumerate() {
                if !include_movable && e.movable {
                    continue;
                }
                if cap.seg.distance_to_point(ents[i]) < cap.radius + e.radius - CONTACT_EPS {
                    return Some(format!("arm overlaps entity {i}"));
                }
            }
        }
        None
    }

    /// Advances the world by one fixed step under `action` (components clamped
    /// to [-1, 1]). Each component is a velocity command: the commanded
    /// displacement of DOF `k` is `action[k] * max_speed(k) * dt`.
    pub fn step(&mut self, action: &Action, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        let a: Action = std::array::from_fn(|k| {
            let v = action[k];
            if v.is_nan() {
                0.0
            } else {
                v.clamp(-1.0, 1.0)
            }
        });
        let mut contact = false;
        self.eyelid_closed = a[dof::EYELID] > 0.0;
        self.advance_scripted(dt);

        let w = self.morph.max_angular_speed;
        if a[dof::HEAD_ROTATION] != 0.0 {
            let dq = quantize(a[dof::HEAD_ROTATION] * w * dt);
            let q = &mut self.state.dof_positions[dof::HEAD_ROTATION];
            *q = Self::limited(self.morph.joint_limit, *q, dq);
        }
        // Combined turn and advance: half turn, advance, half turn.
        let (turn, forward) = (a[dof::BASE_ROTATION], a[dof::BASE_LONGITUDINAL]);
        let halves = if forward != 0.0 { 2.0 } else { 1.0 };
        let dtheta = quantize(turn * w * dt / halves);
        if turn != 0.0 {
            contact |= self.move_agent(Motion::Rotate(dtheta));
        }
        if forward != 0.0 {
            let dist = forward * self.morph.max_linear_speed * dt;
            let dir = Vec2::from_angle(self.state.base_pose.heading);
            let d = Vec2::new(quantize(dist * dir.x), quantize(dist * dir.y));
            contact |= self.move_agent(Motion::Translate(d));
            if turn != 0.0 {
                contact |= self.move_agent(Motion::Rotate(dtheta));
            }
        }
        for k in [dof::SHOULDER_LEFT, dof::ELBOW_LEFT, dof::SHOULDER_RIGHT, dof::ELBOW_RIGHT] {
            if a[k] != 0.0 {
                let q0 = self.state.dof_positions[k];
                let target = Self::limited(self.morph.joint_limit, q0, quantize(a[k] * w * dt));
                let dq = target - q0;
                if dq != 0.0 {
                    contact |= self.move_agent(Motion::Joint(k, dq));
                }
            }
        }
        if contact {
            self.collision_events += 1;
        }
        self.state.time_step_index += 1;
    }

    fn limited(limit: Option<f64>, q: f64, dq: f64) -> f64 {
        let next = q + dq;
        match limit {
            Some(l) => quantize(next.clamp(-l, l)),
            None => next,
        }
    }

    /// Applies `seq` one step at a time with the world's `dt`. The eyelid is
    /// open once the sequence has completed.
    pub fn apply_sequence(&mut self, seq: &ActionSequence) {
        let dt = self.dt;
        for a in seq.actions() {
            self.step(a, dt);
        }
        self.eyelid_closed = false;
    }

    fn advance_scripted(&mut self, dt: f64) {
        let env = Arc::clone(&self.env);
        for (i, e) in env.entities.iter().enumerate() {
            let Some(v) = e.scripted_velocity else { continue };
            let phase = self.state.scripted_phases[i] + dt;
            let p = scripted_position(&env, i, Vec2::new(v[0], v[1]), phase);
            let p = Vec2::new(quantize(p.x), quantize(p.y));
            let shape = self.agent_shape();
            let mut free = (shape.base - p).norm() >= shape.radius + e.radius
                && shape.arms.iter().all(|c| c.seg.distance_to_point(p) >= c.radius + e.radius);
            for (j, o) in env.entities.iter().enumerate() {
                if j != i && (self.state.entity(j) - p).norm() < o.radius + e.radius {
                    free = false;
                }
            }
            if free {
                self.state.entity_poses[i] = [p.x, p.y];
                self.state.scripted_phases[i] = quantize(phase);
            }
        }
    }

    fn configure(&self, m: Motion, s: f64) -> (Vec2, f64, [f64; NUM_DOFS]) {
        let p = self.state.base_pose;
        let mut q = self.state.dof_positions;
        match m {
            Motion::Translate(d) => (p.position() + d * s, p.heading, q),
            Motion::Rotate(dh) => (p.position(), p.heading + dh * s, q),
            Motion::Joint(k, dq) => {
                q[k] += dq * s;
                (p.position(), p.heading, q)
            }
        }
    }

    fn max_displacement(&self, m: Motion) -> f64 {
        let [[l1, l2], [r1, r2]] = self.morph.arm_segment_lengths;
        match m {
            Motion::Translate(d) => d.norm(),
            Motion::Rotate(dh) => dh.abs() * self.morph.reach(),
            Motion::Joint(k, dq) => {
                let lever = match k {
                    dof::SHOULDER_LEFT => l1 + l2,
                    dof::ELBOW_LEFT => l2,
                    dof::SHOULDER_RIGHT => r1 + r2,
                    _ => r2,
                };
                dq.abs() * (lever + self.morph.arm_radius)
            }
        }
    }

    /// Executes one motion with contact handling; returns whether any contact
    /// occurred. The motion is sampled in micro-steps; the first infeasible
    /// sample is refined by bisection and the motion stops at the last
    /// feasible parameter.
    fn move_agent(&mut self, m: Motion) -> bool {
        let n = ((self.max_displacement(m) / MICRO_STEP).ceil() as usize).max(1);
        let mut ents = self.entity_positions();
        let mut recoil = Vec2::ZERO;
        let mut done = 0.0;
        let mut contact = false;
        for k in 1..=n {
            let s = if k == n { 1.0 } else { k as f64 / n as f64 };
            let (base, heading, q) = self.configure(m, s);
            match self.resolve(base + recoil, heading, &q, &ents) {
                Some(r) => {
                    if r.contact {
                        contact = true;
                        recoil = r.base - base;
                    }
                    ents = r.entities;
                    done = s;
                }
                None => {
                    contact = true;
                    let (mut lo, mut hi) = (done, s);
                    let mut best: Option<Resolved> = None;
                    for _ in 0..BISECTION_ITERS {
                        let mid = 0.5 * (lo + hi);
                        let (b, h, qm) = self.configure(m, mid);
                        match self.resolve(b + recoil, h, &qm, &ents) {
                            Some(r) => {
                                lo = mid;
                                best = Some(r);
                            }
                            None => hi = mid,
                        }
                    }
                    if let Some(r) = best {
                        let (b, _, _) = self.configure(m, lo);
                        recoil = r.base - b;
                        ents = r.entities;
                        done = lo;
                    }
                    break;
                }
            }
        }
        let (base, heading, q) = self.configure(m, done);
        let base = if contact { base + recoil } else { base };
        let st = &mut self.state;
        st.base_pose = BasePose { x: quantize(base.x), y: quantize(base.y), heading: quantize(heading) };
        for (dst, src) in st.dof_positions.iter_mut().zip(q) {
            *dst = quantize(src);
        }
        for (dst, src) in st.entity_poses.iter_mut().zip(&ents) {
            *dst = [quantize(src.x), quantize(src.y)];
        }
        contact
    }

    /// Quasi-static contact resolution for the agent placed at `base` with the
    /// given heading and joints. Arms touching immovable geometry push the base
    /// away; movable discs are pushed along contact normals in ascending index
    /// order. Returns `None` if penetration remains after the passes or the
    /// base body itself touches immovable geometry.
    fn resolve(&self, base: Vec2, heading: f64, q: &[f64; NUM_DOFS], ents_in: &[Vec2]) -> Option<Resolved> {
        let shape0 = AgentShape::compute(&self.morph, base, heading, q);
        let ents_spec = &self.env.entities;
        let mut ents = ents_in.to_vec();
        let mut offset = Vec2::ZERO;
        let mut contact = false;
        let center = self.env.room.center();

        for _ in 0..RESOLVE_PASSES {
            let mut changed = false;
            for ci in 0..4 {
                for wall in self.colliders.iter() {
                    let cap = shape0.translated(offset).arms[ci];
                    if let Some((n, d)) = geom::capsule_segment(&cap, wall, base + offset) {
                        if d > CONTACT_EPS {
                            offset += n * d;
                            changed = true;
                        }
                    }
                }
                for (i, e) in ents_spec.iter().enumerate() {
                    if e.movable {
                        continue;
                    }
                    let cap = shape0.translated(offset).arms[ci];
                    let hint = (base + offset - ents[i]).normalized_or(Vec2::new(1.0, 0.0));
                    if let Some((n, d)) = geom::capsule_disc(&cap, ents[i], e.radius, hint) {
                        if d > CONTACT_EPS {
                            offset += n * d;
                            changed = true;
                        }
                    }
                }
            }
            let shape = shape0.translated(offset);
            for (i, e) in ents_spec.iter().enumerate() {
                if !e.movable {
                    continue;
                }
                if let Some((n, d)) = geom::disc_disc(ents[i], e.radius, shape.base, shape.radius) {
                    if d > CONTACT_EPS {
                        ents[i] += n * d;
                        changed = true;
                    }
                }
                for cap in &shape.arms {
                    let hint = (ents[i] - shape.base).normalized_or(Vec2::new(1.0, 0.0));
                    if let Some((n, d)) = geom::disc_capsule(ents[i], e.radius, cap, hint) {
                        if d > CONTACT_EPS {
                            ents[i] += n * d;
                            changed = true;
                        }
                    }
                }
            }
            for (i, e) in ents_spec.iter().enumerate() {
                if !e.movable {
                    continue;
                }
                for wall in self.colliders.iter() {
                    if let Some((n, d)) = geom::disc_segment(ents[i], e.radius, wall, center) {
                        if d > CONTACT_EPS {
                            ents[i] += n * d;
                            changed = true;
                        }
                    }
                }
                for (j, o) in ents_spec.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    if o.movable && j < i {
                        continue;
                    }
                    if o.movable {
                        if let Some((n, d)) = geom::disc_disc(ents[j], o.radius, ents[i], e.radius) {
                            if d > CONTACT_EPS {
                                ents[j] += n * d;
                                changed = true;
                            }
                        }
                    } else if let Some((n, d)) = geom::disc_disc(ents[i], e.radius, ents[j], o.radius) {
                        if d > CONTACT_EPS {
                            ents[i] += n * d;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
            contact = true;
        }

        let shape = shape0.translated(offset);
        if self.base_hits_scene(&shape, &ents, true).is_some() || self.arms_hit_scene(&shape, &ents, true).is_some() {
            return None;
        }
        for (i, e) in ents_spec.iter().enumerate() {
            if !e.movable {
                continue;
            }
            for wall in self.colliders.iter() {
                if wall.distance_to_point(ents[i]) < e.radius - CONTACT_EPS {
                    return None;
                }
            }
            for (j, o) in ents_spec.iter().enumerate().skip(i + 1) {
                if (ents[i] - ents[j]).norm() < e.radius + o.radius - CONTACT_EPS {
                    return None;
                }
            }
        }
        Some(Resolved { base: base + offset, entities: ents, contact })
    }

    /// Smallest signed clearance over all pairs (agent–wall, agent–entity,
    /// entity–wall, entity–entity). Negative values mean penetration.
    pub fn min_clearance(&self) -> f64 {
        let shape = self.agent_shape();
        let ents = self.entity_positions();
        let mut m = f64::INFINITY;
        for w in self.colliders.iter() {
            m = m.min(w.distance_to_point(shape.base) - shape.radius);
            for cap in &shape.arms {
                let d = if cap.seg.intersects(w) {
                    0.0
                } else {
                    let (a, b) = cap.seg.closest_points(w);
                    (a - b).norm()
                };
                m = m.min(d - cap.radius);
            }
            for (i, e) in self.env.entities.iter().enumerate() {
                m = m.min(w.distance_to_point(ents[i]) - e.radius);
            }
        }
        for (i, e) in self.env.entities.iter().enumerate() {
            m = m.min((shape.base - ents[i]).norm() - shape.radius - e.radius);
            for cap in &shape.arms {
                m = m.min(cap.seg.distance_to_point(ents[i]) - cap.radius - e.radius);
            }
            for (j, o) in self.env.entities.iter().enumerate().skip(i + 1) {
                m = m.min((ents[i] - ents[j]).norm() - e.radius - o.radius);
            }
        }
        m
    }

    /// Samples a start state: base uniform over collision-free positions,
    /// heading and arm angles uniform in [0, 2π), entities at their specified
    /// positions. Arm postures are re-drawn until collision-free.
    pub fn sample_free_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WorldState> {
        let r = self.morph.base_radius;
        let room = self.env.room;
        let mut state = self.spec_state();
        let ents: Vec<Vec2> = self.env.entities.iter().map(|e| e.pos()).collect();
        let mut rejected = 0usize;
        while rejected < PLACEMENT_ATTEMPTS {
            let x = room.min[0] + r + rng.gen::<f64>() * (room.width() - 2.0 * r).max(0.0);
            let y = room.min[1] + r + rng.gen::<f64>() * (room.height() - 2.0 * r).max(0.0);
            let heading = rng.gen::<f64>() * TAU;
            state.base_pose = BasePose { x: quantize(x), y: quantize(y), heading: quantize(heading) };
            let probe = Self::shape_of(&self.morph, &state);
            if self.base_hits_scene(&probe, &ents, true).is_some() {
                rejected += 1;
                continue;
            }
            match self.sample_arms(&mut state, &ents, rng, &mut rejected) {
                true => return Ok(state),
                false => continue,
            }
        }
        Err(Error::Placement { attempts: rejected })
    }

    /// Places the base at `position` with a uniformly drawn heading and a
    /// collision-free arm posture.
    pub fn sample_state_at<R: Rng + ?Sized>(&self, position: Vec2, rng: &mut R) -> Result<WorldState> {
        let mut state = self.spec_state();
        let ents: Vec<Vec2> = self.env.entities.iter().map(|e| e.pos()).collect();
        state.base_pose.x = quantize(position.x);
        state.base_pose.y = quantize(position.y);
        let probe = Self::shape_of(&self.morph, &state);
        if self.base_hits_scene(&probe, &ents, true).is_some() {
            return Err(Error::Placement { attempts: 1 });
        }
        let mut rejected = 0usize;
        while rejected < PLACEMENT_ATTEMPTS {
            state.base_pose.heading = quantize(rng.gen::<f64>() * TAU);
            if self.sample_arms(&mut state, &ents, rng, &mut rejected) {
                return Ok(state);
            }
        }
        Err(Error::Placement { attempts: rejected })
    }

    fn sample_arms<R: Rng + ?Sized>(
        &self,
        state: &mut WorldState,
        ents: &[Vec2],
        rng: &mut R,
        rejected: &mut usize,
    ) -> bool {
        for _ in 0..ARM_POSTURE_TRIES {
            for k in [dof::SHOULDER_LEFT, dof::ELBOW_LEFT, dof::SHOULDER_RIGHT, dof::ELBOW_RIGHT] {
                state.dof_positions[k] = quantize(rng.gen::<f64>() * TAU);
            }
            let shape = Self::shape_of(&self.morph, state);
            if self.arms_hit_scene(&shape, ents, true).is_none() {
                return true;
            }
            *rejected += 1;
            if *rejected >= PLACEMENT_ATTEMPTS {
                return false;
            }
        }
        false
    }

    /// Current state with entities, head and eyelid reset to their load-time
    /// values.
    fn spec_state(&self) -> WorldState {
        let mut s = self.state.clone();
        s.dof_positions[dof::HEAD_ROTATION] = 0.0;
        s.dof_positions[dof::EYELID] = 0.0;
        s.entity_poses = self.env.entities.iter().map(|e| [quantize(e.position[0]), quantize(e.position[1])]).collect();
        s.scripted_phases = vec![0.0; self.env.entities.len()];
        s.time_step_index = 0;
        s
    }

    /// True if the base can be placed at `p` without touching walls or entities.
    pub fn base_fits_at(&self, p: Vec2) -> bool {
        let mut s = self.spec_state();
        s.base_pose.x = p.x;
        s.base_pose.y = p.y;
        let shape = Self::shape_of(&self.morph, &s);
        let ents: Vec<Vec2> = self.env.entities.iter().map(|e| e.pos()).collect();
        self.base_hits_scene(&shape, &ents, true).is_none()
    }
}

/// Position of scripted entity `i` after `phase` seconds of travel, bouncing
/// inside the room bounds.
fn scripted_position(env: &EnvironmentSpec, i: usize, v: Vec2, phase: f64) -> Vec2 {
    let e = &env.entities[i];
    let fold = |x0: f64, v: f64, lo: f64, hi: f64| {
        let (lo, hi) = (lo + e.radius, hi - e.radius);
        let span = hi - lo;
        if span <= 0.0 {
            return x0;
        }
        let m = ((x0 - lo) + v * phase).rem_euclid(2.0 * span);
        lo + if m <= span { m } else { 2.0 * span - m }
    };
    Vec2::new(
        fold(e.position[0], v.x, env.room.min[0], env.room.max[0]),
        fold(e.position[1], v.y, env.room.min[1], env.room.max[1]),
    )
}
