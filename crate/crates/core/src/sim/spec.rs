use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Segment, Vec2};

/// Number of agent degrees of freedom.
pub const NUM_DOFS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofKind {
    BaseLongitudinal,
    BaseRotation,
    HeadRotation,
    Shoulder,
    Elbow,
    Eyelid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmSide {
    Left,
    Right,
}

impl ArmSide {
    pub fn index(self) -> usize {
        match self {
            ArmSide::Left => 0,
            ArmSide::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofDescriptor {
    pub index: usize,
    pub kind: DofKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_side: Option<ArmSide>,
}

impl DofDescriptor {
    /// Short stable name used in reports, e.g. `shoulder_left`.
    pub fn name(&self) -> &'static str {
        match (self.kind, self.arm_side) {
            (DofKind::BaseLongitudinal, _) => "base_longitudinal",
            (DofKind::BaseRotation, _) => "base_rotation",
            (DofKind::HeadRotation, _) => "head_rotation",
            (DofKind::Shoulder, Some(ArmSide::Right)) => "shoulder_right",
            (DofKind::Shoulder, _) => "shoulder_left",
            (DofKind::Elbow, Some(ArmSide::Right)) => "elbow_right",
            (DofKind::Elbow, _) => "elbow_left",
            (DofKind::Eyelid, _) => "eyelid",
        }
    }
}

/// Fixed DOF indices.
pub mod dof {
    pub const BASE_LONGITUDINAL: usize = 0;
    pub const BASE_ROTATION: usize = 1;
    pub const HEAD_ROTATION: usize = 2;
    pub const SHOULDER_LEFT: usize = 3;
    pub const ELBOW_LEFT: usize = 4;
    pub const SHOULDER_RIGHT: usize = 5;
    pub const ELBOW_RIGHT: usize = 6;
    pub const EYELID: usize = 7;
}

pub fn canonical_dofs() -> Vec<DofDescriptor> {
    use ArmSide::*;
    use DofKind::*;
    let table = [
        (BaseLongitudinal, None),
        (BaseRotation, None),
        (HeadRotation, None),
        (Shoulder, Some(Left)),
        (Elbow, Some(Left)),
        (Shoulder, Some(Right)),
        (Elbow, Some(Right)),
        (Eyelid, None),
    ];
    table
        .iter()
        .enumerate()
        .map(|(index, &(kind, arm_side))| DofDescriptor { index, kind, arm_side })
        .collect()
}

fn default_dofs() -> Vec<DofDescriptor> {
    canonical_dofs()
}
fn default_base_radius() -> f64 {
    0.3
}
fn default_head_offset() -> f64 {
    0.1
}
fn default_arm_lengths() -> [[f64; 2]; 2] {
    [[0.5, 0.5], [0.5, 0.5]]
}
fn default_speed() -> f64 {
    1.0
}
fn default_shoulder_mount() -> f64 {
    PI / 2.0
}
fn default_arm_radius() -> f64 {
    0.1
}
fn default_arm_colors() -> [[f64; 3]; 2] {
    [[0.95, 0.8, 0.6], [0.85, 0.7, 0.5]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologySpec {
    #[serde(default = "default_base_radius")]
    pub base_radius: f64,
    /// Forward offset of the head (and eye) from the base center.
    #[serde(default = "default_head_offset")]
    pub head_offset: f64,
    /// `[left, right]`, each `[upper, fore]`.
    #[serde(default = "default_arm_lengths")]
    pub arm_segment_lengths: [[f64; 2]; 2],
    #[serde(default = "default_dofs")]
    pub dof_list: Vec<DofDescriptor>,
    #[serde(default = "default_speed")]
    pub max_linear_speed: f64,
    #[serde(default = "default_speed")]
    pub max_angular_speed: f64,
    /// Angle of the shoulder joints on the base rim, measured from the heading
    /// (left at `+mount`, right at `-mount`).
    #[serde(default = "default_shoulder_mount")]
    pub shoulder_mount: f64,
    #[serde(default = "default_arm_radius")]
    pub arm_radius: f64,
    #[serde(default = "default_arm_colors")]
    pub arm_colors: [[f64; 3]; 2],
    /// Fault-injection switch: symmetric joint limit (radians) on head,
    /// shoulders and elbows. Only the `joint_limit_fault` agent sets it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_limit: Option<f64>,
}

impl Default for MorphologySpec {
    fn default() -> Self {
        MorphologySpec {
            base_radius: default_base_radius(),
            head_offset: default_head_offset(),
            arm_segment_lengths: default_arm_lengths(),
            dof_list: default_dofs(),
            max_linear_speed: default_speed(),
            max_angular_speed: default_speed(),
            shoulder_mount: default_shoulder_mount(),
            arm_radius: default_arm_radius(),
            arm_colors: default_arm_colors(),
            joint_limit: None,
        }
    }
}

impl MorphologySpec {
    /// Variant with 0.8 m arm segments.
    pub fn long_arms() -> Self {
        MorphologySpec {
            arm_segment_lengths: [[0.8, 0.8], [0.8, 0.8]],
            ..Default::default()
        }
    }

    /// Maximal distance from the base center any arm point can reach.
    pub fn reach(&self) -> f64 {
        let arm = |s: [f64; 2]| s[0] + s[1];
        self.base_radius
            + arm(self.arm_segment_lengths[0]).max(arm(self.arm_segment_lengths[1]))
            + self.arm_radius
    }

    /// Per-DOF maximal speed (m/s for the base longitudinal DOF, rad/s otherwise).
    pub fn max_speed(&self, dof_index: usize) -> f64 {
        if dof_index == dof::BASE_LONGITUDINAL {
            self.max_linear_speed
        } else {
            self.max_angular_speed
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("base_radius", self.base_radius),
            ("head_offset", self.head_offset),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("arm_radius", self.arm_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        for arm in &self.arm_segment_lengths {
            for &l in arm {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::Validation(format!("arm segment length must be > 0, got {l}")));
                }
            }
        }
        if self.head_offset >= self.base_radius {
            return Err(Error::Validation("head must sit inside the base".into()));
        }
        if self.dof_list != canonical_dofs() {
            return Err(Error::Validation(
                "dof_list must hold the 8 DOFs in canonical order with arm sides on shoulders/elbows only".into(),
            ));
        }
        for c in self.arm_colors.iter().flatten() {
            if !(0.0..=1.0).contains(c) {
                return Err(Error::Validation("arm colors must lie in [0,1]".into()));
            }
        }
        if let Some(l) = self.joint_limit {
            if !(l > 0.0) {
                return Err(Error::Validation("joint_limit must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl RoomSpec {
    pub fn square(side: f64) -> Self {
        RoomSpec { min: [0.0, 0.0], max: [side, side] }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]))
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    /// True if a disc of radius `r` at `p` lies inside the bounds.
    pub fn contains_disc(&self, p: Vec2, r: f64) -> bool {
        p.x - r >= self.min[0] && p.x + r <= self.max[0] && p.y - r >= self.min[1] && p.y + r <= self.max[1]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let (a, b) = (self.min, self.max);
        let p = |x: f64, y: f64| Vec2::new(x, y);
        [
            Segment::new(p(a[0], a[1]), p(b[0], a[1])),
            Segment::new(p(b[0], a[1]), p(b[0], b[1])),
            Segment::new(p(b[0], b[1]), p(a[0], b[1])),
            Segment::new(p(a[0], b[1]), p(a[0], a[1])),
        ]
    }
}

/// Periodic brightness modulation along a wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub period: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub color: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<Texture>,
}

impl WallSpec {
    pub fn segment(&self) -> Segment {
        Segment::new(Vec2::new(self.a[0], self.a[1]), Vec2::new(self.b[0], self.b[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub radius: f64,
    pub position: [f64; 2],
    pub color: [f64; 3],
    #[serde(default)]
    pub movable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripted_velocity: Option<[f64; 2]>,
}

impl EntitySpec {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.position[0], self.position[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Goal,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub kind: ZoneKind,
    pub center: [f64; 2],
    pub radius: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub room: RoomSpec,
    #[serde(default)]
    pub walls: Vec<WallSpec>,
    #[serde(default)]
    pub entities: Vec<EntitySpec>,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_start: Option<StartPose>,
}

fn color_ok(c: &[f64; 3]) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl EnvironmentSpec {
    /// Square room of the given side with four plain walls.
    pub fn empty(side: f64) -> Self {
        let room = RoomSpec::square(side);
        let colors = [[0.8, 0.2, 0.2], [0.2, 0.7, 0.2], [0.2, 0.3, 0.8], [0.8, 0.8, 0.2]];
        let walls = room
            .edges()
            .iter()
            .zip(colors)
            .map(|(s, color)| WallSpec { a: [s.a.x, s.a.y], b: [s.b.x, s.b.y], color, texture: None })
            .collect();
        EnvironmentSpec { room, walls, entities: vec![], zones: vec![], agent_start: None }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.room;
        if !(r.max[0] > r.min[0] && r.max[1] > r.min[1]) {
            return Err(Error::Validation("room bounds are empty".into()));
        }
        for w in &self.walls {
            if !color_ok(&w.color) {
                return Err(Error::Validation("wall color outside [0,1]".into()));
            }
            if let Some(t) = w.texture {
                if !(t.period > 0.0) || !(0.0..=1.0).contains(&t.amplitude) {
                    return Err(Error::Validation("wall texture needs period > 0 and amplitude in [0,1]".into()));
                }
            }
        }
        for (i, e) in self.entities.iter().enumerate() {
            if !(e.radius > 0.0) {
                return Err(Error::Validation(format!("entity {i}: radius must be > 0")));
            }
            if !color_ok(&e.color) {
                return Err(Error::Validation(format!("entity {i}: color outside [0,1]")));
            }
            if e.scripted_velocity.is_some() && e.movable {
                return Err(Error::Validation(format!("entity {i}: scripted entities cannot be movable")));
            }
            if !r.contains_disc(e.pos(), e.radius) {
                return Err(Error::Validation(format!("entity {i} lies outside the room")));
            }
            for w in &self.walls {
                if w.segment().distance_to_point(e.pos()) < e.radius {
                    return Err(Error::Validation(format!("entity {i} penetrates a wall")));
                }
            }
            for (j, o) in self.entities.iter().enumerate().take(i) {
                if (e.pos() - o.pos()).norm() < e.radius + o.radius {
                    return Err(Error::Validation(format!("entities {j} and {i} overlap")));
                }
            }
        }
        let mut goals = 0;
        for z in &self.zones {
            if !(z.radius > 0.0) || !r.contains_disc(Vec2::new(z.center[0], z.center[1]), 0.0) {
                return Err(Error::Validation("zone must have radius > 0 and center inside the room".into()));
            }
            if z.kind == ZoneKind::Goal {
                goals += 1;
            }
        }
        if !self.zones.is_empty() && goals != 1 {
            return Err(Error::Validation(format!("expected exactly one goal zone, found {goals}")));
        }
        Ok(())
    }
}

/// A scene document: `room`, `walls`, `entities`, `zones` and an optional
/// `morphology`. Agent files carry only `morphology`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SceneDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomSpec>,
    #[serde(default)]
    pub walls: Vec<WallSpec>,
    #[serde(default)]
    pub entities: Vec<EntitySpec>,
    #[serde(default)]
    pub zones: Vec<ZoneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_start: Option<StartPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morphology: Option<MorphologySpec>,
}

impl SceneDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn environment(&self) -> Result<EnvironmentSpec> {
        let room = self
            .room
            .ok_or_else(|| Error::Validation("scene document has no `room`".into()))?;
        let env = EnvironmentSpec {
            room,
            walls: self.walls.clone(),
            entities: self.entities.clone(),
            zones: self.zones.clone(),
            agent_start: self.agent_start,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn morphology_or_default(&self) -> Result<MorphologySpec> {
        let m = self.morphology.clone().unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn from_parts(env: &EnvironmentSpec, morph: Option<&MorphologySpec>) -> Self {
        SceneDocument {
            room: Some(env.room),
            walls: env.walls.clone(),
            entities: env.entities.clone(),
            zones: env.zones.clone(),
            agent_start: env.agent_start,
            morphology: morph.cloned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_morphology_is_valid() {
        MorphologySpec::default().validate().unwrap();
        MorphologySpec::long_arms().validate().unwrap();
    }

    #[test]
    fn dof_list_must_be_canonical() {
        let mut m = MorphologySpec::default();
        m.dof_list.swap(0, 1);
        assert!(m.validate().is_err());
        let mut m = MorphologySpec::default();
        m.dof_list[3].arm_side = None;
        assert!(m.validate().is_err());
        let mut m = MorphologySpec::default();
        m.dof_list.pop();
        assert!(m.validate().is_err());
    }

    #[test]
    fn non_positive_lengths_rejected() {
        let m = MorphologySpec { base_radius: 0.0, ..Default::default() };
        assert!(m.validate().is_err());
        let m = MorphologySpec { arm_segment_lengths: [[0.5, -1.0], [0.5, 0.5]], ..Default::default() };
        assert!(m.validate().is_err());
    }

    #[test]
    fn scripted_movable_entity_rejected() {
        let mut env = EnvironmentSpec::empty(10.0);
        env.entities.push(EntitySpec {
            radius: 0.2,
            position: [2.0, 2.0],
            color: [1.0, 0.0, 0.0],
            movable: true,
            scripted_velocity: Some([0.1, 0.0]),
        });
        assert!(env.validate().is_err());
    }

    #[test]
    fn overlapping_entities_rejected() {
        let mut env = EnvironmentSpec::empty(10.0);
        for x in [2.0, 2.3] {
            env.entities.push(EntitySpec {
                radius: 0.2,
                position: [x, 2.0],
                color: [1.0, 0.0, 0.0],
                movable: false,
                scripted_velocity: None,
            });
        }
        assert!(env.validate().is_err());
    }

    #[test]
    fn scene_json_keys() {
        let doc = SceneDocument::from_json(
            r#"{"room":{"min":[0,0],"max":[10,10]},"walls":[],"entities":[],"zones":[],
                "morphology":{"base_radius":0.3}}"#,
        )
        .unwrap();
        assert!(doc.environment().is_ok());
        assert_eq!(doc.morphology_or_default().unwrap().base_radius, 0.3);
    }
}
