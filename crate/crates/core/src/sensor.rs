//! First-person line camera, observation distances and pixel change masks.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::sim::{dof, EnvironmentSpec, MorphologySpec, World, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub width: usize,
    pub fov: f64,
    /// Draw the agent's own arms.
    #[serde(default)]
    pub show_arms: bool,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec { width: 64, fov: FRAC_PI_2, show_arms: false }
    }
}

/// A line of RGB pixels, values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pixels: Vec<[f64; 3]>,
    pub fov: f64,
}

impl Observation {
    pub fn new(pixels: Vec<[f64; 3]>, fov: f64) -> Self {
        Observation { pixels, fov }
    }

    pub fn filled(width: usize, rgb: [f64; 3]) -> Self {
        Observation { pixels: vec![rgb; width], fov: FRAC_PI_2 }
    }

    pub fn width(&self) -> usize {
        self.pixels.len()
    }

    /// Channel values flattened pixel by pixel.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels.iter().flatten().copied()
    }

    pub fn bits_eq(&self, o: &Observation) -> bool {
        self.width() == o.width() && self.flat().zip(o.flat()).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Binary PPM of height 1.
    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P6\n{} 1\n255\n", self.width())?;
        let bytes: Vec<u8> = self.flat().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        out.write_all(&bytes)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.pixels)?)
    }
}

/// What the ray through each pixel hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HitId {
    None,
    Wall(usize),
    Entity(usize),
    /// Arm side (0 left, 1 right) and segment (0 upper, 1 fore).
    Arm(usize, usize),
}

/// Brightness falloff per meter of ray length.
pub const DEPTH_FALLOFF: f64 = 0.1;

fn attenuate(rgb: [f64; 3], t: f64) -> [f64; 3] {
    let k = 1.0 / (1.0 + DEPTH_FALLOFF * t);
    rgb.map(|c| (c * k).clamp(0.0, 1.0))
}

/// Casts the rays for `state`; returns colors and hit ids per pixel. Arms
/// are seen only outside the base body.
pub fn render_state(
    env: &EnvironmentSpec,
    morph: &MorphologySpec,
    sensor: &SensorSpec,
    state: &WorldState,
) -> (Observation, Vec<HitId>) {
    let w = sensor.width;
    let heading = state.base_pose.heading;
    let base = state.base_pose.position();
    let eye = state.base_pose.position() + Vec2::from_angle(heading) * morph.head_offset;
    let view = heading + state.dof_positions[dof::HEAD_ROTATION];
    let shape = World::shape_of(morph, state);
    let step = sensor.fov / w as f64;
    let mut pixels = Vec::with_capacity(w);
    let mut ids = Vec::with_capacity(w);
    for i in 0..w {
        let angle = view + 0.5 * sensor.fov - (i as f64 + 0.5) * step;
        let dir = Vec2::from_angle(angle);
        let t_rim = geom::ray_exit_disc(eye, dir, base, morph.base_radius);
        let rim = eye + dir * t_rim;
        let mut best = f64::INFINITY;
        let mut id = HitId::None;
        let mut rgb = [0.0; 3];
        for (k, wall) in env.walls.iter().enumerate() {
            let seg = wall.segment();
            if let Some((t, u)) = geom::ray_segment(eye, dir, &seg) {
                if t < best {
                    best = t;
                    id = HitId::Wall(k);
                    let shade = match wall.texture {
                        Some(tex) => {
                            let s = u * (seg.b - seg.a).norm();
                            1.0 - tex.amplitude * (0.5 - 0.5 * (TAU * s / tex.period).cos())
                        }
                        None => 1.0,
                    };
                    rgb = wall.color.map(|c| c * shade);
                }
            }
        }
        for (k, e) in env.entities.iter().enumerate() {
            if let Some(t) = geom::ray_disc(eye, dir, state.entity(k), e.radius) {
                if t < best {
                    best = t;
                    id = HitId::Entity(k);
                    rgb = e.color;
                }
            }
        }
        let arms: &[geom::Capsule] = if sensor.show_arms { &shape.arms } else { &[] };
        for (k, cap) in arms.iter().enumerate() {
            let hit = if cap.seg.distance_to_point(rim) <= cap.radius {
                Some(t_rim)
            } else {
                geom::ray_capsule(rim, dir, cap).map(|t| t + t_rim)
            };
            if let Some(t) = hit {
                if t < best {
                    best = t;
                    id = HitId::Arm(k / 2, k % 2);
                    rgb = morph.arm_colors[k / 2];
                }
            }
        }
        pixels.push(if best.is_finite() { attenuate(rgb, best) } else { rgb });
        ids.push(id);
    }
    (Observation::new(pixels, sensor.fov), ids)
}

/// Renders the world's current view. A closed eyelid gives an all-black line.
pub fn render(world: &World) -> Observation {
    if world.eyelid_closed() {
        let s = world.sensor();
        return Observation::new(vec![[0.0; 3]; s.width], s.fov);
    }
    render_state(world.env(), world.morphology(), world.sensor(), world.state()).0
}

/// Hit ids of the world's current view, ignoring the eyelid.
pub fn id_buffer(world: &World, state: &WorldState) -> Vec<HitId> {
    render_state(world.env(), world.morphology(), world.sensor(), state).1
}

fn check_shape(a: &Observation, b: &Observation) -> Result<()> {
    if a.width() != b.width() {
        return Err(Error::Shape { left: a.width(), right: b.width() });
    }
    Ok(())
}

/// Mean over all channels of the squared difference.
pub fn distance_mse(a: &Observation, b: &Observation) -> Result<f64> {
    check_shape(a, b)?;
    let n = 3 * a.width();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a.flat().zip(b.flat()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / n as f64)
}

/// Observation distance used to decide whether two sequences commute.
///
/// Implement this to plug in other metrics (for example feature-space
/// distances); the engine only needs a non-negative symmetric value.
pub trait Distance: Send + Sync {
    fn name(&self) -> &str;
    fn distance(&self, a: &Observation, b: &Observation) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mse,
}

impl Distance for Metric {
    fn name(&self) -> &str {
        match self {
            Metric::Mse => "mse",
        }
    }

    fn distance(&self, a: &Observation, b: &Observation) -> Result<f64> {
        match self {
            Metric::Mse => distance_mse(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMask {
    pub bits: Vec<bool>,
    pub changed_fraction: f64,
}

impl DiffMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let n = bits.len();
        let c = bits.iter().filter(|b| **b).count();
        let changed_fraction = if n == 0 { 0.0 } else { c as f64 / n as f64 };
        DiffMask { bits, changed_fraction }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.bits)?)
    }
}

/// Bit `i` is set when the largest channel difference at pixel `i` exceeds
/// `pixel_eps`.
pub fn diff_mask(a: &Observation, b: &Observation, pixel_eps: f64) -> Result<DiffMask> {
    check_shape(a, b)?;
    let bits = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).abs()).fold(0.0, f64::max) > pixel_eps)
        .collect();
    Ok(DiffMask::from_bits(bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_channel_half_difference() {
        let a = Observation::filled(64, [0.0; 3]);
        let mut b = a.clone();
        b.pixels[10][1] = 0.5;
        let d = distance_mse(&a, &b).unwrap();
        assert_eq!(d, 0.25 / 192.0);
        assert!((d - 0.0013021).abs() < 1e-7);
    }

    #[test]
    fn black_white_distance_is_one() {
        let a = Observation::filled(64, [0.0; 3]);
        let b = Observation::filled(64, [1.0; 3]);
        assert_eq!(distance_mse(&a, &b).unwrap(), 1.0);
        let m = diff_mask(&a, &b, 0.0).unwrap();
        assert_eq!(m.changed_fraction, 1.0);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let a = Observation::filled(64, [0.0; 3]);
        let b = Observation::filled(32, [0.0; 3]);
        assert!(matches!(distance_mse(&a, &b), Err(Error::Shape { left: 64, right: 32 })));
        assert!(diff_mask(&a, &b, 0.0).is_err());
    }

    #[test]
    fn ppm_header_and_size() {
        let o = Observation::filled(4, [1.0, 0.0, 0.5]);
        let mut buf = Vec::new();
        o.write_ppm(&mut buf).unwrap();
        let header = b"P6\n4 1\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 12);
        assert_eq!(&buf[header.len()..header.len() + 3], &[255, 0, 128]);
    }
}
