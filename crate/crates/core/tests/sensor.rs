use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use sensocom::sensor::{id_buffer, HitId, DEPTH_FALLOFF};
use sensocom::sim::{dof, EntitySpec};
use sensocom::stats::derived_rng;
use sensocom::{diff_mask, distance_mse, fixtures, render, EnvironmentSpec, Error, MorphologySpec, Observation, World, NUM_DOFS};

const WIDTH: usize = 64;

/// Bearing of pixel `i` relative to the view direction; pixel 0 is leftmost.
fn pixel_angle(i: usize) -> f64 {
    FRAC_PI_4 - (i as f64 + 0.5) * FRAC_PI_2 / WIDTH as f64
}

/// Whether a ray from the origin at `angle` meets a disc at (`dx`, `dy`).
fn ray_meets_disc(angle: f64, dx: f64, dy: f64, r: f64) -> bool {
    let (s, c) = angle.sin_cos();
    let along = dx * c + dy * s;
    let across = (dx * s - dy * c).abs();
    along > 0.0 && across <= r
}

fn room_with_disc(x: f64, y: f64) -> World {
    let mut env = EnvironmentSpec::empty(10.0);
    env.entities.push(EntitySpec { radius: 0.2, position: [x, y], color: [1.0, 0.0, 0.0], movable: true, scripted_velocity: None });
    World::load(env, MorphologySpec::default()).unwrap()
}

#[test]
fn wall_fills_view_with_depth_shaded_color() {
    let w = World::load(EnvironmentSpec::empty(10.0), MorphologySpec::default()).unwrap();
    let ids = id_buffer(&w, w.state());
    let HitId::Wall(k) = ids[0] else { panic!("expected a wall, got {:?}", ids[0]) };
    assert!(ids.iter().all(|h| *h == HitId::Wall(k)));
    let color = w.env().walls[k].color;
    let obs = render(&w);
    // Eye 0.1 m ahead of the base at x = 5, wall at x = 10.
    let depth = 10.0 - 5.1;
    for (i, px) in obs.pixels.iter().enumerate() {
        let t = depth / pixel_angle(i).cos();
        let k = 1.0 / (1.0 + DEPTH_FALLOFF * t);
        for c in 0..3 {
            assert!((px[c] - color[c] * k).abs() < 1e-12, "pixel {i}");
        }
    }
}

#[test]
fn closed_eyelid_renders_black() {
    let mut w = fixtures::world("room12").unwrap();
    let mut a = [0.0; NUM_DOFS];
    a[dof::EYELID] = 0.3;
    w.step(&a, 0.1);
    assert!(render(&w).pixels.iter().all(|p| *p == [0.0; 3]));
    w.step(&[0.0; NUM_DOFS], 0.1);
    assert!(render(&w).pixels.iter().any(|p| *p != [0.0; 3]));
}

#[test]
fn disc_two_meters_ahead_spans_eight_pixels() {
    let w = room_with_disc(7.1, 5.0);
    let n = id_buffer(&w, w.state()).iter().filter(|h| **h == HitId::Entity(0)).count();
    let oracle = (0..WIDTH).filter(|&i| ray_meets_disc(pixel_angle(i), 2.0, 0.0, 0.2)).count();
    let analytic = (2.0 * (0.2f64 / 2.0).asin() / FRAC_PI_2 * WIDTH as f64).round() as usize;
    assert_eq!(oracle, 8);
    assert_eq!(analytic, 8);
    assert_eq!(n, oracle);
    let obs = render(&w);
    assert!(obs.pixels[31][0] > 0.0 && obs.pixels[31][1] == 0.0 && obs.pixels[31][2] == 0.0);
}

#[test]
fn distance_examples() {
    let black = Observation::filled(WIDTH, [0.0; 3]);
    let white = Observation::filled(WIDTH, [1.0; 3]);
    assert_eq!(distance_mse(&black, &black).unwrap(), 0.0);
    assert_eq!(distance_mse(&black, &white).unwrap(), 1.0);
    let mut one = black.clone();
    one.pixels[10][1] = 0.5;
    assert!((distance_mse(&black, &one).unwrap() - 0.25 / 192.0).abs() < 1e-15);
    assert!((distance_mse(&black, &one).unwrap() - 0.0013021).abs() < 1e-7);
    let narrow = Observation::filled(32, [0.0; 3]);
    assert!(matches!(distance_mse(&black, &narrow), Err(Error::Shape { .. })));
    assert!(matches!(diff_mask(&black, &narrow, 0.0), Err(Error::Shape { .. })));
}

#[test]
fn mask_examples() {
    let black = Observation::filled(WIDTH, [0.0; 3]);
    let white = Observation::filled(WIDTH, [1.0; 3]);
    let m = diff_mask(&black, &black, 0.0).unwrap();
    assert!(m.is_empty() && m.changed_fraction == 0.0);
    let m = diff_mask(&black, &white, 0.0).unwrap();
    assert_eq!(m.count(), WIDTH);
    assert_eq!(m.changed_fraction, 1.0);
}

#[test]
fn moved_disc_changes_exactly_its_projections() {
    let mut w = room_with_disc(7.1, 5.5);
    let before = render(&w);
    let mut s = w.snapshot();
    s.entity_poses[0] = [7.1, 4.5];
    w.restore(&s).unwrap();
    let after = render(&w);
    let mask = diff_mask(&before, &after, 0.0).unwrap();
    for i in 0..WIDTH {
        let a = ray_meets_disc(pixel_angle(i), 2.0, 0.5, 0.2);
        let b = ray_meets_disc(pixel_angle(i), 2.0, -0.5, 0.2);
        assert_eq!(mask.bits[i], a != b, "pixel {i}");
    }
    assert!(mask.count() > 0);
}

#[test]
fn render_is_a_function_of_state() {
    let mut w = fixtures::world("room12").unwrap();
    let s = w.sample_free_state(&mut derived_rng(5, 0, 0)).unwrap();
    w.restore(&s).unwrap();
    let a = render(&w);
    let mut other = fixtures::world("room12").unwrap();
    other.restore(&s).unwrap();
    assert!(a.bits_eq(&render(&other)));
    assert!(a.pixels.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a.width(), WIDTH);
}

fn any_obs(width: usize) -> impl Strategy<Value = Observation> {
    prop::collection::vec(prop::array::uniform3(0.0f64..=1.0), width).prop_map(|p| Observation::new(p, FRAC_PI_2))
}

fn obs_pair() -> impl Strategy<Value = (Observation, Observation)> {
    (1usize..80).prop_flat_map(|w| (any_obs(w), any_obs(w)))
}

proptest! {
    #[test]
    fn distance_is_a_symmetric_semimetric((a, b) in obs_pair()) {
        let d = distance_mse(&a, &b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d.to_bits(), distance_mse(&b, &a).unwrap().to_bits());
        prop_assert_eq!(d == 0.0, a.bits_eq(&b));
        prop_assert_eq!(distance_mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mask_is_symmetric_and_counts_bits((a, b) in obs_pair(), eps in 0.0f64..0.5) {
        let m = diff_mask(&a, &b, eps).unwrap();
        prop_assert_eq!(&m, &diff_mask(&b, &a, eps).unwrap());
        prop_assert_eq!(m.changed_fraction, m.count() as f64 / a.width() as f64);
        prop_assert!(diff_mask(&a, &a, 0.0).unwrap().is_empty());
    }
}
