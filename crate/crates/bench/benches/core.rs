use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use sensocom::engine::{scp_trial, ScpParams};
use sensocom::explore::{features, Task};
use sensocom::{fixtures, render};

fn step(c: &mut Criterion) {
    let mut w = fixtures::world("room12").unwrap();
    let start = w.snapshot();
    let a = [0.5, 0.3, 0.2, 0.4, -0.4, -0.2, 0.1, -1.0];
    c.bench_function("world_step", |b| {
        b.iter(|| {
            w.restore(&start).unwrap();
            w.step(black_box(&a), 0.1);
        })
    });
}

fn sensor(c: &mut Criterion) {
    let w = fixtures::world("room12").unwrap();
    c.bench_function("render_room12", |b| b.iter(|| render(black_box(&w))));
}

fn trial(c: &mut Criterion) {
    let mut w = fixtures::world("room12").unwrap();
    let params = ScpParams::default();
    let mut i = 0usize;
    c.bench_function("scp_trial_shoulder", |b| {
        b.iter(|| {
            i += 1;
            scp_trial(&mut w, 3, &params, black_box(i)).unwrap()
        })
    });
}

fn policy_input(c: &mut Criterion) {
    let task = Task::new(fixtures::world("explore_task").unwrap(), 1000).unwrap();
    c.bench_function("observe_and_featurize", |b| b.iter(|| features(&task.observe())));
}

criterion_group!(benches, step, sensor, trial, policy_input);
criterion_main!(benches);
