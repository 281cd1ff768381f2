use sensocom::baselines::{collect_transitions, excess_prediction_error, naive_sensor_change, train_predictor, TrainConfig};
use sensocom::sim::dof;
use sensocom::{fixtures, Error};

#[test]
fn transitions_have_requested_size_and_range() {
    let w = fixtures::world("room12").unwrap();
    let ds = collect_transitions(&w, dof::BASE_ROTATION, 100, 0).unwrap();
    assert_eq!(ds.len(), 100);
    assert_eq!(ds.n_train(), 80);
    assert_eq!(ds.test().len(), 20);
    for t in &ds.transitions {
        assert!((-1.0..=1.0).contains(&t.action));
        assert_eq!(t.obs_t.width(), 64);
        assert_eq!(t.obs_next.width(), 64);
    }
    assert_eq!(ds, collect_transitions(&w, dof::BASE_ROTATION, 100, 0).unwrap());
    assert_ne!(ds, collect_transitions(&w, dof::BASE_ROTATION, 100, 1).unwrap());
}

#[test]
fn collect_rejects_bad_arguments() {
    let w = fixtures::world("room12").unwrap();
    assert!(matches!(collect_transitions(&w, 0, 0, 0), Err(Error::Validation(_))));
    assert!(matches!(collect_transitions(&w, 8, 10, 0), Err(Error::Validation(_))));
}

#[test]
fn eyelid_leaves_next_observation_unchanged() {
    let w = fixtures::world("room12").unwrap();
    let ds = collect_transitions(&w, dof::EYELID, 100, 0).unwrap();
    assert!(ds.transitions.iter().all(|t| t.obs_t.bits_eq(&t.obs_next)));
    assert_eq!(naive_sensor_change(&ds).unwrap(), 0.0);
    let base = collect_transitions(&w, dof::BASE_LONGITUDINAL, 100, 0).unwrap();
    assert!(naive_sensor_change(&base).unwrap() > 0.0);
}

#[test]
fn eyelid_is_predicted_almost_perfectly() {
    let w = fixtures::world("room12").unwrap();
    let ds = collect_transitions(&w, dof::EYELID, 300, 0).unwrap();
    let cfg = TrainConfig::default();
    let (model, report) = train_predictor(&ds, &cfg).unwrap();
    assert!(report.test_error < 1e-3, "test error {}", report.test_error);
    assert!(model.is_finite());
    assert_eq!(model.width(), 64);
}

#[test]
fn retraining_is_bitwise_reproducible() {
    let w = fixtures::world("room12").unwrap();
    let ds = collect_transitions(&w, dof::HEAD_ROTATION, 200, 3).unwrap();
    let cfg = TrainConfig { epochs: 3, ..Default::default() };
    let (m1, r1) = train_predictor(&ds, &cfg).unwrap();
    let (m2, r2) = train_predictor(&ds, &cfg).unwrap();
    assert_eq!(r1.final_loss.to_bits(), r2.final_loss.to_bits());
    assert_eq!(r1.test_error.to_bits(), r2.test_error.to_bits());
    let t = &ds.test()[0];
    assert!(m1.predict(&t.obs_t, t.action).bits_eq(&m2.predict(&t.obs_t, t.action)));
}

#[test]
fn training_rejects_bad_config() {
    let w = fixtures::world("room12").unwrap();
    let ds = collect_transitions(&w, 0, 20, 0).unwrap();
    assert!(train_predictor(&ds, &TrainConfig { batch: 0, ..Default::default() }).is_err());
    assert!(train_predictor(&ds, &TrainConfig { lr: 0.0, ..Default::default() }).is_err());
}

#[test]
fn excess_has_exact_zero_minimum() {
    let errors = [0.0066, 0.0034, 0.0051, 0.0034 + 1e-12];
    let ex = excess_prediction_error(&errors);
    assert_eq!(ex[1], 0.0);
    assert!(ex.iter().all(|e| *e >= 0.0));
    assert_eq!(ex.iter().filter(|e| **e == 0.0).count(), 1);
    for (e, x) in errors.iter().zip(&ex) {
        assert_eq!(*x, e - 0.0034);
    }
}
