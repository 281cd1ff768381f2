//! Alternative DOF-importance measures: raw sensor change per action and the
//! error of a learned next-observation predictor.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::{distance_mse, render, Observation};
use crate::sim::{ActionSequence, World, NUM_DOFS};
use crate::stats::derived_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs_t: Observation,
    pub action: f64,
    pub obs_next: Observation,
}

/// Transitions for one DOF. The first 80% form the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub dof_index: usize,
    pub transitions: Vec<Transition>,
}

impl TransitionDataset {
    pub fn n_train(&self) -> usize {
        self.transitions.len() * 4 / 5
    }

    pub fn train(&self) -> &[Transition] {
        &self.transitions[..self.n_train()]
    }

    pub fn test(&self) -> &[Transition] {
        &self.transitions[self.n_train()..]
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// `n` single-step transitions on `dof_index` from random free states. Item `i`
/// is seeded from `(seed, dof_index, i)`.
pub fn collect_transitions(world: &World, dof_index: usize, n: usize, seed: u64) -> Result<TransitionDataset> {
    if n < 1 {
        return Err(Error::Validation("n must be at least 1".into()));
    }
    if dof_index >= NUM_DOFS {
        return Err(Error::Validation(format!("dof index {dof_index} out of range")));
    }
    let transitions = (0..n)
        .into_par_iter()
        .map_init(
            || world.clone(),
            |w, i| {
                let mut rng = derived_rng(seed, dof_index as u64, i as u64);
                let start = w.sample_free_state(&mut rng)?;
                w.restore(&start)?;
                let obs_t = render(w);
                let action: f64 = rng.gen_range(-1.0..=1.0);
                w.apply_sequence(&ActionSequence::single_dof(dof_index, &[action]));
                Ok(Transition { obs_t, action, obs_next: render(w) })
            },
        )
        .collect::<Result<_>>()?;
    Ok(TransitionDataset { dof_index, transitions })
}

/// Mean MSE between consecutive observations.
pub fn naive_sensor_change(dataset: &TransitionDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset(dataset.dof_index));
    }
    let mut sum = 0.0;
    for t in &dataset.transitions {
        sum += distance_mse(&t.obs_t, &t.obs_next)?;
    }
    Ok(sum / dataset.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, lr: 1e-3, batch: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    w: Array2<f32>,
    b: Array1<f32>,
}

impl Layer {
    fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f32).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
        Layer { w, b: Array1::zeros(fan_out) }
    }

    fn forward(&self, x: &ArrayView2<f32>) -> Array2<f32> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
    mb: Vec<Array1<f32>>,
    vb: Vec<Array1<f32>>,
    t: i32,
}

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const ADAM_EPS: f32 = 1e-8;

/// Feed-forward next-observation predictor: input is the flattened observation
/// and the action, two ReLU hidden layers as wide as the input, linear output
/// added to the input observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    layers: [Layer; 3],
    width: usize,
}

fn encode(batch: &[&Transition]) -> (Array2<f32>, Array2<f32>) {
    let w = batch[0].obs_t.width() * 3;
    let mut x = Array2::zeros((batch.len(), w + 1));
    let mut y = Array2::zeros((batch.len(), w));
    for (r, t) in batch.iter().enumerate() {
        for (c, v) in t.obs_t.flat().enumerate() {
            x[[r, c]] = v as f32;
        }
        x[[r, w]] = t.action as f32;
        for (c, v) in t.obs_next.flat().enumerate() {
            y[[r, c]] = v as f32;
        }
    }
    (x, y)
}

fn relu(a: Array2<f32>) -> Array2<f32> {
    a.mapv_into(|v| v.max(0.0))
}

impl PredictorModel {
    pub fn new<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let d = width * 3;
        let mut out = Layer::new(d + 1, d, rng);
        out.w.fill(0.0);
        let layers = [Layer::new(d + 1, d + 1, rng), Layer::new(d + 1, d + 1, rng), out];
        PredictorModel { layers, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    fn forward_all(&self, x: &Array2<f32>) -> [Array2<f32>; 3] {
        let h1 = relu(self.layers[0].forward(&x.view()));
        let h2 = relu(self.layers[1].forward(&h1.view()));
        let d = self.width * 3;
        let out = self.layers[2].forward(&h2.view()) + &x.slice(s![.., ..d]);
        [h1, h2, out]
    }

    /// Predicted next observation, clamped to [0, 1].
    pub fn predict(&self, obs: &Observation, action: f64) -> Observation {
        let t = Transition { obs_t: obs.clone(), action, obs_next: obs.clone() };
        let (x, _) = encode(&[&t]);
        let out = self.forward_all(&x)[2].clone();
        let pixels = out.row(0).as_slice().expect("contiguous").chunks(3).map(|c| [0, 1, 2].map(|k| (c[k] as f64).clamp(0.0, 1.0))).collect();
        Observation::new(pixels, obs.fov)
    }

    /// One gradient step on a batch; returns the batch loss before the step.
    fn train_step(&mut self, x: &Array2<f32>, y: &Array2<f32>, adam: &mut Adam, lr: f32) -> f32 {
        let [h1, h2, out] = self.forward_all(x);
        let diff = &out - y;
        let n = diff.len() as f32;
        let loss = diff.iter().map(|d| d * d).sum::<f32>() / n;
        let g3 = diff * (2.0 / n);
        let gw3 = h2.t().dot(&g3);
        let gb3 = g3.sum_axis(Axis(0));
        let mut g2 = g3.dot(&self.layers[2].w.t());
        g2.zip_mut_with(&h2, |g, h| {
            if *h <= 0.0 {
                *g = 0.0
            }
        });
        let gw2 = h1.t().dot(&g2);
        let gb2 = g2.sum_axis(Axis(0));
        let mut g1 = g2.dot(&self.layers[1].w.t());
        g1.zip_mut_with(&h1, |g, h| {
            if *h <= 0.0 {
                *g = 0.0
            }
        });
        let gw1 = x.t().dot(&g1);
        let gb1 = g1.sum_axis(Axis(0));

        adam.t += 1;
        let c1 = 1.0 - BETA1.powi(adam.t);
        let c2 = 1.0 - BETA2.powi(adam.t);
        for (k, (gw, gb)) in [(gw1, gb1), (gw2, gb2), (gw3, gb3)].into_iter().enumerate() {
            let layer = &mut self.layers[k];
            ndarray::Zip::from(&mut layer.w).and(&mut adam.m[k]).and(&mut adam.v[k]).and(&gw).for_each(|w, m, v, g| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
            ndarray::Zip::from(&mut layer.b).and(&mut adam.mb[k]).and(&mut adam.vb[k]).and(&gb).for_each(|w, m, v, g| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
        loss
    }

    /// Mean squared error of the clamped predictions over `data`.
    pub fn evaluate(&self, data: &[Transition]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset(0));
        }
        let mut sum = 0.0;
        for chunk in data.chunks(256) {
            let refs: Vec<&Transition> = chunk.iter().collect();
            let (x, y) = encode(&refs);
            let out = self.forward_all(&x)[2].mapv(|v| v.clamp(0.0, 1.0));
            sum += (&out - &y).iter().map(|d| (*d as f64) * (*d as f64)).sum::<f64>();
        }
        Ok(sum / (data.len() * self.width * 3) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the last epoch.
    pub final_loss: f64,
    pub test_error: f64,
}

/// Trains a predictor on the training split with minibatch Adam on squared
/// error. Deterministic given `cfg.seed`.
pub fn train_predictor(dataset: &TransitionDataset, cfg: &TrainConfig) -> Result<(PredictorModel, TrainReport)> {
    let train = dataset.train();
    if train.is_empty() {
        return Err(Error::EmptyDataset(dataset.dof_index));
    }
    if cfg.batch < 1 || cfg.epochs < 1 || !(cfg.lr > 0.0) {
        return Err(Error::Validation("epochs, batch and lr must be positive".into()));
    }
    let mut rng = derived_rng(cfg.seed, dataset.dof_index as u64, u64::MAX);
    let width = train[0].obs_t.width();
    let mut model = PredictorModel::new(width, &mut rng);
    let mut adam = Adam {
        m: model.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
        v: model.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
        mb: model.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        vb: model.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch) {
            let refs: Vec<&Transition> = idx.iter().map(|&i| &train[i]).collect();
            let (x, y) = encode(&refs);
            let loss = model.train_step(&x, &y, &mut adam, cfg.lr);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("loss {loss} in epoch {epoch}")));
            }
            total += loss as f64;
            batches += 1;
        }
        final_loss = total / batches as f64;
    }
    if !model.is_finite() {
        return Err(Error::Divergence("non-finite weights".into()));
    }
    let test = if dataset.test().is_empty() { train } else { dataset.test() };
    let test_error = model.evaluate(test)?;
    Ok((model, TrainReport { final_loss, test_error }))
}

/// Each error minus the smallest one.
pub fn excess_prediction_error(errors: &[f64]) -> Vec<f64> {
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    errors.iter().map(|e| e - min).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dof_index: usize,
    pub naive_msd: f64,
    pub pred_test_error: f64,
    pub excess_error: f64,
}

/// Both baselines for every DOF, `n` transitions each.
pub fn run_baselines(world: &World, n: usize, cfg: &TrainConfig) -> Result<Vec<BaselineRow>> {
    let per_dof: Vec<(f64, f64)> = (0..NUM_DOFS)
        .into_par_iter()
        .map(|k| {
            let ds = collect_transitions(world, k, n, cfg.seed)?;
            let naive = naive_sensor_change(&ds)?;
            let (_, report) = train_predictor(&ds, cfg)?;
            Ok((naive, report.test_error))
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = per_dof.iter().map(|p| p.1).collect();
    let excess = excess_prediction_error(&errors);
    Ok(per_dof
        .iter()
        .enumerate()
        .map(|(k, &(naive_msd, pred_test_error))| BaselineRow { dof_index: k, naive_msd, pred_test_error, excess_error: excess[k] })
        .collect())
}

pub fn baselines_csv(rows: &[BaselineRow]) -> String {
    let mut s = String::from("dof_index,naive_msd,pred_test_error,excess_error\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.dof_index, r.naive_msd, r.pred_test_error, r.excess_error));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excess_examples() {
        let e = excess_prediction_error(&[0.2, 0.5, 0.3]);
        assert_eq!(e[0], 0.0);
        assert!((e[1] - 0.3).abs() < 1e-12 && (e[2] - 0.1).abs() < 1e-12);
        assert_eq!(excess_prediction_error(&[0.4; 8]), vec![0.0; 8]);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let ds = TransitionDataset { dof_index: 3, transitions: vec![] };
        assert!(matches!(naive_sensor_change(&ds), Err(Error::EmptyDataset(3))));
    }

    #[test]
    fn constant_dataset_is_learned() {
        let obs = Observation::filled(8, [0.3, 0.6, 0.9]);
        let transitions = (0..200)
            .map(|i| Transition { obs_t: obs.clone(), action: (i as f64 / 100.0) - 1.0, obs_next: obs.clone() })
            .collect();
        let ds = TransitionDataset { dof_index: 0, transitions };
        let (_, r) = train_predictor(&ds, &TrainConfig { epochs: 100, ..Default::default() }).unwrap();
        assert!(r.test_error < 1e-4, "{}", r.test_error);
    }
}
