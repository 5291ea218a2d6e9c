//! Adam, the minibatch loop, and evaluation.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    batch_step, feature_matrix, head_predict, pauli_correlations, Architecture, Correlations,
    ModelParams,
};
use crate::states::{Dataset, StateFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Half-width of the uniform kernel coefficient initialization.
    pub kernel_scale: f64,
    /// Seeds kernel/weight initialization (stream 0) and the per-epoch shuffle (stream 1).
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(
        lr: f64,
        beta1: f64,
        beta2: f64,
        batch_size: usize,
        epochs: usize,
        seed: u64,
    ) -> Self {
        TrainConfig {
            lr,
            beta1,
            beta2,
            epsilon: 1e-8,
            batch_size,
            epochs,
            kernel_scale: 1.0,
            seed,
        }
    }

    pub fn with_kernel_scale(mut self, kernel_scale: f64) -> Self {
        self.kernel_scale = kernel_scale;
        self
    }

    /// Adam settings per state family and path count `m`. Path counts without
    /// a listed row take the nearest listed one. Parametric families start
    /// from kernels of half scale, general states from full scale.
    pub fn preset(family: StateFamily, m: usize, seed: u64) -> Self {
        let cfg = match family {
            StateFamily::Werner => TrainConfig::new(0.001, 0.9, 0.99, 10, 10, seed),
            StateFamily::G1Werner => TrainConfig::new(0.001, 0.35, 0.99, 10, 10, seed),
            StateFamily::G2Werner => match m {
                0 | 1 => TrainConfig::new(0.001, 0.5, 0.9, 10, 10, seed),
                2 => TrainConfig::new(0.001, 0.9, 0.99, 200, 30, seed),
                _ => TrainConfig::new(0.001, 0.375, 0.99, 10, 10, seed),
            },
            StateFamily::General => {
                let beta2 = match m {
                    0..=8 => 0.825,
                    9 => 0.85,
                    10 => 0.87,
                    11 => 0.9,
                    12 => 0.95,
                    13 | 14 => 0.925,
                    _ => 0.975,
                };
                TrainConfig::new(0.0003, 0.325, beta2, 400, 20, seed)
            }
        };
        if family == StateFamily::General {
            cfg
        } else {
            cfg.with_kernel_scale(0.5)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon >= 0.0
            && self.batch_size >= 1
            && self.kernel_scale > 0.0
            && self.kernel_scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!(
                "invalid training config {self:?}"
            )))
        }
    }
}

/// First and second moment buffers, one per trainable slice of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.trainable_slices().iter().map(|s| s.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// Applies `w -= lr * m_hat / (sqrt(v_hat) + eps)` to a flat buffer.
pub fn adam_update(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One bias-corrected Adam step over every trainable parameter. Fixed
/// identity kernels are not part of the trainable set and stay untouched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t;
    let grad_slices = grads.trainable_slices();
    let mut param_slices = params.trainable_slices_mut();
    assert_eq!(
        param_slices.len(),
        grad_slices.len(),
        "gradient structure does not match parameters"
    );
    for (i, (w, g)) in param_slices.iter_mut().zip(&grad_slices).enumerate() {
        adam_update(w, g, &mut state.m[i], &mut state.v[i], t, cfg);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the pre-update predictions seen during the epoch.
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// `epoch,loss,accuracy` lines; wall-clock time is left out so the file
    /// only depends on seeds and data.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.16e},{:.16e}\n",
                e.epoch, e.loss, e.accuracy
            ));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.3}\n", e.epoch, e.seconds));
        }
        s
    }
}

/// Deterministic parameter initialization for a run.
pub fn init_params(arch: &Architecture, cfg: &TrainConfig) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    ModelParams::init_scaled(arch, cfg.kernel_scale, &mut rng)
}

pub fn dataset_correlations(dataset: &Dataset) -> Vec<Correlations> {
    dataset
        .records
        .iter()
        .map(|r| pauli_correlations(&r.matrix))
        .collect()
}

fn labels(dataset: &Dataset) -> Vec<f64> {
    dataset
        .records
        .iter()
        .map(|r| f64::from(r.label()))
        .collect()
}

pub fn train(
    dataset: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    train_with_progress(dataset, arch, cfg, |_| {})
}

/// Trains from scratch, calling `progress` after every epoch.
pub fn train_with_progress(
    dataset: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(ModelParams, TrainHistory)> {
    if dataset.is_empty() {
        return Err(Error::OutOfRange("training set is empty".into()));
    }
    cfg.validate()?;
    let mut params = init_params(arch, cfg)?;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);

    let corr = dataset_correlations(dataset);
    let y = labels(dataset);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = TrainHistory::default();

    let mut batch_corr = Vec::with_capacity(cfg.batch_size);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch_corr.clear();
            batch_y.clear();
            batch_corr.extend(chunk.iter().map(|&i| corr[i]));
            batch_y.extend(chunk.iter().map(|&i| y[i]));
            let step = batch_step(&params, &batch_corr, &batch_y);
            loss_sum += step.loss * chunk.len() as f64;
            correct += step
                .predictions
                .iter()
                .zip(&batch_y)
                .filter(|(&p, &t)| (p > 0.5) == (t > 0.5))
                .count();
            adam_step(&mut params, &step.grads, &mut adam, cfg);
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            accuracy: correct as f64 / dataset.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&stats);
        history.epochs.push(stats);
    }
    Ok((params, history))
}

/// A misclassified test record with what is needed to plot error distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Misclassified {
    pub index: usize,
    pub p: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub lambda_min: f64,
    pub entangled: bool,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub errors: Vec<Misclassified>,
    pub probabilities: Vec<f64>,
}

const EVAL_CHUNK: usize = 1000;

/// Sigmoid outputs for every record. Features are the exact operator
/// expectations, computed from each state's Pauli correlation table.
pub fn predict(params: &ModelParams, dataset: &Dataset) -> Result<Vec<f64>> {
    params.validate()?;
    let corr = dataset_correlations(dataset);
    let mut out = Vec::with_capacity(dataset.len());
    for chunk in corr.chunks(EVAL_CHUNK) {
        let x: Array2<f64> = feature_matrix(params, chunk);
        out.extend(head_predict(params, x.view()));
    }
    Ok(out)
}

/// Accuracy with decision threshold 0.5, plus the misclassified records.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<Evaluation> {
    let probabilities = predict(params, dataset)?;
    let mut errors = Vec::new();
    for (index, (r, &prob)) in dataset.records.iter().zip(&probabilities).enumerate() {
        if (prob > 0.5) != r.entangled {
            errors.push(Misclassified {
                index,
                p: r.p,
                theta: r.theta,
                phi: r.phi,
                lambda_min: r.lambda_min,
                entangled: r.entangled,
                probability: prob,
            });
        }
    }
    let accuracy = if dataset.is_empty() {
        0.0
    } else {
        1.0 - errors.len() as f64 / dataset.len() as f64
    };
    Ok(Evaluation {
        accuracy,
        errors,
        probabilities,
    })
}
