//! Adam and the fixed-epoch mini-batch training loop.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::numcore::{GradientRecord, ParamSet, Tape, Tensor};
use crate::windowing::{batch, SplitDataset, WindowedSample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }
}

/// One Adam update with bias-corrected moments:
///
/// ```text
/// m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
/// θ ← θ − lr · m̂ / (√v̂ + ε)   m̂ = m/(1−β1ᵗ), v̂ = v/(1−β2ᵗ)
/// ```
pub fn adam_step(params: &mut ParamSet, grads: &GradientRecord, state: &mut AdamState) -> Result<()> {
    if !grads.matches(params) || state.m.len() != params.len() {
        return Err(Error::Contract(
            "gradients and optimizer state must match the parameter set".into(),
        ));
    }
    for (i, (_, p)) in params.iter().enumerate() {
        if state.m[i].shape() != p.shape() {
            return Err(Error::dim("adam_step", state.m[i].shape(), p.shape()));
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, ((_, p), (_, g))) in params.iter_mut().zip(grads.iter()).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Parameter initialization seed.
    pub seed: u64,
    /// Seed for the per-epoch shuffle of the training split.
    pub shuffle_seed: u64,
    pub shuffle: bool,
    /// Return the parameters of the epoch with the lowest validation loss
    /// instead of the last epoch.
    pub select_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            shuffle_seed: 0,
            shuffle: true,
            select_best_val: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let a = self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", a.lr)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return Err(Error::Config("Adam betas must lie in [0,1) and ε > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub duration: Duration,
    /// Epoch whose parameters were returned (1-based).
    pub selected_epoch: usize,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss` rows; wall-clock time is left out so the
    /// file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
        }
        out
    }
}

/// Mean squared error of the model over `samples`.
pub fn dataset_loss(model: &Forecaster, params: &ParamSet, samples: &[WindowedSample]) -> Result<f64> {
    let pred = model.predict(params, samples)?;
    let n = samples.len() as f64;
    Ok(pred
        .iter()
        .zip(samples)
        .map(|(p, s)| (p - s.target).powi(2))
        .sum::<f64>()
        / n)
}

/// Runs exactly `config.epochs` epochs of mini-batch Adam on the training
/// split and records the validation loss after each epoch.
pub fn train(
    config: &TrainConfig,
    model: &Forecaster,
    splits: &SplitDataset,
) -> Result<(ParamSet, TrainHistory)> {
    config.validate()?;
    if splits.train.is_empty() || splits.validation.is_empty() {
        return Err(Error::Config("training needs non-empty train and validation splits".into()));
    }
    let started = Instant::now();
    let mut params = model.init_params(config.seed);
    let mut state = AdamState::new(config.adam, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut scratch: Vec<WindowedSample> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for (step, idx) in batch(&order, config.batch_size).into_iter().enumerate() {
            scratch.clear();
            scratch.extend(idx.iter().map(|&i| splits.train[i].clone()));
            let mut tape = Tape::new();
            let bound = tape.bind(&params);
            let loss = model.batch_loss(&mut tape, &bound, &scratch)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: step + 1,
                    loss: value,
                });
            }
            loss_sum += value * scratch.len() as f64;
            let grads = tape.backward(loss, &bound)?;
            adam_step(&mut params, &grads, &mut state)?;
        }
        let train_loss = loss_sum / splits.train.len() as f64;
        let val_loss = dataset_loss(model, &params, &splits.validation)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step: 0,
                loss: val_loss,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if config.select_best_val && best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }

    let (params, selected_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    Ok((
        params,
        TrainHistory {
            epochs: records,
            duration: started.elapsed(),
            selected_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("theta", Tensor::scalar(v)).unwrap();
        p
    }

    fn grads_for(p: &ParamSet, g: f64) -> GradientRecord {
        let mut tape = Tape::new();
        let bound = tape.bind(p);
        // loss = mean((θ − (θ₀ − g/2))²) has gradient g at θ₀.
        let theta = p.get("theta").unwrap().data()[0];
        let target = tape.constant(Tensor::scalar(theta - g / 2.0));
        let loss = tape.mse_loss(bound.var("theta").unwrap(), target).unwrap();
        tape.backward(loss, &bound).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one_param(0.7);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        let g = GradientRecord::zeros_like(&p);
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p, one_param(0.7));
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one_param(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        let g = grads_for(&p, 2.0);
        assert_eq!(g.get("theta").unwrap().data(), &[2.0]);
        adam_step(&mut p, &g, &mut s).unwrap();
        // m̂ = 2, v̂ = 4 → θ = −0.001 · 2 / (2 + 1e-8)
        let expected = -0.001 * 2.0 / (2.0 + 1e-8);
        assert!((p.get("theta").unwrap().data()[0] - expected).abs() < 1e-15);
        assert!((p.get("theta").unwrap().data()[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn bias_corrected_first_moment_equals_gradient() {
        let cfg = AdamConfig::default();
        for &g in &[2.0, -0.3, 1e-4, 123.456] {
            let mut p = one_param(0.0);
            let mut s = AdamState::new(cfg, &p);
            let grads = grads_for(&p, g);
            let g_exact = grads.get("theta").unwrap().data()[0];
            adam_step(&mut p, &grads, &mut s).unwrap();
            let m_hat = s.first_moment(0).data()[0] / (1.0 - cfg.beta1);
            assert!((m_hat - g_exact).abs() <= 2.0 * f64::EPSILON * g_exact.abs(), "{g}");
        }
    }

    #[test]
    fn identical_gradients_identical_updates() {
        let mut p = ParamSet::new();
        p.push("a", Tensor::vector(vec![0.5, 0.5])).unwrap();
        let mut s = AdamState::new(AdamConfig::default(), &p);
        let mut tape = Tape::new();
        let bound = tape.bind(&p);
        let target = tape.constant(Tensor::vector(vec![1.0, 1.0]));
        let loss = tape.mse_loss(bound.var("a").unwrap(), target).unwrap();
        let g = tape.backward(loss, &bound).unwrap();
        adam_step(&mut p, &g, &mut s).unwrap();
        let v = p.get("a").unwrap().data();
        assert_eq!(v[0], v[1]);
        assert!(s.second_moment(0).data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut p = one_param(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        let other = GradientRecord::zeros_like(&ParamSet::new());
        assert!(adam_step(&mut p, &other, &mut s).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let mut bad = TrainConfig::default();
        bad.adam.lr = -1.0;
        assert!(bad.validate().is_err());
    }
}
