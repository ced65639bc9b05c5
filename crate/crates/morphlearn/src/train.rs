//! Training loop: Adam over the flattened network parameters, mini-batches
//! shuffled by a seeded generator, reduce-on-plateau learning-rate scheduling
//! and plateau-based convergence detection. Everything is deterministic given
//! the seed: identical runs produce bit-identical loss histories.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::Network;
use crate::{scalar, Scalar};

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    /// epochs without improvement before the learning rate is divided
    pub plateau_patience_lr: usize,
    pub lr_decay_factor: f64,
    /// epochs without improvement before training stops
    pub plateau_patience_stop: usize,
    /// safety bound on the epoch count
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            initial_lr: 0.01,
            plateau_patience_lr: 5,
            lr_decay_factor: 10.0,
            plateau_patience_stop: 10,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0
            || self.plateau_patience_lr == 0
            || self.plateau_patience_stop == 0
            || self.max_epochs == 0
        {
            return Err(Error::InvalidConfig("counts must be positive".into()));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::InvalidConfig("initial_lr must be positive".into()));
        }
        if !(self.lr_decay_factor > 1.0) {
            return Err(Error::InvalidConfig(
                "lr_decay_factor must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// First/second moment buffers and the step counter of the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            beta1: scalar(0.9),
            beta2: scalar(0.999),
            epsilon: scalar(1e-8),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: T) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let one = T::one();
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (one - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (one - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauAction {
    Continue,
    /// learning rate was just divided by the decay factor
    Reduced,
    /// the stop patience elapsed: training has converged
    Stop,
}

/// Reduce-on-plateau schedule with a second, longer patience that signals
/// convergence. An epoch improves when its loss beats the best seen so far by
/// more than the relative tolerance; anything else is plateau.
#[derive(Debug, Clone)]
pub struct PlateauSchedule<T> {
    lr: T,
    decay: T,
    rel_tol: T,
    patience_lr: usize,
    patience_stop: usize,
    best: Option<T>,
    lr_wait: usize,
    stop_wait: usize,
}

pub const PLATEAU_REL_TOL: f64 = 1e-4;

impl<T: Scalar> PlateauSchedule<T> {
    pub fn new(initial_lr: T, decay: T, patience_lr: usize, patience_stop: usize) -> Self {
        Self {
            lr: initial_lr,
            decay,
            rel_tol: scalar(PLATEAU_REL_TOL),
            patience_lr,
            patience_stop,
            best: None,
            lr_wait: 0,
            stop_wait: 0,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(
            scalar(cfg.initial_lr),
            scalar(cfg.lr_decay_factor),
            cfg.plateau_patience_lr,
            cfg.plateau_patience_stop,
        )
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    /// Feed one epoch loss; decides whether to keep going, cut the learning
    /// rate, or stop.
    pub fn update(&mut self, loss: T) -> PlateauAction {
        let improved = match self.best {
            None => true,
            Some(best) => loss < best * (T::one() - self.rel_tol),
        };
        if improved {
            self.best = Some(loss);
            self.lr_wait = 0;
            self.stop_wait = 0;
            return PlateauAction::Continue;
        }
        self.lr_wait += 1;
        self.stop_wait += 1;
        if self.stop_wait >= self.patience_stop {
            return PlateauAction::Stop;
        }
        if self.lr_wait >= self.patience_lr {
            self.lr = self.lr / self.decay;
            self.lr_wait = 0;
            return PlateauAction::Reduced;
        }
        PlateauAction::Continue
    }
}

/// Convenience wrapper over [`PlateauSchedule::update`].
pub fn plateau_update<T: Scalar>(sched: &mut PlateauSchedule<T>, loss: T) -> PlateauAction {
    sched.update(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats<T> {
    pub epoch: usize,
    pub mean_loss: T,
    pub lr: T,
}

#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    pub network: Network<T>,
    pub history: Vec<EpochStats<T>>,
    /// the stop-patience plateau was reached
    pub converged: bool,
    /// the divergence guard fired (loss grew more than tenfold in one epoch)
    pub diverged: bool,
}

impl<T: Scalar> TrainResult<T> {
    pub fn final_loss(&self) -> T {
        self.history
            .last()
            .map(|e| e.mean_loss)
            .unwrap_or_else(T::nan)
    }

    pub fn epochs(&self) -> usize {
        self.history.len()
    }
}

/// Factor by which the epoch loss may grow before the run is flagged divergent.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Train a network on (input, target) pairs with mini-batch MSE.
///
/// Epochs shuffle the dataset with a ChaCha generator seeded from the config;
/// batch gradients are the mean of per-sample gradients, applied through Adam
/// and the per-layer domain projection. Training ends at the stop plateau, at
/// `max_epochs`, or the moment the divergence guard fires.
pub fn train<T: Scalar>(
    net: Network<T>,
    data: &[(Image<T>, Image<T>)],
    cfg: &TrainConfig,
) -> Result<TrainResult<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (f, t) in data {
        if !f.same_dims(&data[0].0) || !t.same_dims(&data[0].1) {
            return Err(Error::DimensionMismatch(
                "training pairs must share dimensions".into(),
            ));
        }
    }

    let mut net = net;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = net.trainable_params();
    let mut adam = AdamState::new(params.len());
    let mut sched = PlateauSchedule::from_config(cfg);
    let mut history = Vec::new();
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let n = scalar::<T>(data.len() as f64);
    let mut converged = false;
    let mut diverged = false;

    for epoch in 1..=cfg.max_epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = T::zero();
        for batch in indices.chunks(cfg.batch_size) {
            let mut grad_acc = vec![T::zero(); params.len()];
            for &idx in batch {
                let (f, target) = &data[idx];
                let (loss, grads) = net.loss_and_gradients(f, target)?;
                loss_sum += loss;
                for (acc, g) in grad_acc.iter_mut().zip(&grads) {
                    *acc += *g;
                }
            }
            let inv = T::one() / scalar::<T>(batch.len() as f64);
            for g in grad_acc.iter_mut() {
                *g *= inv;
            }
            adam_step(&mut params, &grad_acc, &mut adam, sched.lr());
            net.project_params(&mut params);
            net.apply_trainable(&params);
        }
        let mean_loss = loss_sum / n;
        history.push(EpochStats {
            epoch,
            mean_loss,
            lr: sched.lr(),
        });

        if let Some(prev) = history.len().checked_sub(2).map(|i| history[i].mean_loss) {
            if mean_loss > prev * scalar(DIVERGENCE_FACTOR) {
                diverged = true;
                break;
            }
        }
        if sched.update(mean_loss) == PlateauAction::Stop {
            converged = true;
            break;
        }
    }

    Ok(TrainResult {
        network: net,
        history,
        converged,
        diverged,
    })
}
