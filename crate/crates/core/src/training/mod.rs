//! Score-matching training: loss, label dropout, Adam, checkpoints and the
//! training loop.

mod adam;
mod checkpoint;
mod loss;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, load_checkpoint_for_vocab, save_checkpoint, FORMAT_VERSION};
pub use loss::{apply_cfg_dropout, loss_and_grad, loss_value, score_loss, Batch, Perturbation};

use crate::error::{Error, Result};
use crate::network::{DagNetwork, ScoreModel};
use crate::nn::Module;
use crate::schedule::NoiseSchedule;

/// Noise positions `t` used for validation loss.
pub const VALIDATION_TIMES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability of replacing a label with the null token.
    pub cfg_dropout: f64,
    pub max_steps: u64,
    pub seed: u64,
    /// Training crop length in samples.
    pub crop_length: usize,
    pub log_every: u64,
    pub validate_every: u64,
    pub checkpoint_every: u64,
    /// Losses above this (or non-finite) abort training.
    pub divergence_threshold: f64,
    /// Not serialized; a run configuration supplies it from its shared table.
    #[serde(skip)]
    pub schedule: NoiseSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 1e-4,
            cfg_dropout: 0.1,
            max_steps: 100_000,
            seed: 0,
            crop_length: 48_000,
            log_every: 100,
            validate_every: 1000,
            checkpoint_every: 5000,
            divergence_threshold: 1e6,
            schedule: NoiseSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cfg_dropout) {
            return Err(Error::config("cfg_dropout must lie in [0, 1]"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: u64,
    pub network: DagNetwork,
    pub optimizer: Adam,
    /// Drives label dropout, noise levels and perturbation noise.
    pub rng: ChaCha8Rng,
    /// Drives batch selection and cropping.
    pub data_rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(network: DagNetwork, config: &TrainConfig) -> Self {
        let optimizer = Adam::new(&network);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut data_rng = ChaCha8Rng::seed_from_u64(config.seed);
        data_rng.set_stream(2);
        Self {
            step: 0,
            network,
            optimizer,
            rng,
            data_rng,
        }
    }
}

/// One optimizer update on `batch`; returns the pre-update training loss.
pub fn train_step(state: &mut TrainState, batch: &Batch, config: &TrainConfig) -> Result<f64> {
    let labels = apply_cfg_dropout(&batch.labels, config.cfg_dropout, &mut state.rng);
    let (b, len) = batch.waveforms.dim();
    let pert = Perturbation::draw(b, len, &config.schedule, &mut state.rng);
    let noisy = pert.apply(&batch.waveforms);

    state.network.zero_grad();
    let forward = state.network.forward_train(&noisy, &labels, &pert.sigmas);
    let (scores, cache) = match forward {
        Ok(v) => v,
        Err(Error::NonFinite { .. }) => {
            return Err(Error::Divergence {
                step: state.step,
                loss: f64::NAN,
            })
        }
        Err(e) => return Err(e),
    };
    let (loss, dscores) = loss_and_grad(&scores, &pert);
    if !loss.is_finite() || loss > config.divergence_threshold {
        return Err(Error::Divergence {
            step: state.step,
            loss,
        });
    }
    state.network.backward(&cache, &dscores);
    state
        .optimizer
        .step(&mut state.network, config.learning_rate);
    state.step += 1;
    Ok(loss)
}

/// Mean loss over [`VALIDATION_TIMES`] with noise fixed by `seed`.
pub fn validation_loss<M: ScoreModel + ?Sized>(
    model: &M,
    batch: &Batch,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, len) = batch.waveforms.dim();
    let mut total = 0.0;
    for &t in &VALIDATION_TIMES {
        let pert = Perturbation::at_times(&vec![t; b], len, schedule, &mut rng)?;
        let scores = model.score(&pert.apply(&batch.waveforms), &batch.labels, &pert.sigmas)?;
        total += loss_value(&scores, &pert);
    }
    Ok(total / VALIDATION_TIMES.len() as f64)
}

/// Supplies training batches of fixed crop length.
pub trait BatchSource {
    fn next_batch(&mut self, batch_size: usize, crop: usize, rng: &mut ChaCha8Rng)
        -> Result<Batch>;
}

/// CSV log with columns `step,train_loss,val_loss,wall_time`.
pub struct LossLog<W: Write> {
    out: W,
    started: Instant,
}

impl<W: Write> LossLog<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "step,train_loss,val_loss,wall_time")?;
        Ok(Self {
            out,
            started: Instant::now(),
        })
    }

    /// Continues an existing log without repeating the header.
    pub fn appending(out: W) -> Self {
        Self {
            out,
            started: Instant::now(),
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    pub fn record(&mut self, step: u64, train: f64, val: Option<f64>) -> Result<()> {
        let val = val.map(|v| v.to_string()).unwrap_or_default();
        let wall = self.started.elapsed().as_secs_f64();
        writeln!(self.out, "{step},{train},{val},{wall:.3}")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Where the training loop writes checkpoints.
#[derive(Debug, Clone)]
pub struct CheckpointDir(pub PathBuf);

impl CheckpointDir {
    pub fn latest(&self) -> PathBuf {
        self.0.join("latest.ckpt")
    }

    pub fn diverged(&self) -> PathBuf {
        self.0.join("diverged.ckpt")
    }
}

/// Runs training until `config.max_steps`; resumes from `state.step`.
///
/// On divergence the last good state is saved to `diverged.ckpt` (when a
/// checkpoint directory is given) before the error is returned.
pub fn fit<S: BatchSource, W: Write>(
    state: &mut TrainState,
    source: &mut S,
    validation: Option<&Batch>,
    config: &TrainConfig,
    log: &mut LossLog<W>,
    checkpoints: Option<&CheckpointDir>,
) -> Result<()> {
    config.validate()?;
    let mut window = 0.0;
    let mut count = 0u64;
    while state.step < config.max_steps {
        let batch =
            source.next_batch(config.batch_size, config.crop_length, &mut state.data_rng)?;
        let loss = match train_step(state, &batch, config) {
            Ok(l) => l,
            Err(err @ Error::Divergence { .. }) => {
                // a diverged step never reaches the optimizer, so the weights are still good
                if let Some(dir) = checkpoints {
                    warn!("training diverged; saving last good state");
                    save_checkpoint(state, &dir.diverged())?;
                }
                return Err(err);
            }
            Err(e) => return Err(e),
        };
        window += loss;
        count += 1;
        let step = state.step;
        let validate = validation.is_some()
            && config.validate_every > 0
            && step.is_multiple_of(config.validate_every);
        if step.is_multiple_of(config.log_every.max(1)) || validate || step == config.max_steps {
            let val = match (validate, validation) {
                (true, Some(v)) => Some(validation_loss(
                    &state.network,
                    v,
                    &config.schedule,
                    config.seed,
                )?),
                _ => None,
            };
            let mean = window / count as f64;
            info!("step {step}: train {mean:.5} val {val:?}");
            log.record(step, mean, val)?;
            window = 0.0;
            count = 0;
        }
        if let Some(dir) = checkpoints {
            if config.checkpoint_every > 0 && step.is_multiple_of(config.checkpoint_every) {
                save_checkpoint(state, &dir.latest())?;
            }
        }
    }
    if let Some(dir) = checkpoints {
        save_checkpoint(state, &dir.latest())?;
    }
    Ok(())
}
