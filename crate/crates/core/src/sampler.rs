//! Noise-consistent Langevin sampling with classifier-free guidance and
//! peak-rescaling of the denoised estimate.
//!
//! One step from level `sigma` to `sigma_next` with weights `(eta, beta)`:
//!
//! ```text
//! x0_hat = x + sigma^2 * S           (rescaled by its peak if that exceeds 1)
//! x_next = (1 - eta) * x + eta * x0_hat + beta * sigma_next * z
//! ```
//!
//! With `x0_hat` in range this is `x + eta sigma^2 S + beta sigma_next z`.
//!
//! Noise is drawn from a fresh ChaCha8 stream per `(seed, sample index, step)`,
//! so a sample's waveform does not depend on the batch it was generated in.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Label, ScoreModel};
use crate::schedule::{NoiseSchedule, StepCoefficients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub steps: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    pub threshold: bool,
    /// Index of the first row; lets separate calls produce disjoint noise.
    pub first_index: u64,
    /// Not serialized; a run configuration supplies it from its shared table.
    #[serde(skip)]
    pub schedule: NoiseSchedule,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            alpha: 2.0,
            gamma: 2.0,
            seed: 0,
            threshold: true,
            first_index: 0,
            schedule: NoiseSchedule::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("at least one sampling step is required"));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!(
                "alpha must be >= 1, got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// `(1 + gamma) S(x, c, sigma) - gamma S(x, null, sigma)`; one forward pass when `gamma == 0`.
pub fn guided_score<M: ScoreModel + ?Sized>(
    model: &M,
    x: &Array2<f64>,
    labels: &[Label],
    sigmas: &[f64],
    gamma: f64,
) -> Result<Array2<f64>> {
    let cond = model.score(x, labels, sigmas)?;
    if gamma == 0.0 {
        return Ok(cond);
    }
    let null = model.score(x, &vec![Label::Null; labels.len()], sigmas)?;
    Ok(cond * (1.0 + gamma) - null * gamma)
}

/// `x + sigma^2 * score`.
pub fn denoised_estimate(
    x: ArrayView1<'_, f64>,
    score: ArrayView1<'_, f64>,
    sigma: f64,
) -> Vec<f64> {
    let s2 = sigma * sigma;
    x.iter()
        .zip(score.iter())
        .map(|(x, s)| x + s2 * s)
        .collect()
}

/// Divides by the peak absolute value when it exceeds 1. Returns the peak before rescaling.
pub fn rescale_threshold(x: &mut [f64]) -> f64 {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
    peak
}

/// Per-row diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// `max |x0_hat|` after rescaling (before rescaling when thresholding is off).
    pub peak: f64,
    pub score_norm: f64,
}

/// Updates one waveform in place from `sigma` to `sigma_next`.
pub fn langevin_step(
    mut x: ArrayViewMut1<'_, f64>,
    score: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
    sigma: f64,
    sigma_next: f64,
    coeffs: StepCoefficients,
    threshold: bool,
) -> StepStats {
    let StepCoefficients { eta, beta } = coeffs;
    let score_norm = score.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mut x0 = denoised_estimate(x.view(), score, sigma);
    if threshold {
        rescale_threshold(&mut x0);
    }
    let peak = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if threshold {
        Zip::from(&mut x)
            .and(&ArrayView1::from(&x0[..]))
            .and(&z)
            .for_each(|x, &x0, &z| *x = (1.0 - eta) * *x + eta * x0 + beta * sigma_next * z);
    } else {
        let s2 = sigma * sigma;
        Zip::from(&mut x)
            .and(&score)
            .and(&z)
            .for_each(|x, &s, &z| *x += eta * s2 * s + beta * sigma_next * z);
    }
    StepStats { peak, score_norm }
}

const INIT_TAG: u64 = 0x696e_6974;
const STEP_TAG: u64 = 0x7374_6570;

/// Independent generator for `(seed, sample index, step index)`.
pub fn noise_stream(seed: u64, sample: u64, step: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, sample, step, tag]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn normal_row(rng: &mut ChaCha8Rng, len: usize) -> impl Iterator<Item = f64> + '_ {
    (0..len).map(move |_| rng.sample::<f64, _>(StandardNormal))
}

/// Trace of one run: `stats[step][row]`, `sigmas[step]` is the level the step starts from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTrace {
    pub sigmas: Vec<f64>,
    pub stats: Vec<Vec<StepStats>>,
}

impl SampleTrace {
    pub fn max_peak(&self) -> f64 {
        self.stats
            .iter()
            .flatten()
            .fold(0.0f64, |m, s| m.max(s.peak))
    }

    /// CSV with columns `step,sample,sigma,peak,score_norm`.
    pub fn write_csv<W: Write>(&self, mut out: W, first_index: u64) -> Result<()> {
        writeln!(out, "step,sample,sigma,peak,score_norm")?;
        for (step, (sigma, rows)) in self.sigmas.iter().zip(&self.stats).enumerate() {
            for (i, s) in rows.iter().enumerate() {
                let idx = first_index + i as u64;
                writeln!(out, "{step},{idx},{sigma},{},{}", s.peak, s.score_norm)?;
            }
        }
        Ok(())
    }
}

/// Generated waveforms `(rows, length)` plus the per-step trace.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub waveforms: Array2<f64>,
    pub trace: SampleTrace,
}

fn run<M: ScoreModel + ?Sized>(
    model: &M,
    labels: &[Label],
    mut x: Array2<f64>,
    config: &SamplerConfig,
) -> Result<SampleRun> {
    config.validate()?;
    let levels = config.schedule.discretize(config.steps)?;
    let coeffs = StepCoefficients::new(levels.delta(), config.alpha)?;
    let (rows, len) = x.dim();
    let mut trace = SampleTrace::default();
    for (step, (sigma, sigma_next)) in levels.transitions().enumerate() {
        let sigmas = vec![sigma; rows];
        let score = guided_score(model, &x, labels, &sigmas, config.gamma)?;
        if let Some(pos) = score.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!(
                    "guided score at step {step} (sigma {sigma:.3e}, row {}, sample {})",
                    pos / len,
                    pos % len
                ),
            });
        }
        let mut row_stats = Vec::with_capacity(rows);
        for (i, (xr, sr)) in x.outer_iter_mut().zip(score.outer_iter()).enumerate() {
            let mut rng = noise_stream(
                config.seed,
                config.first_index + i as u64,
                step as u64,
                STEP_TAG,
            );
            let z: Vec<f64> = normal_row(&mut rng, len).collect();
            row_stats.push(langevin_step(
                xr,
                sr,
                ArrayView1::from(&z[..]),
                sigma,
                sigma_next,
                coeffs,
                config.threshold,
            ));
        }
        trace.sigmas.push(sigma);
        trace.stats.push(row_stats);
    }
    Ok(SampleRun {
        waveforms: x,
        trace,
    })
}

fn initial_noise(rows: usize, len: usize, config: &SamplerConfig) -> Array2<f64> {
    let sigma_max = config.schedule.sigma_max();
    let mut x = Array2::zeros((rows, len));
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        let mut rng = noise_stream(config.seed, config.first_index + i as u64, 0, INIT_TAG);
        for (v, z) in row.iter_mut().zip(normal_row(&mut rng, len)) {
            *v = sigma_max * z;
        }
    }
    x
}

/// Generates one waveform per label, starting from `sigma_max * z`.
pub fn sample<M: ScoreModel + ?Sized>(
    model: &M,
    labels: &[Label],
    length: usize,
    config: &SamplerConfig,
) -> Result<SampleRun> {
    run(
        model,
        labels,
        initial_noise(labels.len(), length, config),
        config,
    )
}

/// Like [`sample`] but starting from `y + sigma_max * z`; rows of `y` must lie in `[-1, 1]`.
pub fn style_transfer<M: ScoreModel + ?Sized>(
    model: &M,
    y: &Array2<f64>,
    labels: &[Label],
    config: &SamplerConfig,
) -> Result<SampleRun> {
    if y.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} inputs but {} labels",
            y.nrows(),
            labels.len()
        )));
    }
    if y.iter().any(|v| !(v.abs() <= 1.0)) {
        return Err(Error::domain(
            "style-transfer input must be peak-normalized to [-1, 1]",
        ));
    }
    let x = initial_noise(y.nrows(), y.ncols(), config) + y;
    run(model, labels, x, config)
}

/// [`sample`] in groups of at most `chunk` rows; the result equals a single call.
pub fn sample_chunked<M: ScoreModel + ?Sized>(
    model: &M,
    labels: &[Label],
    length: usize,
    config: &SamplerConfig,
    chunk: usize,
) -> Result<SampleRun> {
    let chunk = chunk.max(1);
    let mut waveforms = Array2::zeros((labels.len(), length));
    let mut trace = SampleTrace::default();
    for (k, group) in labels.chunks(chunk).enumerate() {
        let cfg = SamplerConfig {
            first_index: config.first_index + (k * chunk) as u64,
            ..config.clone()
        };
        let part = sample(model, group, length, &cfg)?;
        waveforms
            .slice_mut(ndarray::s![k * chunk..k * chunk + group.len(), ..])
            .assign(&part.waveforms);
        if k == 0 {
            trace = part.trace;
        } else {
            for (all, rows) in trace.stats.iter_mut().zip(part.trace.stats) {
                all.extend(rows);
            }
        }
    }
    Ok(SampleRun { waveforms, trace })
}
