//! Denoising score-matching objective.
//!
//! For clean `x0`, noise level `sigma_t` at `t ~ U(0, 1)` and `z ~ N(0, I)`,
//! the per-element loss is `0.5 * (sigma_t * S(x0 + sigma_t z, c, sigma_t) + z)^2`,
//! averaged over samples and batch rows.

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::network::{Label, ScoreModel};
use crate::schedule::NoiseSchedule;

/// A batch of clean waveforms `(batch, samples)` with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub waveforms: Array2<f64>,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn new(waveforms: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        if waveforms.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} waveforms but {} labels",
                waveforms.nrows(),
                labels.len()
            )));
        }
        Ok(Self { waveforms, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Noise levels and standard-normal draws for one batch.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub sigmas: Vec<f64>,
    pub noise: Array2<f64>,
}

impl Perturbation {
    /// Draws one `t` per row (all rows first), then the noise matrix row-major.
    pub fn draw<R: Rng + ?Sized>(
        batch: usize,
        len: usize,
        schedule: &NoiseSchedule,
        rng: &mut R,
    ) -> Self {
        let sigmas = (0..batch)
            .map(|_| schedule.sigma_at_unchecked(rng.random::<f64>()))
            .collect();
        let noise = Array2::from_shape_simple_fn((batch, len), || rng.sample(StandardNormal));
        Self { sigmas, noise }
    }

    /// Deterministic noise levels at fixed `t` values with seeded noise.
    pub fn at_times<R: Rng + ?Sized>(
        times: &[f64],
        len: usize,
        schedule: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        let sigmas = times
            .iter()
            .map(|&t| schedule.sigma_at(t))
            .collect::<Result<Vec<_>>>()?;
        let noise = Array2::from_shape_simple_fn((times.len(), len), || rng.sample(StandardNormal));
        Ok(Self { sigmas, noise })
    }

    /// `x_t = x0 + sigma_t * z`.
    pub fn apply(&self, clean: &Array2<f64>) -> Array2<f64> {
        let mut noisy = self.noise.clone();
        for ((mut row, clean_row), &sigma) in noisy
            .outer_iter_mut()
            .zip(clean.outer_iter())
            .zip(&self.sigmas)
        {
            row.zip_mut_with(&clean_row, |n, &c| *n = c + sigma * *n);
        }
        noisy
    }
}

/// Mean loss and its gradient with respect to the scores.
pub fn loss_and_grad(scores: &Array2<f64>, pert: &Perturbation) -> (f64, Array2<f64>) {
    let n = scores.len() as f64;
    let mut residual = scores.clone();
    for ((mut row, noise_row), &sigma) in residual
        .outer_iter_mut()
        .zip(pert.noise.outer_iter())
        .zip(&pert.sigmas)
    {
        row.zip_mut_with(&noise_row, |s, &z| *s = sigma * *s + z);
    }
    let loss = 0.5 * residual.iter().map(|r| r * r).sum::<f64>() / n;
    let mut grad = residual;
    for (mut row, &sigma) in grad.outer_iter_mut().zip(&pert.sigmas) {
        row *= sigma / n;
    }
    (loss, grad)
}

pub fn loss_value(scores: &Array2<f64>, pert: &Perturbation) -> f64 {
    let mut acc = 0.0;
    Zip::from(scores.rows())
        .and(pert.noise.rows())
        .and(&ndarray::ArrayView1::from(&pert.sigmas[..]))
        .for_each(|s, z, &sigma| {
            acc += s
                .iter()
                .zip(z.iter())
                .map(|(s, z)| {
                    let r = sigma * s + z;
                    r * r
                })
                .sum::<f64>();
        });
    0.5 * acc / scores.len() as f64
}

/// Monte-Carlo estimate of the score-matching loss for any score model.
pub fn score_loss<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    batch: &Batch,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    let (b, len) = batch.waveforms.dim();
    let pert = Perturbation::draw(b, len, schedule, rng);
    let scores = model.score(&pert.apply(&batch.waveforms), &batch.labels, &pert.sigmas)?;
    let loss = loss_value(&scores, &pert);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: format!("score loss (sigmas {:?})", pert.sigmas),
        });
    }
    Ok(loss)
}

/// Independent Bernoulli(`p`) replacement of labels by [`Label::Null`].
pub fn apply_cfg_dropout<R: Rng + ?Sized>(labels: &[Label], p: f64, rng: &mut R) -> Vec<Label> {
    labels
        .iter()
        .map(|&l| {
            if rng.random::<f64>() < p {
                Label::Null
            } else {
                l
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Score of a point mass at the batch's own clean signal.
    struct Teacher<'a> {
        clean: &'a Array2<f64>,
    }

    impl ScoreModel for Teacher<'_> {
        fn score(&self, x: &Array2<f64>, _: &[Label], sigmas: &[f64]) -> Result<Array2<f64>> {
            let mut s = x - self.clean;
            for (mut row, &sigma) in s.outer_iter_mut().zip(sigmas) {
                row *= -1.0 / (sigma * sigma);
            }
            Ok(s)
        }
    }

    struct Zero;

    impl ScoreModel for Zero {
        fn score(&self, x: &Array2<f64>, _: &[Label], _: &[f64]) -> Result<Array2<f64>> {
            Ok(Array2::zeros(x.dim()))
        }
    }

    fn toy_batch(rng: &mut ChaCha8Rng, b: usize, len: usize) -> Batch {
        let w = Array2::from_shape_simple_fn((b, len), || rng.random_range(-1.0..1.0));
        Batch::new(w, vec![Label::Class(0); b]).unwrap()
    }

    #[test]
    fn teacher_score_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = toy_batch(&mut rng, 4, 64);
        let teacher = Teacher {
            clean: &batch.waveforms,
        };
        let loss = score_loss(&teacher, &batch, &NoiseSchedule::default(), &mut rng).unwrap();
        assert!(loss < 1e-10, "{loss}");
    }

    #[test]
    fn zero_score_loss_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = toy_batch(&mut rng, 10, 1000);
        let loss = score_loss(&Zero, &batch, &NoiseSchedule::default(), &mut rng).unwrap();
        assert!((loss - 0.5).abs() < 0.01, "{loss}");
    }

    #[test]
    fn loss_is_deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = toy_batch(&mut rng, 3, 32);
        let s = NoiseSchedule::default();
        let a = score_loss(&Zero, &batch, &s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = score_loss(&Zero, &batch, &s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_matches_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pert = Perturbation::draw(2, 5, &NoiseSchedule::default(), &mut rng);
        let scores = Array2::from_shape_simple_fn((2, 5), || rng.random_range(-3.0..3.0));
        let (loss, grad) = loss_and_grad(&scores, &pert);
        assert!((loss - loss_value(&scores, &pert)).abs() < 1e-15);
        let eps = 1e-6;
        for idx in [(0, 0), (1, 3)] {
            let mut p = scores.clone();
            p[idx] += eps;
            let fp = loss_value(&p, &pert);
            p[idx] -= 2.0 * eps;
            let fm = loss_value(&p, &pert);
            assert!(((fp - fm) / (2.0 * eps) - grad[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<Label> = (0..100_000).map(|i| Label::Class(i % 7)).collect();
        assert_eq!(apply_cfg_dropout(&labels, 0.0, &mut rng), labels);
        let dropped = apply_cfg_dropout(&labels, 0.1, &mut rng);
        let frac = dropped.iter().filter(|l| **l == Label::Null).count() as f64 / 1e5;
        assert!((0.094..=0.106).contains(&frac), "{frac}");
        for (orig, new) in labels.iter().zip(&dropped) {
            assert!(*new == Label::Null || new == orig);
        }
        let nearly_all = apply_cfg_dropout(&labels[..1000], 0.999_999, &mut rng);
        assert!(nearly_all.iter().filter(|l| **l == Label::Null).count() >= 998);
    }
}
