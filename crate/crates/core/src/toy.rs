//! End-to-end run on the synthetic two-class corpus: train a small network,
//! sample with and without guidance, and score the samples.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;

use crate::data::{ClipBank, ToyCorpus};
use crate::error::{Error, Result};
use crate::metrics::{embed_audio, frechet_distance_sets, spectral_centroid, LogMelFrontEnd};
use crate::network::{DagConfig, DagNetwork, Label, ScoreModel};
use crate::sampler::{sample_chunked, SamplerConfig};
use crate::training::{fit, LossLog, TrainConfig, TrainState};

#[derive(Debug, Clone)]
pub struct ToyExperiment {
    pub corpus: ToyCorpus,
    pub network: DagConfig,
    pub training: TrainConfig,
    pub train_per_class: usize,
    pub reference_per_class: usize,
    pub samples_per_class: usize,
    pub sampler: SamplerConfig,
    /// Guidance weights to sample with.
    pub gammas: Vec<f64>,
    pub data_seed: u64,
    pub network_seed: u64,
}

impl Default for ToyExperiment {
    fn default() -> Self {
        let corpus = ToyCorpus::default();
        Self {
            corpus,
            network: DagConfig::toy(2),
            training: TrainConfig {
                batch_size: 8,
                learning_rate: 2e-3,
                max_steps: 4_000,
                crop_length: corpus.clip_len,
                log_every: 100,
                validate_every: 500,
                checkpoint_every: 0,
                ..TrainConfig::default()
            },
            train_per_class: 200,
            reference_per_class: 100,
            samples_per_class: 100,
            sampler: SamplerConfig::default(),
            gammas: vec![2.0, 0.0],
            data_seed: 1,
            network_seed: 0,
        }
    }
}

/// Two-class classifier thresholding the spectral centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidThreshold {
    pub sample_rate: u32,
    pub threshold_hz: f64,
    /// Class whose clips lie below the threshold.
    pub low_class: usize,
}

impl CentroidThreshold {
    /// Threshold halfway between the two class-mean centroids.
    pub fn fit(bank: &ClipBank, sample_rate: u32) -> Result<Self> {
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        for (clip, &l) in bank.clips.iter().zip(&bank.labels) {
            if l > 1 {
                return Err(Error::domain("centroid threshold handles two classes"));
            }
            sums[l] += spectral_centroid(clip, sample_rate);
            counts[l] += 1;
        }
        if counts.contains(&0) {
            return Err(Error::Dataset("both classes need reference clips".into()));
        }
        let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
        Ok(Self {
            sample_rate,
            threshold_hz: 0.5 * (means[0] + means[1]),
            low_class: if means[0] <= means[1] { 0 } else { 1 },
        })
    }

    pub fn classify(&self, clip: &[f64]) -> usize {
        if spectral_centroid(clip, self.sample_rate) < self.threshold_hz {
            self.low_class
        } else {
            1 - self.low_class
        }
    }
}

#[derive(Debug, Clone)]
pub struct GuidanceResult {
    pub gamma: f64,
    /// Rows alternate between class 0 and class 1.
    pub waveforms: Array2<f64>,
    pub labels: Vec<usize>,
    /// Spectral centroids per conditioning class.
    pub centroids: [Vec<f64>; 2],
    pub accuracy: f64,
    /// `fd[g][r]`: generated class `g` against real class `r`.
    pub fd: [[f64; 2]; 2],
    pub sample_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ToyReport {
    /// CSV loss log as written during training.
    pub loss_log: String,
    pub train_secs: f64,
    pub classifier: CentroidThreshold,
    pub results: Vec<GuidanceResult>,
}

impl ToyReport {
    pub fn result(&self, gamma: f64) -> Option<&GuidanceResult> {
        self.results.iter().find(|r| r.gamma == gamma)
    }
}

impl ToyExperiment {
    pub fn train_bank(&self) -> ClipBank {
        self.corpus.generate(self.train_per_class, self.data_seed)
    }

    /// Held-out real clips used for the classifier threshold and FD.
    pub fn reference_bank(&self) -> ClipBank {
        self.corpus
            .generate(self.reference_per_class, self.data_seed.wrapping_add(1))
    }

    pub fn train<W: Write>(&self, log: &mut LossLog<W>) -> Result<TrainState> {
        let network = DagNetwork::new(self.network.clone(), self.network_seed)?;
        let mut state = TrainState::new(network, &self.training);
        let mut bank = self.train_bank();
        let validation = self
            .corpus
            .generate(8, self.data_seed.wrapping_add(2))
            .fixed_batch(self.training.crop_length)?;
        fit(
            &mut state,
            &mut bank,
            Some(&validation),
            &self.training,
            log,
            None,
        )?;
        Ok(state)
    }

    pub fn evaluate<M: ScoreModel + ?Sized>(
        &self,
        model: &M,
    ) -> Result<(CentroidThreshold, Vec<GuidanceResult>)> {
        let rate = self.corpus.sample_rate;
        let reference = self.reference_bank();
        let classifier = CentroidThreshold::fit(&reference, rate)?;
        let fe = LogMelFrontEnd::new(rate);
        let real: Vec<_> = (0..2)
            .map(|c| {
                let clips: Vec<Vec<f64>> = reference
                    .clips
                    .iter()
                    .zip(&reference.labels)
                    .filter(|(_, &l)| l == c)
                    .map(|(x, _)| x.clone())
                    .collect();
                embed_audio(&clips, rate, &fe, &format!("real_{c}"))
            })
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = (0..2 * self.samples_per_class).map(|i| i % 2).collect();
        let conditioning: Vec<Label> = labels.iter().map(|&l| Label::Class(l)).collect();
        let length = self.corpus.clip_len;
        let mut results = Vec::new();
        for &gamma in &self.gammas {
            let cfg = SamplerConfig {
                gamma,
                ..self.sampler.clone()
            };
            let start = Instant::now();
            let run = sample_chunked(model, &conditioning, length, &cfg, 8)?;
            let sample_secs = start.elapsed().as_secs_f64();
            let mut centroids = [Vec::new(), Vec::new()];
            let mut generated = [Vec::new(), Vec::new()];
            let mut correct = 0;
            for (row, &l) in run.waveforms.outer_iter().zip(&labels) {
                let clip = row.to_vec();
                centroids[l].push(spectral_centroid(&clip, rate));
                if classifier.classify(&clip) == l {
                    correct += 1;
                }
                generated[l].push(clip);
            }
            let mut fd = [[0.0; 2]; 2];
            for g in 0..2 {
                let set = embed_audio(&generated[g], rate, &fe, &format!("generated_{g}"))?;
                for r in 0..2 {
                    fd[g][r] = frechet_distance_sets(&real[r], &set)?;
                }
            }
            results.push(GuidanceResult {
                gamma,
                waveforms: run.waveforms,
                labels: labels.clone(),
                centroids,
                accuracy: correct as f64 / labels.len() as f64,
                fd,
                sample_secs,
            });
        }
        Ok((classifier, results))
    }

    pub fn run(&self) -> Result<ToyReport> {
        let start = Instant::now();
        let mut log = LossLog::new(Vec::new())?;
        let state = self.train(&mut log)?;
        let train_secs = start.elapsed().as_secs_f64();
        let loss_log =
            String::from_utf8(log.into_inner()).map_err(|e| Error::domain(e.to_string()))?;
        let (classifier, results) = self.evaluate(&state.network)?;
        Ok(ToyReport {
            loss_log,
            train_secs,
            classifier,
            results,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_separates_real_classes() {
        let corpus = ToyCorpus::default();
        let bank = corpus.generate(40, 5);
        let clf = CentroidThreshold::fit(&bank, corpus.sample_rate).unwrap();
        assert_eq!(clf.low_class, 0);
        assert!(
            (700.0..1300.0).contains(&clf.threshold_hz),
            "{}",
            clf.threshold_hz
        );
        let held_out = corpus.generate(40, 6);
        let correct = held_out
            .clips
            .iter()
            .zip(&held_out.labels)
            .filter(|(c, &l)| clf.classify(c) == l)
            .count();
        assert_eq!(correct, 80);
    }

    #[test]
    fn tiny_run_is_repeatable() {
        let exp = ToyExperiment {
            network: DagConfig::miniature(2),
            training: TrainConfig {
                max_steps: 3,
                crop_length: 64,
                batch_size: 2,
                log_every: 1,
                validate_every: 2,
                checkpoint_every: 0,
                ..TrainConfig::default()
            },
            corpus: ToyCorpus {
                clip_len: 64,
                ..ToyCorpus::default()
            },
            train_per_class: 4,
            reference_per_class: 4,
            samples_per_class: 2,
            sampler: SamplerConfig {
                steps: 3,
                ..SamplerConfig::default()
            },
            ..ToyExperiment::default()
        };
        let a = exp.run().unwrap();
        let b = exp.run().unwrap();
        assert_eq!(a.loss_log.lines().count(), 4);
        let strip = |s: &str| -> Vec<String> {
            s.lines()
                .map(|l| l.rsplit_once(',').unwrap().0.to_string())
                .collect()
        };
        assert_eq!(strip(&a.loss_log), strip(&b.loss_log));
        for (x, y) in a.results.iter().zip(&b.results) {
            assert_eq!(x.waveforms, y.waveforms);
            assert_eq!(x.centroids[0].len(), 2);
        }
    }
}
