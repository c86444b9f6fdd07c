use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{EmbeddingSet, LogitMatrix};
use crate::error::{Error, Result};

/// Maps a clip to a fixed-length vector.
pub trait EmbeddingFrontEnd {
    fn sample_rate(&self) -> u32;
    fn dim(&self) -> usize;
    fn embed(&self, clip: &[f64]) -> Vec<f64>;
}

/// Offset added to mel energies before the log; masks sub-audible floors.
pub const LOG_MEL_OFFSET: f64 = 1e-2;

/// Per-band mean and standard deviation of a log-mel spectrogram.
#[derive(Debug, Clone)]
pub struct LogMelFrontEnd {
    sample_rate: u32,
    window: usize,
    hop: usize,
    n_fft: usize,
    /// `(bands, n_fft / 2 + 1)` triangular filters.
    filters: Vec<Vec<(usize, f64)>>,
    hann: Vec<f64>,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl LogMelFrontEnd {
    pub const BANDS: usize = 64;

    /// 25 ms Hann windows every 10 ms.
    pub fn new(sample_rate: u32) -> Self {
        Self::with_bands(sample_rate, Self::BANDS)
    }

    pub fn with_bands(sample_rate: u32, bands: usize) -> Self {
        let sr = sample_rate as f64;
        let window = ((0.025 * sr).round() as usize).max(2);
        let hop = ((0.010 * sr).round() as usize).max(1);
        let n_fft = window.next_power_of_two().max(512);
        let bins = n_fft / 2 + 1;
        let top = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
            .collect();
        let filters = (0..bands)
            .map(|b| {
                let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..bins)
                    .filter_map(|k| {
                        let f = k as f64 * sr / n_fft as f64;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        let hann = (0..window)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / window as f64).cos())
            .collect();
        Self {
            sample_rate,
            window,
            hop,
            n_fft,
            filters,
            hann,
        }
    }

    /// Log-mel frames `(frames, bands)`.
    pub fn log_mel(&self, clip: &[f64]) -> Vec<Vec<f64>> {
        let frames = if clip.len() <= self.window {
            1
        } else {
            1 + (clip.len() - self.window) / self.hop
        };
        let fft = FftPlanner::<f64>::new().plan_fft_forward(self.n_fft);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        (0..frames)
            .map(|f| {
                let start = f * self.hop;
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for (i, w) in self.hann.iter().enumerate() {
                    let v = clip.get(start + i).copied().unwrap_or(0.0);
                    buf[i] = Complex::new(v * w, 0.0);
                }
                fft.process(&mut buf);
                self.filters
                    .iter()
                    .map(|taps| {
                        let e: f64 = taps.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
                        (e + LOG_MEL_OFFSET).ln()
                    })
                    .collect()
            })
            .collect()
    }
}

impl EmbeddingFrontEnd for LogMelFrontEnd {
    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn dim(&self) -> usize {
        2 * self.filters.len()
    }

    fn embed(&self, clip: &[f64]) -> Vec<f64> {
        let frames = self.log_mel(clip);
        let bands = self.filters.len();
        let n = frames.len() as f64;
        let mut out = vec![0.0; 2 * bands];
        for b in 0..bands {
            let mean = frames.iter().map(|f| f[b]).sum::<f64>() / n;
            let var = frames.iter().map(|f| (f[b] - mean).powi(2)).sum::<f64>() / n;
            out[b] = mean;
            out[bands + b] = var.sqrt();
        }
        out
    }
}

/// Embeds each clip; clips must be at the front-end's sample rate.
pub fn embed_audio<F: EmbeddingFrontEnd + ?Sized>(
    clips: &[Vec<f64>],
    sample_rate: u32,
    front_end: &F,
    source_tag: &str,
) -> Result<EmbeddingSet> {
    if sample_rate != front_end.sample_rate() {
        return Err(Error::domain(format!(
            "clips are at {sample_rate} Hz but the front-end expects {} Hz",
            front_end.sample_rate()
        )));
    }
    let rows: Vec<Vec<f64>> = clips.iter().map(|c| front_end.embed(c)).collect();
    if rows.is_empty() {
        return EmbeddingSet::new(DMatrix::zeros(0, front_end.dim()), source_tag);
    }
    EmbeddingSet::from_rows(&rows, source_tag)
}

/// Power-weighted mean frequency of the whole clip, in Hz.
pub fn spectral_centroid(clip: &[f64], sample_rate: u32) -> f64 {
    let n = clip.len().next_power_of_two().max(2);
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(clip.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::<f64>::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = c.norm_sqr();
        num += p * k as f64 * sample_rate as f64 / n as f64;
        den += p;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Nearest-class-mean classifier on embeddings; logits are negative squared
/// distances scaled by the pooled within-class variance.
#[derive(Debug, Clone)]
pub struct NearestCentroid {
    centroids: DMatrix<f64>,
    scale: f64,
}

impl NearestCentroid {
    pub fn fit(set: &EmbeddingSet, labels: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != set.len() {
            return Err(Error::shape("one label per embedding is required"));
        }
        let d = set.dim();
        let mut centroids = DMatrix::zeros(classes, d);
        let mut counts = vec![0usize; classes];
        for (row, &l) in set.embeddings.row_iter().zip(labels) {
            if l >= classes {
                return Err(Error::domain(format!(
                    "label {l} outside {classes} classes"
                )));
            }
            let mut c = centroids.row_mut(l);
            c += row;
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Dataset(format!(
                "class {empty} has no reference embeddings"
            )));
        }
        for (mut row, &c) in centroids.row_iter_mut().zip(&counts) {
            row /= c as f64;
        }
        let spread: f64 = set
            .embeddings
            .row_iter()
            .zip(labels)
            .map(|(r, &l)| (r - centroids.row(l)).norm_squared())
            .sum::<f64>()
            / set.len() as f64;
        Ok(Self {
            centroids,
            scale: spread.max(1e-12),
        })
    }

    pub fn logits(&self, set: &EmbeddingSet) -> Result<LogitMatrix> {
        let c = self.centroids.nrows();
        let logits = DMatrix::from_fn(set.len(), c, |i, k| {
            -(set.embeddings.row(i) - self.centroids.row(k)).norm_squared() / self.scale
        });
        LogitMatrix::new(logits)
    }

    pub fn predict(&self, set: &EmbeddingSet) -> Result<Vec<usize>> {
        let logits = self.logits(set)?;
        Ok(logits
            .logits
            .row_iter()
            .map(|r| r.transpose().argmax().0)
            .collect())
    }
}
