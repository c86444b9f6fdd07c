//! Folder-per-label datasets, splits, batching and a synthetic two-class corpus.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::{peak_normalize, read_wav, resample, write_wav};
use crate::error::{Error, Result};
use crate::network::Label;
use crate::training::{Batch, BatchSource};

/// Environment variable overriding the dataset root.
pub const DATA_ROOT_ENV: &str = "WAVEDIFF_DATA_ROOT";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub path: PathBuf,
    pub label: usize,
    pub duration_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub root: PathBuf,
    /// Subdirectory names in lexicographic order; index = label id.
    pub vocabulary: Vec<String>,
    pub items: Vec<DatasetItem>,
    pub sample_rate: u32,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Indexes `root/<label>/*.wav`. Undecodable files are skipped with a warning.
pub fn ingest(root: &Path, target_rate: u32) -> Result<LabeledDataset> {
    let dirs: Vec<PathBuf> = sorted_entries(root)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", root.display())))?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    if dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has no label subdirectories",
            root.display()
        )));
    }
    let mut vocabulary = Vec::new();
    let mut items = Vec::new();
    for (label, dir) in dirs.iter().enumerate() {
        vocabulary.push(
            dir.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned(),
        );
        let mut found = 0;
        for path in sorted_entries(dir)? {
            let is_wav = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if !is_wav {
                continue;
            }
            match hound::WavReader::open(&path) {
                Ok(r) => {
                    let spec = r.spec();
                    let frames = r.duration() as f64;
                    items.push(DatasetItem {
                        path,
                        label,
                        duration_secs: frames / spec.sample_rate as f64,
                    });
                    found += 1;
                }
                Err(e) => warn!("skipping {}: {e}", path.display()),
            }
        }
        if found == 0 {
            warn!("label directory {} contains no audio", dir.display());
        }
    }
    Ok(LabeledDataset {
        root: root.to_path_buf(),
        vocabulary,
        items,
        sample_rate: target_rate,
    })
}

impl LabeledDataset {
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Decodes, downmixes, resamples to the target rate and peak-normalizes one item.
    pub fn load(&self, item: &DatasetItem) -> Result<Vec<f64>> {
        load_clip(&item.path, self.sample_rate)
    }

    pub fn label_id(&self, name: &str) -> Option<usize> {
        self.vocabulary.iter().position(|v| v == name)
    }
}

pub fn load_clip(path: &Path, target_rate: u32) -> Result<Vec<f64>> {
    let (x, rate) = read_wav(path)?;
    let mut x = resample(&x, rate, target_rate)?;
    peak_normalize(&mut x);
    Ok(x)
}

/// Stratified file-level split; `round(n_label * val_fraction)` items per label go to validation.
pub fn split(
    items: &[DatasetItem],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<DatasetItem>, Vec<DatasetItem>)> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::config("val_fraction must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = items.iter().map(|i| i.label).max().map_or(0, |m| m + 1);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for label in 0..labels {
        let mut group: Vec<&DatasetItem> = items.iter().filter(|i| i.label == label).collect();
        group.shuffle(&mut rng);
        let n_val = (group.len() as f64 * val_fraction).round() as usize;
        val.extend(group[..n_val].iter().map(|&i| i.clone()));
        train.extend(group[n_val..].iter().map(|&i| i.clone()));
    }
    Ok((train, val))
}

/// Smallest multiple of `stride_product` that is at least `length`.
pub fn pad_to_admissible(length: usize, stride_product: usize) -> usize {
    length.max(1).div_ceil(stride_product) * stride_product
}

/// In-memory clips with random contiguous cropping.
#[derive(Debug, Clone, Default)]
pub struct ClipBank {
    pub clips: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl ClipBank {
    pub fn new(clips: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if clips.len() != labels.len() {
            return Err(Error::shape("one label per clip is required"));
        }
        Ok(Self { clips, labels })
    }

    pub fn from_dataset(ds: &LabeledDataset, items: &[DatasetItem]) -> Result<Self> {
        let clips = items.iter().map(|i| ds.load(i)).collect::<Result<_>>()?;
        Self::new(clips, items.iter().map(|i| i.label).collect())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Leading `crop` samples of every clip (zero-padded), for validation.
    pub fn fixed_batch(&self, crop: usize) -> Result<Batch> {
        let mut w = Array2::zeros((self.len(), crop));
        for (mut row, clip) in w.outer_iter_mut().zip(&self.clips) {
            for (d, s) in row.iter_mut().zip(clip) {
                *d = *s;
            }
        }
        Batch::new(w, self.labels.iter().map(|&l| Label::Class(l)).collect())
    }
}

impl BatchSource for ClipBank {
    fn next_batch(
        &mut self,
        batch_size: usize,
        crop: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::Dataset("no training clips".into()));
        }
        let mut w = Array2::zeros((batch_size, crop));
        let mut labels = Vec::with_capacity(batch_size);
        for mut row in w.outer_iter_mut() {
            let i = rng.random_range(0..self.len());
            let clip = &self.clips[i];
            let start = if clip.len() > crop {
                rng.random_range(0..=clip.len() - crop)
            } else {
                0
            };
            for (d, s) in row.iter_mut().zip(&clip[start..]) {
                *d = *s;
            }
            labels.push(Label::Class(self.labels[i]));
        }
        Batch::new(w, labels)
    }
}

/// Two-class synthetic corpus: class 0 holds enveloped sine bursts at
/// 300-600 Hz, class 1 band-pass noise bursts centred at 1200-1800 Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCorpus {
    pub sample_rate: u32,
    pub clip_len: usize,
}

pub const TOY_CLASSES: [&str; 2] = ["bursts_sine", "bursts_noise"];

impl Default for ToyCorpus {
    fn default() -> Self {
        Self {
            sample_rate: 4_000,
            clip_len: 1_024,
        }
    }
}

impl ToyCorpus {
    fn envelope(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.clip_len;
        let len = rng.random_range(n / 3..=(3 * n) / 4);
        let onset = rng.random_range(0..=n - len);
        let mut env = vec![0.0; n];
        for (k, e) in env[onset..onset + len].iter_mut().enumerate() {
            let u = k as f64 / len as f64;
            // fast attack, exponential decay
            *e = (u * 20.0).min(1.0) * (-4.0 * u).exp();
        }
        env
    }

    pub fn sine_burst(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let f = rng.random_range(300.0..600.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let sr = self.sample_rate as f64;
        let env = self.envelope(rng);
        let mut x: Vec<f64> = env
            .iter()
            .enumerate()
            .map(|(n, e)| e * (2.0 * PI * f * n as f64 / sr + phase).sin())
            .collect();
        peak_normalize(&mut x);
        x
    }

    pub fn noise_burst(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let fc = rng.random_range(1200.0..1800.0);
        let sr = self.sample_rate as f64;
        // two-pole resonator band-pass
        let r: f64 = 0.9;
        let theta = 2.0 * PI * fc / sr;
        let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
        let env = self.envelope(rng);
        let (mut y1, mut y2) = (0.0, 0.0);
        let mut x: Vec<f64> = env
            .iter()
            .map(|e| {
                let w: f64 = rng.sample(StandardNormal);
                let y = (1.0 - r) * w + a1 * y1 + a2 * y2;
                y2 = y1;
                y1 = y;
                e * y
            })
            .collect();
        peak_normalize(&mut x);
        x
    }

    /// `per_class` clips of each class, alternating labels 0, 1, 0, 1, ...
    pub fn generate(&self, per_class: usize, seed: u64) -> ClipBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut clips = Vec::with_capacity(2 * per_class);
        let mut labels = Vec::with_capacity(2 * per_class);
        for _ in 0..per_class {
            clips.push(self.sine_burst(&mut rng));
            labels.push(0);
            clips.push(self.noise_burst(&mut rng));
            labels.push(1);
        }
        ClipBank { clips, labels }
    }

    /// Writes a generated corpus as `root/<class>/<index>.wav`.
    pub fn write(&self, root: &Path, per_class: usize, seed: u64) -> Result<()> {
        let bank = self.generate(per_class, seed);
        for (i, (clip, &label)) in bank.clips.iter().zip(&bank.labels).enumerate() {
            let path = root
                .join(TOY_CLASSES[label])
                .join(format!("{:05}.wav", i / 2));
            write_wav(&path, clip, self.sample_rate)?;
        }
        Ok(())
    }
}
