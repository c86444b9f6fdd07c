//! WAV input/output, resampling and normalization.

use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

fn audio_err(path: &Path, source: hound::Error) -> Error {
    Error::Audio {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes a WAV file to mono by channel averaging. Returns samples in `[-1, 1]` and the rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = WavReader::open(path).map_err(|e| audio_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| audio_err(path, e))?;
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / frame.len() as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

/// Writes mono 16-bit PCM; values outside the representable range are clipped.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut writer = WavWriter::create(path, spec).map_err(|e| audio_err(path, e))?;
    for &s in samples {
        writer
            .write_sample(quantize16(s))
            .map_err(|e| audio_err(path, e))?;
    }
    writer.finalize().map_err(|e| audio_err(path, e))
}

/// Same scale as decoding (`i16 / 32768`), so write-read-write is lossless.
pub fn quantize16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Scales so that the peak magnitude is 1; silent input is returned unchanged.
pub fn peak_normalize(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zero crossings of the sinc kernel on each side.
const SINC_ZEROS: f64 = 16.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
pub const RESAMPLE_CUTOFF: f64 = 0.9;

/// Rational-ratio resampler with a Blackman-windowed sinc low-pass.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: u64,
    down: u64,
    /// One tap set per output phase; `(first input index offset, taps)`.
    phases: Vec<(i64, Vec<f64>)>,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(Error::domain("sample rates must be positive"));
        }
        let g = gcd(from as u64, to as u64);
        let (up, down) = (to as u64 / g, from as u64 / g);
        // cutoff in cycles per input sample
        let fc = RESAMPLE_CUTOFF * 0.5 * (from.min(to) as f64) / from as f64;
        let half = (SINC_ZEROS / (2.0 * fc)).ceil();
        let phases = (0..up)
            .map(|p| {
                let t = (p * down) as f64 / up as f64;
                let frac = t - t.floor();
                let first = -(half as i64) + 1;
                let taps = (first..=half as i64)
                    .map(|k| {
                        let u = k as f64 - frac;
                        let w = u / half;
                        if w.abs() >= 1.0 {
                            return 0.0;
                        }
                        let window = 0.42 + 0.5 * (PI * w).cos() + 0.08 * (2.0 * PI * w).cos();
                        let x = 2.0 * fc * u;
                        let sinc = if x == 0.0 {
                            1.0
                        } else {
                            (PI * x).sin() / (PI * x)
                        };
                        2.0 * fc * sinc * window
                    })
                    .collect();
                (first, taps)
            })
            .collect();
        Ok(Self { up, down, phases })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len as u64 * self.up).div_ceil(self.down) as usize
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return x.to_vec();
        }
        let n_out = self.output_len(x.len());
        (0..n_out as u64)
            .map(|n| {
                let (offset, taps) = &self.phases[(n % self.up) as usize];
                let base = (n * self.down / self.up) as i64 + offset;
                taps.iter()
                    .enumerate()
                    .filter_map(|(j, h)| {
                        let i = base + j as i64;
                        (i >= 0 && (i as usize) < x.len()).then(|| h * x[i as usize])
                    })
                    .sum()
            })
            .collect()
    }
}

/// Resamples `x` from `from` Hz to `to` Hz; output length is `ceil(len * to / from)`.
pub fn resample(x: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    Ok(Resampler::new(from, to)?.process(x))
}
