//! Runs the sampler with the exact score of Gaussian data and compares the
//! spread of the samples with the data standard deviation.
//!
//! ```sh
//! cargo run --release --example gaussian_sampler
//! ```

use ndarray::Array2;
use wavediff::network::{Label, ScoreModel};
use wavediff::sampler::{sample, SamplerConfig};

/// Score of N(0, s^2) data perturbed with N(0, sigma^2) noise.
struct Gaussian(f64);

impl ScoreModel for Gaussian {
    fn score(&self, x: &Array2<f64>, _: &[Label], sigmas: &[f64]) -> wavediff::Result<Array2<f64>> {
        let mut out = x.clone();
        for (mut row, &sigma) in out.outer_iter_mut().zip(sigmas) {
            row /= -(self.0 * self.0 + sigma * sigma);
        }
        Ok(out)
    }
}

fn main() -> wavediff::Result<()> {
    let s = 0.25;
    println!("data std {s}; 10000 samples per setting\n");
    println!("   N  alpha     mean      std   rel. error");
    for (steps, alpha) in [(50, 2.0), (100, 2.0), (100, 3.0), (200, 2.0), (200, 3.0)] {
        let cfg = SamplerConfig {
            steps,
            alpha,
            gamma: 0.0,
            threshold: false,
            seed: 7,
            ..SamplerConfig::default()
        };
        let x = sample(&Gaussian(s), &[Label::Null; 10], 1000, &cfg)?.waveforms;
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let std = (x.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        println!(
            "{steps:4}  {alpha:5.1}  {mean:+.4}  {std:.4}  {:+.2}%",
            100.0 * (std - s) / s
        );
    }
    Ok(())
}
