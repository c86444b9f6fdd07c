//! Turns a sine burst into the noise-burst class.
//!
//! Pass a checkpoint trained on the toy corpus, or let the example train a
//! small network for a few hundred steps first.
//!
//! ```sh
//! cargo run --release --example style_transfer -- [checkpoint] [out_dir]
//! ```

use std::path::PathBuf;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavediff::audio::write_wav;
use wavediff::metrics::spectral_centroid;
use wavediff::network::Label;
use wavediff::sampler::{style_transfer, SamplerConfig};
use wavediff::toy::ToyExperiment;
use wavediff::training::{load_checkpoint, LossLog};

fn main() -> wavediff::Result<()> {
    let mut args = std::env::args().skip(1);
    let exp = ToyExperiment::default();
    let net = match args.next() {
        Some(path) => load_checkpoint(&PathBuf::from(path))?.network,
        None => {
            let mut quick = exp.clone();
            quick.training.max_steps = 600;
            println!("training 600 steps...");
            quick.train(&mut LossLog::new(std::io::sink())?)?.network
        }
    };
    let out = args.next().map(PathBuf::from);

    let rate = exp.corpus.sample_rate;
    let source = exp.corpus.sine_burst(&mut ChaCha8Rng::seed_from_u64(42));
    let y = Array2::from_shape_vec((1, source.len()), source.clone()).expect("one row");
    println!("input centroid {:.0} Hz", spectral_centroid(&source, rate));
    for (label, name) in [(Label::Class(0), "sine"), (Label::Class(1), "noise")] {
        let cfg = SamplerConfig {
            steps: 100,
            seed: 3,
            ..SamplerConfig::default()
        };
        let run = style_transfer(&net, &y, &[label], &cfg)?;
        let x = run.waveforms.row(0).to_vec();
        println!(
            "as {name:5}: centroid {:.0} Hz, max peak on the way {:.3}",
            spectral_centroid(&x, rate),
            run.trace.max_peak()
        );
        if let Some(dir) = &out {
            write_wav(&dir.join(format!("transfer_{name}.wav")), &x, rate)?;
        }
    }
    if let Some(dir) = &out {
        write_wav(&dir.join("transfer_input.wav"), &source, rate)?;
    }
    Ok(())
}
