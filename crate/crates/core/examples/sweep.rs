//! FD and LS over a small grid of guidance weights and step counts, written
//! as CSV and an SVG plot.
//!
//! ```sh
//! cargo run --release --example sweep -- [checkpoint] [out_dir]
//! ```

use std::fs::File;
use std::path::PathBuf;

use wavediff::metrics::{embed_audio, LogMelFrontEnd};
use wavediff::sampler::SamplerConfig;
use wavediff::sweep::{
    plot_sweep, run_sweep, write_sweep_csv, SweepGrid, SweepReference, SweepSettings,
};
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
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("wavediff_sweep"));
    std::fs::create_dir_all(&out)?;

    let rate = exp.corpus.sample_rate;
    let fe = LogMelFrontEnd::new(rate);
    let bank = exp.reference_bank();
    let reference = SweepReference {
        front_end: &fe,
        embeddings: embed_audio(&bank.clips, rate, &fe, "reference")?,
        labels: bank.labels.clone(),
        classes: 2,
    };
    let grid = SweepGrid {
        gammas: vec![0.0, 1.0, 2.0, 4.0],
        alphas: vec![2.0],
        steps: vec![25, 50],
    };
    let settings = SweepSettings {
        length: exp.corpus.clip_len,
        per_label: 16,
        seed: 0,
        chunk: 8,
        base: SamplerConfig::default(),
    };
    let rows = run_sweep(&net, &reference, &grid, &settings)?;
    write_sweep_csv(&rows, std::io::stdout())?;
    write_sweep_csv(&rows, File::create(out.join("sweep.csv"))?)?;
    plot_sweep(&rows, &out.join("sweep.svg"))?;
    println!("wrote {}", out.display());
    Ok(())
}
