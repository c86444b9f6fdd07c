//! Trains the toy network on the synthetic two-class corpus, samples with
//! and without guidance and scores the result.
//!
//! ```sh
//! cargo run --release --example toy_end_to_end -- [steps] [out_dir]
//! ```

use std::path::PathBuf;

use wavediff::audio::write_wav;
use wavediff::data::TOY_CLASSES;
use wavediff::toy::ToyExperiment;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut exp = ToyExperiment::default();
    if let Some(steps) = args.next() {
        exp.training.max_steps = steps.parse()?;
    }
    let out = args.next().map(PathBuf::from);

    let report = exp.run()?;
    println!("training: {:.0} s", report.train_secs);
    print!("{}", report.loss_log);
    println!(
        "centroid threshold {:.0} Hz (class {} below)",
        report.classifier.threshold_hz, report.classifier.low_class
    );
    for r in &report.results {
        println!(
            "gamma {}: accuracy {:.3}, mean centroid {:.0} / {:.0} Hz, sampling {:.0} s",
            r.gamma,
            r.accuracy,
            mean(&r.centroids[0]),
            mean(&r.centroids[1]),
            r.sample_secs
        );
        for g in 0..2 {
            println!(
                "  FD(generated {g}, real 0) = {:.3}   FD(generated {g}, real 1) = {:.3}",
                r.fd[g][0], r.fd[g][1]
            );
        }
        if let Some(dir) = &out {
            for (i, (row, &l)) in r.waveforms.outer_iter().zip(&r.labels).enumerate().take(8) {
                let path = dir.join(format!("gamma{}_{}_{i}.wav", r.gamma, TOY_CLASSES[l]));
                write_wav(&path, &row.to_vec(), exp.corpus.sample_rate)?;
            }
        }
    }
    Ok(())
}
