//! Fréchet distance and logit score on toy-corpus embeddings, plus the
//! embedding file format.
//!
//! ```sh
//! cargo run --release --example metrics
//! ```

use wavediff::data::ToyCorpus;
use wavediff::metrics::{
    embed_audio, fit_gaussian, frechet_distance, logit_score, EmbeddingSet, LogMelFrontEnd,
    NearestCentroid,
};

fn main() -> wavediff::Result<()> {
    let corpus = ToyCorpus::default();
    let fe = LogMelFrontEnd::new(corpus.sample_rate);
    let split = |seed| {
        let bank = corpus.generate(150, seed);
        let by_class = |c| -> Vec<Vec<f64>> {
            bank.clips
                .iter()
                .zip(&bank.labels)
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| x.clone())
                .collect()
        };
        (bank.clone(), by_class(0), by_class(1))
    };
    let (ref_bank, ref_a, ref_b) = split(1);
    let (_, test_a, test_b) = split(2);

    let embed = |clips: &[Vec<f64>], tag| embed_audio(clips, corpus.sample_rate, &fe, tag);
    let (ra, rb) = (
        fit_gaussian(&embed(&ref_a, "ref_a")?)?,
        fit_gaussian(&embed(&ref_b, "ref_b")?)?,
    );
    let (ta, tb) = (embed(&test_a, "test_a")?, embed(&test_b, "test_b")?);
    println!(
        "FD(sines, sines)  = {:.3}",
        frechet_distance(&ra, &fit_gaussian(&ta)?)?
    );
    println!(
        "FD(sines, noise)  = {:.3}",
        frechet_distance(&ra, &fit_gaussian(&tb)?)?
    );
    println!(
        "FD(noise, noise)  = {:.3}",
        frechet_distance(&rb, &fit_gaussian(&tb)?)?
    );

    let all = embed(&ref_bank.clips, "reference")?;
    let clf = NearestCentroid::fit(&all, &ref_bank.labels, 2)?;
    let mixed: Vec<Vec<f64>> = test_a.iter().chain(&test_b).cloned().collect();
    println!(
        "LS(both classes)  = {:.3}",
        logit_score(&clf.logits(&embed(&mixed, "mixed")?)?)?
    );
    println!("LS(sines only)    = {:.3}", logit_score(&clf.logits(&ta)?)?);

    let dir = std::env::temp_dir().join("wavediff_metrics_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("sines.emb");
    ta.write(&path)?;
    let back = EmbeddingSet::read(&path)?;
    println!(
        "\nwrote {} ({} x {})",
        path.display(),
        back.len(),
        back.dim()
    );
    Ok(())
}
