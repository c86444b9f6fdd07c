//! Writes the toy corpus as a folder-per-label tree, ingests it at a different
//! rate and splits it.
//!
//! ```sh
//! cargo run --release --example dataset
//! ```

use wavediff::data::{ingest, split, ClipBank, ToyCorpus};

fn main() -> wavediff::Result<()> {
    let root = std::env::temp_dir().join("wavediff_toy_corpus");
    if root.exists() {
        std::fs::remove_dir_all(&root)?;
    }
    ToyCorpus::default().write(&root, 20, 0)?;

    let ds = ingest(&root, 8_000)?;
    println!("vocabulary {:?}, {} files", ds.vocabulary, ds.items.len());
    let first = ds.load(&ds.items[0])?;
    println!(
        "{} lasts {:.3} s; resampled 4 kHz -> 8 kHz it has {} samples",
        ds.items[0].path.display(),
        ds.items[0].duration_secs,
        first.len()
    );

    let (train, val) = split(&ds.items, 0.1, 0)?;
    println!("split: {} train, {} validation", train.len(), val.len());
    let bank = ClipBank::from_dataset(&ds, &train)?;
    let batch = bank.fixed_batch(2048)?;
    println!("fixed batch {:?}", batch.waveforms.dim());
    Ok(())
}
