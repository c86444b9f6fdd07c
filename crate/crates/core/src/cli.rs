//! Command-line front end: argument types and command implementations.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use nalgebra::DMatrix;
use ndarray::Array2;

use crate::audio::write_wav;
use crate::config::RunConfig;
use crate::data::{ingest, load_clip, pad_to_admissible, split, ClipBank, DATA_ROOT_ENV};
use crate::error::{Error, Result};
use crate::metrics::{
    embed_audio, frechet_distance_sets, logit_score, EmbeddingFrontEnd, EmbeddingSet,
    LogMelFrontEnd, LogitMatrix, NearestCentroid,
};
use crate::network::{DagNetwork, Label};
use crate::sampler::{sample_chunked, style_transfer, SampleRun};
use crate::sweep::{
    plot_sweep, run_sweep, write_sweep_csv, SweepGrid, SweepReference, SweepSettings,
};
use crate::training::{fit, load_checkpoint, CheckpointDir, LossLog, TrainState};

/// Rows generated per sampler call.
const SAMPLE_CHUNK: usize = 8;
const VOCAB_FILE: &str = "vocabulary.txt";

#[derive(Debug, Parser)]
#[command(name = "wavediff", version, about = "Conditional waveform diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a score network on a folder-per-label dataset.
    Train(TrainArgs),
    /// Generate clips for a label.
    Sample(SampleArgs),
    /// Re-synthesize an input clip under a label.
    StyleTransfer(StyleArgs),
    /// FD and LS between a reference and an evaluated set.
    Evaluate(EvaluateArgs),
    /// Write the embedding file of a directory of clips.
    Embed(EmbedArgs),
    /// FD and LS over a grid of sampling hyper-parameters.
    Sweep(SweepArgs),
    /// Print the configuration document for a preset.
    Config(ConfigArgs),
}

/// Overrides applied on top of the configuration file or preset.
#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// dag48, dag22, miniature or toy.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sampling steps N.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable dynamic thresholding.
    #[arg(long)]
    pub no_threshold: bool,
}

impl RunFlags {
    fn resolve(&self, vocab_size: usize) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let mut cfg = RunConfig::load(path)?;
                if let Some(p) = &self.preset {
                    if *p != cfg.preset {
                        warn!(
                            "--preset {p} ignored; the configuration file sets {}",
                            cfg.preset
                        );
                    }
                }
                cfg.network.vocab_size = vocab_size;
                cfg
            }
            None => RunConfig::preset(self.preset.as_deref().unwrap_or("dag22"), vocab_size)?,
        };
        if let Some(g) = self.gamma {
            cfg.sampler.gamma = g;
        }
        if let Some(a) = self.alpha {
            cfg.sampler.alpha = a;
        }
        if let Some(n) = self.steps {
            cfg.sampler.steps = n;
        }
        if let Some(s) = self.seed {
            cfg.sampler.seed = s;
            cfg.training.seed = s;
        }
        if self.no_threshold {
            cfg.sampler.threshold = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Dataset root; defaults to the data root variable, then the configuration.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Output directory for checkpoints, logs and the resolved configuration.
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub crop_length: Option<usize>,
    /// Continue from `<out>/latest.ckpt`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Label name, index, or `null` for unconditional samples.
    #[arg(long, default_value = "0")]
    pub label: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Clip duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    #[arg(long, default_value = "samples")]
    pub out: PathBuf,
    /// Per-step peak and score-norm CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StyleArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of clips (optionally one subdirectory per label) or an embedding file.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub evaluated: PathBuf,
    /// CSV of evaluated-set logits, one row per clip.
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Sample rate of the built-in front-end.
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Folder-per-label reference clips.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0, 4.0])]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2.0])]
    pub alphas: Vec<f64>,
    #[arg(long = "step-counts", value_delimiter = ',', default_values_t = vec![50, 100, 200])]
    pub step_counts: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub per_label: usize,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value = "dag22")]
    pub preset: String,
    #[arg(long, default_value_t = 10)]
    pub vocab_size: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Sample(a) => sample_cmd(a),
        Command::StyleTransfer(a) => style_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Embed(a) => embed(a),
        Command::Sweep(a) => sweep(a),
        Command::Config(a) => {
            print!("{}", RunConfig::preset(&a.preset, a.vocab_size)?.to_toml()?);
            Ok(())
        }
    }
}

/// Flag, then the data root variable, then the configuration file.
pub fn data_root(flag: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
        .or_else(|| cfg.data.root.clone())
        .ok_or_else(|| {
            Error::config(format!(
                "no dataset root: pass --data-root, set {DATA_ROOT_ENV} or data.root"
            ))
        })
}

fn train(args: TrainArgs) -> Result<()> {
    let probe = args.run.resolve(1)?;
    let root = data_root(args.data_root.as_deref(), &probe)?;
    let dataset = ingest(&root, probe.network.sample_rate)?;
    let mut cfg = args.run.resolve(dataset.vocab_size())?;
    if let Some(v) = args.max_steps {
        cfg.training.max_steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.training.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.training.learning_rate = v;
    }
    if let Some(v) = args.crop_length {
        cfg.training.crop_length = v;
    }
    cfg.data.root = Some(root.clone());
    cfg.validate()?;
    info!(
        "{} clips in {} labels from {}",
        dataset.items.len(),
        dataset.vocab_size(),
        root.display()
    );
    let (train_items, val_items) =
        split(&dataset.items, cfg.data.val_fraction, cfg.data.split_seed)?;
    let mut bank = ClipBank::from_dataset(&dataset, &train_items)?;
    let validation = if val_items.is_empty() {
        None
    } else {
        Some(ClipBank::from_dataset(&dataset, &val_items)?.fixed_batch(cfg.training.crop_length)?)
    };

    fs::create_dir_all(&args.out)?;
    cfg.save(&args.out.join("config.toml"))?;
    fs::write(
        args.out.join(VOCAB_FILE),
        dataset.vocabulary.join("\n") + "\n",
    )?;
    let dir = CheckpointDir(args.out.clone());
    let log_path = args.out.join("loss.csv");
    let (mut state, mut log) = if args.resume {
        let state =
            crate::training::load_checkpoint_for_vocab(&dir.latest(), dataset.vocab_size())?;
        info!("resuming at step {}", state.step);
        let file = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)?;
        (state, LossLog::appending(BufWriter::new(file)))
    } else {
        let net = DagNetwork::new(cfg.network.clone(), cfg.training.seed)?;
        let file = File::create(&log_path)?;
        (
            TrainState::new(net, &cfg.training),
            LossLog::new(BufWriter::new(file))?,
        )
    };
    fit(
        &mut state,
        &mut bank,
        validation.as_ref(),
        &cfg.training,
        &mut log,
        Some(&dir),
    )?;
    info!(
        "finished at step {}; checkpoint {}",
        state.step,
        dir.latest().display()
    );
    Ok(())
}

fn read_vocabulary(checkpoint: &Path) -> Option<Vec<String>> {
    let path = checkpoint.parent()?.join(VOCAB_FILE);
    let text = fs::read_to_string(path).ok()?;
    Some(
        text.lines()
            .map(str::to_string)
            .filter(|l| !l.is_empty())
            .collect(),
    )
}

/// Resolves `null`, a vocabulary name, or a numeric index.
pub fn parse_label(text: &str, vocabulary: Option<&[String]>, vocab_size: usize) -> Result<Label> {
    if text.eq_ignore_ascii_case("null") {
        return Ok(Label::Null);
    }
    let id = match vocabulary.and_then(|v| v.iter().position(|n| n == text)) {
        Some(id) => id,
        None => text
            .parse::<usize>()
            .map_err(|_| Error::config(format!("unknown label {text:?}")))?,
    };
    if id >= vocab_size {
        return Err(Error::config(format!(
            "label {id} outside a vocabulary of {vocab_size}"
        )));
    }
    Ok(Label::Class(id))
}

fn label_name(label: Label, vocabulary: Option<&[String]>) -> String {
    match label {
        Label::Null => "null".into(),
        Label::Class(i) => vocabulary
            .and_then(|v| v.get(i).cloned())
            .unwrap_or_else(|| i.to_string()),
    }
}

fn write_trace(run: &SampleRun, path: Option<&Path>) -> Result<()> {
    if let Some(path) = path {
        run.trace
            .write_csv(BufWriter::new(File::create(path)?), 0)?;
    }
    Ok(())
}

fn load_model(checkpoint: &Path) -> Result<(DagNetwork, Option<Vec<String>>)> {
    let state = load_checkpoint(checkpoint)?;
    Ok((state.network, read_vocabulary(checkpoint)))
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let (net, vocab) = load_model(&args.checkpoint)?;
    let dag = net.config().clone();
    let cfg = args.run.resolve(dag.vocab_size)?;
    let label = parse_label(&args.label, vocab.as_deref(), dag.vocab_size)?;
    let wanted = (args.seconds * dag.sample_rate as f64).round().max(1.0) as usize;
    let length = pad_to_admissible(wanted, dag.stride_product());
    let labels = vec![label; args.count];
    let run = sample_chunked(&net, &labels, length, &cfg.sampler, SAMPLE_CHUNK)?;
    let name = label_name(label, vocab.as_deref());
    fs::create_dir_all(&args.out)?;
    for (i, row) in run.waveforms.outer_iter().enumerate() {
        let path = args.out.join(format!("{name}_{i:04}.wav"));
        write_wav(&path, &row.to_vec()[..wanted], dag.sample_rate)?;
        info!("wrote {}", path.display());
    }
    write_trace(&run, args.trace.as_deref())
}

fn style_cmd(args: StyleArgs) -> Result<()> {
    let (net, vocab) = load_model(&args.checkpoint)?;
    let dag = net.config().clone();
    let cfg = args.run.resolve(dag.vocab_size)?;
    let label = parse_label(&args.label, vocab.as_deref(), dag.vocab_size)?;
    let clip = load_clip(&args.input, dag.sample_rate)?;
    let length = pad_to_admissible(clip.len(), dag.stride_product());
    let mut y = Array2::zeros((1, length));
    for (dst, src) in y.iter_mut().zip(&clip) {
        *dst = *src;
    }
    let run = style_transfer(&net, &y, &[label], &cfg.sampler)?;
    write_wav(
        &args.out,
        &run.waveforms.row(0).to_vec()[..clip.len()],
        dag.sample_rate,
    )?;
    info!("wrote {}", args.out.display());
    write_trace(&run, args.trace.as_deref())
}

/// Clips of a directory: `(clips, labels)` when it has label subdirectories,
/// otherwise the WAV files directly inside it with no labels.
fn read_clips(dir: &Path, rate: u32) -> Result<(Vec<Vec<f64>>, Option<(Vec<usize>, usize)>)> {
    let has_subdirs = fs::read_dir(dir)?.any(|e| e.is_ok_and(|e| e.path().is_dir()));
    if has_subdirs {
        let ds = ingest(dir, rate)?;
        let clips = ds
            .items
            .iter()
            .map(|i| ds.load(i))
            .collect::<Result<Vec<_>>>()?;
        let labels = ds.items.iter().map(|i| i.label).collect();
        return Ok((clips, Some((labels, ds.vocab_size()))));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    let clips = paths
        .iter()
        .map(|p| load_clip(p, rate))
        .collect::<Result<Vec<_>>>()?;
    Ok((clips, None))
}

struct Loaded {
    set: EmbeddingSet,
    labels: Option<(Vec<usize>, usize)>,
}

fn load_set(path: &Path, fe: &LogMelFrontEnd) -> Result<Loaded> {
    if path.is_dir() {
        let (clips, labels) = read_clips(path, fe.sample_rate())?;
        let tag = path.display().to_string();
        Ok(Loaded {
            set: embed_audio(&clips, fe.sample_rate(), fe, &tag)?,
            labels,
        })
    } else {
        Ok(Loaded {
            set: EmbeddingSet::read(path)?,
            labels: None,
        })
    }
}

/// Reads a CSV of logits, one row per item; a non-numeric first line is a header.
pub fn read_logits(path: &Path) -> Result<LogitMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::config(format!("line {}: {e}", i + 1))),
        }
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::shape("logit rows differ in length"));
    }
    LogitMatrix::new(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let fe = LogMelFrontEnd::new(args.rate);
    let reference = load_set(&args.reference, &fe)?;
    let evaluated = load_set(&args.evaluated, &fe)?;
    let fd = frechet_distance_sets(&reference.set, &evaluated.set)?;
    let ls = match (&args.logits, &reference.labels) {
        (Some(path), _) => Some(logit_score(&read_logits(path)?)?),
        (None, Some((labels, classes))) if *classes >= 2 => {
            let clf = NearestCentroid::fit(&reference.set, labels, *classes)?;
            Some(logit_score(&clf.logits(&evaluated.set)?)?)
        }
        _ => {
            warn!("LS skipped: pass --logits or a labelled reference directory");
            None
        }
    };
    let ls_text = ls.map(|v| v.to_string()).unwrap_or_default();
    println!("FD {fd}");
    if let Some(v) = ls {
        println!("LS {v}");
    }
    if let Some(path) = &args.report {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "reference,evaluated,n_reference,n_evaluated,fd,ls")?;
        writeln!(
            out,
            "{},{},{},{},{fd},{ls_text}",
            args.reference.display(),
            args.evaluated.display(),
            reference.set.len(),
            evaluated.set.len()
        )?;
    }
    Ok(())
}

fn embed(args: EmbedArgs) -> Result<()> {
    let fe = LogMelFrontEnd::new(args.rate);
    let (clips, _) = read_clips(&args.input, args.rate)?;
    let set = embed_audio(&clips, args.rate, &fe, &args.input.display().to_string())?;
    set.write(&args.out)?;
    info!(
        "{} embeddings of dimension {} written",
        set.len(),
        set.dim()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (net, _) = load_model(&args.checkpoint)?;
    let dag = net.config().clone();
    let cfg = args.run.resolve(dag.vocab_size)?;
    let fe = LogMelFrontEnd::new(dag.sample_rate);
    let (clips, labels) = read_clips(&args.reference, dag.sample_rate)?;
    let Some((labels, classes)) = labels else {
        return Err(Error::Dataset(
            "sweep reference must have one subdirectory per label".into(),
        ));
    };
    if classes != dag.vocab_size {
        return Err(Error::config(format!(
            "reference has {classes} labels but the model {}",
            dag.vocab_size
        )));
    }
    let reference = SweepReference {
        front_end: &fe,
        embeddings: embed_audio(&clips, dag.sample_rate, &fe, "reference")?,
        labels,
        classes,
    };
    let wanted = (args.seconds * dag.sample_rate as f64).round().max(1.0) as usize;
    let settings = SweepSettings {
        length: pad_to_admissible(wanted, dag.stride_product()),
        per_label: args.per_label,
        seed: cfg.sampler.seed,
        chunk: SAMPLE_CHUNK,
        base: cfg.sampler.clone(),
    };
    let grid = SweepGrid {
        gammas: args.gammas,
        alphas: args.alphas,
        steps: args.step_counts,
    };
    let rows = run_sweep(&net, &reference, &grid, &settings)?;
    fs::create_dir_all(&args.out)?;
    write_sweep_csv(
        &rows,
        BufWriter::new(File::create(args.out.join("sweep.csv"))?),
    )?;
    plot_sweep(&rows, &args.out.join("sweep.svg"))?;
    for r in &rows {
        println!(
            "gamma {} alpha {} N {}: FD {:.4} LS {:.4}",
            r.gamma, r.alpha, r.steps, r.fd, r.ls
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "wavediff",
            "sample",
            "--checkpoint",
            "c.ckpt",
            "--gamma",
            "1.5",
            "--alpha",
            "3",
            "--steps",
            "50",
            "--preset",
            "toy",
            "--seed",
            "9",
            "--label",
            "dog",
        ])
        .unwrap();
        let Command::Sample(a) = cli.command else {
            panic!("wrong command")
        };
        let cfg = a.run.resolve(3).unwrap();
        assert_eq!(
            (
                cfg.sampler.gamma,
                cfg.sampler.alpha,
                cfg.sampler.steps,
                cfg.sampler.seed
            ),
            (1.5, 3.0, 50, 9)
        );
        assert!(Cli::try_parse_from(["wavediff", "sample", "--gamma", "1"]).is_err());
        let bad =
            Cli::try_parse_from(["wavediff", "sample", "--checkpoint", "c", "--alpha", "0.5"])
                .unwrap();
        let Command::Sample(a) = bad.command else {
            panic!("wrong command")
        };
        assert!(a.run.resolve(3).is_err());
    }

    #[test]
    fn labels_resolve_by_name_index_or_null() {
        let vocab = vec!["cat".to_string(), "dog".to_string()];
        assert_eq!(
            parse_label("dog", Some(&vocab), 2).unwrap(),
            Label::Class(1)
        );
        assert_eq!(parse_label("0", Some(&vocab), 2).unwrap(), Label::Class(0));
        assert_eq!(parse_label("NULL", None, 2).unwrap(), Label::Null);
        assert!(parse_label("2", None, 2).is_err());
        assert!(parse_label("cow", Some(&vocab), 2).is_err());
    }

    #[test]
    fn data_root_precedence() {
        let mut cfg = RunConfig::preset("toy", 2).unwrap();
        cfg.data.root = Some("from_config".into());
        let flag = data_root(Some(Path::new("from_flag")), &cfg).unwrap();
        assert_eq!(flag, PathBuf::from("from_flag"));
        if std::env::var_os(DATA_ROOT_ENV).is_none() {
            assert_eq!(data_root(None, &cfg).unwrap(), PathBuf::from("from_config"));
            cfg.data.root = None;
            assert!(data_root(None, &cfg).is_err());
        }
    }

    #[test]
    fn logits_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        fs::write(&path, "a,b\n1,0\n0,1\n").unwrap();
        let m = read_logits(&path).unwrap();
        assert_eq!((m.logits.nrows(), m.logits.ncols()), (2, 2));
        fs::write(&path, "1,0\n0\n").unwrap();
        assert!(read_logits(&path).is_err());
    }
}
