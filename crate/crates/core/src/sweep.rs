//! Sampling hyper-parameter sweeps scored with FD and LS.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{
    embed_audio, fit_gaussian, frechet_distance, logit_score, EmbeddingFrontEnd, EmbeddingSet,
    GaussianStats, NearestCentroid,
};
use crate::network::{Label, ScoreModel};
use crate::sampler::{sample_chunked, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub steps: Vec<usize>,
}

impl SweepGrid {
    /// gamma in {0, 1, 2, 4}, N in {50, 100, 200}, alpha = 2.
    pub fn standard() -> Self {
        Self {
            gammas: vec![0.0, 1.0, 2.0, 4.0],
            alphas: vec![2.0],
            steps: vec![50, 100, 200],
        }
    }

    /// Grid points ordered by alpha, then N, then gamma.
    pub fn points(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &steps in &self.steps {
                for &gamma in &self.gammas {
                    out.push((gamma, alpha, steps));
                }
            }
        }
        out
    }
}

/// Reference material shared by every grid point.
pub struct SweepReference<'a, F: EmbeddingFrontEnd + ?Sized> {
    pub front_end: &'a F,
    pub embeddings: EmbeddingSet,
    pub labels: Vec<usize>,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub alpha: f64,
    pub steps: usize,
    pub fd: f64,
    pub ls: f64,
    pub wall_time: f64,
    /// Wall time relative to the gamma = 0 row with the same alpha and N.
    pub time_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub length: usize,
    pub per_label: usize,
    pub seed: u64,
    pub chunk: usize,
    pub base: SamplerConfig,
}

pub fn run_sweep<M: ScoreModel + ?Sized, F: EmbeddingFrontEnd + ?Sized>(
    model: &M,
    reference: &SweepReference<'_, F>,
    grid: &SweepGrid,
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    if reference.embeddings.len() < 2 {
        return Err(Error::Dataset(
            "sweep needs at least two reference clips".into(),
        ));
    }
    let ref_stats: GaussianStats = fit_gaussian(&reference.embeddings)?;
    let classifier =
        NearestCentroid::fit(&reference.embeddings, &reference.labels, reference.classes)?;
    let labels: Vec<Label> = (0..reference.classes)
        .flat_map(|c| std::iter::repeat_n(Label::Class(c), settings.per_label))
        .collect();
    let rate = reference.front_end.sample_rate();
    let mut rows: Vec<SweepRow> = Vec::new();
    for (gamma, alpha, steps) in grid.points() {
        let cfg = SamplerConfig {
            gamma,
            alpha,
            steps,
            seed: settings.seed,
            first_index: 0,
            ..settings.base.clone()
        };
        let start = Instant::now();
        let run = sample_chunked(model, &labels, settings.length, &cfg, settings.chunk)?;
        let wall_time = start.elapsed().as_secs_f64();
        let clips: Vec<Vec<f64>> = run.waveforms.outer_iter().map(|r| r.to_vec()).collect();
        let set = embed_audio(&clips, rate, reference.front_end, "generated")?;
        let fd = frechet_distance(&ref_stats, &fit_gaussian(&set)?)?;
        let ls = logit_score(&classifier.logits(&set)?)?;
        log::info!("gamma {gamma} alpha {alpha} N {steps}: FD {fd:.4} LS {ls:.4}");
        rows.push(SweepRow {
            gamma,
            alpha,
            steps,
            fd,
            ls,
            wall_time,
            time_ratio: None,
        });
    }
    let baselines: Vec<(f64, usize, f64)> = rows
        .iter()
        .filter(|r| r.gamma == 0.0)
        .map(|r| (r.alpha, r.steps, r.wall_time))
        .collect();
    for row in &mut rows {
        row.time_ratio = baselines
            .iter()
            .find(|(a, n, _)| *a == row.alpha && *n == row.steps)
            .map(|(_, _, t)| row.wall_time / t);
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "gamma,alpha,steps,fd,ls,wall_time,time_ratio")?;
    for r in rows {
        let ratio = r.time_ratio.map(|v| format!("{v:.4}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{}",
            r.gamma, r.alpha, r.steps, r.fd, r.ls, r.wall_time, ratio
        )?;
    }
    Ok(())
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.1).max(1e-6);
    (lo - pad)..(hi + pad)
}

/// FD (left) and LS (right) against gamma, one line per (alpha, N).
pub fn plot_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::domain("nothing to plot"));
    }
    let root = SVGBackend::new(path, (960, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (left, right) = root.split_horizontally(480);
    let mut series: Vec<(f64, usize)> = Vec::new();
    for r in rows {
        if !series.contains(&(r.alpha, r.steps)) {
            series.push((r.alpha, r.steps));
        }
    }
    let (g_lo, g_hi) = rows.iter().fold((f64::MAX, f64::MIN), |(a, b), r| {
        (a.min(r.gamma), b.max(r.gamma))
    });
    let panels: [(&DrawingArea<SVGBackend, _>, &str, fn(&SweepRow) -> f64); 2] =
        [(&left, "FD", |r| r.fd), (&right, "LS", |r| r.ls)];
    for (area, name, value) in panels {
        let (lo, hi) = rows.iter().fold((f64::MAX, f64::MIN), |(a, b), r| {
            (a.min(value(r)), b.max(value(r)))
        });
        let mut chart = ChartBuilder::on(area)
            .caption(name, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(56)
            .build_cartesian_2d(padded(g_lo, g_hi), padded(lo, hi))
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("gamma")
            .y_desc(name)
            .draw()
            .map_err(plot_err)?;
        for (i, &(alpha, steps)) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.alpha == alpha && r.steps == steps)
                .map(|r| (r.gamma, value(r)))
                .collect();
            chart
                .draw_series(LineSeries::new(points.clone(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(format!("N={steps}, alpha={alpha}"))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
            chart
                .draw_series(
                    points
                        .into_iter()
                        .map(|p| Circle::new(p, 3, color.filled())),
                )
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
