//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! ```sh
//! cargo test --release --test acceptance            # everything
//! cargo test --release --test acceptance -- metrics # criteria whose name contains "metrics"
//! ```

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavediff::metrics::{
    fit_gaussian, frechet_distance, logit_score, EmbeddingSet, GaussianStats, LogitMatrix,
};
use wavediff::network::{DagConfig, DagNetwork, Label, ScoreModel};
use wavediff::nn::gradcheck::{check_gradients, GradCheckOptions};
use wavediff::nn::Module;
use wavediff::sampler::{guided_score, sample, SamplerConfig};
use wavediff::schedule::{step_coefficients, NoiseSchedule};
use wavediff::toy::ToyExperiment;
use wavediff::training::{loss_and_grad, loss_value, score_loss, Batch, Perturbation, TrainConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Verdict;

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Duration, Check); 8] = [
        ("schedule algebra", Duration::from_secs(1), schedule_algebra),
        ("loss oracle", Duration::from_secs(30), loss_oracle),
        ("gradient check", Duration::from_secs(120), gradient_check),
        ("sampler oracle", Duration::from_secs(120), sampler_oracle),
        (
            "guidance identities",
            Duration::from_secs(120),
            guidance_identities,
        ),
        ("metrics", Duration::from_secs(120), metrics),
        (
            "end-to-end toy run",
            Duration::from_secs(2 * 3600),
            end_to_end,
        ),
        ("determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, limit, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| verdict(false, "panicked"));
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.1} s", took.as_secs_f64())
        } else {
            format!(
                "{:.1} s, over the {} s limit",
                took.as_secs_f64(),
                limit.as_secs()
            )
        };
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "{} {name} ({timing}): {}",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
        let _ = out.flush();
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn schedule_algebra() -> Verdict {
    let s = NoiseSchedule::default();
    let ends = s.sigma_at(0.0).unwrap() == 1e-3 && s.sigma_at(1.0).unwrap() == 1.0;
    let levels = s.discretize(3).unwrap();
    let decades = levels.levels() == [1.0, 1e-1, 1e-2, 1e-3];
    let c = step_coefficients(0.5, 2.0).unwrap();
    let coeffs = (c.eta - 0.75).abs() <= 1e-12 && (c.beta - 0.75f64.sqrt()).abs() <= 1e-12;
    let beta1 = step_coefficients(levels.delta(), 1.0).unwrap().beta == 0.0
        && step_coefficients(0.5, 1.0).unwrap().beta == 0.0;
    verdict(
        ends && decades && coeffs && beta1,
        format!(
            "endpoints {ends}, N=3 levels {:?}, (eta, beta)(0.5, 2) = ({}, {}), beta(alpha=1) zero {beta1}",
            levels.levels(),
            c.eta,
            c.beta
        ),
    )
}

/// `S(x, c, sigma) = -(x - x0) / sigma^2` with access to the clean batch.
struct Teacher(Array2<f64>);

impl ScoreModel for Teacher {
    fn score(&self, x: &Array2<f64>, _: &[Label], sigmas: &[f64]) -> wavediff::Result<Array2<f64>> {
        let mut out = x - &self.0;
        for (mut row, s) in out.outer_iter_mut().zip(sigmas) {
            row /= -(s * s);
        }
        Ok(out)
    }
}

struct ZeroScore;

impl ScoreModel for ZeroScore {
    fn score(&self, x: &Array2<f64>, _: &[Label], _: &[f64]) -> wavediff::Result<Array2<f64>> {
        Ok(Array2::zeros(x.dim()))
    }
}

fn loss_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clean = Array2::from_shape_simple_fn((100, 100), || rng.random_range(-1.0..1.0));
    let batch = Batch::new(clean.clone(), vec![Label::Class(0); 100]).unwrap();
    let schedule = NoiseSchedule::default();
    let teacher = score_loss(&Teacher(clean), &batch, &schedule, &mut rng).unwrap();
    let zero = score_loss(&ZeroScore, &batch, &schedule, &mut rng).unwrap();
    let pass = teacher < 1e-10 && (zero - 0.5).abs() <= 0.01;
    verdict(
        pass,
        format!("teacher loss {teacher:.2e} (< 1e-10), zero-score loss {zero:.4} over 10^4 elements (0.5 +- 2%)"),
    )
}

fn gradient_check() -> Verdict {
    let cfg = DagConfig::miniature(2);
    let mut net = DagNetwork::new(cfg, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clean = Array2::from_shape_simple_fn((2, 16), || rng.random_range(-0.8..0.8));
    let labels = [Label::Class(1), Label::Null];
    let pert =
        Perturbation::at_times(&[0.3, 0.8], 16, &NoiseSchedule::default(), &mut rng).unwrap();
    let x = pert.apply(&clean);
    net.zero_grad();
    let (scores, cache) = net.forward_train(&x, &labels, &pert.sigmas).unwrap();
    let (_, dscore) = loss_and_grad(&scores, &pert);
    net.backward(&cache, &dscore);
    let loss = |n: &DagNetwork| loss_value(&n.score(&x, &labels, &pert.sigmas).unwrap(), &pert);
    let report = check_gradients(&mut net, loss, GradCheckOptions::default());
    let rate = report.pass_rate();
    verdict(
        rate >= 0.95,
        format!(
            "{} of {} parameters within 1e-3 relative ({:.1}%, need 95%)",
            report.passed,
            report.checked,
            100.0 * rate
        ),
    )
}

/// Exact score of N(0, s^2) data perturbed by N(0, sigma^2) noise.
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

fn sampler_oracle() -> Verdict {
    let s = 0.25;
    let mut pass = true;
    let mut parts = Vec::new();
    for (steps, alpha) in [(100, 2.0), (50, 2.0), (100, 3.0)] {
        let cfg = SamplerConfig {
            steps,
            alpha,
            gamma: 0.0,
            seed: 11,
            ..SamplerConfig::default()
        };
        let x = sample(&Gaussian(s), &[Label::Null; 10], 1000, &cfg)
            .unwrap()
            .waveforms;
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let std = (x.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        let rel = (std - s) / s;
        let ok = mean.abs() < 0.01 && rel.abs() <= 0.05;
        pass &= ok;
        parts.push(format!(
            "N={steps} alpha={alpha}: mean {mean:+.4}, std {std:.4} ({:+.2}%){}",
            100.0 * rel,
            if ok { "" } else { " FAIL" }
        ));
    }
    verdict(pass, parts.join("; "))
}

fn guidance_identities() -> Verdict {
    let net = DagNetwork::new(DagConfig::toy(2), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Array2::from_shape_simple_fn((2, 256), || rng.random_range(-1.0..1.0));
    let labels = [Label::Class(0), Label::Class(1)];
    let sigmas = [0.05, 0.5];
    let cond = net.score(&x, &labels, &sigmas).unwrap();
    let null = net.score(&x, &[Label::Null; 2], &sigmas).unwrap();
    let bit_equal = guided_score(&net, &x, &labels, &sigmas, 0.0).unwrap() == cond;
    let mut affine_err: f64 = 0.0;
    for gamma in [0.5, 1.0, 2.0, 4.0, 7.5] {
        let g = guided_score(&net, &x, &labels, &sigmas, gamma).unwrap();
        let expected = &cond * (1.0 + gamma) - &null * gamma;
        let scale = expected.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = (&g - &expected).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        affine_err = affine_err.max(err);
    }
    let distinct = cond != null;

    let cfg = SamplerConfig {
        steps: 50,
        seed: 2,
        ..SamplerConfig::default()
    };
    let sampled = sample(&net, &labels, 256, &cfg).unwrap();
    let traced_peak = sampled.trace.max_peak();
    let steps_traced = sampled.trace.stats.len();
    let raw = sample(
        &net,
        &labels,
        256,
        &SamplerConfig {
            threshold: false,
            ..cfg
        },
    )
    .unwrap();
    let raw_peak = raw.trace.max_peak();
    let pass =
        bit_equal && distinct && affine_err <= 1e-10 && traced_peak <= 1.0 && steps_traced == 50;
    verdict(
        pass,
        format!(
            "gamma=0 bit-equal {bit_equal}, max relative affinity error {affine_err:.2e}, \
             max |x0_hat| over {steps_traced} traced steps {traced_peak:.4} \
             (without thresholding {raw_peak:.2})"
        ),
    )
}

fn stats1(mean: f64, var: f64) -> GaussianStats {
    GaussianStats {
        mean: nalgebra::DVector::from_element(1, mean),
        covariance: nalgebra::DMatrix::from_element(1, 1, var),
        count: 1000,
    }
}

/// `Tr((A B)^(1/2))` from the eigenvalues of the (non-symmetric) product.
fn brute_cross_term(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a * b)
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re.max(0.0).sqrt())
        .sum()
}

fn metrics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let set = EmbeddingSet::from_rows(&rows, "x").unwrap();
    let g = fit_gaussian(&set).unwrap();
    let self_fd = frechet_distance(&g, &g).unwrap();

    let fd_a = frechet_distance(&stats1(0.0, 1.0), &stats1(1.0, 1.0)).unwrap();
    let fd_b = frechet_distance(&stats1(0.0, 1.0), &stats1(0.0, 4.0)).unwrap();
    let exact = fd_a == 1.0 && fd_b == 1.0;

    let mut brute_err: f64 = 0.0;
    for d in 1..=3 {
        for trial in 0..20 {
            let n = 4 + trial;
            let draw = |rng: &mut ChaCha8Rng, shift: f64| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| {
                        (0..d)
                            .map(|_| rng.random_range(-1.0..1.0) * (1.0 + shift))
                            .collect()
                    })
                    .collect();
                fit_gaussian(&EmbeddingSet::from_rows(&rows, "r").unwrap()).unwrap()
            };
            let (a, b) = (draw(&mut rng, 0.0), draw(&mut rng, 0.7));
            let brute =
                (&a.mean - &b.mean).norm_squared() + a.covariance.trace() + b.covariance.trace()
                    - 2.0 * brute_cross_term(&a.covariance, &b.covariance);
            let fd = frechet_distance(&a, &b).unwrap();
            brute_err = brute_err.max((fd - brute.max(0.0)).abs());
        }
    }

    let mut ls_ok = true;
    let mut shift_err: f64 = 0.0;
    for trial in 0..200 {
        let (n, c) = (1 + trial % 17, 2 + trial % 6);
        let scale = [0.1, 1.0, 10.0, 50.0][trial % 4];
        let m = nalgebra::DMatrix::from_fn(n, c, |_, _| rng.random_range(-1.0..1.0) * scale);
        let ls = logit_score(&LogitMatrix::new(m.clone()).unwrap()).unwrap();
        ls_ok &= (1.0..=c as f64).contains(&ls);
        let mut shifted = m.clone();
        for (i, mut row) in shifted.row_iter_mut().enumerate() {
            row.add_scalar_mut(3.7 * i as f64 - 20.0);
        }
        let ls2 = logit_score(&LogitMatrix::new(shifted).unwrap()).unwrap();
        shift_err = shift_err.max((ls - ls2).abs());
    }
    let pass = self_fd <= 1e-6 && exact && brute_err <= 1e-6 && ls_ok && shift_err <= 1e-10;
    verdict(
        pass,
        format!(
            "FD(X,X) {self_fd:.2e}, 1-D cases {fd_a} and {fd_b}, brute-force gap (d<=3) {brute_err:.2e}, \
             LS within [1, C] {ls_ok}, LS shift error {shift_err:.2e}"
        ),
    )
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn end_to_end() -> Verdict {
    let exp = ToyExperiment::default();
    let report = exp.run().unwrap();
    let (guided, plain) = (report.result(2.0).unwrap(), report.result(0.0).unwrap());
    let n = guided.labels.len();
    let accurate = guided.accuracy >= 0.9;
    let fd_ok = (0..2).all(|c| guided.fd[c][c] < guided.fd[c][1 - c]);
    let ks: Vec<(f64, f64)> = (0..2)
        .map(|c| ks_two_sample(&guided.centroids[c], &plain.centroids[c]))
        .collect();
    // two tests, one per class
    let shifted = ks.iter().any(|&(_, p)| p < 0.01 / 2.0);
    let mut detail = format!(
        "{} steps in {:.0} s; threshold {:.0} Hz; accuracy over {n} samples {:.3} at gamma=2 ({:.3} at gamma=0); ",
        exp.training.max_steps,
        report.train_secs,
        report.classifier.threshold_hz,
        guided.accuracy,
        plain.accuracy
    );
    for c in 0..2 {
        detail += &format!(
            "class {c}: FD to own {:.2} vs other {:.2}, centroid {:.0} -> {:.0} Hz, KS D {:.3} p {:.2e}; ",
            guided.fd[c][c],
            guided.fd[c][1 - c],
            mean(&plain.centroids[c]),
            mean(&guided.centroids[c]),
            ks[c].0,
            ks[c].1
        );
    }
    detail += &format!("(a) {accurate} (b) {fd_ok} (c) {shifted}");
    verdict(accurate && fd_ok && shifted, detail)
}

fn determinism() -> Verdict {
    let exp = ToyExperiment {
        training: TrainConfig {
            max_steps: 40,
            log_every: 5,
            validate_every: 20,
            ..ToyExperiment::default().training
        },
        samples_per_class: 4,
        sampler: SamplerConfig {
            steps: 20,
            ..SamplerConfig::default()
        },
        ..ToyExperiment::default()
    };
    let a = exp.run().unwrap();
    let b = exp.run().unwrap();
    let curve = |log: &str| -> Vec<String> {
        log.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect()
    };
    let same_curve = curve(&a.loss_log) == curve(&b.loss_log);
    let same_waves = a.results.iter().zip(&b.results).all(|(x, y)| {
        x.waveforms
            .iter()
            .zip(&y.waveforms)
            .all(|(u, v)| u.to_bits() == v.to_bits())
    });
    verdict(
        same_curve && same_waves,
        format!(
            "{} loss-log rows identical {same_curve}; {} waveforms bit-identical {same_waves}",
            curve(&a.loss_log).len() - 1,
            a.results.iter().map(|r| r.waveforms.nrows()).sum::<usize>()
        ),
    )
}
