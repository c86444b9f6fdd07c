use std::f64::consts::TAU;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;

use super::config::DagConfig;
use super::Label;
use crate::error::{Error, Result};
use crate::nn::linear::LinearCache;
use crate::nn::{impl_module, ops, Linear, Param};

/// Learnable `v x 10v` label table plus a null token for unconditional use.
#[derive(Debug, Clone)]
pub struct LabelEmbedding {
    pub table: Param,
    pub null_token: Param,
}

impl_module!(LabelEmbedding { table, null_token });

impl LabelEmbedding {
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            table: Param::normal(&[vocab_size, dim], 1.0, rng),
            null_token: Param::zeros(&[dim]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    fn check(&self, label: Label) -> Result<()> {
        match label {
            Label::Class(i) if i >= self.vocab_size() => Err(Error::domain(format!(
                "label {i} is outside the vocabulary of size {}",
                self.vocab_size()
            ))),
            _ => Ok(()),
        }
    }

    /// Conditioning vector `c` for one label.
    pub fn embed(&self, label: Label) -> Result<Array1<f64>> {
        self.check(label)?;
        Ok(match label {
            Label::Class(i) => self.table.mat().row(i).to_owned(),
            Label::Null => self.null_token.vec().to_owned(),
        })
    }

    pub fn embed_batch(&self, labels: &[Label]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((labels.len(), self.dim()));
        for (mut row, &label) in out.outer_iter_mut().zip(labels) {
            row.assign(&self.embed(label)?);
        }
        Ok(out)
    }

    pub fn backward(&mut self, labels: &[Label], dc: ArrayView2<'_, f64>) {
        let dim = self.dim();
        for (&label, grad) in labels.iter().zip(dc.outer_iter()) {
            let target = match label {
                Label::Class(i) => &mut self.table.grad[i * dim..(i + 1) * dim],
                Label::Null => &mut self.null_token.grad[..],
            };
            for (t, g) in target.iter_mut().zip(grad.iter()) {
                *t += g;
            }
        }
    }
}

/// Noise-level embedding `g`: random Fourier features of `log sigma`
/// followed by a one-hidden-layer perceptron.
#[derive(Debug, Clone)]
pub struct SigmaEmbedder {
    /// Frozen after initialization.
    pub frequencies: Param,
    pub hidden: Linear,
    pub output: Linear,
    slope: f64,
}

impl_module!(SigmaEmbedder {
    frequencies,
    hidden,
    output
});

pub struct SigmaCache {
    hidden: LinearCache,
    pre_act: Array2<f64>,
    output: LinearCache,
}

impl SigmaEmbedder {
    pub fn new<R: Rng + ?Sized>(config: &DagConfig, rng: &mut R) -> Self {
        let f = config.fourier_features;
        let frequencies = Param::normal(&[f], config.fourier_scale, rng).frozen();
        Self {
            frequencies,
            hidden: Linear::new(2 * f, config.sigma_mlp_hidden, rng),
            output: Linear::new(config.sigma_mlp_hidden, config.sigma_embed_dim, rng),
            slope: config.leaky_slope,
        }
    }

    pub fn dim(&self) -> usize {
        self.output.out_dim()
    }

    /// `[sin(2 pi f log sigma), cos(2 pi f log sigma)]` per row.
    pub fn fourier_features(&self, sigmas: &[f64]) -> Result<Array2<f64>> {
        let freqs = &self.frequencies.value;
        let f = freqs.len();
        let mut out = Array2::zeros((sigmas.len(), 2 * f));
        for (mut row, &sigma) in out.outer_iter_mut().zip(sigmas) {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::domain(format!(
                    "noise level {sigma} must be positive"
                )));
            }
            let ls = sigma.ln();
            for (k, &freq) in freqs.iter().enumerate() {
                let phase = TAU * freq * ls;
                row[k] = phase.sin();
                row[f + k] = phase.cos();
            }
        }
        Ok(out)
    }

    pub fn forward(&self, sigmas: &[f64]) -> Result<(Array2<f64>, SigmaCache)> {
        let feats = self.fourier_features(sigmas)?;
        let (pre_act, hidden) = self.hidden.forward(feats);
        let act = ops::leaky_relu(&pre_act, self.slope);
        let (g, output) = self.output.forward(act);
        Ok((
            g,
            SigmaCache {
                hidden,
                pre_act,
                output,
            },
        ))
    }

    /// Conditioning vector `g` for one noise level.
    pub fn embed(&self, sigma: f64) -> Result<Array1<f64>> {
        let (g, _) = self.forward(&[sigma])?;
        Ok(g.row(0).to_owned())
    }

    pub fn backward(&mut self, cache: &SigmaCache, dg: &Array2<f64>) {
        let dact = self.output.backward(&cache.output, dg);
        let dpre = ops::leaky_relu_backward(&cache.pre_act, &dact, self.slope);
        // Fourier features are frozen; nothing flows further back.
        let _ = self.hidden.backward(&cache.hidden, &dpre);
    }

    /// Upper bound on `|g(a) - g(b)| / |log a - log b|` from parameter norms.
    pub fn lipschitz_bound(&self) -> f64 {
        let fro = |p: &Param| p.value.iter().map(|v| v * v).sum::<f64>().sqrt();
        let freq_norm = fro(&self.frequencies);
        TAU * freq_norm * fro(&self.hidden.weight) * fro(&self.output.weight)
    }
}

pub(crate) fn split_cond(
    dcond: &Array2<f64>,
    label_dim: usize,
) -> (ArrayView2<'_, f64>, Array2<f64>) {
    (
        dcond.slice(s![.., ..label_dim]),
        dcond.slice(s![.., label_dim..]).to_owned(),
    )
}
