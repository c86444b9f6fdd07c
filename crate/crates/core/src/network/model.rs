use ndarray::{concatenate, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DagConfig;
use super::embedding::{split_cond, LabelEmbedding, SigmaCache, SigmaEmbedder};
use super::gblock::{GBlock, GBlockCache};
use super::{Label, ScoreModel};
use crate::error::{Error, Result};
use crate::nn::conv::Conv1dCache;
use crate::nn::gru::BiGruCache;
use crate::nn::linear::LinearCache;
use crate::nn::{impl_module, BiGru, Conv1d, Linear};

/// The conditional score network `S(x, c, sigma)`.
///
/// The output head predicts `sigma * S`; the network divides by `sigma` so the
/// denoising target `-z` has unit scale at every noise level.
#[derive(Debug, Clone)]
pub struct DagNetwork {
    config: DagConfig,
    pub labels: LabelEmbedding,
    pub sigma: SigmaEmbedder,
    pub encoder: Vec<GBlock>,
    pub recurrent: Option<BiGru>,
    pub recurrent_proj: Option<Linear>,
    /// Encoder-to-decoder projections, one per level.
    pub skips: Vec<Conv1d>,
    /// Indexed by level; executed from the innermost level outwards.
    pub decoder: Vec<GBlock>,
    pub head: Conv1d,
}

impl_module!(DagNetwork {
    labels,
    sigma,
    encoder,
    recurrent,
    recurrent_proj,
    skips,
    decoder,
    head
});

/// Intermediate values retained for [`DagNetwork::backward`].
pub struct ForwardCache {
    labels: Option<Vec<Label>>,
    sigmas: Vec<f64>,
    sigma: SigmaCache,
    encoder: Vec<GBlockCache>,
    recurrent: Option<(BiGruCache, LinearCache)>,
    skips: Vec<Conv1dCache>,
    decoder: Vec<GBlockCache>,
    head: Conv1dCache,
}

impl DagNetwork {
    pub fn new(config: DagConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let cond = config.cond_dim();
        let k = config.kernel_size;
        let slope = config.leaky_slope;
        let widths = &config.channel_widths;

        let labels = LabelEmbedding::new(config.vocab_size, config.label_embed_dim(), rng);
        let sigma = SigmaEmbedder::new(&config, rng);
        let encoder = config
            .stride_factors
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let in_ch = if i == 0 { 1 } else { widths[i - 1] };
                GBlock::down(in_ch, widths[i], s, cond, k, slope, rng)
            })
            .collect();
        let inner = *widths.last().expect("validated non-empty");
        let (recurrent, recurrent_proj) = if config.recurrent {
            let gru = BiGru::new(inner, config.gru_hidden, config.gru_layers, rng);
            let proj = Linear::new(gru.output_dim(), inner, rng);
            (Some(gru), Some(proj))
        } else {
            (None, None)
        };
        let skips = widths
            .iter()
            .map(|&w| Conv1d::pointwise(w, w, rng))
            .collect();
        let decoder = config
            .stride_factors
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let out_ch = if i == 0 { widths[0] } else { widths[i - 1] };
                GBlock::up(widths[i], out_ch, s, cond, k, slope, rng)
            })
            .collect();
        let head = Conv1d::pointwise(widths[0], 1, rng);
        Ok(Self {
            config,
            labels,
            sigma,
            encoder,
            recurrent,
            recurrent_proj,
            skips,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &DagConfig {
        &self.config
    }

    /// Label embedding rows (or null token) for a batch.
    pub fn label_vectors(&self, labels: &[Label]) -> Result<Array2<f64>> {
        self.labels.embed_batch(labels)
    }

    /// Score with an explicit label-conditioning matrix `c` of shape `(batch, 10v)`.
    pub fn score_with_conditioning(
        &self,
        x: &Array2<f64>,
        c: &Array2<f64>,
        sigmas: &[f64],
    ) -> Result<Array2<f64>> {
        if c.dim() != (x.nrows(), self.config.label_embed_dim()) {
            return Err(Error::shape(format!(
                "conditioning must be ({}, {}), got {:?}",
                x.nrows(),
                self.config.label_embed_dim(),
                c.dim()
            )));
        }
        Ok(self.run(x, c.clone(), None, sigmas, false)?.0)
    }

    /// Innermost encoder features `(batch, channels, latent_len)`, the
    /// bottleneck input.
    pub fn encode(&self, x: &Array2<f64>, labels: &[Label], sigmas: &[f64]) -> Result<Array3<f64>> {
        let c = self.check_batch(x, labels, sigmas)?;
        self.config.check_length(x.ncols())?;
        let (g, _) = self.sigma.forward(sigmas)?;
        let cond = concatenate(Axis(1), &[c.view(), g.view()]).expect("same batch");
        let mut h = x.view().insert_axis(Axis(1)).to_owned();
        for block in &self.encoder {
            h = block.forward(&h, &cond).0;
        }
        Ok(h)
    }

    /// Forward pass retaining everything needed for [`Self::backward`].
    pub fn forward_train(
        &self,
        x: &Array2<f64>,
        labels: &[Label],
        sigmas: &[f64],
    ) -> Result<(Array2<f64>, ForwardCache)> {
        let c = self.check_batch(x, labels, sigmas)?;
        let (score, cache) = self.run(x, c, Some(labels), sigmas, true)?;
        Ok((score, cache.expect("cache requested")))
    }

    fn check_batch(
        &self,
        x: &Array2<f64>,
        labels: &[Label],
        sigmas: &[f64],
    ) -> Result<Array2<f64>> {
        if labels.len() != x.nrows() || sigmas.len() != x.nrows() {
            return Err(Error::shape(format!(
                "batch of {} waveforms needs as many labels ({}) and noise levels ({})",
                x.nrows(),
                labels.len(),
                sigmas.len()
            )));
        }
        self.labels.embed_batch(labels)
    }

    fn run(
        &self,
        x: &Array2<f64>,
        c: Array2<f64>,
        labels: Option<&[Label]>,
        sigmas: &[f64],
        keep: bool,
    ) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        let (batch, len) = x.dim();
        self.config.check_length(len)?;
        if sigmas.len() != batch {
            return Err(Error::shape("one noise level per batch row is required"));
        }
        let (g, sigma_cache) = self.sigma.forward(sigmas)?;
        let cond = concatenate(Axis(1), &[c.view(), g.view()]).expect("same batch");

        let mut h = x.view().insert_axis(Axis(1)).to_owned();
        let mut enc_out = Vec::with_capacity(self.encoder.len());
        let mut enc_caches = Vec::new();
        for block in &self.encoder {
            let (y, cache) = block.forward(&h, &cond);
            if keep {
                enc_caches.push(cache);
            }
            enc_out.push(y.clone());
            h = y;
        }

        let mut rec_cache = None;
        if let (Some(gru), Some(proj)) = (&self.recurrent, &self.recurrent_proj) {
            let (b, ch, t) = h.dim();
            let seq = h
                .view()
                .permuted_axes([0, 2, 1])
                .as_standard_layout()
                .into_owned();
            let (hidden, gru_cache) = gru.forward(&seq);
            let flat = hidden
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((b * t, gru.output_dim()))
                .expect("contiguous");
            let (projected, lin_cache) = proj.forward(flat);
            let projected = projected
                .into_shape_with_order((b, t, ch))
                .expect("contiguous")
                .permuted_axes([0, 2, 1]);
            h = h + projected;
            if keep {
                rec_cache = Some((gru_cache, lin_cache));
            }
        }

        let mut skip_caches = Vec::new();
        let mut dec_caches = Vec::new();
        for level in (0..self.decoder.len()).rev() {
            let (s, skip_cache) = self.skips[level].forward(&enc_out[level]);
            let input = h + s;
            let (y, cache) = self.decoder[level].forward(&input, &cond);
            if keep {
                skip_caches.push(skip_cache);
                dec_caches.push(cache);
            }
            h = y;
        }
        let (out, head_cache) = self.head.forward(&h);
        let mut score = out.index_axis_move(Axis(1), 0);
        for (mut row, &sigma) in score.outer_iter_mut().zip(sigmas) {
            row /= sigma;
        }
        if score.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "score network output".into(),
            });
        }
        let cache = keep.then(|| ForwardCache {
            labels: labels.map(<[Label]>::to_vec),
            sigmas: sigmas.to_vec(),
            sigma: sigma_cache,
            encoder: enc_caches,
            recurrent: rec_cache,
            skips: skip_caches,
            decoder: dec_caches,
            head: head_cache,
        });
        Ok((score, cache))
    }

    /// Accumulates parameter gradients for an upstream gradient on the score.
    pub fn backward(&mut self, cache: &ForwardCache, dscore: &Array2<f64>) {
        let (batch, _) = dscore.dim();
        let mut dout = dscore.clone();
        for (mut row, &sigma) in dout.outer_iter_mut().zip(&cache.sigmas) {
            row /= sigma;
        }
        let dout = dout.insert_axis(Axis(1));
        let mut dh = self.head.backward(&cache.head, &dout);
        let mut dcond = Array2::<f64>::zeros((batch, self.config.cond_dim()));

        let levels = self.decoder.len();
        let mut d_enc: Vec<Option<Array3<f64>>> = vec![None; levels];
        for level in 0..levels {
            // decoder caches were stored innermost-first
            let step = levels - 1 - level;
            let dinput = self.decoder[level].backward(&cache.decoder[step], &dh, &mut dcond);
            d_enc[level] = Some(self.skips[level].backward(&cache.skips[step], &dinput));
            dh = dinput;
        }

        if let (Some(gru), Some(proj), Some((gru_cache, lin_cache))) = (
            &mut self.recurrent,
            &mut self.recurrent_proj,
            &cache.recurrent,
        ) {
            let (b, ch, t) = dh.dim();
            let dproj = dh
                .view()
                .permuted_axes([0, 2, 1])
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((b * t, ch))
                .expect("contiguous");
            let dhidden = proj.backward(lin_cache, &dproj);
            let dhidden = dhidden
                .into_shape_with_order((b, t, gru.output_dim()))
                .expect("contiguous");
            let dseq = gru.backward(gru_cache, &dhidden);
            dh = dh + dseq.permuted_axes([0, 2, 1]);
        }

        for level in (0..levels).rev() {
            if let Some(d) = d_enc[level].take() {
                dh += &d;
            }
            dh = self.encoder[level].backward(&cache.encoder[level], &dh, &mut dcond);
        }

        let (dc, dg) = split_cond(&dcond, self.config.label_embed_dim());
        if let Some(labels) = &cache.labels {
            self.labels.backward(labels, dc);
        }
        self.sigma.backward(&cache.sigma, &dg);
    }
}

impl ScoreModel for DagNetwork {
    fn score(&self, x: &Array2<f64>, labels: &[Label], sigmas: &[f64]) -> Result<Array2<f64>> {
        let c = self.check_batch(x, labels, sigmas)?;
        Ok(self.run(x, c, Some(labels), sigmas, false)?.0)
    }
}
