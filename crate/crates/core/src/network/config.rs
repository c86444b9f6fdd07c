use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters for [`super::DagNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagConfig {
    pub sample_rate: u32,
    /// Per-level downsampling factors, outermost first.
    pub stride_factors: Vec<usize>,
    /// Per-level feature widths, outermost first.
    pub channel_widths: Vec<usize>,
    pub vocab_size: usize,
    pub sigma_embed_dim: usize,
    pub sigma_mlp_hidden: usize,
    pub fourier_features: usize,
    pub fourier_scale: f64,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    /// When false the recurrent bottleneck is bypassed (identity).
    pub recurrent: bool,
    pub leaky_slope: f64,
    pub kernel_size: usize,
}

/// Labels per class are embedded in `10 * vocab_size` dimensions.
pub const LABEL_EMBED_FACTOR: usize = 10;

impl DagConfig {
    fn full_size(sample_rate: u32, stride_factors: Vec<usize>, vocab_size: usize) -> Self {
        Self {
            sample_rate,
            stride_factors,
            channel_widths: vec![64, 128, 128, 256, 512],
            vocab_size,
            sigma_embed_dim: 128,
            sigma_mlp_hidden: 256,
            fourier_features: 32,
            fourier_scale: 16.0,
            gru_hidden: 512,
            gru_layers: 2,
            recurrent: true,
            leaky_slope: 0.2,
            kernel_size: 3,
        }
    }

    /// Full-band model: 48 kHz, latent rate 150 Hz.
    pub fn dag48(vocab_size: usize) -> Self {
        Self::full_size(48_000, vec![2, 2, 4, 4, 5], vocab_size)
    }

    /// Band-limited model at 22.05 kHz.
    pub fn dag22(vocab_size: usize) -> Self {
        Self::full_size(22_050, vec![2, 2, 3, 3, 5], vocab_size)
    }

    /// Tiny network for gradient checks and unit tests.
    pub fn miniature(vocab_size: usize) -> Self {
        Self {
            sample_rate: 4_000,
            stride_factors: vec![2, 2],
            channel_widths: vec![4, 8],
            vocab_size,
            sigma_embed_dim: 6,
            sigma_mlp_hidden: 8,
            fourier_features: 4,
            fourier_scale: 1.0,
            gru_hidden: 4,
            gru_layers: 1,
            recurrent: true,
            leaky_slope: 0.2,
            kernel_size: 3,
        }
    }

    /// Small network for end-to-end runs at 4 kHz on one CPU core.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            sample_rate: 4_000,
            stride_factors: vec![2, 2, 4],
            channel_widths: vec![16, 32, 48],
            vocab_size,
            sigma_embed_dim: 32,
            sigma_mlp_hidden: 64,
            fourier_features: 16,
            fourier_scale: 0.5,
            gru_hidden: 32,
            gru_layers: 1,
            recurrent: true,
            leaky_slope: 0.2,
            kernel_size: 3,
        }
    }

    pub fn by_preset(name: &str, vocab_size: usize) -> Result<Self> {
        match name {
            "dag48" => Ok(Self::dag48(vocab_size)),
            "dag22" => Ok(Self::dag22(vocab_size)),
            "miniature" => Ok(Self::miniature(vocab_size)),
            "toy" => Ok(Self::toy(vocab_size)),
            other => Err(Error::config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn label_embed_dim(&self) -> usize {
        LABEL_EMBED_FACTOR * self.vocab_size
    }

    pub fn cond_dim(&self) -> usize {
        self.label_embed_dim() + self.sigma_embed_dim
    }

    pub fn levels(&self) -> usize {
        self.stride_factors.len()
    }

    /// Total downsampling factor; admissible lengths are its multiples.
    pub fn stride_product(&self) -> usize {
        self.stride_factors.iter().product()
    }

    pub fn latent_len(&self, len: usize) -> Result<usize> {
        self.check_length(len)?;
        Ok(len / self.stride_product())
    }

    pub fn check_length(&self, len: usize) -> Result<()> {
        let p = self.stride_product();
        if len == 0 || !len.is_multiple_of(p) {
            return Err(Error::domain(format!(
                "length {len} is not a positive multiple of the stride product {p}"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.stride_factors.is_empty() {
            return bad("at least one level is required");
        }
        if self.stride_factors.len() != self.channel_widths.len() {
            return bad("stride_factors and channel_widths must have equal length");
        }
        if self.stride_factors.contains(&0) || self.channel_widths.contains(&0) {
            return bad("strides and widths must be positive");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.sigma_embed_dim == 0 || self.sigma_mlp_hidden == 0 || self.fourier_features == 0 {
            return bad("noise embedding sizes must be positive");
        }
        if self.recurrent && (self.gru_hidden == 0 || self.gru_layers == 0) {
            return bad("recurrent bottleneck needs positive hidden size and layer count");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad("leaky_slope must lie in (0, 1)");
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad("kernel_size must be odd");
        }
        if !(self.fourier_scale.is_finite() && self.fourier_scale > 0.0) {
            return bad("fourier_scale must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_layouts() {
        let d48 = DagConfig::dag48(10);
        assert_eq!(d48.stride_factors, vec![2, 2, 4, 4, 5]);
        assert_eq!(d48.channel_widths, vec![64, 128, 128, 256, 512]);
        assert_eq!(d48.stride_product(), 320);
        assert_eq!(d48.latent_len(48_000).unwrap(), 150);
        assert_eq!(d48.label_embed_dim(), 100);

        let d22 = DagConfig::dag22(15);
        assert_eq!(d22.sample_rate, 22_050);
        assert_eq!(d22.stride_product(), 180);
        assert_eq!(d22.latent_len(22_140).unwrap(), 123);
        assert!(d22.latent_len(22_050).is_err());
        assert_eq!(d22.label_embed_dim(), 150);
        d48.validate().unwrap();
        d22.validate().unwrap();
    }

    #[test]
    fn validation_catches_mismatched_levels() {
        let mut c = DagConfig::miniature(2);
        c.channel_widths.push(16);
        assert!(c.validate().is_err());
        let mut c = DagConfig::miniature(2);
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        assert!(DagConfig::by_preset("dag96", 3).is_err());
    }
}
