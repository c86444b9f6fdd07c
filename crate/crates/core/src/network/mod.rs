//! The conditional score network.
//!
//! A waveform passes through downsampling GBlocks, a bidirectional GRU
//! bottleneck with a projected residual, and upsampling GBlocks joined to the
//! encoder by per-level skip connections. Every GBlock is modulated by FiLM
//! layers driven by the concatenation of a label embedding `c` and a noise
//! level embedding `g`.

mod config;
mod embedding;
mod gblock;
mod model;

use ndarray::Array2;

pub use config::DagConfig;
pub use embedding::{LabelEmbedding, SigmaEmbedder};
pub use gblock::{GBlock, SUB_BLOCKS};
pub use model::DagNetwork;

use crate::error::Result;

/// Class conditioning: a vocabulary index or the unconditional null token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Class(usize),
    Null,
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(i) => Some(*i),
            Label::Null => None,
        }
    }
}

impl From<usize> for Label {
    fn from(i: usize) -> Self {
        Label::Class(i)
    }
}

/// Anything that estimates the score of noise-perturbed waveforms.
///
/// `x` is `(batch, samples)`; `labels` and `sigmas` have one entry per row.
pub trait ScoreModel {
    fn score(&self, x: &Array2<f64>, labels: &[Label], sigmas: &[f64]) -> Result<Array2<f64>>;
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn score(&self, x: &Array2<f64>, labels: &[Label], sigmas: &[f64]) -> Result<Array2<f64>> {
        (**self).score(x, labels, sigmas)
    }
}
