//! Encoder/decoder GBlocks.
//!
//! Layout of one block with resampling factor `s`:
//!
//! ```text
//! h  = resample_conv(x)                     strided conv (down) or transposed conv (up)
//! a  = sub2(sub1(h))                        sub = FiLM -> LeakyReLU -> dilated conv
//! h2 = a + pointwise(linear_resample(x))    skip path
//! y  = h2 + sub4(sub3(h2))
//! ```

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::nn::conv::{Conv1dCache, ConvTranspose1dCache};
use crate::nn::film::FilmCache;
use crate::nn::{impl_module, ops, Conv1d, ConvTranspose1d, Film, Module, Param};

/// Sub-blocks per GBlock; each holds one FiLM, one activation, one convolution.
pub const SUB_BLOCKS: usize = 4;
const DILATIONS: [usize; SUB_BLOCKS] = [1, 2, 4, 8];

#[derive(Debug, Clone)]
pub struct SubBlock {
    pub film: Film,
    pub conv: Conv1d,
}

impl_module!(SubBlock { film, conv });

struct SubCache {
    film: FilmCache,
    modulated: Array3<f64>,
    conv: Conv1dCache,
}

impl SubBlock {
    fn forward(&self, h: Array3<f64>, cond: &Array2<f64>, slope: f64) -> (Array3<f64>, SubCache) {
        let (modulated, film) = self.film.forward(h, cond.clone());
        let act = ops::leaky_relu(&modulated, slope);
        let (y, conv) = self.conv.forward(&act);
        (
            y,
            SubCache {
                film,
                modulated,
                conv,
            },
        )
    }

    fn backward(
        &mut self,
        cache: &SubCache,
        dy: &Array3<f64>,
        dcond: &mut Array2<f64>,
        slope: f64,
    ) -> Array3<f64> {
        let dact = self.conv.backward(&cache.conv, dy);
        let dmod = ops::leaky_relu_backward(&cache.modulated, &dact, slope);
        let (dh, dc) = self.film.backward(&cache.film, &dmod);
        *dcond += &dc;
        dh
    }
}

/// Time-resampling entry convolution of a block.
#[derive(Debug, Clone)]
pub enum Resampler {
    Down(Conv1d),
    Up(ConvTranspose1d),
}

impl Module for Resampler {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        match self {
            Resampler::Down(c) => c.collect(prefix, out),
            Resampler::Up(c) => c.collect(prefix, out),
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        match self {
            Resampler::Down(c) => c.collect_mut(prefix, out),
            Resampler::Up(c) => c.collect_mut(prefix, out),
        }
    }
}

enum ResamplerCache {
    Down(Conv1dCache),
    Up(ConvTranspose1dCache),
}

#[derive(Debug, Clone)]
pub struct GBlock {
    pub entry: Resampler,
    pub subs: Vec<SubBlock>,
    pub skip: Conv1d,
    factor: usize,
    slope: f64,
}

impl_module!(GBlock { entry, subs, skip });

pub struct GBlockCache {
    entry: ResamplerCache,
    subs: Vec<SubCache>,
    skip: Conv1dCache,
}

impl GBlock {
    fn build<R: Rng + ?Sized>(
        entry: Resampler,
        in_ch: usize,
        out_ch: usize,
        factor: usize,
        cond_dim: usize,
        kernel: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let subs = DILATIONS
            .iter()
            .map(|&d| SubBlock {
                film: Film::new(cond_dim, out_ch, rng),
                conv: Conv1d::same(out_ch, out_ch, kernel, d, rng),
            })
            .collect();
        Self {
            entry,
            subs,
            skip: Conv1d::pointwise(in_ch, out_ch, rng),
            factor,
            slope,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn down<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        factor: usize,
        cond_dim: usize,
        kernel: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let entry = Resampler::Down(Conv1d::downsampler(in_ch, out_ch, factor, rng));
        Self::build(entry, in_ch, out_ch, factor, cond_dim, kernel, slope, rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn up<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        factor: usize,
        cond_dim: usize,
        kernel: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let entry = Resampler::Up(ConvTranspose1d::upsampler(in_ch, out_ch, factor, rng));
        Self::build(entry, in_ch, out_ch, factor, cond_dim, kernel, slope, rng)
    }

    pub fn is_downsampling(&self) -> bool {
        matches!(self.entry, Resampler::Down(_))
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    fn resample_skip(&self, x: &Array3<f64>) -> Array3<f64> {
        match self.entry {
            Resampler::Down(_) => ops::avg_pool(x, self.factor),
            Resampler::Up(_) => ops::linear_upsample(x, self.factor),
        }
    }

    fn resample_skip_backward(&self, dy: &Array3<f64>) -> Array3<f64> {
        match self.entry {
            Resampler::Down(_) => ops::avg_pool_backward(dy, self.factor),
            Resampler::Up(_) => ops::linear_upsample_backward(dy, self.factor),
        }
    }

    pub fn forward(&self, x: &Array3<f64>, cond: &Array2<f64>) -> (Array3<f64>, GBlockCache) {
        let (h, entry) = match &self.entry {
            Resampler::Down(c) => {
                let (h, cache) = c.forward(x);
                (h, ResamplerCache::Down(cache))
            }
            Resampler::Up(c) => {
                let (h, cache) = c.forward(x);
                (h, ResamplerCache::Up(cache))
            }
        };
        let mut caches = Vec::with_capacity(SUB_BLOCKS);
        let (a, c0) = self.subs[0].forward(h, cond, self.slope);
        caches.push(c0);
        let (a, c1) = self.subs[1].forward(a, cond, self.slope);
        caches.push(c1);
        let (s, skip) = self.skip.forward(&self.resample_skip(x));
        let h2 = a + s;
        let (b, c2) = self.subs[2].forward(h2.clone(), cond, self.slope);
        caches.push(c2);
        let (b, c3) = self.subs[3].forward(b, cond, self.slope);
        caches.push(c3);
        (
            h2 + b,
            GBlockCache {
                entry,
                subs: caches,
                skip,
            },
        )
    }

    /// Returns the input gradient; conditioning gradients accumulate into `dcond`.
    pub fn backward(
        &mut self,
        cache: &GBlockCache,
        dy: &Array3<f64>,
        dcond: &mut Array2<f64>,
    ) -> Array3<f64> {
        let slope = self.slope;
        let db = self.subs[3].backward(&cache.subs[3], dy, dcond, slope);
        let dh2 = dy + &self.subs[2].backward(&cache.subs[2], &db, dcond, slope);
        let dskip = self.skip.backward(&cache.skip, &dh2);
        let mut dx = self.resample_skip_backward(&dskip);
        let da = self.subs[1].backward(&cache.subs[1], &dh2, dcond, slope);
        let dh = self.subs[0].backward(&cache.subs[0], &da, dcond, slope);
        dx += &match (&mut self.entry, &cache.entry) {
            (Resampler::Down(c), ResamplerCache::Down(cc)) => c.backward(cc, &dh),
            (Resampler::Up(c), ResamplerCache::Up(cc)) => c.backward(cc, &dh),
            _ => unreachable!("cache built by the same block"),
        };
        dx
    }
}
