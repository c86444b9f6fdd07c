use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;

use super::impl_module;
use super::linear::{Linear, LinearCache};
use crate::error::{Error, Result};

/// Feature-wise linear modulation.
///
/// A projection of the conditioning vector yields per-channel `(scale, shift)`;
/// the output is `(1 + scale) * h + shift`, broadcast over time. A zero
/// projection is therefore the identity map.
#[derive(Debug, Clone)]
pub struct Film {
    pub proj: Linear,
}

impl_module!(Film { proj });

pub struct FilmCache {
    input: Array3<f64>,
    gain: Array2<f64>,
    proj: LinearCache,
}

impl Film {
    pub fn new<R: Rng + ?Sized>(cond_dim: usize, channels: usize, rng: &mut R) -> Self {
        Self {
            proj: Linear::new(cond_dim, 2 * channels, rng),
        }
    }

    pub fn identity(cond_dim: usize, channels: usize) -> Self {
        Self {
            proj: Linear::zeros(cond_dim, 2 * channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.proj.out_dim() / 2
    }

    pub fn cond_dim(&self) -> usize {
        self.proj.in_dim()
    }

    /// Checked entry point: validates shapes before modulating.
    pub fn modulate(&self, h: &Array3<f64>, cond: &Array2<f64>) -> Result<Array3<f64>> {
        let (b, c, _) = h.dim();
        if cond.ncols() != self.cond_dim() {
            return Err(Error::shape(format!(
                "FiLM expects conditioning of width {}, got {}",
                self.cond_dim(),
                cond.ncols()
            )));
        }
        if c != self.channels() || cond.nrows() != b {
            return Err(Error::shape(format!(
                "FiLM over {} channels got features {:?} and conditioning {:?}",
                self.channels(),
                h.dim(),
                cond.dim()
            )));
        }
        Ok(self.forward(h.clone(), cond.clone()).0)
    }

    pub fn forward(&self, h: Array3<f64>, cond: Array2<f64>) -> (Array3<f64>, FilmCache) {
        let c = self.channels();
        let (params, proj) = self.proj.forward(cond);
        let gain = params.slice(s![.., ..c]).mapv(|v| 1.0 + v);
        let shift = params.slice(s![.., c..]);
        let y = &h * &gain.view().insert_axis(Axis(2)) + shift.insert_axis(Axis(2));
        (
            y,
            FilmCache {
                input: h,
                gain,
                proj,
            },
        )
    }

    /// Returns `(d features, d conditioning)`.
    pub fn backward(&mut self, cache: &FilmCache, dy: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        let c = self.channels();
        let dh = dy * &cache.gain.view().insert_axis(Axis(2));
        let dgain = (dy * &cache.input).sum_axis(Axis(2));
        let dshift = dy.sum_axis(Axis(2));
        let mut dparams = Array2::zeros((dy.dim().0, 2 * c));
        dparams.slice_mut(s![.., ..c]).assign(&dgain);
        dparams.slice_mut(s![.., c..]).assign(&dshift);
        let dcond = self.proj.backward(&cache.proj, &dparams);
        (dh, dcond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_projection_is_identity() {
        let film = Film::identity(6, 3);
        let h = Array3::from_shape_fn((2, 3, 5), |(a, b, c)| (a + b * c) as f64 - 1.5);
        let cond = Array2::from_elem((2, 6), 0.7);
        assert_eq!(film.modulate(&h, &cond).unwrap(), h);
    }

    #[test]
    fn constant_features_stay_constant_over_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let film = Film::new(4, 2, &mut rng);
        let h = Array3::from_elem((1, 2, 9), 0.3);
        let cond = Array2::from_shape_fn((1, 4), |(_, j)| j as f64);
        let y = film.modulate(&h, &cond).unwrap();
        for ch in 0..2usize {
            let row = y.index_axis(Axis(0), 0).row(ch).to_owned();
            assert!(row.iter().all(|v| *v == row[0]));
        }
    }

    #[test]
    fn different_conditioning_changes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let film = Film::new(4, 3, &mut rng);
            let h = Array3::from_shape_fn((1, 3, 4), |(_, b, c)| (b as f64 - c as f64) * 0.1);
            let a = Array2::from_shape_vec((1, 4), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
            let b = Array2::from_shape_vec((1, 4), vec![0.0, 1.0, 0.0, 0.0]).unwrap();
            assert_ne!(
                film.modulate(&h, &a).unwrap(),
                film.modulate(&h, &b).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let film = Film::identity(4, 2);
        let h = Array3::zeros((1, 2, 3));
        assert!(film.modulate(&h, &Array2::zeros((1, 5))).is_err());
        assert!(film
            .modulate(&Array3::zeros((1, 3, 3)), &Array2::zeros((1, 4)))
            .is_err());
    }
}
