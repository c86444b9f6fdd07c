use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{impl_module, Param};

/// Affine map `y = x W^T + b` over rows of a `(n, in)` matrix.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl_module!(Linear { weight, bias });

pub struct LinearCache {
    input: Array2<f64>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            weight: Param::uniform(&[out_dim, in_dim], bound, rng),
            bias: Param::uniform(&[out_dim], bound, rng),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Param::zeros(&[out_dim, in_dim]),
            bias: Param::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = Array2::zeros((x.nrows(), self.out_dim()));
        y += &self.bias.vec();
        general_mat_mul(1.0, &x, &self.weight.mat().t(), 1.0, &mut y);
        y
    }

    pub fn forward(&self, x: Array2<f64>) -> (Array2<f64>, LinearCache) {
        let y = self.apply(x.view());
        (y, LinearCache { input: x })
    }

    pub fn backward(&mut self, cache: &LinearCache, dy: &Array2<f64>) -> Array2<f64> {
        general_mat_mul(
            1.0,
            &dy.t(),
            &cache.input,
            1.0,
            &mut self.weight.grad_mat_mut(),
        );
        let mut gb = self.bias.grad_vec_mut();
        gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.mat())
    }
}
