//! Minimal layer library with hand-written backward passes.
//!
//! Every layer exposes `forward(&self, ..) -> (output, cache)` and
//! `backward(&mut self, cache, grad_output) -> grad_input`. Parameter
//! gradients accumulate into [`Param::grad`]; callers zero them between
//! optimizer steps. Feature maps are `(batch, channels, time)` arrays.

pub mod conv;
pub mod film;
pub mod gradcheck;
pub mod gru;
pub mod linear;
pub mod ops;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub use conv::{Conv1d, ConvTranspose1d};
pub use film::Film;
pub use gru::{BiGru, GruLayer};
pub use linear::Linear;

/// A named array of learnable (or frozen) values with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    trainable: bool,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
            trainable: true,
        }
    }

    pub fn from_vec(shape: &[usize], value: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let n = value.len();
        Self {
            shape: shape.to_vec(),
            value,
            grad: vec![0.0; n],
            trainable: true,
        }
    }

    /// Uniform in `[-bound, bound]`, the usual fan-in initialization.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let n: usize = shape.iter().product();
        Self::from_vec(shape, (0..n).map(|_| dist.sample(rng)).collect())
    }

    pub fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n: usize = shape.iter().product();
        Self::from_vec(shape, (0..n).map(|_| dist.sample(rng)).collect())
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Leading dimension by the product of the rest.
    fn rows_cols(&self) -> (usize, usize) {
        let rows = self.shape[0];
        (rows, self.value.len() / rows.max(1))
    }

    pub fn mat(&self) -> ArrayView2<'_, f64> {
        let (r, c) = self.rows_cols();
        ArrayView2::from_shape((r, c), &self.value).expect("contiguous parameter")
    }

    pub fn grad_mat_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let (r, c) = self.rows_cols();
        ArrayViewMut2::from_shape((r, c), &mut self.grad).expect("contiguous parameter")
    }

    pub fn vec(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.value[..])
    }

    pub fn grad_vec_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.grad[..])
    }
}

/// Anything holding parameters, addressable by hierarchical dotted names.
pub trait Module {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>);

    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    fn num_trainable(&self) -> usize {
        self.named_params()
            .iter()
            .filter(|(_, p)| p.is_trainable())
            .map(|(_, p)| p.len())
            .sum()
    }
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Module for Param {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((prefix.to_string(), self));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((prefix.to_string(), self));
    }
}

impl<M: Module> Module for Vec<M> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (i, m) in self.iter().enumerate() {
            m.collect(&join_name(prefix, &i.to_string()), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (i, m) in self.iter_mut().enumerate() {
            m.collect_mut(&join_name(prefix, &i.to_string()), out);
        }
    }
}

impl<M: Module> Module for Option<M> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        if let Some(m) = self {
            m.collect(prefix, out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        if let Some(m) = self {
            m.collect_mut(prefix, out);
        }
    }
}

/// Implements [`Module`] for a struct by listing its parameter-holding fields.
macro_rules! impl_module {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::nn::Module for $ty {
            fn collect<'a>(
                &'a self,
                prefix: &str,
                out: &mut Vec<(String, &'a $crate::nn::Param)>,
            ) {
                $( $crate::nn::Module::collect(
                    &self.$field,
                    &$crate::nn::join_name(prefix, stringify!($field)),
                    out,
                ); )*
            }

            fn collect_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut Vec<(String, &'a mut $crate::nn::Param)>,
            ) {
                $( $crate::nn::Module::collect_mut(
                    &mut self.$field,
                    &$crate::nn::join_name(prefix, stringify!($field)),
                    out,
                ); )*
            }
        }
    };
}

pub(crate) use impl_module;
