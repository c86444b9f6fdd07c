//! One-dimensional convolutions via im2col and a single GEMM per call.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use super::{impl_module, Param};

/// Strided, dilated 1-D convolution with explicit left/right zero padding.
///
/// Weight layout is `(out_channels, in_channels, kernel)`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    stride: usize,
    dilation: usize,
    pad_left: usize,
    pad_right: usize,
}

impl_module!(Conv1d { weight, bias });

pub struct Conv1dCache {
    cols: Array2<f64>,
    batch: usize,
    in_len: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        pad_left: usize,
        pad_right: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel >= 1 && stride >= 1 && dilation >= 1);
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        Self {
            weight: Param::uniform(&[out_ch, in_ch, kernel], bound, rng),
            bias: Param::uniform(&[out_ch], bound, rng),
            stride,
            dilation,
            pad_left,
            pad_right,
        }
    }

    /// Length-preserving convolution (odd kernel, stride 1).
    pub fn same<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let pad = dilation * (kernel - 1) / 2;
        Self::new(in_ch, out_ch, kernel, 1, dilation, pad, pad, rng)
    }

    /// Pointwise channel projection.
    pub fn pointwise<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        Self::new(in_ch, out_ch, 1, 1, 1, 0, 0, rng)
    }

    /// Downsamples time by exactly `stride` using a `2 * stride` kernel.
    pub fn downsampler<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let pad_left = stride / 2;
        Self::new(
            in_ch,
            out_ch,
            2 * stride,
            stride,
            1,
            pad_left,
            stride - pad_left,
            rng,
        )
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        let span = self.dilation * (self.kernel() - 1) + 1;
        let padded = in_len + self.pad_left + self.pad_right;
        assert!(padded >= span, "input too short for convolution");
        (padded - span) / self.stride + 1
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Conv1dCache) {
        let (batch, in_ch, in_len) = x.dim();
        assert_eq!(in_ch, self.in_channels(), "conv input channels");
        let k = self.kernel();
        let out_len = self.out_len(in_len);
        let width = batch * out_len;
        let mut cols = Array2::<f64>::zeros((in_ch * k, width));
        for b in 0..batch {
            for ci in 0..in_ch {
                let row_in = x.slice(ndarray::s![b, ci, ..]);
                for kk in 0..k {
                    let mut dst = cols.row_mut(ci * k + kk);
                    let offset = (kk * self.dilation) as isize - self.pad_left as isize;
                    for t in 0..out_len {
                        let src = (t * self.stride) as isize + offset;
                        if src >= 0 && (src as usize) < in_len {
                            dst[b * out_len + t] = row_in[src as usize];
                        }
                    }
                }
            }
        }
        let out_ch = self.out_channels();
        let mut y2 = Array2::<f64>::zeros((out_ch, width));
        general_mat_mul(1.0, &self.weight.mat(), &cols, 0.0, &mut y2);
        let mut y = Array3::<f64>::zeros((batch, out_ch, out_len));
        let bias = self.bias.vec();
        for b in 0..batch {
            let src = y2.slice(ndarray::s![.., b * out_len..(b + 1) * out_len]);
            let mut dst = y.index_axis_mut(Axis(0), b);
            dst.assign(&src);
            for (mut row, &bv) in dst.outer_iter_mut().zip(bias.iter()) {
                row += bv;
            }
        }
        (
            y,
            Conv1dCache {
                cols,
                batch,
                in_len,
            },
        )
    }

    pub fn backward(&mut self, cache: &Conv1dCache, dy: &Array3<f64>) -> Array3<f64> {
        let (batch, out_ch, out_len) = dy.dim();
        assert_eq!(batch, cache.batch);
        let width = batch * out_len;
        let mut dy2 = Array2::<f64>::zeros((out_ch, width));
        for b in 0..batch {
            dy2.slice_mut(ndarray::s![.., b * out_len..(b + 1) * out_len])
                .assign(&dy.index_axis(Axis(0), b));
        }
        general_mat_mul(
            1.0,
            &dy2,
            &cache.cols.t(),
            1.0,
            &mut self.weight.grad_mat_mut(),
        );
        {
            let mut gb = self.bias.grad_vec_mut();
            gb += &dy2.sum_axis(Axis(1));
        }
        let dcols = self.weight.mat().t().dot(&dy2);

        let in_ch = self.in_channels();
        let k = self.kernel();
        let in_len = cache.in_len;
        let mut dx = Array3::<f64>::zeros((batch, in_ch, in_len));
        for b in 0..batch {
            for ci in 0..in_ch {
                let mut row_dx = dx.slice_mut(ndarray::s![b, ci, ..]);
                for kk in 0..k {
                    let src_row = dcols.row(ci * k + kk);
                    let offset = (kk * self.dilation) as isize - self.pad_left as isize;
                    for t in 0..out_len {
                        let pos = (t * self.stride) as isize + offset;
                        if pos >= 0 && (pos as usize) < in_len {
                            row_dx[pos as usize] += src_row[b * out_len + t];
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Transposed convolution that upsamples time by exactly `stride`.
///
/// Uses a `2 * stride` kernel; the `(T - 1) * stride + kernel` full output is
/// cropped by `stride / 2` on the left down to `T * stride` samples.
/// Weight layout is `(in_channels, out_channels, kernel)`.
#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub weight: Param,
    pub bias: Param,
    stride: usize,
}

impl_module!(ConvTranspose1d { weight, bias });

pub struct ConvTranspose1dCache {
    input: Array2<f64>,
    batch: usize,
    in_len: usize,
}

impl ConvTranspose1d {
    pub fn upsampler<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        assert!(stride >= 1);
        let kernel = 2 * stride;
        // fan-in per output sample is in_ch * (kernel / stride)
        let bound = 1.0 / ((in_ch * 2) as f64).sqrt();
        Self {
            weight: Param::uniform(&[in_ch, out_ch, kernel], bound, rng),
            bias: Param::uniform(&[out_ch], bound, rng),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn crop(&self) -> usize {
        self.stride / 2
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, ConvTranspose1dCache) {
        let (batch, in_ch, in_len) = x.dim();
        assert_eq!(in_ch, self.in_channels(), "transposed conv input channels");
        let mut xm = Array2::<f64>::zeros((in_ch, batch * in_len));
        for b in 0..batch {
            xm.slice_mut(ndarray::s![.., b * in_len..(b + 1) * in_len])
                .assign(&x.index_axis(Axis(0), b));
        }
        // (out_ch * kernel, batch * in_len)
        let z = self.weight.mat().t().dot(&xm);
        let out_ch = self.out_channels();
        let k = self.kernel();
        let out_len = in_len * self.stride;
        let crop = self.crop() as isize;
        let mut y = Array3::<f64>::zeros((batch, out_ch, out_len));
        let bias = self.bias.vec();
        for b in 0..batch {
            for co in 0..out_ch {
                let mut dst = y.slice_mut(ndarray::s![b, co, ..]);
                dst.fill(bias[co]);
                for kk in 0..k {
                    let src = z.row(co * k + kk);
                    for t in 0..in_len {
                        let pos = (t * self.stride + kk) as isize - crop;
                        if pos >= 0 && (pos as usize) < out_len {
                            dst[pos as usize] += src[b * in_len + t];
                        }
                    }
                }
            }
        }
        (
            y,
            ConvTranspose1dCache {
                input: xm,
                batch,
                in_len,
            },
        )
    }

    pub fn backward(&mut self, cache: &ConvTranspose1dCache, dy: &Array3<f64>) -> Array3<f64> {
        let (batch, out_ch, out_len) = dy.dim();
        assert_eq!(batch, cache.batch);
        let in_len = cache.in_len;
        let k = self.kernel();
        let crop = self.crop() as isize;
        let mut dz = Array2::<f64>::zeros((out_ch * k, batch * in_len));
        for b in 0..batch {
            for co in 0..out_ch {
                let src = dy.slice(ndarray::s![b, co, ..]);
                for kk in 0..k {
                    let mut dst = dz.row_mut(co * k + kk);
                    for t in 0..in_len {
                        let pos = (t * self.stride + kk) as isize - crop;
                        if pos >= 0 && (pos as usize) < out_len {
                            dst[b * in_len + t] = src[pos as usize];
                        }
                    }
                }
            }
        }
        {
            let mut gb = self.bias.grad_vec_mut();
            gb += &dy.sum_axis(Axis(2)).sum_axis(Axis(0));
        }
        general_mat_mul(
            1.0,
            &cache.input,
            &dz.t(),
            1.0,
            &mut self.weight.grad_mat_mut(),
        );
        let dxm = self.weight.mat().dot(&dz);
        let in_ch = self.in_channels();
        let mut dx = Array3::<f64>::zeros((batch, in_ch, in_len));
        for b in 0..batch {
            dx.index_axis_mut(Axis(0), b)
                .assign(&dxm.slice(ndarray::s![.., b * in_len..(b + 1) * in_len]));
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Module;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct-sum reference for a strided, dilated, padded convolution.
    fn naive_conv(conv: &Conv1d, x: &Array3<f64>) -> Array3<f64> {
        let (b, ci, len) = x.dim();
        let w = &conv.weight;
        let (co, _, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        let out_len = conv.out_len(len);
        let mut y = Array3::zeros((b, co, out_len));
        for bb in 0..b {
            for o in 0..co {
                for t in 0..out_len {
                    let mut acc = conv.bias.value[o];
                    for i in 0..ci {
                        for kk in 0..k {
                            let pos = (t * conv.stride + kk * conv.dilation) as isize
                                - conv.pad_left as isize;
                            if pos >= 0 && (pos as usize) < len {
                                acc += w.value[(o * ci + i) * k + kk] * x[[bb, i, pos as usize]];
                            }
                        }
                    }
                    y[[bb, o, t]] = acc;
                }
            }
        }
        y
    }

    fn random_input(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for conv in [
            Conv1d::same(3, 4, 3, 2, &mut rng),
            Conv1d::downsampler(3, 5, 4, &mut rng),
            Conv1d::downsampler(3, 5, 3, &mut rng),
            Conv1d::pointwise(3, 2, &mut rng),
        ] {
            let x = random_input((2, 3, 24), 7);
            let (y, _) = conv.forward(&x);
            let want = naive_conv(&conv, &x);
            assert_eq!(y.dim(), want.dim());
            for (a, b) in y.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn downsampler_and_upsampler_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for stride in [2, 3, 4, 5] {
            let down = Conv1d::downsampler(1, 2, stride, &mut rng);
            let up = ConvTranspose1d::upsampler(2, 1, stride, &mut rng);
            let x = random_input((1, 1, stride * 7), 3);
            let (h, _) = down.forward(&x);
            assert_eq!(h.dim(), (1, 2, 7));
            let (y, _) = up.forward(&h);
            assert_eq!(y.dim(), (1, 1, stride * 7));
        }
    }

    /// Adjoint identity <conv(x), v> = <x, conv^T(v)> checks backward's input path.
    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv1d::downsampler(2, 3, 3, &mut rng);
        conv.bias.value.iter_mut().for_each(|b| *b = 0.0);
        let x = random_input((2, 2, 18), 4);
        let (y, cache) = conv.forward(&x);
        let v = random_input(y.dim(), 5);
        let dx = conv.backward(&cache, &v);
        let lhs: f64 = (&y * &v).sum();
        let rhs: f64 = (&x * &dx).sum();
        assert!((lhs - rhs).abs() < 1e-10);

        let mut up = ConvTranspose1d::upsampler(2, 3, 5, &mut rng);
        up.bias.value.iter_mut().for_each(|b| *b = 0.0);
        let x = random_input((2, 2, 6), 6);
        let (y, cache) = up.forward(&x);
        let v = random_input(y.dim(), 7);
        let dx = up.backward(&cache, &v);
        let lhs: f64 = (&y * &v).sum();
        let rhs: f64 = (&x * &dx).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = Conv1d::new(2, 2, 3, 2, 2, 1, 2, &mut rng);
        let mut up = ConvTranspose1d::upsampler(2, 2, 3, &mut rng);
        let x = random_input((2, 2, 9), 10);
        let probe = |conv: &Conv1d, up: &ConvTranspose1d| -> f64 {
            let (h, _) = conv.forward(&x);
            let (y, _) = up.forward(&h);
            y.iter()
                .enumerate()
                .map(|(i, v)| v * (i as f64 * 0.37).sin())
                .sum()
        };
        let (h, c1) = conv.forward(&x);
        let (y, c2) = up.forward(&h);
        let dy = Array3::from_shape_fn(y.dim(), |(a, b, c)| {
            let i = (a * y.dim().1 + b) * y.dim().2 + c;
            (i as f64 * 0.37).sin()
        });
        let dh = up.backward(&c2, &dy);
        conv.backward(&c1, &dh);
        let eps = 1e-6;
        let grads: Vec<(String, Vec<f64>)> = conv
            .named_params()
            .into_iter()
            .chain(up.named_params())
            .map(|(n, p)| (n, p.grad.clone()))
            .collect();
        for (which, (name, grad)) in grads.iter().enumerate() {
            for i in 0..grad.len() {
                let bump = |conv: &mut Conv1d, up: &mut ConvTranspose1d, d: f64| {
                    let mut params = conv.named_params_mut();
                    params.extend(up.named_params_mut());
                    params[which].1.value[i] += d;
                };
                bump(&mut conv, &mut up, eps);
                let fp = probe(&conv, &up);
                bump(&mut conv, &mut up, -2.0 * eps);
                let fm = probe(&conv, &up);
                bump(&mut conv, &mut up, eps);
                let fd = (fp - fm) / (2.0 * eps);
                assert!(
                    (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{name}[{i}]"
                );
            }
        }
    }
}
