//! Parameter-free elementwise and resampling operators.

use ndarray::{Array, Array3, Dimension, Zip};

pub fn leaky_relu<D: Dimension>(x: &Array<f64, D>, slope: f64) -> Array<f64, D> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient of [`leaky_relu`] given the forward input.
pub fn leaky_relu_backward<D: Dimension>(
    input: &Array<f64, D>,
    dy: &Array<f64, D>,
    slope: f64,
) -> Array<f64, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(input).for_each(|g, &v| {
        if v <= 0.0 {
            *g *= slope;
        }
    });
    dx
}

/// Mean over non-overlapping windows of `factor` samples.
pub fn avg_pool(x: &Array3<f64>, factor: usize) -> Array3<f64> {
    let (b, c, len) = x.dim();
    assert!(len % factor == 0, "pool length must divide input");
    let out_len = len / factor;
    let scale = 1.0 / factor as f64;
    Array3::from_shape_fn((b, c, out_len), |(i, j, t)| {
        let mut acc = 0.0;
        for k in 0..factor {
            acc += x[[i, j, t * factor + k]];
        }
        acc * scale
    })
}

pub fn avg_pool_backward(dy: &Array3<f64>, factor: usize) -> Array3<f64> {
    let (b, c, out_len) = dy.dim();
    let scale = 1.0 / factor as f64;
    Array3::from_shape_fn((b, c, out_len * factor), |(i, j, t)| {
        dy[[i, j, t / factor]] * scale
    })
}

/// Source taps `(i0, i1, w)` for output sample `j`: `y[j] = (1-w) x[i0] + w x[i1]`.
fn interp_taps(j: usize, factor: usize, in_len: usize) -> (usize, usize, f64) {
    let pos = (j as f64 + 0.5) / factor as f64 - 0.5;
    if pos <= 0.0 {
        return (0, 0, 0.0);
    }
    let i0 = pos.floor() as usize;
    if i0 + 1 >= in_len {
        return (in_len - 1, in_len - 1, 0.0);
    }
    (i0, i0 + 1, pos - i0 as f64)
}

/// Half-sample-aligned linear interpolation by an integer factor.
pub fn linear_upsample(x: &Array3<f64>, factor: usize) -> Array3<f64> {
    let (b, c, len) = x.dim();
    let out_len = len * factor;
    let taps: Vec<_> = (0..out_len).map(|j| interp_taps(j, factor, len)).collect();
    Array3::from_shape_fn((b, c, out_len), |(i, ch, t)| {
        let (i0, i1, w) = taps[t];
        (1.0 - w) * x[[i, ch, i0]] + w * x[[i, ch, i1]]
    })
}

pub fn linear_upsample_backward(dy: &Array3<f64>, factor: usize) -> Array3<f64> {
    let (b, c, out_len) = dy.dim();
    let len = out_len / factor;
    let mut dx = Array3::zeros((b, c, len));
    for t in 0..out_len {
        let (i0, i1, w) = interp_taps(t, factor, len);
        for i in 0..b {
            for ch in 0..c {
                let g = dy[[i, ch, t]];
                dx[[i, ch, i0]] += (1.0 - w) * g;
                dx[[i, ch, i1]] += w * g;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn upsample_preserves_constants_and_interpolates() {
        let x = Array3::from_elem((1, 1, 4), 2.5);
        assert!(linear_upsample(&x, 3)
            .iter()
            .all(|v| (*v - 2.5).abs() < 1e-15));
        let ramp = array![[[0.0, 1.0, 2.0]]];
        let y = linear_upsample(&ramp, 2);
        let want = [0.0, 0.25, 0.75, 1.25, 1.75, 2.0];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resampler_backward_is_adjoint() {
        let x = Array3::from_shape_fn((2, 3, 5), |(a, b, c)| ((a + 2 * b + 3 * c) as f64).sin());
        let v = Array3::from_shape_fn((2, 3, 20), |(a, b, c)| ((a * 7 + b + c) as f64).cos());
        let lhs = (&linear_upsample(&x, 4) * &v).sum();
        let rhs = (&x * &linear_upsample_backward(&v, 4)).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let x = v.clone();
        let v = Array3::from_shape_fn((2, 3, 5), |(a, b, c)| (a as f64) - (b * c) as f64);
        let lhs = (&avg_pool(&x, 4) * &v).sum();
        let rhs = (&x * &avg_pool_backward(&v, 4)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn leaky_relu_slope() {
        let x = array![[[-2.0, 0.0, 3.0]]];
        assert_eq!(leaky_relu(&x, 0.2), array![[[-0.4, 0.0, 3.0]]]);
        let g = leaky_relu_backward(&x, &Array3::ones((1, 1, 3)), 0.2);
        assert_eq!(g, array![[[0.2, 0.2, 1.0]]]);
    }
}
