//! Gated recurrent units with backpropagation through time.
//!
//! Gate equations (reset `r`, update `z`, candidate `n`):
//!
//! ```text
//! r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//! z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, Array3, Axis};
use rand::Rng;

use super::{impl_module, Param};

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Single-direction GRU over `(batch, time, features)` sequences, zero initial state.
#[derive(Debug, Clone)]
pub struct GruLayer {
    pub w_ih: Param,
    pub w_hh: Param,
    pub b_ih: Param,
    pub b_hh: Param,
}

impl_module!(GruLayer {
    w_ih,
    w_hh,
    b_ih,
    b_hh
});

struct GruStep {
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    gh_n: Array2<f64>,
}

pub struct GruCache {
    input: Array2<f64>,
    steps: Vec<GruStep>,
    batch: usize,
}

impl GruLayer {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: Param::uniform(&[3 * hidden, input], bound, rng),
            w_hh: Param::uniform(&[3 * hidden, hidden], bound, rng),
            b_ih: Param::uniform(&[3 * hidden], bound, rng),
            b_hh: Param::uniform(&[3 * hidden], bound, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape()[1]
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, GruCache) {
        let (batch, len, input) = x.dim();
        assert_eq!(input, self.input_dim(), "GRU input width");
        let hd = self.hidden();
        let flat = x
            .to_shape((batch * len, input))
            .expect("contiguous sequence")
            .into_owned();
        let mut xi = Array2::<f64>::zeros((batch * len, 3 * hd));
        xi += &self.b_ih.vec();
        general_mat_mul(1.0, &flat, &self.w_ih.mat().t(), 1.0, &mut xi);

        let w_hh = self.w_hh.mat();
        let b_hh = self.b_hh.vec();
        let mut h = Array2::<f64>::zeros((batch, hd));
        let mut out = Array3::<f64>::zeros((batch, len, hd));
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let mut gh = Array2::<f64>::zeros((batch, 3 * hd));
            gh += &b_hh;
            general_mat_mul(1.0, &h, &w_hh.t(), 1.0, &mut gh);
            let mut r = Array2::zeros((batch, hd));
            let mut z = Array2::zeros((batch, hd));
            let mut n = Array2::zeros((batch, hd));
            let mut h_next = Array2::zeros((batch, hd));
            for b in 0..batch {
                let xrow = xi.row(b * len + t);
                let grow = gh.row(b);
                for j in 0..hd {
                    let rv = sigmoid(xrow[j] + grow[j]);
                    let zv = sigmoid(xrow[hd + j] + grow[hd + j]);
                    let nv = (xrow[2 * hd + j] + rv * grow[2 * hd + j]).tanh();
                    r[[b, j]] = rv;
                    z[[b, j]] = zv;
                    n[[b, j]] = nv;
                    h_next[[b, j]] = (1.0 - zv) * nv + zv * h[[b, j]];
                }
            }
            out.slice_mut(s![.., t, ..]).assign(&h_next);
            let gh_n = gh.slice(s![.., 2 * hd..]).to_owned();
            let h_prev = std::mem::replace(&mut h, h_next);
            steps.push(GruStep {
                h_prev,
                r,
                z,
                n,
                gh_n,
            });
        }
        (
            out,
            GruCache {
                input: flat,
                steps,
                batch,
            },
        )
    }

    pub fn backward(&mut self, cache: &GruCache, dout: &Array3<f64>) -> Array3<f64> {
        let (batch, len, hd) = dout.dim();
        assert_eq!(batch, cache.batch);
        let input = self.input_dim();
        let mut dxi = Array2::<f64>::zeros((batch * len, 3 * hd));
        let mut dh_next = Array2::<f64>::zeros((batch, hd));
        let mut dgh = Array2::<f64>::zeros((batch, 3 * hd));
        for t in (0..len).rev() {
            let st = &cache.steps[t];
            for b in 0..batch {
                let mut drow = dxi.row_mut(b * len + t);
                for j in 0..hd {
                    let dh = dout[[b, t, j]] + dh_next[[b, j]];
                    let (r, z, n) = (st.r[[b, j]], st.z[[b, j]], st.n[[b, j]]);
                    let hp = st.h_prev[[b, j]];
                    let dn_pre = dh * (1.0 - z) * (1.0 - n * n);
                    let dz_pre = dh * (hp - n) * z * (1.0 - z);
                    let dr_pre = dn_pre * st.gh_n[[b, j]] * r * (1.0 - r);
                    drow[j] = dr_pre;
                    drow[hd + j] = dz_pre;
                    drow[2 * hd + j] = dn_pre;
                    dgh[[b, j]] = dr_pre;
                    dgh[[b, hd + j]] = dz_pre;
                    dgh[[b, 2 * hd + j]] = dn_pre * r;
                    // direct path through the update gate
                    dh_next[[b, j]] = dh * z;
                }
            }
            general_mat_mul(
                1.0,
                &dgh.t(),
                &st.h_prev,
                1.0,
                &mut self.w_hh.grad_mat_mut(),
            );
            {
                let mut g = self.b_hh.grad_vec_mut();
                g += &dgh.sum_axis(Axis(0));
            }
            general_mat_mul(1.0, &dgh, &self.w_hh.mat(), 1.0, &mut dh_next);
        }
        general_mat_mul(
            1.0,
            &dxi.t(),
            &cache.input,
            1.0,
            &mut self.w_ih.grad_mat_mut(),
        );
        {
            let mut g = self.b_ih.grad_vec_mut();
            g += &dxi.sum_axis(Axis(0));
        }
        let dx = dxi.dot(&self.w_ih.mat());
        dx.into_shape_with_order((batch, len, input))
            .expect("contiguous gradient")
    }
}

#[derive(Debug, Clone)]
pub struct BiGruLayer {
    pub fwd: GruLayer,
    pub rev: GruLayer,
}

impl_module!(BiGruLayer { fwd, rev });

/// Stack of bidirectional GRU layers; each layer outputs `2 * hidden` features.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub layers: Vec<BiGruLayer>,
}

impl_module!(BiGru { layers });

pub struct BiGruCache {
    layers: Vec<(GruCache, GruCache)>,
}

fn reverse_time(x: &Array3<f64>) -> Array3<f64> {
    x.slice(s![.., ..;-1, ..]).to_owned()
}

impl BiGru {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let layers = (0..layers)
            .map(|i| {
                let width = if i == 0 { input } else { 2 * hidden };
                BiGruLayer {
                    fwd: GruLayer::new(width, hidden, rng),
                    rev: GruLayer::new(width, hidden, rng),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| 2 * l.fwd.hidden())
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, BiGruCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (yf, cf) = layer.fwd.forward(&h);
            let (yr, cr) = layer.rev.forward(&reverse_time(&h));
            let yr = reverse_time(&yr);
            h = concatenate(Axis(2), &[yf.view(), yr.view()]).expect("matching shapes");
            caches.push((cf, cr));
        }
        (h, BiGruCache { layers: caches })
    }

    pub fn backward(&mut self, cache: &BiGruCache, dy: &Array3<f64>) -> Array3<f64> {
        let mut grad = dy.clone();
        for (layer, (cf, cr)) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let hd = layer.fwd.hidden();
            let dyf = grad.slice(s![.., .., ..hd]).to_owned();
            let dyr = reverse_time(&grad.slice(s![.., .., hd..]).to_owned());
            let dxf = layer.fwd.backward(cf, &dyf);
            let dxr = reverse_time(&layer.rev.backward(cr, &dyr));
            grad = dxf + dxr;
        }
        grad
    }
}
