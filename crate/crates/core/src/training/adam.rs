use crate::nn::Module;

/// Adaptive moment estimation with bias correction and a constant step size.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub t: u64,
    /// First and second moments, one entry per trainable parameter, in
    /// `named_params` order.
    pub moments: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new<M: Module>(model: &M) -> Self {
        let moments = model
            .named_params()
            .into_iter()
            .filter(|(_, p)| p.is_trainable())
            .map(|(name, p)| (name, vec![0.0; p.len()], vec![0.0; p.len()]))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments,
        }
    }

    pub fn step<M: Module>(&mut self, model: &mut M, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let params = model
            .named_params_mut()
            .into_iter()
            .filter(|(_, p)| p.is_trainable());
        for ((name, p), (mname, m, v)) in params.zip(self.moments.iter_mut()) {
            debug_assert_eq!(&name, mname);
            for ((w, &g), (m, v)) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                if lr != 0.0 {
                    *w -= lr * update;
                }
            }
        }
    }
}
