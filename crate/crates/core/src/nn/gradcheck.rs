//! Central finite-difference check of accumulated parameter gradients.

use super::Module;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    /// `(parameter, index, analytic, numeric)` of the worst mismatches.
    pub worst: Vec<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn pass_rate(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        self.passed as f64 / self.checked as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub rel_tol: f64,
    /// Differences below this count as agreement regardless of scale.
    pub abs_floor: f64,
    /// Check every `stride`-th scalar of each parameter.
    pub stride: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            rel_tol: 1e-3,
            abs_floor: 1e-9,
            stride: 1,
        }
    }
}

/// Compares `model`'s current `grad` buffers against central differences of `loss`.
///
/// The caller must have run forward and backward for the same scalar `loss`.
pub fn check_gradients<M: Module, F: Fn(&M) -> f64>(
    model: &mut M,
    loss: F,
    opts: GradCheckOptions,
) -> GradCheckReport {
    let analytic: Vec<(String, Vec<f64>, bool)> = model
        .named_params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone(), p.is_trainable()))
        .collect();
    let mut checked = 0;
    let mut passed = 0;
    let mut mismatches = Vec::new();
    for (k, (name, grads, trainable)) in analytic.iter().enumerate() {
        if !trainable {
            continue;
        }
        for i in (0..grads.len()).step_by(opts.stride.max(1)) {
            let nudge = |m: &mut M, delta: f64| {
                m.named_params_mut()[k].1.value[i] += delta;
            };
            nudge(model, opts.eps);
            let plus = loss(model);
            nudge(model, -2.0 * opts.eps);
            let minus = loss(model);
            nudge(model, opts.eps);
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = grads[i];
            let diff = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            checked += 1;
            if diff <= opts.abs_floor || diff <= opts.rel_tol * scale {
                passed += 1;
            } else {
                mismatches.push((name.clone(), i, a, numeric));
            }
        }
    }
    mismatches.sort_by(|x, y| {
        let rx = (x.2 - x.3).abs() / x.2.abs().max(x.3.abs());
        let ry = (y.2 - y.3).abs() / y.2.abs().max(y.3.abs());
        ry.total_cmp(&rx)
    });
    mismatches.truncate(10);
    GradCheckReport {
        checked,
        passed,
        worst: mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    #[test]
    fn detects_wrong_gradient() {
        let mut p = Param::from_vec(&[3], vec![1.0, 2.0, -1.0]);
        let loss = |p: &Param| p.value.iter().map(|v| v * v * v).sum::<f64>();
        p.grad = p.value.iter().map(|v| 3.0 * v * v).collect();
        let r = check_gradients(&mut p, loss, GradCheckOptions::default());
        assert_eq!((r.checked, r.passed), (3, 3));
        p.grad[1] *= 1.01;
        let r = check_gradients(&mut p, loss, GradCheckOptions::default());
        assert_eq!(r.passed, 2);
        assert_eq!(r.worst[0].1, 1);
        assert_eq!(p.value, vec![1.0, 2.0, -1.0]);
    }
}
