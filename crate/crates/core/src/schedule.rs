//! Geometric noise schedule and the per-step Langevin coefficients.
//!
//! Noise levels follow `sigma(t) = sigma_min^(1 - t) * sigma_max^t` for
//! `t` in `[0, 1]`. Discretizing `t` uniformly with `N` steps gives `N + 1`
//! levels whose consecutive ratio `delta` is constant; the sampler's step
//! weights `eta` and `beta` are closed-form functions of `delta` and the
//! step-size exponent `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIGMA_MIN: f64 = 1e-3;
pub const DEFAULT_SIGMA_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: DEFAULT_SIGMA_MAX,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if !(sigma_min.is_finite() && sigma_max.is_finite()) {
            return Err(Error::domain("noise bounds must be finite"));
        }
        if !(0.0 < sigma_min && sigma_min < sigma_max) {
            return Err(Error::domain(format!(
                "require 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        Ok(Self {
            sigma_min,
            sigma_max,
        })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Noise amplitude at diffusion time `t`.
    ///
    /// Interpolated in base-10 log space, so decade levels come out exact; the
    /// endpoints are returned verbatim so that
    /// `sigma_at(0) == sigma_min` and `sigma_at(1) == sigma_max` hold exactly.
    pub fn sigma_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("t = {t} is outside [0, 1]")));
        }
        Ok(self.sigma_at_unchecked(t))
    }

    pub(crate) fn sigma_at_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.sigma_min
        } else if t >= 1.0 {
            self.sigma_max
        } else {
            10f64.powf((1.0 - t) * self.sigma_min.log10() + t * self.sigma_max.log10())
        }
    }

    /// Uniformly discretizes `t` into `steps` intervals, returning levels
    /// from `sigma_max` down to `sigma_min`.
    pub fn discretize(&self, steps: usize) -> Result<DiscretizedSchedule> {
        if steps == 0 {
            return Err(Error::domain("step count must be at least 1"));
        }
        let (lo, hi) = (self.sigma_min.log10(), self.sigma_max.log10());
        let n = steps as f64;
        let levels = (0..=steps)
            .map(|i| match i {
                0 => self.sigma_max,
                i if i == steps => self.sigma_min,
                i => 10f64.powf((lo * i as f64 + hi * (n - i as f64)) / n),
            })
            .collect();
        Ok(DiscretizedSchedule {
            levels,
            delta: 10f64.powf((lo - hi) / n),
        })
    }
}

/// `N + 1` descending noise levels at `t_n = n / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSchedule {
    levels: Vec<f64>,
    delta: f64,
}

impl DiscretizedSchedule {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    /// Constant ratio between consecutive levels, `(sigma_min / sigma_max)^(1/N)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `(sigma_n, sigma_next)` pairs in sampling order.
    pub fn transitions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.levels.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub eta: f64,
    pub beta: f64,
}

impl StepCoefficients {
    /// `eta = 1 - delta^alpha`, `beta = sqrt(1 - ((1 - eta) / delta)^2)`.
    pub fn new(delta: f64, alpha: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta = {delta} is outside (0, 1)")));
        }
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("alpha = {alpha} must be >= 1")));
        }
        let eta = 1.0 - delta.powf(alpha);
        // (1 - eta) / delta, evaluated without cancellation
        let ratio = delta.powf(alpha - 1.0);
        let beta = (1.0 - ratio * ratio).max(0.0).sqrt();
        Ok(Self { eta, beta })
    }
}

pub fn step_coefficients(delta: f64, alpha: f64) -> Result<StepCoefficients> {
    StepCoefficients::new(delta, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn endpoints_are_exact() {
        let s = NoiseSchedule::default();
        assert_eq!(s.sigma_at(0.0).unwrap(), 1e-3);
        assert_eq!(s.sigma_at(1.0).unwrap(), 1.0);
        assert_relative_eq!(
            s.sigma_at(0.5).unwrap(),
            1e-3f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sigma_rejects_out_of_range_t() {
        let s = NoiseSchedule::default();
        assert!(matches!(s.sigma_at(-0.01), Err(Error::Domain(_))));
        assert!(matches!(s.sigma_at(1.5), Err(Error::Domain(_))));
        assert!(s.sigma_at(f64::NAN).is_err());
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(NoiseSchedule::new(1.0, 1.0).is_err());
        assert!(NoiseSchedule::new(0.0, 1.0).is_err());
        assert!(NoiseSchedule::new(2.0, 1.0).is_err());
    }

    #[test]
    fn discretize_small_cases() {
        let s = NoiseSchedule::default();
        assert_eq!(s.discretize(1).unwrap().levels(), &[1.0, 1e-3]);
        let three = s.discretize(3).unwrap();
        assert_eq!(three.levels(), &[1.0, 0.1, 0.01, 0.001]);
        assert_eq!(three.delta(), 0.1);
        assert!(matches!(s.discretize(0), Err(Error::Domain(_))));
    }

    #[test]
    fn delta_for_hundred_steps() {
        let d = NoiseSchedule::default().discretize(100).unwrap();
        assert_relative_eq!(d.delta(), 10f64.powf(-0.03), max_relative = 1e-12);
        assert_relative_eq!(d.delta(), 0.933_254_3, max_relative = 1e-7);
        assert_eq!(d.transitions().count(), 100);
    }

    #[test]
    fn coefficient_examples() {
        let c = step_coefficients(0.5, 1.0).unwrap();
        assert_eq!(c.eta, 0.5);
        assert_eq!(c.beta, 0.0);
        for delta in [0.9, 0.933_254_3, 0.1] {
            assert_eq!(step_coefficients(delta, 1.0).unwrap().beta, 0.0);
        }
        let c = step_coefficients(0.5, 2.0).unwrap();
        assert_relative_eq!(c.eta, 0.75, epsilon = 1e-12);
        assert_relative_eq!(c.beta, 0.75f64.sqrt(), epsilon = 1e-12);
        let c = step_coefficients(1.0 - 1e-12, 2.0).unwrap();
        assert!(c.eta < 1e-11 && c.beta < 1e-5);
    }

    #[test]
    fn coefficient_domain_errors() {
        assert!(step_coefficients(0.0, 2.0).is_err());
        assert!(step_coefficients(1.0, 2.0).is_err());
        assert!(step_coefficients(0.5, 0.99).is_err());
    }

    proptest! {
        #[test]
        fn ratios_constant_and_product_exact(steps in 1usize..400) {
            let s = NoiseSchedule::default();
            let d = s.discretize(steps).unwrap();
            let levels = d.levels();
            prop_assert_eq!(levels[0], 1.0);
            prop_assert_eq!(levels[steps], 1e-3);
            let mut product = 1.0;
            for w in levels.windows(2) {
                let r = w[1] / w[0];
                prop_assert!((r / d.delta() - 1.0).abs() < 1e-10);
                product *= r;
            }
            prop_assert!((product / 1e-3 - 1.0).abs() < 1e-10);
        }

        #[test]
        fn sigma_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!(a < b);
            let s = NoiseSchedule::default();
            prop_assert!(s.sigma_at(a).unwrap() < s.sigma_at(b).unwrap());
        }

        #[test]
        fn coefficients_bounded_and_consistent(delta in 1e-3f64..0.999, alpha in 1.0f64..8.0) {
            let c = step_coefficients(delta, alpha).unwrap();
            prop_assert!((0.0..=1.0).contains(&c.eta));
            prop_assert!((0.0..=1.0).contains(&c.beta));
            let r = (1.0 - c.eta) / delta;
            prop_assert!((c.beta * c.beta + r * r - 1.0).abs() < 1e-12);
            // second route for eta via the exponential form
            let eta_exp = 1.0 - (alpha * delta.ln()).exp();
            prop_assert!((c.eta - eta_exp).abs() < 1e-12);
            // closed form beta = sqrt(1 - delta^(2(alpha-1)))
            let beta_closed = (1.0 - delta.powf(2.0 * (alpha - 1.0))).sqrt();
            prop_assert!((c.beta - beta_closed).abs() < 1e-7);
        }

        #[test]
        fn beta_nondecreasing_in_alpha(delta in 1e-3f64..0.999, a in 1.0f64..8.0, step in 0.0f64..4.0) {
            let lo = step_coefficients(delta, a).unwrap();
            let hi = step_coefficients(delta, a + step).unwrap();
            prop_assert!(hi.beta + 1e-15 >= lo.beta);
        }
    }
}
