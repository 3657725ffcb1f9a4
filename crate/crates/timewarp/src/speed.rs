//! Speed functions: strictly positive maps that govern the time change.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::target::TargetDensity;

type ValFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A speed function `s` with analytic gradient, log value and a certified
/// positive lower bound.
#[derive(Clone)]
pub struct SpeedFunction {
    value: Arc<ValFn>,
    gradient: Arc<GradFn>,
    log_value: Arc<ValFn>,
    lower_bound: f64,
    log_gradient_affine_along_lines: bool,
    constant_value: Option<f64>,
}

impl fmt::Debug for SpeedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpeedFunction")
            .field("lower_bound", &self.lower_bound)
            .field(
                "log_gradient_affine_along_lines",
                &self.log_gradient_affine_along_lines,
            )
            .finish_non_exhaustive()
    }
}

impl SpeedFunction {
    pub fn new<V, G, L>(value: V, gradient: G, log_value: L, lower_bound: f64) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        L: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(lower_bound > 0.0, "speed lower bound must be positive");
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            log_value: Arc::new(log_value),
            lower_bound,
            log_gradient_affine_along_lines: false,
            constant_value: None,
        }
    }

    /// `Some(c)` when this speed is known to be the constant `c`.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant_value
    }

    /// Declare that `t ↦ ∇(ln s)(x + t v)` is affine along every line.
    pub fn with_affine_log_gradient(mut self) -> Self {
        self.log_gradient_affine_along_lines = true;
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out);
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn log_value(&self, x: &[f64]) -> f64 {
        (self.log_value)(x)
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn log_gradient_affine_along_lines(&self) -> bool {
        self.log_gradient_affine_along_lines
    }

    /// The constant speed `s ≡ c` (the identity time change when `c = 1`).
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter("constant speed must be positive".into()));
        }
        let mut s = Self::new(
            move |_x: &[f64]| c,
            |_x: &[f64], g: &mut [f64]| g.fill(0.0),
            move |_x: &[f64]| c.ln(),
            c,
        )
        .with_affine_log_gradient();
        s.constant_value = Some(c);
        Ok(s)
    }

    /// `s(x) = exp(alpha U(x))`, i.e. a tempering speed: the tilted potential
    /// becomes `(1 - alpha) U`. No normalizer is needed.
    ///
    /// `alpha` must lie in `[0, 1)`; at `alpha >= 1` the time-changed process
    /// is explosive. The lower bound comes from the target's certified
    /// potential lower bound (defaults to `U >= 0` for all builtins).
    pub fn exp_alpha_u(target: &TargetDensity, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in [0,1), got {alpha}"
            )));
        }
        let u_min = target.potential_lower_bound().ok_or_else(|| {
            Error::InvalidParameter(
                "exp_alpha_u needs a certified potential lower bound on the target".into(),
            )
        })?;
        let t1 = target.clone();
        let t2 = target.clone();
        let t3 = target.clone();
        Ok(Self::new(
            move |x: &[f64]| (alpha * t1.potential(x)).exp(),
            move |x: &[f64], g: &mut [f64]| {
                t2.gradient_into(x, g);
                let s = (alpha * t2.potential(x)).exp();
                for gi in g.iter_mut() {
                    *gi *= alpha * s;
                }
            },
            move |x: &[f64]| alpha * t3.potential(x),
            (alpha * u_min).exp(),
        )
        .set_affine_log_gradient(target.affine_gradient_along_lines()))
    }

    /// `s(x) = (1 + |x|^2)^p` for `p > 0`; lower bound 1.
    pub fn one_plus_norm_sq_pow(p: f64) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidParameter("exponent must be positive".into()));
        }
        Ok(Self::new(
            move |x: &[f64]| (1.0 + norm_sq(x)).powf(p),
            move |x: &[f64], g: &mut [f64]| {
                let f = 2.0 * p * (1.0 + norm_sq(x)).powf(p - 1.0);
                for (gi, &xi) in g.iter_mut().zip(x) {
                    *gi = f * xi;
                }
            },
            move |x: &[f64]| p * norm_sq(x).ln_1p(),
            1.0,
        ))
    }

    fn set_affine_log_gradient(mut self, flag: bool) -> Self {
        self.log_gradient_affine_along_lines = flag;
        self
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|&v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{double_well_1d, standard_gaussian};
    use crate::testing::finite_difference_gradient;
    use crate::RngStream;
    use approx::assert_relative_eq;

    fn check_speed(s: &SpeedFunction, dim: usize, rng: &mut RngStream, scale: f64) {
        for _ in 0..100 {
            let x: Vec<f64> = (0..dim).map(|_| scale * rng.standard_normal()).collect();
            let v = s.value(&x);
            assert!(v >= s.lower_bound() * (1.0 - 1e-12), "value below lower bound");
            assert_relative_eq!(s.log_value(&x).exp(), v, max_relative = 1e-12);
            let fd = finite_difference_gradient(&|y| s.value(y), &x);
            let an = s.gradient(&x);
            for (a, b) in an.iter().zip(&fd) {
                assert_relative_eq!(a, b, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn constant_speed() {
        let s = SpeedFunction::constant(2.5).unwrap();
        assert_eq!(s.value(&[3.0]), 2.5);
        assert_eq!(s.gradient(&[3.0]), vec![0.0]);
        assert_relative_eq!(s.log_value(&[3.0]), 2.5f64.ln());
        assert!(SpeedFunction::constant(0.0).is_err());
    }

    #[test]
    fn speed_invariants_hold_on_random_points() {
        let mut rng = RngStream::new(5, 0);
        let g1 = standard_gaussian(1);
        check_speed(&SpeedFunction::exp_alpha_u(&g1, 0.9).unwrap(), 1, &mut rng, 2.0);
        check_speed(&SpeedFunction::exp_alpha_u(&double_well_1d(), 0.5).unwrap(), 1, &mut rng, 1.2);
        check_speed(&SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap(), 1, &mut rng, 3.0);
        check_speed(&SpeedFunction::one_plus_norm_sq_pow(1.5).unwrap(), 2, &mut rng, 3.0);
    }

    #[test]
    fn alpha_out_of_range_rejected() {
        let g1 = standard_gaussian(1);
        assert!(SpeedFunction::exp_alpha_u(&g1, 1.0).is_err());
        assert!(SpeedFunction::exp_alpha_u(&g1, -0.1).is_err());
    }

    #[test]
    fn exp_alpha_u_tracks_tempering() {
        // s = exp(0.9 U) on the unit Gaussian: s(2) = exp(1.8)
        let g1 = standard_gaussian(1);
        let s = SpeedFunction::exp_alpha_u(&g1, 0.9).unwrap();
        assert_relative_eq!(s.value(&[2.0]), (1.8f64).exp(), max_relative = 1e-12);
        assert!(s.log_gradient_affine_along_lines());
    }
}
