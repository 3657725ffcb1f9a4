//! The tilted potential of a target/speed pair.
//!
//! A time-changed process with speed `s` targets `mu` exactly when its base
//! process targets the tilted density `mu_tilde ∝ s · mu`, i.e. the potential
//! `U_tilde(y) = U(y) - ln s(y)` with gradient `∇U - ∇s/s`.

use crate::error::{Error, Result};
use crate::speed::SpeedFunction;
use crate::target::TargetDensity;

/// The potential targeted by the base process of a time change.
#[derive(Debug, Clone)]
pub struct TiltedPotential {
    base: TargetDensity,
    speed: SpeedFunction,
}

/// Build the tilted potential, checking dimension agreement where possible.
pub fn make_tilted(target: &TargetDensity, speed: &SpeedFunction) -> Result<TiltedPotential> {
    // Speed functions are dimension-generic closures; probe at the origin to
    // catch gross mismatches early.
    let origin = vec![0.0; target.dim()];
    let v = speed.value(&origin);
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::InvalidParameter(
            "speed function not finite/positive at the origin of the target space".into(),
        ));
    }
    Ok(TiltedPotential {
        base: target.clone(),
        speed: speed.clone(),
    })
}

impl TiltedPotential {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &TargetDensity {
        &self.base
    }

    pub fn speed(&self) -> &SpeedFunction {
        &self.speed
    }

    /// `U_tilde(y) = U(y) - ln s(y)`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        self.base.potential(x) - self.speed.log_value(x)
    }

    /// `∇U_tilde = ∇U - ∇s / s`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.gradient_into(x, out);
        let s = self.speed.value(x);
        let mut gs = vec![0.0; x.len()];
        self.speed.gradient_into(x, &mut gs);
        for (o, g) in out.iter_mut().zip(&gs) {
            *o -= g / s;
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Whether `t ↦ ∇U_tilde(x + t v)` is affine along every line, which
    /// holds when both the base gradient and the log-speed gradient are.
    pub fn affine_gradient_along_lines(&self) -> bool {
        self.base.affine_gradient_along_lines() && self.speed.log_gradient_affine_along_lines()
    }

    /// View the tilted potential as a target density of its own (the law of
    /// the base process), preserving the affine capability flag.
    pub fn as_target(&self) -> TargetDensity {
        let t = self.clone();
        let t2 = self.clone();
        let target = TargetDensity::new(
            self.dim(),
            move |x: &[f64]| t.potential(x),
            move |x: &[f64], g: &mut [f64]| t2.gradient_into(x, g),
        );
        if self.affine_gradient_along_lines() {
            target.with_affine_gradient()
        } else {
            target
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::standard_gaussian;
    use approx::assert_relative_eq;

    #[test]
    fn unit_speed_leaves_potential_unchanged() {
        let g = standard_gaussian(2);
        let s = SpeedFunction::constant(1.0).unwrap();
        let t = make_tilted(&g, &s).unwrap();
        for x in [[0.3, -1.2], [2.0, 0.5]] {
            assert_relative_eq!(t.potential(&x), g.potential(&x), epsilon = 1e-15);
            let tg = t.gradient(&x);
            let gg = g.gradient(&x);
            assert_relative_eq!(tg[0], gg[0], epsilon = 1e-15);
            assert_relative_eq!(tg[1], gg[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn tempering_speed_scales_potential() {
        // s = exp(0.9 U) gives U_tilde = 0.1 U
        let g = standard_gaussian(1);
        let s = SpeedFunction::exp_alpha_u(&g, 0.9).unwrap();
        let t = make_tilted(&g, &s).unwrap();
        for x in [[-1.5], [0.2], [3.0]] {
            assert_relative_eq!(t.potential(&x), 0.1 * g.potential(&x), max_relative = 1e-12, epsilon = 1e-14);
            assert_relative_eq!(t.gradient(&x)[0], 0.1 * g.gradient(&x)[0], max_relative = 1e-12, epsilon = 1e-14);
        }
        assert!(t.affine_gradient_along_lines());
    }

    #[test]
    fn quadratic_speed_example() {
        // U = x^2/2, s = 1 + x^2: U_tilde(1) = 0.5 - ln 2
        let g = standard_gaussian(1);
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        let t = make_tilted(&g, &s).unwrap();
        assert_relative_eq!(t.potential(&[1.0]), 0.5 - std::f64::consts::LN_2, epsilon = 1e-14);
        // ∇U_tilde(1) = 1 - 2/2 = 0
        assert_relative_eq!(t.gradient(&[1.0])[0], 0.0, epsilon = 1e-14);
        assert!(!t.affine_gradient_along_lines());
    }

    #[test]
    fn pointwise_identity_everywhere() {
        let g = standard_gaussian(2);
        let s = SpeedFunction::one_plus_norm_sq_pow(2.0).unwrap();
        let t = make_tilted(&g, &s).unwrap();
        let mut rng = crate::RngStream::new(2, 0);
        for _ in 0..100 {
            let x = [rng.standard_normal() * 2.0, rng.standard_normal() * 2.0];
            let want = g.potential(&x) - s.log_value(&x);
            assert_relative_eq!(t.potential(&x), want, max_relative = 1e-12, epsilon = 1e-14);
        }
    }
}
