//! Target distributions given as potentials `U`, with `mu(x) ∝ exp(-U(x))`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type PotFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// An unnormalized target density `mu ∝ exp(-U)` with an analytic gradient.
///
/// Potentials are stored un-normalized; `log_normalizer` (`ln Z`) is optional
/// metadata consumed only by oracles. `affine_gradient_along_lines` is a
/// capability flag: it is true iff `t ↦ ∇U(x + t v)` is affine for every
/// line, which is what makes exact thinning envelopes possible.
#[derive(Clone)]
pub struct TargetDensity {
    dim: usize,
    potential: Arc<PotFn>,
    gradient: Arc<GradFn>,
    log_normalizer: Option<f64>,
    affine_gradient_along_lines: bool,
    potential_lower_bound: Option<f64>,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("dim", &self.dim)
            .field("log_normalizer", &self.log_normalizer)
            .field("affine_gradient_along_lines", &self.affine_gradient_along_lines)
            .finish_non_exhaustive()
    }
}

impl TargetDensity {
    pub fn new<P, G>(dim: usize, potential: P, gradient: G) -> Self
    where
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            potential: Arc::new(potential),
            gradient: Arc::new(gradient),
            log_normalizer: None,
            affine_gradient_along_lines: false,
            potential_lower_bound: None,
        }
    }

    pub fn with_log_normalizer(mut self, ln_z: f64) -> Self {
        self.log_normalizer = Some(ln_z);
        self
    }

    /// Declare that `t ↦ ∇U(x + t v)` is affine for all lines.
    pub fn with_affine_gradient(mut self) -> Self {
        self.affine_gradient_along_lines = true;
        self
    }

    /// Declare a certified lower bound for `U` (used to bound speeds of the
    /// form `exp(a U)` from below).
    pub fn with_potential_lower_bound(mut self, lb: f64) -> Self {
        self.potential_lower_bound = Some(lb);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.potential)(x)
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        (self.gradient)(x, out);
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn partial(&self, x: &[f64], i: usize) -> f64 {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g[i]
    }

    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }

    pub fn affine_gradient_along_lines(&self) -> bool {
        self.affine_gradient_along_lines
    }

    pub fn potential_lower_bound(&self) -> Option<f64> {
        self.potential_lower_bound
    }
}

/// Isotropic or axis-aligned Gaussian with the given mean and diagonal
/// covariance: `U(x) = sum (x_i - m_i)^2 / (2 s_i^2)`.
pub fn gaussian(dim: usize, mean: Vec<f64>, cov_diag: Vec<f64>) -> Result<TargetDensity> {
    if mean.len() != dim || cov_diag.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: mean.len().max(cov_diag.len()),
        });
    }
    if cov_diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "gaussian requires strictly positive variances".into(),
        ));
    }
    let ln_z = 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln()
        + 0.5 * cov_diag.iter().map(|v| v.ln()).sum::<f64>();
    let m = mean.clone();
    let c = cov_diag.clone();
    let m2 = mean;
    let c2 = cov_diag;
    Ok(TargetDensity::new(
        dim,
        move |x: &[f64]| {
            x.iter()
                .zip(&m)
                .zip(&c)
                .map(|((&xi, &mi), &ci)| (xi - mi) * (xi - mi) / (2.0 * ci))
                .sum()
        },
        move |x: &[f64], g: &mut [f64]| {
            for i in 0..x.len() {
                g[i] = (x[i] - m2[i]) / c2[i];
            }
        },
    )
    .with_log_normalizer(ln_z)
    .with_affine_gradient()
    .with_potential_lower_bound(0.0))
}

/// Standard Gaussian in `dim` dimensions.
pub fn standard_gaussian(dim: usize) -> TargetDensity {
    gaussian(dim, vec![0.0; dim], vec![1.0; dim]).expect("valid params")
}

/// Equal-weight mixture of unit-covariance Gaussians centred at `means`.
///
/// The unnormalized density is `(1/k) sum_j exp(-|x - m_j|^2 / 2)`, which is
/// bounded by 1, so `U = -ln(density) >= 0` everywhere.
pub fn gaussian_mixture(dim: usize, means: Vec<Vec<f64>>) -> Result<TargetDensity> {
    if means.is_empty() {
        return Err(Error::InvalidParameter("mixture needs at least one mode".into()));
    }
    for m in &means {
        if m.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.len(),
            });
        }
    }
    let k = means.len() as f64;
    let ln_z = 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln();
    let means2 = means.clone();
    let pot = move |x: &[f64]| -> f64 {
        // -ln( (1/k) sum_j exp(-q_j) ) via log-sum-exp
        let mut qmin = f64::INFINITY;
        for m in &means {
            let q: f64 = x.iter().zip(m).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
            qmin = qmin.min(q);
        }
        let mut acc = 0.0;
        for m in &means {
            let q: f64 = x.iter().zip(m).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
            acc += (-(q - qmin)).exp();
        }
        qmin - (acc / k).ln()
    };
    let grad = move |x: &[f64], g: &mut [f64]| {
        let mut qmin = f64::INFINITY;
        for m in &means2 {
            let q: f64 = x.iter().zip(m).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
            qmin = qmin.min(q);
        }
        g.fill(0.0);
        let mut wsum = 0.0;
        for m in &means2 {
            let q: f64 = x.iter().zip(m).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
            let w = (-(q - qmin)).exp();
            wsum += w;
            for i in 0..x.len() {
                g[i] += w * (x[i] - m[i]);
            }
        }
        for gi in g.iter_mut() {
            *gi /= wsum;
        }
    };
    Ok(TargetDensity::new(dim, pot, grad)
        .with_log_normalizer(ln_z)
        .with_potential_lower_bound(0.0))
}

/// The 13-mode planar Gaussian mixture used by the mode-coverage studies:
/// one mode at the origin and twelve equally spaced on a circle of radius 10.
pub fn mixture_13() -> TargetDensity {
    let mut means = vec![vec![0.0, 0.0]];
    for j in 0..12 {
        let th = 2.0 * std::f64::consts::PI * j as f64 / 12.0;
        means.push(vec![10.0 * th.cos(), 10.0 * th.sin()]);
    }
    gaussian_mixture(2, means).expect("valid params")
}

/// Centers of the 13-mode mixture, in the same order used by `mixture_13`.
pub fn mixture_13_modes() -> Vec<[f64; 2]> {
    let mut modes = vec![[0.0, 0.0]];
    for j in 0..12 {
        let th = 2.0 * std::f64::consts::PI * j as f64 / 12.0;
        modes.push([10.0 * th.cos(), 10.0 * th.sin()]);
    }
    modes
}

/// Two-dimensional isotropic Student-t with one degree of freedom,
/// `U(x) = (3/2) ln(1 + |x|^2)`. Total unnormalized mass is `2π`.
pub fn student_t_2d_1dof() -> TargetDensity {
    TargetDensity::new(
        2,
        |x: &[f64]| 1.5 * (1.0 + x[0] * x[0] + x[1] * x[1]).ln(),
        |x: &[f64], g: &mut [f64]| {
            let r2 = 1.0 + x[0] * x[0] + x[1] * x[1];
            g[0] = 3.0 * x[0] / r2;
            g[1] = 3.0 * x[1] / r2;
        },
    )
    .with_log_normalizer((2.0 * std::f64::consts::PI).ln())
    .with_potential_lower_bound(0.0)
}

/// One-dimensional double well `U(x) = (x^2 - 1)^2` with minima at ±1.
pub fn double_well_1d() -> TargetDensity {
    TargetDensity::new(
        1,
        |x: &[f64]| {
            let q = x[0] * x[0] - 1.0;
            q * q
        },
        |x: &[f64], g: &mut [f64]| {
            g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
        },
    )
    .with_potential_lower_bound(0.0)
}

/// Double well scaled by `1/eps`, `U(x) = (x^2-1)^2 / eps`.
pub fn double_well_1d_scaled(eps: f64) -> Result<TargetDensity> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    Ok(TargetDensity::new(
        1,
        move |x: &[f64]| {
            let q = x[0] * x[0] - 1.0;
            q * q / eps
        },
        move |x: &[f64], g: &mut [f64]| {
            g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0) / eps;
        },
    )
    .with_potential_lower_bound(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::finite_difference_gradient;
    use crate::RngStream;
    use approx::assert_relative_eq;

    fn check_gradient(target: &TargetDensity, rng: &mut RngStream, scale: f64) {
        for _ in 0..100 {
            let x: Vec<f64> = (0..target.dim()).map(|_| scale * rng.standard_normal()).collect();
            let fd = finite_difference_gradient(&|y| target.potential(y), &x);
            let an = target.gradient(&x);
            for (a, b) in an.iter().zip(&fd) {
                assert_relative_eq!(a, b, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn builtin_gradients_match_finite_differences() {
        let mut rng = RngStream::new(7, 0);
        check_gradient(&standard_gaussian(3), &mut rng, 2.0);
        check_gradient(&gaussian(2, vec![1.0, -2.0], vec![0.5, 4.0]).unwrap(), &mut rng, 2.0);
        check_gradient(&mixture_13(), &mut rng, 6.0);
        check_gradient(&student_t_2d_1dof(), &mut rng, 10.0);
        check_gradient(&double_well_1d(), &mut rng, 1.5);
    }

    #[test]
    fn gaussian_affine_gradient_is_collinear() {
        let t = standard_gaussian(2);
        assert!(t.affine_gradient_along_lines());
        let mut rng = RngStream::new(3, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.standard_normal()).collect();
            let v: Vec<f64> = (0..2).map(|_| rng.standard_normal()).collect();
            let at = |t_val: f64| {
                let y: Vec<f64> = x.iter().zip(&v).map(|(&a, &b)| a + t_val * b).collect();
                t.gradient(&y)
            };
            let (g0, g1, g2) = (at(0.0), at(1.0), at(2.0));
            for i in 0..2 {
                assert_relative_eq!(g2[i] - g1[i], g1[i] - g0[i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn student_t_values_at_mode() {
        let t = student_t_2d_1dof();
        assert_eq!(t.potential(&[0.0, 0.0]), 0.0);
        assert_eq!(t.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn double_well_curvature_at_minimum() {
        let t = double_well_1d();
        assert_eq!(t.potential(&[-1.0]), 0.0);
        assert_eq!(t.gradient(&[-1.0])[0], 0.0);
        // second derivative by central differences of the analytic gradient
        let h = 1e-5;
        let u2 = (t.gradient(&[-1.0 + h])[0] - t.gradient(&[-1.0 - h])[0]) / (2.0 * h);
        assert_relative_eq!(u2, 8.0, max_relative = 1e-6);
    }

    #[test]
    fn gaussian_unit_values() {
        let t = gaussian(1, vec![0.0], vec![1.0]).unwrap();
        assert_relative_eq!(t.potential(&[2.0]), 2.0);
        assert_relative_eq!(t.gradient(&[2.0])[0], 2.0);
    }

    #[test]
    fn invalid_variance_rejected() {
        assert!(gaussian(1, vec![0.0], vec![0.0]).is_err());
        assert!(gaussian(1, vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn mixture_potential_is_nonnegative() {
        let t = mixture_13();
        let mut rng = RngStream::new(11, 0);
        for _ in 0..200 {
            let x = [12.0 * rng.standard_normal(), 12.0 * rng.standard_normal()];
            assert!(t.potential(&x) >= 0.0);
        }
    }
}
