//! Space transformations as a counterpart to time changes.
//!
//! A diffeomorphism `H` from the open unit ball onto `R^d` turns a base
//! process on the ball into a process `X = H(Y)` targeting `mu`; the Jacobian
//! determinant of `H` plays exactly the role of a speed function,
//! `s(x) = |det J_H(H^{-1}(x))|`, which is how the ball map induces the speed
//! `(1 + |x|^2)^{(d+1)/2}`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::skeleton::{Dynamics, EventKind, PathSkeleton, SkeletonBuilder};
use crate::speed::SpeedFunction;

type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type DetFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A diffeomorphism from the open unit ball onto `R^d` with its Jacobian
/// determinant and induced speed function.
#[derive(Clone)]
pub struct Diffeomorphism {
    dim: usize,
    forward: Arc<MapFn>,
    inverse: Arc<MapFn>,
    jacobian_det_forward: Arc<DetFn>,
    induced_speed: SpeedFunction,
}

impl std::fmt::Debug for Diffeomorphism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Diffeomorphism").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl Diffeomorphism {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `H(y)` for `|y| < 1`; errors on or outside the unit sphere.
    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "|y| = {} is not inside the unit ball",
                r2.sqrt()
            )));
        }
        Ok((self.forward)(y))
    }

    /// `H⁻¹(x)`, always inside the open unit ball.
    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        (self.inverse)(x)
    }

    /// `det J_H(y)` on the ball.
    pub fn jacobian_det_forward(&self, y: &[f64]) -> f64 {
        (self.jacobian_det_forward)(y)
    }

    /// The induced speed `s(x) = |det J_H(H⁻¹(x))|`.
    pub fn induced_speed(&self) -> &SpeedFunction {
        &self.induced_speed
    }
}

/// The unit-ball map `H(y) = y (1 - |y|²)^{-1/2}` with inverse
/// `H⁻¹(x) = x (1 + |x|²)^{-1/2}`, Jacobian determinant
/// `(1 - |y|²)^{-(d+1)/2}` and induced speed `(1 + |x|²)^{(d+1)/2}`.
pub fn ball_map(d: usize) -> Result<Diffeomorphism> {
    if d < 1 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let forward = move |y: &[f64]| -> Vec<f64> {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let c = (1.0 - r2).sqrt().recip();
        y.iter().map(|&v| v * c).collect()
    };
    let inverse = move |x: &[f64]| -> Vec<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let c = (1.0 + r2).sqrt().recip();
        x.iter().map(|&v| v * c).collect()
    };
    let expo = (d as f64 + 1.0) / 2.0;
    let det = move |y: &[f64]| -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        (1.0 - r2).powf(-expo)
    };
    Ok(Diffeomorphism {
        dim: d,
        forward: Arc::new(forward),
        inverse: Arc::new(inverse),
        jacobian_det_forward: Arc::new(det),
        induced_speed: SpeedFunction::one_plus_norm_sq_pow(expo)?,
    })
}

/// The stereographic Jacobian speed `s(x) = (1 + |x|²)^d`.
pub fn stereographic_speed(d: usize) -> Result<SpeedFunction> {
    if d < 1 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    SpeedFunction::one_plus_norm_sq_pow(d as f64)
}

/// A transformed path sampled on a uniform grid, with per-step speeds
/// `|ΔX|/Δt` for speed-colored plots.
#[derive(Debug, Clone)]
pub struct TransformedPath {
    pub skeleton: PathSkeleton,
    pub step_speeds: Vec<f64>,
}

/// Push a path through an arbitrary state map on a uniform grid of the given
/// step. Linear segments map to curves, so the output is a discretized path.
pub fn transform_path_with(
    skel: &PathSkeleton,
    step: f64,
    map: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<TransformedPath> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let n = (skel.horizon() / step).floor() as usize;
    let mut builder: Option<SkeletonBuilder> = None;
    let mut speeds = Vec::with_capacity(n);
    let mut prev: Option<Vec<f64>> = None;
    for k in 0..=n {
        let t = (k as f64 * step).min(skel.horizon());
        let (y, _) = skel.state_at(t)?;
        let x = map(&y)?;
        let b = builder.get_or_insert_with(|| {
            SkeletonBuilder::new(x.len(), 0, Dynamics::Discretized { step })
        });
        if k == 0 {
            b.push(0.0, EventKind::Start, &x, &[]);
        } else {
            b.push(t, EventKind::Jump, &x, &[]);
        }
        if let Some(p) = &prev {
            let d2: f64 = x.iter().zip(p).map(|(&a, &b)| (a - b) * (a - b)).sum();
            speeds.push(d2.sqrt() / step);
        }
        prev = Some(x);
    }
    Ok(TransformedPath {
        skeleton: builder.expect("at least one grid point").finish(skel.horizon()),
        step_speeds: speeds,
    })
}

/// Image of a ball-supported path under the forward map `H`.
pub fn transform_skeleton(
    skel: &PathSkeleton,
    diffeo: &Diffeomorphism,
    step: f64,
) -> Result<TransformedPath> {
    transform_path_with(skel, step, |y| diffeo.forward(y))
}
