//! The time-warp machinery connecting a base path `Y` to its time change
//! `X_t = Y_{r(t)}`.
//!
//! Given a base skeleton and a speed function, the table stores the warped
//! clock `r⁻¹(u) = ∫_0^u 1/s(Y_w) dw` at every event time. Inside segments the
//! integral is evaluated by Gauss–Legendre quadrature with bisection
//! refinement; the forward map `r` is recovered by monotone root finding, so
//! the pair is inverse-consistent to the stated tolerance.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{integrate_adaptive, GaussLegendre};
use crate::skeleton::{Dynamics, PathSkeleton};
use crate::speed::SpeedFunction;

/// Subdivision cap for the per-segment quadrature.
pub const MAX_BISECTION_DEPTH: usize = 40;

/// Default quadrature tolerance.
pub const DEFAULT_WARP_TOL: f64 = 1e-10;

/// Monotone table of `(base time, warped time)` pairs anchored at the events
/// of a base skeleton.
#[derive(Debug, Clone)]
pub struct WarpTable {
    base: Arc<PathSkeleton>,
    speed: SpeedFunction,
    base_times: Vec<f64>,
    warped_times: Vec<f64>,
    tol: f64,
    rule: GaussLegendre,
}

/// Build the warp table for a constant-velocity or piecewise-constant base
/// skeleton. Piecewise-constant segments use the closed form `Δu / s(state)`.
pub fn build_warp(
    base: &Arc<PathSkeleton>,
    speed: &SpeedFunction,
    tol: f64,
) -> Result<WarpTable> {
    assert!(tol > 0.0);
    match base.dynamics() {
        Dynamics::ConstantVelocity | Dynamics::PiecewiseConstant | Dynamics::Discretized { .. } => {
        }
        Dynamics::SpeedScaled { .. } => {
            return Err(Error::InvalidParameter(
                "cannot warp an already speed-scaled skeleton; warp its base instead".into(),
            ))
        }
    }
    let rule = GaussLegendre::new(16);
    let n = base.n_events();
    let mut base_times = Vec::with_capacity(n);
    let mut warped_times = Vec::with_capacity(n);
    base_times.push(base.times()[0]);
    warped_times.push(0.0);
    let mut acc = 0.0;
    for k in 0..n - 1 {
        let u0 = base.times()[k];
        let u1 = base.times()[k + 1];
        acc += segment_inverse_speed_integral(base, speed, &rule, k, u0, u1, tol)?;
        base_times.push(u1);
        warped_times.push(acc);
    }
    Ok(WarpTable {
        base: Arc::clone(base),
        speed: speed.clone(),
        base_times,
        warped_times,
        tol,
        rule,
    })
}

fn segment_inverse_speed_integral(
    base: &PathSkeleton,
    speed: &SpeedFunction,
    rule: &GaussLegendre,
    seg: usize,
    u0: f64,
    u1: f64,
    tol: f64,
) -> Result<f64> {
    if u1 <= u0 {
        return Ok(0.0);
    }
    match base.dynamics() {
        Dynamics::ConstantVelocity => {
            let x0 = base.position_after(seg).to_vec();
            let t0 = base.times()[seg];
            let v = base.velocity_after(seg).to_vec();
            let mut buf = vec![0.0; x0.len()];
            let mut f = |u: f64| {
                for (b, (xi, vi)) in buf.iter_mut().zip(x0.iter().zip(&v)) {
                    *b = xi + (u - t0) * vi;
                }
                1.0 / speed.value(&buf)
            };
            integrate_adaptive(rule, u0, u1, tol, MAX_BISECTION_DEPTH, &mut f)
        }
        _ => Ok((u1 - u0) / speed.value(base.position_after(seg))),
    }
}

impl WarpTable {
    pub fn base(&self) -> &Arc<PathSkeleton> {
        &self.base
    }

    pub fn speed(&self) -> &SpeedFunction {
        &self.speed
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Total base time covered by the table.
    pub fn base_span(&self) -> f64 {
        *self.base_times.last().unwrap()
    }

    /// Total warped time covered by the table.
    pub fn warped_span(&self) -> f64 {
        *self.warped_times.last().unwrap()
    }

    pub fn breakpoints(&self) -> (&[f64], &[f64]) {
        (&self.base_times, &self.warped_times)
    }

    /// `r⁻¹(u)`: the warped time corresponding to base time `u`.
    pub fn warped_of_base(&self, u: f64) -> f64 {
        let k = self
            .base_times
            .partition_point(|&b| b <= u)
            .saturating_sub(1)
            .min(self.base_times.len() - 2);
        let u0 = self.base_times[k];
        let inc = segment_inverse_speed_integral(
            &self.base,
            &self.speed,
            &self.rule,
            k,
            u0,
            u.min(self.base_span()),
            self.tol,
        )
        .expect("segment quadrature converged at build time");
        self.warped_times[k] + inc
    }

    /// `r(t)`: the base time corresponding to warped time `t`, by monotone
    /// root finding on `r⁻¹` (Newton with bisection safeguard).
    pub fn base_time_of_warped(&self, t: f64) -> f64 {
        let k = self
            .warped_times
            .partition_point(|&w| w <= t)
            .saturating_sub(1)
            .min(self.warped_times.len() - 2);
        let (mut lo, mut hi) = (self.base_times[k], self.base_times[k + 1]);
        let (wlo, whi) = (self.warped_times[k], self.warped_times[k + 1]);
        if t <= wlo {
            return lo;
        }
        if t >= whi {
            return hi;
        }
        // derivative du/dt = s(Y_u); initial guess from the segment-start speed
        let mut buf = vec![0.0; self.base.dim()];
        let mut u = lo + (t - wlo) * self.speed.value(self.base.position_after(k));
        u = u.clamp(lo, hi);
        let tol_t = self.tol.max(1e-13 * t.abs().max(1.0));
        for _ in 0..100 {
            let g = self.warped_of_base(u) - t;
            if g.abs() <= tol_t {
                return u;
            }
            if g > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            self.base.position_at_into(u, &mut buf);
            let step = g * self.speed.value(&buf);
            let next = u - step;
            u = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
        }
        u
    }
}

/// The time-changed skeleton `X_t = Y_{r(t)}`: same event states as the base
/// with warped timestamps. Constant-velocity bases become speed-scaled paths
/// whose `state_at` queries the base at `r(t)`; pure jump bases stay
/// piecewise constant.
pub fn warp_path(warp: &WarpTable) -> PathSkeleton {
    let horizon = warp.warped_span();
    let dynamics = match warp.base.dynamics() {
        Dynamics::ConstantVelocity => Dynamics::SpeedScaled {
            base: Arc::clone(&warp.base),
            warp: Arc::new(warp.clone()),
        },
        _ => Dynamics::PiecewiseConstant,
    };
    warp
        .base
        .with_retimed_events(warp.warped_times.clone(), horizon, dynamics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{EventKind, SkeletonBuilder};
    use approx::assert_relative_eq;

    fn unit_ray(horizon: f64) -> Arc<PathSkeleton> {
        let mut b = SkeletonBuilder::new(1, 1, Dynamics::ConstantVelocity);
        b.push(0.0, EventKind::Start, &[0.0], &[1.0]);
        Arc::new(b.finish(horizon))
    }

    #[test]
    fn constant_speed_scales_time() {
        let base = unit_ray(10.0);
        let s = SpeedFunction::constant(2.0).unwrap();
        let warp = build_warp(&base, &s, 1e-12).unwrap();
        assert_relative_eq!(warp.warped_of_base(4.0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(warp.base_time_of_warped(2.0), 4.0, epsilon = 1e-10);
        let x = warp_path(&warp);
        assert_relative_eq!(x.horizon(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn arctan_closed_form() {
        // Y_u = u with s(x) = 1 + x^2 gives r^{-1}(t) = arctan(t).
        let base = unit_ray(30.0);
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        let warp = build_warp(&base, &s, 1e-12).unwrap();
        for t in [0.25, 0.5, 1.0, 2.0, 10.0, 30.0] {
            assert_relative_eq!(warp.warped_of_base(t), t.atan(), epsilon = 1e-8);
        }
        assert_relative_eq!(warp.warped_of_base(1.0), std::f64::consts::FRAC_PI_4, epsilon = 1e-8);
    }

    #[test]
    fn round_trip_within_tolerance() {
        let base = unit_ray(5.0);
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        let warp = build_warp(&base, &s, 1e-12).unwrap();
        let span = warp.warped_span();
        let mut rng = crate::RngStream::new(9, 0);
        for _ in 0..100 {
            let t = span * rng.uniform();
            let u = warp.base_time_of_warped(t);
            assert_relative_eq!(warp.warped_of_base(u), t, epsilon = 1e-10);
        }
    }

    #[test]
    fn piecewise_constant_closed_form() {
        let mut b = SkeletonBuilder::new(1, 0, Dynamics::PiecewiseConstant);
        b.push(0.0, EventKind::Start, &[0.0], &[]);
        b.push(1.0, EventKind::Jump, &[3.0], &[]);
        let base = Arc::new(b.finish(2.0));
        // s = 1 + x^2: first segment at x=0 (s=1), second at x=3 (s=10)
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        let warp = build_warp(&base, &s, 1e-12).unwrap();
        assert_relative_eq!(warp.warped_of_base(1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(warp.warped_of_base(2.0), 1.0 + 0.1, epsilon = 1e-14);
        let x = warp_path(&warp);
        assert!(matches!(x.dynamics(), Dynamics::PiecewiseConstant));
        assert_eq!(x.state_at(1.05).unwrap().0[0], 3.0);
    }

    #[test]
    fn warped_state_queries_base() {
        let base = unit_ray(10.0);
        let s = SpeedFunction::constant(2.0).unwrap();
        let warp = build_warp(&base, &s, 1e-12).unwrap();
        let x = warp_path(&warp);
        // X_t = Y_{2t}
        let (p, _) = x.state_at(1.5).unwrap();
        assert_relative_eq!(p[0], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn slope_bounds_between_breakpoints() {
        // slope of r^{-1} lies in [1/max s, 1/lower bound]
        let mut b = SkeletonBuilder::new(1, 1, Dynamics::ConstantVelocity);
        b.push(0.0, EventKind::Start, &[-2.0], &[1.0]);
        b.push(2.0, EventKind::Flip(0), &[0.0], &[-1.0]);
        let base = Arc::new(b.finish(4.0));
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        let warp = build_warp(&base, &s, 1e-12).unwrap();
        let (bt, wt) = warp.breakpoints();
        for k in 0..bt.len() - 1 {
            let slope = (wt[k + 1] - wt[k]) / (bt[k + 1] - bt[k]);
            assert!(slope <= 1.0 / s.lower_bound() + 1e-12);
            assert!(slope >= 1.0 / 5.0 - 1e-12, "max s on the path is 5");
        }
        assert!(wt.windows(2).all(|w| w[0] < w[1]));
    }
}
