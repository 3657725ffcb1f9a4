//! Euler–Maruyama discretizations of the time-changed Langevin diffusions.
//!
//! These are *biased baselines* for cross-method comparison: no Metropolis
//! correction and no splitting schemes. The time-changed overdamped SDE is
//! `dX = (-s ∇U + ∇s) dt + sqrt(2 s) dB`; the underdamped variant scales the
//! position drift, friction and noise by the speed in the same way.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::{Dynamics, EventKind, PathSkeleton, SkeletonBuilder};
use crate::speed::SpeedFunction;
use crate::target::TargetDensity;

/// Which discretized diffusion to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdeKind {
    Overdamped,
    Underdamped,
}

/// Configuration of an Euler–Maruyama run.
#[derive(Debug, Clone)]
pub struct SdeConfig {
    pub target: TargetDensity,
    pub speed: SpeedFunction,
    pub step: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    /// Initial velocity, used by the underdamped kind.
    pub v0: Vec<f64>,
    pub kind: SdeKind,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidParameter("step must be positive".into()));
        }
        let n = self.horizon / self.step;
        if !(n >= 0.0) || n > u64::MAX as f64 / 4.0 {
            return Err(Error::InvalidParameter(
                "horizon/step does not fit an integer step count".into(),
            ));
        }
        if self.x0.len() != self.target.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target.dim(),
                got: self.x0.len(),
            });
        }
        Ok(())
    }
}

/// Drift of the time-changed overdamped diffusion, `-s ∇U + ∇s`.
pub fn overdamped_drift(x: &[f64], target: &TargetDensity, speed: &SpeedFunction) -> Vec<f64> {
    let s = speed.value(x);
    let gu = target.gradient(x);
    let gs = speed.gradient(x);
    gu.iter().zip(&gs).map(|(&du, &ds)| -s * du + ds).collect()
}

/// One Euler–Maruyama step of the time-changed overdamped diffusion:
/// `x' = x + h (-s ∇U + ∇s) + sqrt(2 s h) ξ`.
pub fn em_step_overdamped(
    x: &mut [f64],
    h: f64,
    target: &TargetDensity,
    speed: &SpeedFunction,
    rng: &mut RngStream,
) -> Result<()> {
    let drift = overdamped_drift(x, target, speed);
    if drift.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("overdamped drift".into()));
    }
    let noise = (2.0 * speed.value(x) * h).sqrt();
    for (xi, di) in x.iter_mut().zip(&drift) {
        *xi += h * di + noise * rng.standard_normal();
    }
    Ok(())
}

/// One Euler–Maruyama step of the time-changed underdamped diffusion:
/// `x' = x + h s v`, `v' = v - h (s ∇U - ∇s) - h s v + sqrt(2 s h) ξ`.
pub fn em_step_underdamped(
    x: &mut [f64],
    v: &mut [f64],
    h: f64,
    target: &TargetDensity,
    speed: &SpeedFunction,
    rng: &mut RngStream,
) -> Result<()> {
    let s = speed.value(x);
    let gu = target.gradient(x);
    let gs = speed.gradient(x);
    if !s.is_finite() || gu.iter().chain(&gs).any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("underdamped drift".into()));
    }
    let noise = (2.0 * s * h).sqrt();
    for i in 0..x.len() {
        x[i] += h * s * v[i];
        v[i] += -h * (s * gu[i] - gs[i]) - h * s * v[i] + noise * rng.standard_normal();
    }
    Ok(())
}

/// Run the chain and record every step in a discretized skeleton. Intended
/// for plots and moderate horizons; use [`fold_sde`] for long statistics
/// runs.
pub fn simulate_sde(cfg: &SdeConfig, rng: &mut RngStream) -> Result<PathSkeleton> {
    cfg.validate()?;
    let n = (cfg.horizon / cfg.step).floor() as u64;
    let vdim = if cfg.kind == SdeKind::Underdamped { cfg.x0.len() } else { 0 };
    let mut b = SkeletonBuilder::new(cfg.x0.len(), vdim, Dynamics::Discretized { step: cfg.step });
    let mut x = cfg.x0.clone();
    let mut v = cfg.v0.clone();
    b.push(0.0, EventKind::Start, &x, &v[..vdim]);
    for k in 1..=n {
        match cfg.kind {
            SdeKind::Overdamped => em_step_overdamped(&mut x, cfg.step, &cfg.target, &cfg.speed, rng)?,
            SdeKind::Underdamped => {
                em_step_underdamped(&mut x, &mut v, cfg.step, &cfg.target, &cfg.speed, rng)?
            }
        }
        b.push(k as f64 * cfg.step, EventKind::Jump, &x, &v[..vdim]);
    }
    Ok(b.finish(cfg.horizon))
}

/// Run the chain without storing the path, feeding each post-step state to
/// `visit(step_index, x, v)`.
pub fn fold_sde(
    cfg: &SdeConfig,
    rng: &mut RngStream,
    mut visit: impl FnMut(u64, &[f64], &[f64]),
) -> Result<()> {
    cfg.validate()?;
    let n = (cfg.horizon / cfg.step).floor() as u64;
    let mut x = cfg.x0.clone();
    let mut v = cfg.v0.clone();
    for k in 1..=n {
        match cfg.kind {
            SdeKind::Overdamped => em_step_overdamped(&mut x, cfg.step, &cfg.target, &cfg.speed, rng)?,
            SdeKind::Underdamped => {
                em_step_underdamped(&mut x, &mut v, cfg.step, &cfg.target, &cfg.speed, rng)?
            }
        }
        visit(k, &x, &v);
    }
    Ok(())
}
