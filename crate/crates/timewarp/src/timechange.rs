//! Driver that realizes time-changed PDMPs: simulate the base process until
//! the warped clock reaches the requested horizon, truncate, and warp.

use std::sync::Arc;

use crate::engine::{PdmpCharacteristics, PdmpSimulator, SimulationStats};
use crate::error::Result;
use crate::rng::RngStream;
use crate::skeleton::PathSkeleton;
use crate::speed::SpeedFunction;
use crate::warp::{build_warp, warp_path};

/// Simulate the base PDMP adaptively until `r⁻¹(base horizon) >= t_warped`,
/// then cut the base path at `r(t_warped)` and warp it.
pub fn simulate_timechanged(
    chars: &PdmpCharacteristics,
    x0: &[f64],
    v0: &[f64],
    t_warped: f64,
    speed: &SpeedFunction,
    tol: f64,
    rng: &mut RngStream,
) -> Result<(PathSkeleton, SimulationStats)> {
    let mut sim = PdmpSimulator::new(chars, x0, v0, rng)?;
    // r⁻¹ grows at most at rate 1/lower_bound, so the base run needs at least
    // this much time; extend geometrically from there.
    let mut horizon = (t_warped * speed.lower_bound()).max(1e-6);
    loop {
        sim.advance_to(horizon)?;
        let snap = Arc::new(sim.snapshot(horizon));
        let warp = build_warp(&snap, speed, tol)?;
        if warp.warped_span() >= t_warped {
            let u_star = warp.base_time_of_warped(t_warped);
            let base = Arc::new(snap.truncated(u_star.min(snap.horizon()))?);
            let warp = build_warp(&base, speed, tol)?;
            return Ok((warp_path(&warp), sim.stats()));
        }
        horizon *= 2.0;
    }
}
