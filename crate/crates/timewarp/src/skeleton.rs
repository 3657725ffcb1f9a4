//! Event skeletons of piecewise-deterministic paths.
//!
//! A skeleton is the finite list of event times and post-event states that
//! fully determines a path. Paths are càdlàg: `state_at` is right-continuous
//! at event times, and the left limit at an event is the previous state
//! advanced under the segment dynamics.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::warp::WarpTable;

/// What happened at an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Initial condition at time 0.
    Start,
    /// Sign flip of one velocity coordinate.
    Flip(u32),
    /// Elastic reflection of the full velocity vector.
    Reflect,
    /// Velocity refreshment.
    Refresh,
    /// Jump of the position (pure jump processes).
    Jump,
    /// End-of-run marker at the horizon.
    Horizon,
}

impl EventKind {
    pub fn label(&self) -> String {
        match self {
            EventKind::Start => "start".into(),
            EventKind::Flip(i) => format!("flip_{i}"),
            EventKind::Reflect => "reflect".into(),
            EventKind::Refresh => "refresh".into(),
            EventKind::Jump => "jump".into(),
            EventKind::Horizon => "horizon".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "start" => Some(EventKind::Start),
            "reflect" => Some(EventKind::Reflect),
            "refresh" => Some(EventKind::Refresh),
            "jump" => Some(EventKind::Jump),
            "horizon" => Some(EventKind::Horizon),
            _ => s.strip_prefix("flip_").and_then(|i| i.parse().ok().map(EventKind::Flip)),
        }
    }
}

/// How the state evolves between events.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// `x(t) = x_k + (t - t_k) v_k`, velocity constant.
    ConstantVelocity,
    /// State frozen between events (jump processes).
    PiecewiseConstant,
    /// States recorded on a uniform grid of the given step; queries return
    /// the most recent grid state.
    Discretized { step: f64 },
    /// Time-changed view of a base skeleton: `X_t = Y_{r(t)}`, where the warp
    /// table realizes `r` and its inverse.
    SpeedScaled {
        base: Arc<PathSkeleton>,
        warp: Arc<WarpTable>,
    },
}

/// One materialized event, with the left limit (`*_before`) reconstructed
/// from the previous event under the segment dynamics.
#[derive(Debug, Clone)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub position_before: Vec<f64>,
    pub velocity_before: Vec<f64>,
    pub position_after: Vec<f64>,
    pub velocity_after: Vec<f64>,
}

/// An ordered event list plus per-segment dynamics, evaluable at any time.
#[derive(Debug, Clone)]
pub struct PathSkeleton {
    dim: usize,
    vdim: usize,
    dynamics: Dynamics,
    horizon: f64,
    times: Vec<f64>,
    kinds: Vec<EventKind>,
    pos: Vec<f64>,
    vel: Vec<f64>,
}

impl PathSkeleton {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Velocity dimension; 0 for processes without a velocity component.
    pub fn vdim(&self) -> usize {
        self.vdim
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_events(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kind(&self, i: usize) -> EventKind {
        self.kinds[i]
    }

    pub fn position_after(&self, i: usize) -> &[f64] {
        &self.pos[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity_after(&self, i: usize) -> &[f64] {
        &self.vel[i * self.vdim..(i + 1) * self.vdim]
    }

    /// Index of the segment containing `t`: the last event with time `<= t`.
    pub fn segment_index(&self, t: f64) -> usize {
        self.times.partition_point(|&u| u <= t).saturating_sub(1)
    }

    /// State at time `t`, right-continuous at event times.
    pub fn state_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.state_at_unchecked(t))
    }

    pub(crate) fn state_at_unchecked(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match &self.dynamics {
            Dynamics::SpeedScaled { base, warp } => {
                let u = warp.base_time_of_warped(t).min(base.horizon());
                base.state_at_unchecked(u)
            }
            _ => {
                let k = self.segment_index(t);
                let mut p = self.position_after(k).to_vec();
                if matches!(self.dynamics, Dynamics::ConstantVelocity) {
                    let dt = t - self.times[k];
                    for (pi, vi) in p.iter_mut().zip(self.velocity_after(k)) {
                        *pi += dt * vi;
                    }
                }
                (p, self.velocity_after(k).to_vec())
            }
        }
    }

    /// Position at time `t`, written into `out`.
    pub fn position_at_into(&self, t: f64, out: &mut [f64]) {
        match &self.dynamics {
            Dynamics::SpeedScaled { base, warp } => {
                let u = warp.base_time_of_warped(t).min(base.horizon());
                base.position_at_into(u, out);
            }
            _ => {
                let k = self.segment_index(t);
                out.copy_from_slice(self.position_after(k));
                if matches!(self.dynamics, Dynamics::ConstantVelocity) {
                    let dt = t - self.times[k];
                    for (pi, vi) in out.iter_mut().zip(self.velocity_after(k)) {
                        *pi += dt * vi;
                    }
                }
            }
        }
    }

    /// Materialize event `i`, reconstructing the left limit.
    pub fn event(&self, i: usize) -> EventRecord {
        let time = self.times[i];
        let position_after = self.position_after(i).to_vec();
        let velocity_after = self.velocity_after(i).to_vec();
        let (position_before, velocity_before) = if i == 0 {
            (position_after.clone(), velocity_after.clone())
        } else {
            match &self.dynamics {
                Dynamics::ConstantVelocity => {
                    let dt = time - self.times[i - 1];
                    let mut p = self.position_after(i - 1).to_vec();
                    for (pi, vi) in p.iter_mut().zip(self.velocity_after(i - 1)) {
                        *pi += dt * vi;
                    }
                    (p, self.velocity_after(i - 1).to_vec())
                }
                Dynamics::PiecewiseConstant | Dynamics::Discretized { .. } => (
                    self.position_after(i - 1).to_vec(),
                    self.velocity_after(i - 1).to_vec(),
                ),
                // Warped paths are continuous in position; only velocities jump.
                Dynamics::SpeedScaled { .. } => {
                    (position_after.clone(), self.velocity_after(i - 1).to_vec())
                }
            }
        };
        EventRecord {
            time,
            kind: self.kinds[i],
            position_before,
            velocity_before,
            position_after,
            velocity_after,
        }
    }

    pub fn events(&self) -> impl Iterator<Item = EventRecord> + '_ {
        (0..self.n_events()).map(|i| self.event(i))
    }

    /// Final recorded state.
    pub fn final_state(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_events() - 1;
        (self.position_after(n).to_vec(), self.velocity_after(n).to_vec())
    }

    /// Restrict the path to `[0, t]`. The final segment is closed with a
    /// horizon event at `t`.
    pub fn truncated(&self, t: f64) -> Result<PathSkeleton> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let keep = self.times.partition_point(|&u| u < t);
        let mut out = PathSkeleton {
            dim: self.dim,
            vdim: self.vdim,
            dynamics: self.dynamics.clone(),
            horizon: t,
            times: self.times[..keep].to_vec(),
            kinds: self.kinds[..keep].to_vec(),
            pos: self.pos[..keep * self.dim].to_vec(),
            vel: self.vel[..keep * self.vdim].to_vec(),
        };
        let (p, v) = self.state_at_unchecked(t);
        out.times.push(t);
        out.kinds.push(EventKind::Horizon);
        out.pos.extend_from_slice(&p);
        out.vel.extend_from_slice(&v);
        Ok(out)
    }

    /// Same event list with new timestamps and dynamics (used by the warp).
    pub(crate) fn with_retimed_events(
        &self,
        times: Vec<f64>,
        horizon: f64,
        dynamics: Dynamics,
    ) -> PathSkeleton {
        assert_eq!(times.len(), self.times.len());
        PathSkeleton {
            dim: self.dim,
            vdim: self.vdim,
            dynamics,
            horizon,
            times,
            kinds: self.kinds.clone(),
            pos: self.pos.clone(),
            vel: self.vel.clone(),
        }
    }
}

/// Incremental builder enforcing the ordering invariants.
#[derive(Debug, Clone)]
pub struct SkeletonBuilder {
    dim: usize,
    vdim: usize,
    dynamics: Dynamics,
    times: Vec<f64>,
    kinds: Vec<EventKind>,
    pos: Vec<f64>,
    vel: Vec<f64>,
}

impl SkeletonBuilder {
    pub fn new(dim: usize, vdim: usize, dynamics: Dynamics) -> Self {
        if matches!(dynamics, Dynamics::ConstantVelocity) {
            assert_eq!(dim, vdim, "constant-velocity dynamics needs a full velocity");
        }
        Self {
            dim,
            vdim,
            dynamics,
            times: Vec::new(),
            kinds: Vec::new(),
            pos: Vec::new(),
            vel: Vec::new(),
        }
    }

    pub fn n_events(&self) -> usize {
        self.times.len()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn push(&mut self, time: f64, kind: EventKind, pos: &[f64], vel: &[f64]) {
        assert_eq!(pos.len(), self.dim);
        assert_eq!(vel.len(), self.vdim);
        if let Some(&last) = self.times.last() {
            assert!(time > last, "event times must be strictly increasing");
        } else {
            assert_eq!(time, 0.0, "first event must be the start at time 0");
            assert_eq!(kind, EventKind::Start);
        }
        self.times.push(time);
        self.kinds.push(kind);
        self.pos.extend_from_slice(pos);
        self.vel.extend_from_slice(vel);
    }

    /// Close the skeleton at `horizon`, appending a horizon event with the
    /// advanced final state unless one is already recorded there.
    pub fn finish(mut self, horizon: f64) -> PathSkeleton {
        assert!(!self.times.is_empty(), "skeleton needs at least the start event");
        let last = *self.times.last().unwrap();
        assert!(horizon >= last);
        if horizon > last {
            let n = self.times.len() - 1;
            let mut p = self.pos[n * self.dim..].to_vec();
            let v = self.vel[n * self.vdim..].to_vec();
            if matches!(self.dynamics, Dynamics::ConstantVelocity) {
                for (pi, vi) in p.iter_mut().zip(&v) {
                    *pi += (horizon - last) * vi;
                }
            }
            self.times.push(horizon);
            self.kinds.push(EventKind::Horizon);
            self.pos.extend_from_slice(&p);
            self.vel.extend_from_slice(&v);
        }
        PathSkeleton {
            dim: self.dim,
            vdim: self.vdim,
            dynamics: self.dynamics,
            horizon,
            times: self.times,
            kinds: self.kinds,
            pos: self.pos,
            vel: self.vel,
        }
    }
}
