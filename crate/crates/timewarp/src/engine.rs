//! Generic PDMP simulation by Poisson thinning.
//!
//! A process is described by its characteristics: a deterministic flow, a
//! list of rate channels and their jump kernels. Event times are drawn by
//! thinning against per-channel envelopes. Two envelope families are exact
//! (affine-along-flow rates and constant rates); everything else uses a
//! grid-scan bound with a safety factor, and any observed excursion of the
//! true rate above its declared bound aborts the run.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::{Dynamics, EventKind, PathSkeleton, SkeletonBuilder};
use crate::speed::SpeedFunction;

/// Rate as a function of the full state.
pub type RateFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
/// In-place jump kernel.
pub type KernelFn = dyn Fn(&mut [f64], &mut [f64], &mut RngStream) + Send + Sync;

/// Deterministic motion between events.
#[derive(Clone)]
pub enum Flow {
    /// `dx = v dt`.
    ConstantVelocity,
    /// No motion (pure jump processes).
    Frozen,
    /// `dx = s(x) v dt`; not integrated directly by this engine — time-changed
    /// paths are produced by warping base paths instead.
    SpeedScaled {
        speed: SpeedFunction,
        inner: Box<Flow>,
    },
}

impl std::fmt::Debug for Flow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flow::ConstantVelocity => write!(f, "ConstantVelocity"),
            Flow::Frozen => write!(f, "Frozen"),
            Flow::SpeedScaled { inner, .. } => write!(f, "SpeedScaled({inner:?})"),
        }
    }
}

/// Parameters of the grid-scan envelope for rates without exact bounds.
#[derive(Debug, Clone, Copy)]
pub struct GridEnvelopeParams {
    /// Look-ahead window over which the bound is certified.
    pub window: f64,
    /// Number of evaluation points on the window (endpoints included).
    pub grid_points: usize,
    /// Multiplicative safety factor on the grid maximum.
    pub safety: f64,
}

impl Default for GridEnvelopeParams {
    fn default() -> Self {
        Self {
            window: 1.0,
            grid_points: 16,
            safety: 1.5,
        }
    }
}

/// Small positive floor on grid bounds so that a rate the grid scan missed
/// entirely still produces occasional candidates, where the violation check
/// can catch it.
const GRID_BOUND_FLOOR: f64 = 1e-6;

/// How a channel's intensity is specified, which also fixes its envelope.
#[derive(Clone)]
pub enum ChannelRate {
    /// `λ = max(0, m)` where `t ↦ m(φ_t)` is affine along the flow. The
    /// envelope equals the rate: thinning accepts surely.
    ClippedAffine(Arc<RateFn>),
    /// Constant intensity.
    Constant(f64),
    /// General nonnegative intensity with a grid-scan envelope.
    General {
        rate: Arc<RateFn>,
        envelope: GridEnvelopeParams,
    },
    /// A rate multiplied by a speed function (produced by time changes);
    /// enveloped like `General` unless the flow is frozen.
    Scaled {
        speed: SpeedFunction,
        inner: Box<ChannelRate>,
        envelope: GridEnvelopeParams,
    },
}

impl ChannelRate {
    /// Intensity value at a state.
    pub fn value(&self, pos: &[f64], vel: &[f64]) -> f64 {
        match self {
            ChannelRate::ClippedAffine(m) => m(pos, vel).max(0.0),
            ChannelRate::Constant(c) => *c,
            ChannelRate::General { rate, .. } => rate(pos, vel),
            ChannelRate::Scaled { speed, inner, .. } => speed.value(pos) * inner.value(pos, vel),
        }
    }
}

/// One jump mechanism: intensity plus kernel, labelled with the event kind it
/// produces.
#[derive(Clone)]
pub struct RateChannel {
    pub kind: EventKind,
    pub rate: ChannelRate,
    pub kernel: Arc<KernelFn>,
}

impl RateChannel {
    pub fn new(kind: EventKind, rate: ChannelRate, kernel: Arc<KernelFn>) -> Self {
        Self { kind, rate, kernel }
    }
}

/// The characteristic triple (flow, rates, kernels) of a PDMP.
#[derive(Clone)]
pub struct PdmpCharacteristics {
    pub flow: Flow,
    pub channels: Vec<RateChannel>,
}

impl std::fmt::Debug for PdmpCharacteristics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdmpCharacteristics")
            .field("flow", &self.flow)
            .field("n_channels", &self.channels.len())
            .finish()
    }
}

/// Characteristics of the time change with speed `s`: the flow and every rate
/// are multiplied by `s`, the kernels stay the same objects.
pub fn time_change_characteristics(
    chars: &PdmpCharacteristics,
    speed: &SpeedFunction,
) -> PdmpCharacteristics {
    if speed.constant_value() == Some(1.0) {
        return chars.clone();
    }
    let flow = match &chars.flow {
        Flow::Frozen => Flow::Frozen,
        other => Flow::SpeedScaled {
            speed: speed.clone(),
            inner: Box::new(other.clone()),
        },
    };
    let channels = chars
        .channels
        .iter()
        .map(|c| RateChannel {
            kind: c.kind,
            rate: ChannelRate::Scaled {
                speed: speed.clone(),
                inner: Box::new(c.rate.clone()),
                envelope: GridEnvelopeParams::default(),
            },
            kernel: Arc::clone(&c.kernel),
        })
        .collect();
    PdmpCharacteristics { flow, channels }
}

/// A dominating affine intensity `t ↦ (a + b t)_+` valid on `[0, horizon]`.
#[derive(Debug, Clone, Copy)]
pub struct RateEnvelope {
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    /// True when the bound equals the rate along the flow, so that every
    /// proposal is accepted surely.
    pub exact: bool,
}

impl RateEnvelope {
    pub fn value(&self, t: f64) -> f64 {
        (self.a + self.b * t).max(0.0)
    }

    /// First arrival of a Poisson process with intensity `(a + b t)_+`,
    /// ignoring the validity horizon (the caller filters).
    pub fn sample_first_arrival(&self, rng: &mut RngStream) -> Option<f64> {
        let e = rng.exp1();
        let (a, b) = (self.a, self.b);
        if b == 0.0 {
            return if a > 0.0 { Some(e / a) } else { None };
        }
        if b > 0.0 {
            let t0 = if a < 0.0 { -a / b } else { 0.0 };
            let alpha = (a + b * t0).max(0.0);
            let tau = 2.0 * e / (alpha + (alpha * alpha + 2.0 * b * e).sqrt());
            Some(t0 + tau)
        } else {
            if a <= 0.0 {
                return None;
            }
            let total = a * a / (-2.0 * b);
            if e >= total {
                return None;
            }
            let tau = 2.0 * e / (a + (a * a + 2.0 * b * e).sqrt());
            Some(tau)
        }
    }
}

/// Thinning bookkeeping for one run.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationStats {
    /// Accepted events (excluding start and horizon markers).
    pub n_events: usize,
    /// Candidate event times proposed by envelopes.
    pub n_proposals: usize,
    /// Proposals accepted surely because their envelope was exact.
    pub n_sure_accepts: usize,
    /// Proposals that required an accept/reject draw.
    pub n_thinned_proposals: usize,
    /// Rejected proposals.
    pub n_rejections: usize,
    /// Observed envelope violations. Always 0 on success: a violation aborts
    /// the run with an error instead of biasing the path.
    pub n_envelope_violations: usize,
}

/// Incremental thinning simulator; supports extending the horizon, which the
/// time-changed drivers use to reach a target warped time.
pub struct PdmpSimulator<'a> {
    chars: &'a PdmpCharacteristics,
    rng: &'a mut RngStream,
    pos: Vec<f64>,
    vel: Vec<f64>,
    time: f64,
    builder: SkeletonBuilder,
    stats: SimulationStats,
    scratch: Vec<f64>,
}

impl<'a> PdmpSimulator<'a> {
    pub fn new(
        chars: &'a PdmpCharacteristics,
        x0: &[f64],
        v0: &[f64],
        rng: &'a mut RngStream,
    ) -> Result<Self> {
        let dynamics = match chars.flow {
            Flow::ConstantVelocity => Dynamics::ConstantVelocity,
            Flow::Frozen => Dynamics::PiecewiseConstant,
            Flow::SpeedScaled { .. } => {
                return Err(Error::InvalidParameter(
                    "speed-scaled flows are simulated by warping the base path".into(),
                ))
            }
        };
        let mut builder = SkeletonBuilder::new(x0.len(), v0.len(), dynamics);
        builder.push(0.0, EventKind::Start, x0, v0);
        Ok(Self {
            chars,
            rng,
            pos: x0.to_vec(),
            vel: v0.to_vec(),
            time: 0.0,
            builder,
            stats: SimulationStats::default(),
            scratch: vec![0.0; x0.len()],
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn state(&self) -> (&[f64], &[f64]) {
        (&self.pos, &self.vel)
    }

    pub fn stats(&self) -> SimulationStats {
        self.stats
    }

    /// Clone the events accumulated so far into a skeleton on `[0, horizon]`.
    pub fn snapshot(&self, horizon: f64) -> PathSkeleton {
        assert!(horizon >= self.time);
        self.builder.clone().finish(horizon)
    }

    fn advance_state(&mut self, dt: f64) {
        if matches!(self.chars.flow, Flow::ConstantVelocity) {
            for (p, v) in self.pos.iter_mut().zip(&self.vel) {
                *p += dt * v;
            }
        }
    }

    fn envelope_for(&mut self, idx: usize, remaining: f64) -> Result<RateEnvelope> {
        let frozen = matches!(self.chars.flow, Flow::Frozen);
        let chan = &self.chars.channels[idx];
        if frozen {
            let c = chan.rate.value(&self.pos, &self.vel);
            if !c.is_finite() {
                return Err(Error::NonFiniteRate {
                    channel: idx,
                    t: self.time,
                });
            }
            return Ok(RateEnvelope {
                a: c,
                b: 0.0,
                horizon: remaining,
                exact: true,
            });
        }
        match &chan.rate {
            ChannelRate::Constant(c) => Ok(RateEnvelope {
                a: *c,
                b: 0.0,
                horizon: remaining,
                exact: true,
            }),
            ChannelRate::ClippedAffine(m) => {
                let a = m(&self.pos, &self.vel);
                for (s, (p, v)) in self.scratch.iter_mut().zip(self.pos.iter().zip(&self.vel)) {
                    *s = p + v;
                }
                let b = m(&self.scratch, &self.vel) - a;
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::NonFiniteRate {
                        channel: idx,
                        t: self.time,
                    });
                }
                Ok(RateEnvelope {
                    a,
                    b,
                    horizon: remaining,
                    exact: true,
                })
            }
            ChannelRate::General { rate, envelope } => {
                let rate = Arc::clone(rate);
                let envelope = *envelope;
                self.grid_envelope(idx, move |p, v| rate(p, v), envelope, remaining)
            }
            ChannelRate::Scaled {
                speed,
                inner,
                envelope,
            } => {
                let inner = inner.clone();
                let speed = speed.clone();
                let envelope = *envelope;
                self.grid_envelope(
                    idx,
                    move |p, v| speed.value(p) * inner.value(p, v),
                    envelope,
                    remaining,
                )
            }
        }
    }

    fn grid_envelope(
        &mut self,
        idx: usize,
        rate: impl Fn(&[f64], &[f64]) -> f64,
        params: GridEnvelopeParams,
        remaining: f64,
    ) -> Result<RateEnvelope> {
        let w = params.window.min(remaining);
        let n = params.grid_points.max(2);
        let mut max = 0.0f64;
        for j in 0..n {
            let t = w * j as f64 / (n - 1) as f64;
            for (s, (p, v)) in self.scratch.iter_mut().zip(self.pos.iter().zip(&self.vel)) {
                *s = p + t * v;
            }
            let r = rate(&self.scratch, &self.vel);
            if !r.is_finite() {
                return Err(Error::NonFiniteRate {
                    channel: idx,
                    t: self.time + t,
                });
            }
            max = max.max(r);
        }
        Ok(RateEnvelope {
            a: (max * params.safety).max(GRID_BOUND_FLOOR),
            b: 0.0,
            horizon: w,
            exact: false,
        })
    }

    /// Run the thinning loop until `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        assert!(t_target >= self.time);
        let n_chan = self.chars.channels.len();
        let mut envelopes = Vec::with_capacity(n_chan);
        while self.time < t_target {
            let remaining = t_target - self.time;
            envelopes.clear();
            let mut window = remaining;
            for idx in 0..n_chan {
                let env = self.envelope_for(idx, remaining)?;
                window = window.min(env.horizon);
                envelopes.push(env);
            }
            // candidate arrivals within the common window
            let mut best: Option<(usize, f64)> = None;
            for (idx, env) in envelopes.iter().enumerate() {
                if let Some(t) = env.sample_first_arrival(self.rng) {
                    if t <= window && best.map_or(true, |(_, bt)| t < bt) {
                        best = Some((idx, t));
                    }
                }
            }
            let Some((idx, dt)) = best else {
                self.advance_state(window);
                // land exactly on the target when the window closes the gap
                self.time = if window >= remaining {
                    t_target
                } else {
                    self.time + window
                };
                continue;
            };
            self.advance_state(dt);
            let next = self.time + dt;
            self.time = if next > self.time {
                next
            } else {
                // sub-ulp gap; nudge forward to keep event times strictly increasing
                f64::from_bits(self.time.to_bits() + 1)
            };
            self.stats.n_proposals += 1;
            let env = envelopes[idx];
            let chan = &self.chars.channels[idx];
            let rate = chan.rate.value(&self.pos, &self.vel);
            if !rate.is_finite() {
                return Err(Error::NonFiniteRate {
                    channel: idx,
                    t: self.time,
                });
            }
            let bound = env.value(dt);
            if rate > bound * (1.0 + 1e-9) + 1e-12 {
                self.stats.n_envelope_violations += 1;
                return Err(Error::EnvelopeViolation {
                    channel: idx,
                    t: self.time,
                    rate,
                    bound,
                });
            }
            let accept = if env.exact {
                self.stats.n_sure_accepts += 1;
                true
            } else {
                self.stats.n_thinned_proposals += 1;
                self.rng.uniform() * bound < rate
            };
            if !accept {
                self.stats.n_rejections += 1;
                continue;
            }
            let pos_before = if chan.kind != EventKind::Jump {
                Some(self.pos.clone())
            } else {
                None
            };
            (chan.kernel)(&mut self.pos, &mut self.vel, self.rng);
            if let Some(pb) = pos_before {
                debug_assert_eq!(
                    pb, self.pos,
                    "velocity-jump kernels must not move the position"
                );
            }
            self.stats.n_events += 1;
            self.builder.push(self.time, chan.kind, &self.pos, &self.vel);
        }
        Ok(())
    }

    /// Close the run at its current time.
    pub fn finish(self) -> (PathSkeleton, SimulationStats) {
        (self.builder.finish(self.time), self.stats)
    }
}

/// Simulate the PDMP up to `horizon` from `(x0, v0)`.
pub fn simulate_pdmp(
    chars: &PdmpCharacteristics,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    rng: &mut RngStream,
) -> Result<(PathSkeleton, SimulationStats)> {
    let mut sim = PdmpSimulator::new(chars, x0, v0, rng)?;
    sim.advance_to(horizon)?;
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_test_exponential;

    fn noop_kernel() -> Arc<KernelFn> {
        Arc::new(|_p: &mut [f64], _v: &mut [f64], _r: &mut RngStream| {})
    }

    fn flip_kernel() -> Arc<KernelFn> {
        Arc::new(|_p: &mut [f64], v: &mut [f64], _r: &mut RngStream| v[0] = -v[0])
    }

    #[test]
    fn constant_rate_gaps_are_exponential() {
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Refresh,
                ChannelRate::Constant(1.0),
                noop_kernel(),
            )],
        };
        let mut rng = RngStream::new(123, 0);
        let (skel, stats) = simulate_pdmp(&chars, &[0.0], &[1.0], 11_000.0, &mut rng).unwrap();
        assert!(stats.n_events > 10_000);
        let times = skel.times();
        let gaps: Vec<f64> = times.windows(2).take(10_000).map(|w| w[1] - w[0]).collect();
        let (d, pass) = ks_test_exponential(&gaps, 1.0, 0.01);
        assert!(pass, "KS statistic {d} too large for Exp(1)");
    }

    #[test]
    fn zero_rate_gives_single_segment() {
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Flip(0),
                ChannelRate::Constant(0.0),
                flip_kernel(),
            )],
        };
        let mut rng = RngStream::new(1, 0);
        let (skel, stats) = simulate_pdmp(&chars, &[0.0], &[1.0], 10.0, &mut rng).unwrap();
        assert_eq!(stats.n_events, 0);
        assert_eq!(skel.n_events(), 2, "start + horizon only");
        assert_eq!(skel.state_at(10.0).unwrap().0[0], 10.0);
    }

    #[test]
    fn affine_envelope_accepts_surely() {
        // 1-d zig-zag rate (v ∂U)_+ on the unit Gaussian: m(x, v) = v x
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Flip(0),
                ChannelRate::ClippedAffine(Arc::new(|p: &[f64], v: &[f64]| v[0] * p[0])),
                flip_kernel(),
            )],
        };
        let mut rng = RngStream::new(7, 0);
        let (_, stats) = simulate_pdmp(&chars, &[0.0], &[1.0], 2000.0, &mut rng).unwrap();
        assert!(stats.n_events > 500);
        assert_eq!(stats.n_thinned_proposals, 0, "every proposal surely accepted");
        assert_eq!(stats.n_rejections, 0);
        assert_eq!(stats.n_envelope_violations, 0);
    }

    #[test]
    fn grid_envelope_violation_fails_fast() {
        // deliberately unsafe envelope: safety factor below 1
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Refresh,
                ChannelRate::General {
                    rate: Arc::new(|_p: &[f64], _v: &[f64]| 1.0),
                    envelope: GridEnvelopeParams {
                        window: 1.0,
                        grid_points: 4,
                        safety: 0.5,
                    },
                },
                noop_kernel(),
            )],
        };
        let mut rng = RngStream::new(3, 0);
        let err = simulate_pdmp(&chars, &[0.0], &[1.0], 100.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::EnvelopeViolation { .. }), "got {err:?}");
    }

    #[test]
    fn non_finite_rate_is_an_error() {
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Refresh,
                ChannelRate::General {
                    rate: Arc::new(|p: &[f64], _v: &[f64]| if p[0] > 0.5 { f64::NAN } else { 1.0 }),
                    envelope: GridEnvelopeParams::default(),
                },
                noop_kernel(),
            )],
        };
        let mut rng = RngStream::new(3, 0);
        let err = simulate_pdmp(&chars, &[0.0], &[1.0], 100.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NonFiniteRate { .. }));
    }

    #[test]
    fn thinned_rate_is_positive_at_accepted_events() {
        // non-affine rate via grid envelope; accepted events must sit where
        // the true rate is positive
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Flip(0),
                ChannelRate::General {
                    rate: Arc::new(|p: &[f64], v: &[f64]| (v[0] * 4.0 * p[0] * (p[0] * p[0] - 1.0)).max(0.0)),
                    envelope: GridEnvelopeParams::default(),
                },
                flip_kernel(),
            )],
        };
        let mut rng = RngStream::new(17, 0);
        let (skel, stats) = simulate_pdmp(&chars, &[0.0], &[1.0], 500.0, &mut rng).unwrap();
        assert!(stats.n_events > 50);
        assert!(stats.n_rejections > 0, "grid envelopes must thin sometimes");
        for rec in skel.events() {
            if let EventKind::Flip(_) = rec.kind {
                let m = rec.velocity_before[0] * 4.0 * rec.position_before[0]
                    * (rec.position_before[0] * rec.position_before[0] - 1.0);
                assert!(m > 0.0, "accepted event at zero rate: x={}", rec.position_before[0]);
            }
        }
    }

    #[cfg(debug_assertions)]
    #[test]
    #[should_panic(expected = "must not move the position")]
    fn moving_kernel_is_caught() {
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Refresh,
                ChannelRate::Constant(5.0),
                Arc::new(|p: &mut [f64], _v: &mut [f64], _r: &mut RngStream| p[0] += 1.0),
            )],
        };
        let mut rng = RngStream::new(3, 0);
        let _ = simulate_pdmp(&chars, &[0.0], &[1.0], 10.0, &mut rng);
    }

    #[test]
    fn determinism_by_stream() {
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Flip(0),
                ChannelRate::ClippedAffine(Arc::new(|p: &[f64], v: &[f64]| v[0] * p[0])),
                flip_kernel(),
            )],
        };
        let run = |seed| {
            let mut rng = RngStream::new(seed, 4);
            let (s, _) = simulate_pdmp(&chars, &[0.3], &[1.0], 100.0, &mut rng).unwrap();
            s
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a.n_events(), b.n_events());
        for (ta, tb) in a.times().iter().zip(b.times()) {
            assert_eq!(ta.to_bits(), tb.to_bits());
        }
    }

    #[test]
    fn time_change_scales_rates_not_kernels() {
        let kernel = flip_kernel();
        let chars = PdmpCharacteristics {
            flow: Flow::ConstantVelocity,
            channels: vec![RateChannel::new(
                EventKind::Flip(0),
                ChannelRate::Constant(3.0),
                Arc::clone(&kernel),
            )],
        };
        let s2 = SpeedFunction::constant(2.0).unwrap();
        let tc = time_change_characteristics(&chars, &s2);
        assert_eq!(tc.channels[0].rate.value(&[1.0], &[1.0]), 6.0);
        assert!(Arc::ptr_eq(&tc.channels[0].kernel, &kernel));
        assert!(matches!(tc.flow, Flow::SpeedScaled { .. }));

        let s1 = SpeedFunction::constant(1.0).unwrap();
        let id = time_change_characteristics(&chars, &s1);
        assert!(matches!(id.flow, Flow::ConstantVelocity));
        assert_eq!(id.channels[0].rate.value(&[1.0], &[1.0]), 3.0);
    }
}
