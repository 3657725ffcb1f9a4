//! The Zig-Zag sampler and its time-changed variant.
//!
//! The base process moves with velocity components in `{-1,+1}` and flips
//! coordinate `i` at rate `(w_i ∂_i U_tilde(y))_+ + gamma_i(y)`, which leaves
//! `mu_tilde ∝ s·mu` invariant. Warping the base path by the speed `s` yields
//! a process with marginal stationary law `mu` whose deterministic motion is
//! `dX = s(X) V dt`.

use std::sync::Arc;

use crate::engine::{
    simulate_pdmp, ChannelRate, Flow, GridEnvelopeParams, PdmpCharacteristics, PdmpSimulator,
    RateChannel, SimulationStats,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::{EventKind, PathSkeleton};
use crate::speed::SpeedFunction;
use crate::target::TargetDensity;
use crate::testing::linear_fit;
use crate::tilted::{make_tilted, TiltedPotential};
use crate::timechange::simulate_timechanged;
use crate::warp::DEFAULT_WARP_TOL;

/// Per-coordinate refreshment rates.
#[derive(Clone)]
pub enum Refreshment {
    None,
    /// Constant rate per coordinate.
    Constant(Vec<f64>),
    /// State-dependent rates; enveloped by grid scan.
    StateDependent(Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Refreshment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Refreshment::None => write!(f, "None"),
            Refreshment::Constant(g) => write!(f, "Constant({g:?})"),
            Refreshment::StateDependent(_) => write!(f, "StateDependent"),
        }
    }
}

/// Configuration of a Zig-Zag run.
#[derive(Debug, Clone)]
pub struct ZigZagConfig {
    tilted: TiltedPotential,
    refresh: Refreshment,
    x0: Vec<f64>,
    v0: Vec<f64>,
    horizon: f64,
    envelope: GridEnvelopeParams,
}

impl ZigZagConfig {
    pub fn new(
        target: &TargetDensity,
        speed: &SpeedFunction,
        x0: Vec<f64>,
        v0: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let tilted = make_tilted(target, speed)?;
        if x0.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: x0.len(),
            });
        }
        if v0.len() != target.dim() || v0.iter().any(|v| v.abs() != 1.0) {
            return Err(Error::InvalidParameter(
                "zig-zag velocities must lie in {-1,+1}^d".into(),
            ));
        }
        Ok(Self {
            tilted,
            refresh: Refreshment::None,
            x0,
            v0,
            horizon,
            envelope: GridEnvelopeParams::default(),
        })
    }

    /// Constant per-coordinate refreshment rates (must be nonnegative).
    pub fn with_refresh_rates(mut self, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: gamma.len(),
            });
        }
        if gamma.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::InvalidParameter("refresh rates must be >= 0".into()));
        }
        self.refresh = Refreshment::Constant(gamma);
        Ok(self)
    }

    pub fn with_envelope(mut self, params: GridEnvelopeParams) -> Self {
        self.envelope = params;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dim(&self) -> usize {
        self.tilted.dim()
    }

    pub fn tilted(&self) -> &TiltedPotential {
        &self.tilted
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_state(&self) -> (&[f64], &[f64]) {
        (&self.x0, &self.v0)
    }
}

/// The vector of flip rates `(w_i ∂_i U_tilde(x))_+ + gamma_i(x)`.
pub fn zz_rates(
    x: &[f64],
    w: &[f64],
    tilted: &TiltedPotential,
    gamma: &[f64],
) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    tilted.gradient_into(x, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tilted gradient".into()));
    }
    Ok(g
        .iter()
        .zip(w)
        .enumerate()
        .map(|(i, (&gi, &wi))| (wi * gi).max(0.0) + gamma.get(i).copied().unwrap_or(0.0))
        .collect())
}

fn flip_kernel(i: usize) -> Arc<crate::engine::KernelFn> {
    Arc::new(move |_p: &mut [f64], v: &mut [f64], _rng: &mut RngStream| {
        v[i] = -v[i];
    })
}

/// The PDMP characteristics of the base Zig-Zag targeting the tilted law.
pub fn base_characteristics(cfg: &ZigZagConfig) -> PdmpCharacteristics {
    let d = cfg.dim();
    let mut channels = Vec::with_capacity(2 * d);
    for i in 0..d {
        let tilted = cfg.tilted.clone();
        let signed = move |p: &[f64], v: &[f64]| -> f64 {
            let mut g = vec![0.0; p.len()];
            tilted.gradient_into(p, &mut g);
            v[i] * g[i]
        };
        let rate = if cfg.tilted.affine_gradient_along_lines() {
            ChannelRate::ClippedAffine(Arc::new(signed))
        } else {
            ChannelRate::General {
                rate: Arc::new(move |p: &[f64], v: &[f64]| signed(p, v).max(0.0)),
                envelope: cfg.envelope,
            }
        };
        channels.push(RateChannel::new(EventKind::Flip(i as u32), rate, flip_kernel(i)));
    }
    match &cfg.refresh {
        Refreshment::None => {}
        Refreshment::Constant(gamma) => {
            for (i, &g) in gamma.iter().enumerate() {
                if g > 0.0 {
                    channels.push(RateChannel::new(
                        EventKind::Refresh,
                        ChannelRate::Constant(g),
                        flip_kernel(i),
                    ));
                }
            }
        }
        Refreshment::StateDependent(f) => {
            for i in 0..d {
                let f = Arc::clone(f);
                channels.push(RateChannel::new(
                    EventKind::Refresh,
                    ChannelRate::General {
                        rate: Arc::new(move |p: &[f64], _v: &[f64]| f(p, i)),
                        envelope: cfg.envelope,
                    },
                    flip_kernel(i),
                ));
            }
        }
    }
    PdmpCharacteristics {
        flow: Flow::ConstantVelocity,
        channels,
    }
}

/// Simulate the base Zig-Zag (targeting `mu_tilde ∝ s·mu`) up to the
/// configured horizon of process time.
pub fn simulate_zigzag(
    cfg: &ZigZagConfig,
    rng: &mut RngStream,
) -> Result<(PathSkeleton, SimulationStats)> {
    let chars = base_characteristics(cfg);
    simulate_pdmp(&chars, &cfg.x0, &cfg.v0, cfg.horizon, rng)
}

/// Simulate the time-changed Zig-Zag up to warped time `cfg.horizon`:
/// base simulation, then the exact warp. With `s ≡ 1` this reproduces the
/// base skeleton.
pub fn simulate_timechanged_zigzag(
    cfg: &ZigZagConfig,
    rng: &mut RngStream,
) -> Result<(PathSkeleton, SimulationStats)> {
    let chars = base_characteristics(cfg);
    simulate_timechanged(
        &chars,
        &cfg.x0,
        &cfg.v0,
        cfg.horizon,
        cfg.tilted.speed(),
        DEFAULT_WARP_TOL,
        rng,
    )
}

/// Exact probability that the time-changed process started at `(x0, +1)`
/// reaches `x1 > x0` before its first velocity flip:
/// `s(x1)/s(x0) · exp(-(U(x1) - U(x0)))`.
///
/// Valid when the tilted slope keeps the sign of `U'` on `(x0, x1)` and the
/// stretch is uphill; both are checked on a grid.
pub fn crossing_probability(
    target: &TargetDensity,
    speed: &SpeedFunction,
    x0: f64,
    x1: f64,
) -> Result<f64> {
    if target.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: target.dim(),
        });
    }
    if x1 <= x0 {
        return Err(Error::Precondition("need x0 < x1".into()));
    }
    let tilted = make_tilted(target, speed)?;
    let n = 257;
    for j in 1..n {
        let x = x0 + (x1 - x0) * j as f64 / n as f64;
        let du = target.gradient(&[x])[0];
        let dut = tilted.gradient(&[x])[0];
        if du < -1e-12 {
            return Err(Error::Precondition(format!(
                "U' changes sign on (x0, x1): U'({x}) = {du}"
            )));
        }
        if du > 1e-12 && dut < -1e-12 {
            return Err(Error::Precondition(format!(
                "sign(U_tilde') != sign(U') at x = {x}: {dut} vs {du}"
            )));
        }
    }
    let log_ratio = speed.log_value(&[x1]) - speed.log_value(&[x0]);
    Ok((log_ratio - (target.potential(&[x1]) - target.potential(&[x0]))).exp())
}

/// Exact probability that the time-changed process started at `(x0, v)` with
/// `v ∈ {-1,+1}^d` travels distance at least `c` before its first event:
/// `s(x0 + v c/√d)/s(x0) · exp(-(U(x0 + v c/√d) - U(x0)))`.
pub fn tail_escape_probability(
    target: &TargetDensity,
    speed: &SpeedFunction,
    x0: &[f64],
    v: &[f64],
    c: f64,
) -> Result<f64> {
    let d = target.dim();
    if x0.len() != d || v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len().min(v.len()),
        });
    }
    if v.iter().any(|w| w.abs() != 1.0) {
        return Err(Error::InvalidParameter("v must lie in {-1,+1}^d".into()));
    }
    if c < 0.0 {
        return Err(Error::InvalidParameter("c must be nonnegative".into()));
    }
    let tilted = make_tilted(target, speed)?;
    let reach = c / (d as f64).sqrt();
    // each coordinate must move uphill in the tilted potential along the ray
    let n = 129;
    let mut g = vec![0.0; d];
    let mut y = x0.to_vec();
    for j in 0..=n {
        let u = reach * j as f64 / n as f64;
        for k in 0..d {
            y[k] = x0[k] + u * v[k];
        }
        tilted.gradient_into(&y, &mut g);
        for k in 0..d {
            if v[k] * g[k] < -1e-9 {
                return Err(Error::Precondition(format!(
                    "rate not positive along the ray: v_{k} ∂_{k} U_tilde = {} at u = {u}",
                    v[k] * g[k]
                )));
            }
        }
    }
    for k in 0..d {
        y[k] = x0[k] + reach * v[k];
    }
    let log_ratio = speed.log_value(&y) - speed.log_value(x0);
    Ok((log_ratio - (target.potential(&y) - target.potential(x0))).exp())
}

/// First time the path's `coord` component crosses `level` (exact segment
/// arithmetic; constant-velocity skeletons only).
pub fn first_crossing_time(skel: &PathSkeleton, coord: usize, level: f64) -> Option<f64> {
    let n = skel.n_events();
    for k in 0..n {
        let t0 = skel.times()[k];
        let t1 = if k + 1 < n { skel.times()[k + 1] } else { skel.horizon() };
        let p = skel.position_after(k)[coord];
        if p == level {
            return Some(t0);
        }
        let w = skel.velocity_after(k)[coord];
        if w != 0.0 {
            let tc = t0 + (level - p) / w;
            if tc > t0 && tc <= t1 {
                return Some(tc);
            }
        }
    }
    None
}

/// One replicate of the barrier-hitting experiment: warped time at which the
/// time-changed process from `(x0, v0)` first reaches `x1`, or `None` if the
/// base-time budget is exhausted.
pub fn hitting_time_timechanged(
    target: &TargetDensity,
    speed: &SpeedFunction,
    x0: f64,
    v0: f64,
    x1: f64,
    base_time_cap: f64,
    rng: &mut RngStream,
) -> Result<Option<f64>> {
    let cfg = ZigZagConfig::new(target, speed, vec![x0], vec![v0], 0.0)?;
    let chars = base_characteristics(&cfg);
    let mut sim = PdmpSimulator::new(&chars, &[x0], &[v0], rng)?;
    let mut horizon = 16.0f64.min(base_time_cap);
    loop {
        sim.advance_to(horizon)?;
        let snap = Arc::new(sim.snapshot(horizon));
        if let Some(u_star) = first_crossing_time(&snap, 0, x1) {
            let base = Arc::new(snap.truncated(u_star)?);
            let warp = crate::warp::build_warp(&base, speed, DEFAULT_WARP_TOL)?;
            return Ok(Some(warp.warped_span()));
        }
        if horizon >= base_time_cap {
            return Ok(None);
        }
        horizon = (horizon * 2.0).min(base_time_cap);
    }
}

/// One row of the barrier-scaling experiment.
#[derive(Debug, Clone)]
pub struct HittingTimeRow {
    pub eps: f64,
    pub mean_tau: f64,
    pub standard_error: f64,
    pub n_hit: usize,
    pub n_missed: usize,
}

/// Result of the barrier-scaling experiment: per-epsilon mean hitting times
/// and the regression slope of `ln E[tau]` against `1/eps`.
#[derive(Debug, Clone)]
pub struct HittingTimeExperiment {
    pub speed_exponent: f64,
    pub rows: Vec<HittingTimeRow>,
    pub slope: f64,
    pub intercept: f64,
}

/// Mean hitting time of `x1 = 0` from `(x0, v0) = (-1, -1)` for the
/// double-well target `U/eps` with speed `exp((a/eps) U)`, across an epsilon
/// grid, with the regression of `ln E[tau]` on `1/eps`.
pub fn eyring_kramers_experiment(
    a: f64,
    eps_grid: &[f64],
    replications: usize,
    base_time_cap: f64,
    rng: &RngStream,
) -> Result<HittingTimeExperiment> {
    use rayon::prelude::*;
    if !(0.0..1.0).contains(&a) {
        return Err(Error::InvalidParameter("speed exponent must be in [0,1)".into()));
    }
    let mut rows = Vec::with_capacity(eps_grid.len());
    for (ei, &eps) in eps_grid.iter().enumerate() {
        let target = crate::target::double_well_1d_scaled(eps)?;
        let speed = SpeedFunction::exp_alpha_u(&target, a)?;
        let taus: Vec<Option<f64>> = (0..replications)
            .into_par_iter()
            .map(|rep| {
                let mut r = rng.substream((ei * replications + rep) as u64 + 1);
                hitting_time_timechanged(&target, &speed, -1.0, -1.0, 0.0, base_time_cap, &mut r)
            })
            .collect::<Result<_>>()?;
        let hits: Vec<f64> = taus.iter().flatten().copied().collect();
        let n_hit = hits.len();
        let n_missed = replications - n_hit;
        let (mean, var) = if n_hit >= 2 {
            crate::testing::mean_var(&hits)
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(HittingTimeRow {
            eps,
            mean_tau: mean,
            standard_error: (var / n_hit.max(1) as f64).sqrt(),
            n_hit,
            n_missed,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_tau.is_finite() && r.mean_tau > 0.0)
        .map(|r| (1.0 / r.eps, r.mean_tau.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Precondition(
            "not enough hitting epsilons to regress the slope".into(),
        ));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept) = linear_fit(&xs, &ys);
    Ok(HittingTimeExperiment {
        speed_exponent: a,
        rows,
        slope,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{chi_squared_gof, ks_test_normal};
    use crate::target::{double_well_1d, standard_gaussian};
    use approx::assert_relative_eq;

    #[test]
    fn rates_match_hand_values() {
        let g = standard_gaussian(1);
        let unit = SpeedFunction::constant(1.0).unwrap();
        let tilted = make_tilted(&g, &unit).unwrap();
        let r = zz_rates(&[2.0], &[1.0], &tilted, &[0.0]).unwrap();
        assert_relative_eq!(r[0], 2.0);
        let r = zz_rates(&[2.0], &[-1.0], &tilted, &[0.0]).unwrap();
        assert_relative_eq!(r[0], 0.0);
        // tempering: U_tilde = 0.1 x^2/2, rate at x=2, w=+1 is 0.2
        let s = SpeedFunction::exp_alpha_u(&g, 0.9).unwrap();
        let tilted = make_tilted(&g, &s).unwrap();
        let r = zz_rates(&[2.0], &[1.0], &tilted, &[0.0]).unwrap();
        assert_relative_eq!(r[0], 0.2, max_relative = 1e-12);
    }

    #[test]
    fn exactly_one_direction_has_zero_rate() {
        let g = standard_gaussian(2);
        let unit = SpeedFunction::constant(1.0).unwrap();
        let tilted = make_tilted(&g, &unit).unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..50 {
            let x = [rng.standard_normal() * 2.0, rng.standard_normal() * 2.0];
            let w = [rng.sign(), rng.sign()];
            let fwd = zz_rates(&x, &w, &tilted, &[0.0, 0.0]).unwrap();
            let flip0 = zz_rates(&x, &[-w[0], w[1]], &tilted, &[0.0, 0.0]).unwrap();
            if x[0] != 0.0 {
                assert!(
                    (fwd[0] == 0.0) != (flip0[0] == 0.0),
                    "exactly one of the two directions must have zero rate"
                );
            }
        }
    }

    #[test]
    fn gaussian_marginal_from_long_run() {
        let g = standard_gaussian(1);
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = ZigZagConfig::new(&g, &s, vec![0.0], vec![1.0], 20_000.0).unwrap();
        let mut rng = RngStream::new(2024, 0);
        let (skel, stats) = simulate_zigzag(&cfg, &mut rng).unwrap();
        assert_eq!(stats.n_thinned_proposals, 0, "gaussian tilt gives exact envelopes");
        // well-spaced samples to keep them effectively independent
        let xs: Vec<f64> = (1..4000).map(|n| skel.state_at(n as f64 * 5.0).unwrap().0[0]).collect();
        let (d, pass) = ks_test_normal(&xs, 0.0, 1.0, 0.01);
        assert!(pass, "KS = {d}");
    }

    #[test]
    fn no_flips_against_zero_rate() {
        // from the left well moving right: flips only where w U_tilde' > 0
        let dw = double_well_1d();
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = ZigZagConfig::new(&dw, &s, vec![-1.0], vec![1.0], 400.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let (skel, _) = simulate_zigzag(&cfg, &mut rng).unwrap();
        let mut n_flips = 0;
        for rec in skel.events() {
            if matches!(rec.kind, EventKind::Flip(_)) {
                n_flips += 1;
                let x = rec.position_before[0];
                let m = rec.velocity_before[0] * 4.0 * x * (x * x - 1.0);
                assert!(m > 0.0, "flip accepted at nonpositive rate, x = {x}");
            }
        }
        assert!(n_flips > 20);
    }

    #[test]
    fn same_seed_reproduces_skeleton() {
        let g = standard_gaussian(1);
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = ZigZagConfig::new(&g, &s, vec![0.5], vec![1.0], 200.0).unwrap();
        let run = || {
            let mut rng = RngStream::new(77, 3);
            simulate_zigzag(&cfg, &mut rng).unwrap().0
        };
        let (a, b) = (run(), run());
        assert_eq!(a.n_events(), b.n_events());
        for i in 0..a.n_events() {
            assert_eq!(a.times()[i].to_bits(), b.times()[i].to_bits());
            assert_eq!(a.position_after(i), b.position_after(i));
        }
    }

    #[test]
    fn unit_speed_warp_is_identity() {
        let g = standard_gaussian(1);
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = ZigZagConfig::new(&g, &s, vec![0.0], vec![1.0], 100.0).unwrap();
        let mut rng = RngStream::new(11, 0);
        let (base, _) = simulate_zigzag(&cfg, &mut rng).unwrap();
        let mut rng = RngStream::new(11, 0);
        let (warped, _) = simulate_timechanged_zigzag(&cfg, &mut rng).unwrap();
        assert_eq!(base.n_events(), warped.n_events());
        for i in 0..base.n_events() {
            assert!((base.times()[i] - warped.times()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn timechanged_occupation_matches_target() {
        // occupation of [-1,1] under N(0,1) with s = 1 + x^2
        let g = standard_gaussian(1);
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        let cfg = ZigZagConfig::new(&g, &s, vec![0.0], vec![1.0], 20_000.0).unwrap();
        let mut rng = RngStream::new(31, 0);
        let (x, _) = simulate_timechanged_zigzag(&cfg, &mut rng).unwrap();
        let frac =
            crate::estimators::occupation_fraction(&x, x.horizon(), 0, -1.0, 1.0).unwrap();
        let truth = 2.0 * crate::stats::standard_normal_cdf(1.0) - 1.0;
        assert!((frac - truth).abs() < 0.02, "occupation {frac} vs {truth}");
    }

    #[test]
    fn velocity_marginal_is_uniform() {
        let g = standard_gaussian(2);
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = ZigZagConfig::new(&g, &s, vec![0.0, 0.0], vec![1.0, 1.0], 10_000.0).unwrap();
        let mut rng = RngStream::new(13, 0);
        let (skel, _) = simulate_zigzag(&cfg, &mut rng).unwrap();
        let mut counts = [0.0f64; 4];
        let n = 2000;
        for k in 1..=n {
            let (_, v) = skel.state_at(k as f64 * 5.0 - 2.5).unwrap();
            let cell = (v[0] > 0.0) as usize * 2 + (v[1] > 0.0) as usize;
            counts[cell] += 1.0;
        }
        let expected = [n as f64 / 4.0; 4];
        let (stat, p) = chi_squared_gof(&counts, &expected, 5.0);
        assert!(p > 0.01, "chi2 = {stat}, p = {p}");
    }

    #[test]
    fn crossing_probability_closed_forms() {
        let dw = double_well_1d();
        let unit = SpeedFunction::constant(1.0).unwrap();
        assert_relative_eq!(
            crossing_probability(&dw, &unit, -1.0, 0.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
        let s = SpeedFunction::exp_alpha_u(&dw, 0.9).unwrap();
        assert_relative_eq!(
            crossing_probability(&dw, &s, -1.0, 0.0).unwrap(),
            (-0.1f64).exp(),
            max_relative = 1e-10
        );
        // equal speeds at the endpoints reduce to exp(-ΔU)
        let c = SpeedFunction::constant(3.0).unwrap();
        assert_relative_eq!(
            crossing_probability(&dw, &c, -1.0, 0.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn crossing_probability_rejects_downhill() {
        let dw = double_well_1d();
        let unit = SpeedFunction::constant(1.0).unwrap();
        // (0, 1) is downhill: U' < 0 there
        assert!(crossing_probability(&dw, &unit, 0.0, 1.0).is_err());
    }

    #[test]
    fn tail_escape_closed_forms() {
        let g = standard_gaussian(1);
        let unit = SpeedFunction::constant(1.0).unwrap();
        assert_relative_eq!(
            tail_escape_probability(&g, &unit, &[0.0], &[1.0], 0.0).unwrap(),
            1.0
        );
        assert_relative_eq!(
            tail_escape_probability(&g, &unit, &[0.0], &[1.0], 2.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-12
        );
        let s = SpeedFunction::one_plus_norm_sq_pow(1.0).unwrap();
        assert_relative_eq!(
            tail_escape_probability(&g, &s, &[0.0], &[1.0], 2.0).unwrap(),
            5.0 * (-2.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn first_crossing_is_exact() {
        use crate::skeleton::{Dynamics, SkeletonBuilder};
        let mut b = SkeletonBuilder::new(1, 1, Dynamics::ConstantVelocity);
        b.push(0.0, EventKind::Start, &[0.0], &[1.0]);
        b.push(2.0, EventKind::Flip(0), &[2.0], &[-1.0]);
        let s = b.finish(10.0);
        assert_relative_eq!(first_crossing_time(&s, 0, 1.5).unwrap(), 1.5);
        assert_relative_eq!(first_crossing_time(&s, 0, -3.0).unwrap(), 7.0);
        assert!(first_crossing_time(&s, 0, 3.0).is_none());
    }
}
