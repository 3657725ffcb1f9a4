//! The Bouncy Particle Sampler and its time-changed variant.
//!
//! The base process moves in straight lines and, at rate
//! `⟨w, ∇U_tilde(y)⟩_+`, reflects its velocity elastically on the level set of
//! the tilted potential; refreshments redraw the velocity from the standard
//! normal at constant rate `lambda_r > 0` (required for ergodicity).

use std::sync::Arc;

use crate::engine::{
    simulate_pdmp, ChannelRate, Flow, GridEnvelopeParams, PdmpCharacteristics, RateChannel,
    SimulationStats,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::{EventKind, PathSkeleton};
use crate::speed::SpeedFunction;
use crate::target::TargetDensity;
use crate::tilted::{make_tilted, TiltedPotential};
use crate::timechange::simulate_timechanged;
use crate::warp::DEFAULT_WARP_TOL;

/// Configuration of a Bouncy Particle run.
#[derive(Debug, Clone)]
pub struct BpsConfig {
    tilted: TiltedPotential,
    refresh_rate: f64,
    x0: Vec<f64>,
    v0: Vec<f64>,
    horizon: f64,
    envelope: GridEnvelopeParams,
}

impl BpsConfig {
    pub fn new(
        target: &TargetDensity,
        speed: &SpeedFunction,
        refresh_rate: f64,
        x0: Vec<f64>,
        v0: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if !(refresh_rate > 0.0) {
            return Err(Error::InvalidParameter(
                "BPS refresh rate must be strictly positive".into(),
            ));
        }
        let tilted = make_tilted(target, speed)?;
        if x0.len() != target.dim() || v0.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: x0.len().min(v0.len()),
            });
        }
        Ok(Self {
            tilted,
            refresh_rate,
            x0,
            v0,
            horizon,
            envelope: GridEnvelopeParams::default(),
        })
    }

    pub fn with_envelope(mut self, params: GridEnvelopeParams) -> Self {
        self.envelope = params;
        self
    }

    pub fn tilted(&self) -> &TiltedPotential {
        &self.tilted
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Elastic reflection of `w` on the hyperplane orthogonal to `g`:
/// `w - 2 ⟨w,g⟩/|g|² g`. Preserves the Euclidean norm.
pub fn bps_reflect(w: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    let g2: f64 = g.iter().map(|v| v * v).sum();
    if g2 == 0.0 || !g2.is_finite() {
        return Err(Error::ReflectAtCriticalPoint);
    }
    let wg: f64 = w.iter().zip(g).map(|(&a, &b)| a * b).sum();
    let c = 2.0 * wg / g2;
    Ok(w.iter().zip(g).map(|(&wi, &gi)| wi - c * gi).collect())
}

/// PDMP characteristics of the base BPS targeting the tilted law.
pub fn base_characteristics(cfg: &BpsConfig) -> PdmpCharacteristics {
    let tilted_rate = cfg.tilted.clone();
    let signed = move |p: &[f64], v: &[f64]| -> f64 {
        let mut g = vec![0.0; p.len()];
        tilted_rate.gradient_into(p, &mut g);
        v.iter().zip(&g).map(|(&a, &b)| a * b).sum()
    };
    let bounce_rate = if cfg.tilted.affine_gradient_along_lines() {
        ChannelRate::ClippedAffine(Arc::new(signed))
    } else {
        ChannelRate::General {
            rate: Arc::new(move |p: &[f64], v: &[f64]| signed(p, v).max(0.0)),
            envelope: cfg.envelope,
        }
    };
    let tilted_kernel = cfg.tilted.clone();
    let bounce_kernel: Arc<crate::engine::KernelFn> =
        Arc::new(move |p: &mut [f64], v: &mut [f64], _rng: &mut RngStream| {
            let mut g = vec![0.0; p.len()];
            tilted_kernel.gradient_into(p, &mut g);
            // accepted bounces have ⟨v, g⟩ > 0, so g cannot vanish here
            if let Ok(r) = bps_reflect(v, &g) {
                v.copy_from_slice(&r);
            }
        });
    let refresh_kernel: Arc<crate::engine::KernelFn> =
        Arc::new(|_p: &mut [f64], v: &mut [f64], rng: &mut RngStream| {
            rng.fill_standard_normal(v);
        });
    PdmpCharacteristics {
        flow: Flow::ConstantVelocity,
        channels: vec![
            RateChannel::new(EventKind::Reflect, bounce_rate, bounce_kernel),
            RateChannel::new(
                EventKind::Refresh,
                ChannelRate::Constant(cfg.refresh_rate),
                refresh_kernel,
            ),
        ],
    }
}

/// Simulate the base BPS to the configured horizon.
pub fn simulate_bps(
    cfg: &BpsConfig,
    rng: &mut RngStream,
) -> Result<(PathSkeleton, SimulationStats)> {
    let chars = base_characteristics(cfg);
    simulate_pdmp(&chars, &cfg.x0, &cfg.v0, cfg.horizon, rng)
}

/// Simulate the time-changed BPS up to warped time `cfg.horizon` via the
/// base run and the exact warp; the total event rate becomes `s·λ_tilde`
/// automatically.
pub fn simulate_timechanged_bps(
    cfg: &BpsConfig,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_test_normal;
    use crate::target::standard_gaussian;
    use approx::assert_relative_eq;

    #[test]
    fn reflection_basic_cases() {
        let r = bps_reflect(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(r[0], -1.0);
        assert_relative_eq!(r[1], 1.0);
        // orthogonal velocity is unchanged
        let r = bps_reflect(&[0.0, 2.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(r[0], 0.0);
        assert_relative_eq!(r[1], 2.0);
        assert!(bps_reflect(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn reflection_is_an_isometric_involution() {
        let mut rng = RngStream::new(21, 0);
        for _ in 0..100 {
            let w: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
            let g: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
            let r = bps_reflect(&w, &g).unwrap();
            let n0: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let n1: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_relative_eq!(n0, n1, epsilon = 1e-12);
            let back = bps_reflect(&r, &g).unwrap();
            for (a, b) in back.iter().zip(&w) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_marginals_from_long_run() {
        let g = standard_gaussian(2);
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = BpsConfig::new(&g, &s, 0.5, vec![0.0, 0.0], vec![1.0, 0.3], 20_000.0).unwrap();
        let mut rng = RngStream::new(88, 0);
        let (skel, stats) = simulate_bps(&cfg, &mut rng).unwrap();
        assert_eq!(stats.n_thinned_proposals, 0, "gaussian tilt gives exact envelopes");
        for coord in 0..2 {
            let xs: Vec<f64> = (1..4000)
                .map(|n| skel.state_at(n as f64 * 5.0).unwrap().0[coord])
                .collect();
            let (d, pass) = ks_test_normal(&xs, 0.0, 1.0, 0.01);
            assert!(pass, "coord {coord}: KS = {d}");
        }
    }

    #[test]
    fn large_refresh_rate_dominates_bounces() {
        let g = standard_gaussian(2);
        let s = SpeedFunction::constant(1.0).unwrap();
        let cfg = BpsConfig::new(&g, &s, 100.0, vec![0.0, 0.0], vec![1.0, 0.0], 200.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let (skel, _) = simulate_bps(&cfg, &mut rng).unwrap();
        let mut bounces = 0usize;
        let mut refreshes = 0usize;
        for rec in skel.events() {
            match rec.kind {
                EventKind::Reflect => bounces += 1,
                EventKind::Refresh => refreshes += 1,
                _ => {}
            }
        }
        assert!(refreshes > 1000);
        assert!((bounces as f64) < 0.05 * refreshes as f64, "{bounces} vs {refreshes}");
    }

    #[test]
    fn constant_speed_halves_timestamps() {
        let g = standard_gaussian(2);
        let s1 = SpeedFunction::constant(1.0).unwrap();
        let s2 = SpeedFunction::constant(2.0).unwrap();
        let base_cfg = BpsConfig::new(&g, &s1, 1.0, vec![0.0, 0.0], vec![1.0, -1.0], 50.0).unwrap();
        let mut rng = RngStream::new(42, 1);
        let (base, _) = simulate_bps(&base_cfg, &mut rng).unwrap();
        // same path, warped with s = 2: the warped horizon covers half the time
        let warped_cfg =
            BpsConfig::new(&g, &s2, 1.0, vec![0.0, 0.0], vec![1.0, -1.0], 25.0).unwrap();
        let mut rng = RngStream::new(42, 1);
        let (warped, _) = simulate_timechanged_bps(&warped_cfg, &mut rng).unwrap();
        // the base draws are identical, so warped event times are half
        let n = warped.n_events().min(base.n_events());
        for i in 0..n - 1 {
            assert_relative_eq!(warped.times()[i], base.times()[i] / 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn timechanged_speed_matches_s_times_velocity_norm() {
        let g = standard_gaussian(2);
        let s = SpeedFunction::one_plus_norm_sq_pow(1.5).unwrap();
        let cfg = BpsConfig::new(&g, &s, 1.0, vec![0.5, -0.2], vec![0.8, 0.6], 50.0).unwrap();
        let mut rng = RngStream::new(7, 0);
        let (x, _) = simulate_timechanged_bps(&cfg, &mut rng).unwrap();
        let dt = 1e-7;
        for &t in &[1.0, 5.0, 20.0, 40.0] {
            let (p0, v0) = x.state_at(t).unwrap();
            let (p1, _) = x.state_at(t + dt).unwrap();
            let measured: f64 = p0
                .iter()
                .zip(&p1)
                .map(|(&a, &b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
                / dt;
            let vnorm: f64 = v0.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expect = s.value(&p0) * vnorm;
            assert!(
                (measured - expect).abs() <= 0.01 * expect,
                "t={t}: measured {measured} vs s|v| = {expect}"
            );
        }
    }
}
