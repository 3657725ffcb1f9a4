//! Estimators of expectations under the target law.
//!
//! Three interchangeable strategies: time averages along the time-changed
//! path, self-normalized reweighting of the base path by `1/s`, and uniform
//! discretization. Plus the `mu(s)` and normalizing-constant estimators built
//! on the warp, batch-means asymptotic variances, the variance-identity check
//! between base and time-changed clocks, and a replicated relative-MSE
//! harness.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{integrate_adaptive, GaussLegendre};
use crate::rng::RngStream;
use crate::skeleton::{Dynamics, PathSkeleton};
use crate::speed::SpeedFunction;
use crate::target::TargetDensity;
use crate::testing::{mean_var, median};
use crate::warp::{build_warp, WarpTable, DEFAULT_WARP_TOL, MAX_BISECTION_DEPTH};
use crate::zigzag::{simulate_timechanged_zigzag, simulate_zigzag, ZigZagConfig};

fn gl8() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(8))
}

/// Point estimate with batch-means uncertainty.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub strategy: String,
    pub estimate: f64,
    /// Batch-means estimate of the asymptotic variance (per unit time).
    pub batch_means_variance: f64,
    /// Effective sample size in time units, capped at the horizon.
    pub effective_sample_size: f64,
    pub n_events: usize,
    pub horizon: f64,
}

impl EstimatorReport {
    /// Standard error of the time average implied by the batch-means
    /// variance.
    pub fn standard_error(&self) -> f64 {
        (self.batch_means_variance / self.horizon).sqrt()
    }
}

fn check_span(skel: &PathSkeleton, t: f64) -> Result<f64> {
    let h = skel.horizon();
    if t <= 0.0 || t > h * (1.0 + 1e-9) + 1e-9 {
        return Err(Error::TimeOutOfRange { t, horizon: h });
    }
    Ok(t.min(h))
}

/// Integrate `f` along the path over `[a, b]`: Gauss–Legendre of order 8 per
/// linear (or speed-scaled) segment, exact weighted sums for
/// piecewise-constant segments.
pub fn path_integral(
    skel: &PathSkeleton,
    f: &(impl Fn(&[f64]) -> f64 + ?Sized),
    a: f64,
    b: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for_each_subsegment(skel, a, b, |seg, lo, hi| {
        acc += segment_integral(skel, seg, lo, hi, f)?;
        Ok(())
    })?;
    Ok(acc)
}

fn for_each_subsegment(
    skel: &PathSkeleton,
    a: f64,
    b: f64,
    mut visit: impl FnMut(usize, f64, f64) -> Result<()>,
) -> Result<()> {
    if b <= a {
        return Ok(());
    }
    let times = skel.times();
    let n = times.len();
    let mut k = skel.segment_index(a);
    while k < n {
        let t0 = times[k];
        let t1 = if k + 1 < n { times[k + 1] } else { skel.horizon() };
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi > lo {
            visit(k, lo, hi)?;
        }
        if t1 >= b {
            break;
        }
        k += 1;
    }
    Ok(())
}

fn segment_integral(
    skel: &PathSkeleton,
    seg: usize,
    lo: f64,
    hi: f64,
    f: &(impl Fn(&[f64]) -> f64 + ?Sized),
) -> Result<f64> {
    let eval = |x: &[f64]| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("observable along the path".into()))
        }
    };
    match skel.dynamics() {
        Dynamics::ConstantVelocity => {
            let t0 = skel.times()[seg];
            let p = skel.position_after(seg);
            let v = skel.velocity_after(seg);
            let mut buf = vec![0.0; p.len()];
            let mut err = None;
            let val = gl8().integrate(lo, hi, |t| {
                for (bi, (pi, vi)) in buf.iter_mut().zip(p.iter().zip(v)) {
                    *bi = pi + (t - t0) * vi;
                }
                match eval(&buf) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(val)
        }
        Dynamics::PiecewiseConstant | Dynamics::Discretized { .. } => {
            Ok(eval(skel.position_after(seg))? * (hi - lo))
        }
        Dynamics::SpeedScaled { base, warp } => {
            let mut buf = vec![0.0; skel.dim()];
            let mut err = None;
            let val = gl8().integrate(lo, hi, |t| {
                let u = warp.base_time_of_warped(t).min(base.horizon());
                base.position_at_into(u, &mut buf);
                match eval(&buf) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok(val)
        }
    }
}

fn batch_avar(batch_integrals: &[f64], batch_len: f64) -> f64 {
    let means: Vec<f64> = batch_integrals.iter().map(|i| i / batch_len).collect();
    let (_, var) = mean_var(&means);
    batch_len * var
}

/// The ergodic time average `(1/T) ∫_0^T f(X_t) dt` with batch-means
/// uncertainty.
pub fn direct_average(
    skel: &PathSkeleton,
    f: impl Fn(&[f64]) -> f64,
    t: f64,
    n_batches: usize,
) -> Result<EstimatorReport> {
    let t = check_span(skel, t)?;
    let b = n_batches.max(2);
    let batch_len = t / b as f64;
    let mut integrals = Vec::with_capacity(b);
    let mut sq_total = 0.0;
    for j in 0..b {
        let lo = j as f64 * batch_len;
        let hi = if j + 1 == b { t } else { (j + 1) as f64 * batch_len };
        integrals.push(path_integral(skel, &f, lo, hi)?);
        sq_total += path_integral(skel, &|x: &[f64]| f(x) * f(x), lo, hi)?;
    }
    let estimate = integrals.iter().sum::<f64>() / t;
    let avar = batch_avar(&integrals, batch_len);
    let var_f = (sq_total / t - estimate * estimate).max(0.0);
    let ess = if avar > 0.0 { (t * var_f / avar).min(t) } else { t };
    Ok(EstimatorReport {
        strategy: "direct".into(),
        estimate,
        batch_means_variance: avar,
        effective_sample_size: ess,
        n_events: skel.n_events(),
        horizon: t,
    })
}

/// The self-normalized reweighted average on the base path:
/// `∫_0^T (f/s)(Y) dt / ∫_0^T (1/s)(Y) dt`.
pub fn reweighted_average(
    skel_y: &PathSkeleton,
    f: impl Fn(&[f64]) -> f64,
    speed: &SpeedFunction,
    t: f64,
    n_batches: usize,
) -> Result<EstimatorReport> {
    let t = check_span(skel_y, t)?;
    let b = n_batches.max(2);
    let batch_len = t / b as f64;
    let mut ratios = Vec::with_capacity(b);
    let (mut num_total, mut den_total, mut sq_total) = (0.0, 0.0, 0.0);
    for j in 0..b {
        let lo = j as f64 * batch_len;
        let hi = if j + 1 == b { t } else { (j + 1) as f64 * batch_len };
        let num = path_integral(skel_y, &|x: &[f64]| f(x) / speed.value(x), lo, hi)?;
        let den = path_integral(skel_y, &|x: &[f64]| 1.0 / speed.value(x), lo, hi)?;
        let sq = path_integral(skel_y, &|x: &[f64]| f(x) * f(x) / speed.value(x), lo, hi)?;
        num_total += num;
        den_total += den;
        sq_total += sq;
        ratios.push(num / den);
    }
    let estimate = num_total / den_total;
    let (_, var_ratio) = mean_var(&ratios);
    let avar = batch_len * var_ratio;
    let var_f = (sq_total / den_total - estimate * estimate).max(0.0);
    let ess = if avar > 0.0 { (t * var_f / avar).min(t) } else { t };
    Ok(EstimatorReport {
        strategy: "reweighted".into(),
        estimate,
        batch_means_variance: avar,
        effective_sample_size: ess,
        n_events: skel_y.n_events(),
        horizon: t,
    })
}

/// The discretized average `(1/N) Σ_{n=1..N} f(X_{nδ})` with `N = ⌊T/δ⌋`.
pub fn discretized_average(
    skel: &PathSkeleton,
    f: impl Fn(&[f64]) -> f64,
    delta: f64,
    n_batches: usize,
) -> Result<EstimatorReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let t = skel.horizon();
    let n = (t / delta).floor() as usize;
    if n < 1 {
        return Err(Error::InvalidParameter("horizon shorter than one step".into()));
    }
    let mut vals = Vec::with_capacity(n);
    let mut buf = vec![0.0; skel.dim()];
    for k in 1..=n {
        skel.position_at_into(k as f64 * delta, &mut buf);
        let v = f(&buf);
        if !v.is_finite() {
            return Err(Error::NonFinite("observable at a grid point".into()));
        }
        vals.push(v);
    }
    let b = n_batches.max(2).min(n);
    let m = n / b;
    let block_means: Vec<f64> = (0..b)
        .map(|j| vals[j * m..(j + 1) * m].iter().sum::<f64>() / m as f64)
        .collect();
    let estimate = vals.iter().sum::<f64>() / n as f64;
    let (_, var_blocks) = mean_var(&block_means);
    let avar = (m as f64 * delta) * var_blocks;
    let (_, var_f) = mean_var(&vals);
    let ess = if avar > 0.0 { ((n as f64 * delta) * var_f / avar).min(t) } else { t };
    Ok(EstimatorReport {
        strategy: format!("discretized(delta={delta})"),
        estimate,
        batch_means_variance: avar,
        effective_sample_size: ess,
        n_events: skel.n_events(),
        horizon: t,
    })
}

/// Estimate `mu(s)` from a base path as total base time over warped time,
/// the almost-sure limit of the clock ratio.
pub fn mu_s_estimate(skel_y: &Arc<PathSkeleton>, speed: &SpeedFunction, t: f64) -> Result<f64> {
    let t = check_span(skel_y, t)?;
    let warp = build_warp(skel_y, speed, DEFAULT_WARP_TOL)?;
    Ok(t / warp.warped_of_base(t))
}

/// Estimate the normalizing constant `Z = ∫ exp(-U)` from a base path, given
/// `I_s = ∫ s(x) exp(-U(x)) dx`: since `r⁻¹(T)/T → 1/mu(s) = Z/I_s`, the
/// estimator is `I_s · r⁻¹(T)/T`.
pub fn normalizing_constant(
    skel_y: &Arc<PathSkeleton>,
    speed: &SpeedFunction,
    i_s: f64,
) -> Result<f64> {
    if !(i_s > 0.0) {
        return Err(Error::InvalidParameter("I_s must be positive".into()));
    }
    let t = skel_y.horizon();
    let warp = build_warp(skel_y, speed, DEFAULT_WARP_TOL)?;
    Ok(i_s * warp.warped_of_base(t) / t)
}

/// Batch-means estimate of the asymptotic variance from a series of path
/// integral increments at spacing `dt`.
pub fn batch_means_avar(increments: &[f64], dt: f64, n_batches: usize) -> Result<f64> {
    if n_batches < 10 {
        return Err(Error::InvalidParameter("need at least 10 batches".into()));
    }
    if increments.len() < n_batches {
        return Err(Error::InvalidParameter(
            "series shorter than the number of batches".into(),
        ));
    }
    let m = increments.len() / n_batches;
    let batch_len = m as f64 * dt;
    let means: Vec<f64> = (0..n_batches)
        .map(|j| increments[j * m..(j + 1) * m].iter().sum::<f64>() / batch_len)
        .collect();
    let (_, var) = mean_var(&means);
    Ok(batch_len * var)
}

/// The right-hand side of the path-level change-of-variables identity:
/// `(1/T) ∫_0^{r(T)} f(Y_u)/s(Y_u) du` computed on the base path with
/// adaptive quadrature (independent of the warped-side evaluation route).
pub fn base_side_average(
    warp: &WarpTable,
    f: impl Fn(&[f64]) -> f64,
    t_warped: f64,
) -> Result<f64> {
    let u_end = warp.base_time_of_warped(t_warped);
    let base = warp.base();
    let speed = warp.speed();
    let rule = GaussLegendre::new(16);
    let mut acc = 0.0;
    for_each_subsegment(base, 0.0, u_end, |seg, lo, hi| {
        match base.dynamics() {
            Dynamics::ConstantVelocity => {
                let t0 = base.times()[seg];
                let p = base.position_after(seg);
                let v = base.velocity_after(seg);
                let mut buf = vec![0.0; p.len()];
                acc += integrate_adaptive(&rule, lo, hi, 1e-12, MAX_BISECTION_DEPTH, &mut |u| {
                    for (bi, (pi, vi)) in buf.iter_mut().zip(p.iter().zip(v)) {
                        *bi = pi + (u - t0) * vi;
                    }
                    f(&buf) / speed.value(&buf)
                })?;
            }
            _ => {
                let p = base.position_after(seg);
                acc += f(p) / speed.value(p) * (hi - lo);
            }
        }
        Ok(())
    })?;
    Ok(acc / t_warped)
}

/// Occupation fraction of `{x : a <= x[coord] <= b}` over `[0, T]`, computed
/// by exact segment-crossing arithmetic (no quadrature on indicators).
pub fn occupation_fraction(
    skel: &PathSkeleton,
    t: f64,
    coord: usize,
    a: f64,
    b: f64,
) -> Result<f64> {
    let t = check_span(skel, t)?;
    match skel.dynamics() {
        Dynamics::SpeedScaled { base, warp } => {
            let u_end = warp.base_time_of_warped(t);
            let mut acc = 0.0;
            linear_occupation(base, u_end, coord, a, b, |u0, u1| {
                acc += warp.warped_of_base(u1) - warp.warped_of_base(u0);
            })?;
            Ok(acc / t)
        }
        _ => {
            let mut acc = 0.0;
            linear_occupation(skel, t, coord, a, b, |t0, t1| acc += t1 - t0)?;
            Ok(acc / t)
        }
    }
}

fn linear_occupation(
    skel: &PathSkeleton,
    t_end: f64,
    coord: usize,
    a: f64,
    b: f64,
    mut add: impl FnMut(f64, f64),
) -> Result<()> {
    let linear = matches!(skel.dynamics(), Dynamics::ConstantVelocity);
    for_each_subsegment(skel, 0.0, t_end, |seg, lo, hi| {
        let p = skel.position_after(seg)[coord];
        if linear {
            let t0 = skel.times()[seg];
            let v = skel.velocity_after(seg)[coord];
            if v == 0.0 {
                if (a..=b).contains(&p) {
                    add(lo, hi);
                }
            } else {
                // x(t) = p + (t - t0) v in [a,b]
                let (ta, tb) = (t0 + (a - p) / v, t0 + (b - p) / v);
                let (mut i0, mut i1) = if v > 0.0 { (ta, tb) } else { (tb, ta) };
                i0 = i0.max(lo);
                i1 = i1.min(hi);
                if i1 > i0 {
                    add(i0, i1);
                }
            }
        } else if (a..=b).contains(&p) {
            add(lo, hi);
        }
        Ok(())
    })
}

/// Inputs for the asymptotic-variance identity check.
#[derive(Debug, Clone, Copy)]
pub struct FcltConfig {
    /// Per-coordinate refreshment rate of the Zig-Zag runs.
    pub refresh_rate: f64,
    pub n_batches: usize,
}

impl Default for FcltConfig {
    fn default() -> Self {
        Self {
            refresh_rate: 0.1,
            n_batches: 300,
        }
    }
}

/// Result of the variance-identity check: the asymptotic variance of the
/// time-changed process for `g` should equal the base-process variance for
/// `g_tilde = sqrt(mu(s)) (g - mu(g))/s`.
#[derive(Debug, Clone, Copy)]
pub struct FcltReport {
    pub gamma2_timechanged: f64,
    pub gamma2_base: f64,
    pub ratio: f64,
    pub mu_s_hat: f64,
    pub mu_g_hat: f64,
}

/// Estimate both asymptotic variances from two independent Zig-Zag runs and
/// report their ratio.
pub fn fclt_identity_check(
    target: &TargetDensity,
    speed: &SpeedFunction,
    g: impl Fn(&[f64]) -> f64 + Sync,
    t: f64,
    cfg: FcltConfig,
    rng: &RngStream,
) -> Result<FcltReport> {
    let d = target.dim();
    let gamma = vec![cfg.refresh_rate; d];
    let b = cfg.n_batches.max(10);

    // time-changed side: base run warped to horizon t, batch integrals of g
    // over warped-time batches evaluated through the change of variables
    let zz = ZigZagConfig::new(target, speed, vec![0.0; d], vec![1.0; d], t)?
        .with_refresh_rates(gamma.clone())?;
    let mut rng_x = rng.substream(1);
    let (x_skel, _) = simulate_timechanged_zigzag(&zz, &mut rng_x)?;
    let t_x = x_skel.horizon().min(t);
    let Dynamics::SpeedScaled { base, warp } = x_skel.dynamics() else {
        return Err(Error::InvalidParameter("expected a speed-scaled path".into()));
    };
    let batch_len_x = t_x / b as f64;
    let mut integrals_x = Vec::with_capacity(b);
    let mut u_prev = 0.0;
    for j in 1..=b {
        let tj = if j == b { t_x } else { j as f64 * batch_len_x };
        let uj = warp.base_time_of_warped(tj);
        let val = path_integral(base, &|x: &[f64]| g(x) / speed.value(x), u_prev, uj)?;
        integrals_x.push(val);
        u_prev = uj;
    }
    let mu_g_x = integrals_x.iter().sum::<f64>() / t_x;
    let gamma2_x = batch_avar(&integrals_x, batch_len_x);

    // base side: independent run of base-time length t with observable
    // g_tilde built from its own mu(s) and mu(g) estimates
    let zz_base = ZigZagConfig::new(target, speed, vec![0.0; d], vec![1.0; d], t)?
        .with_refresh_rates(gamma)?;
    let mut rng_y = rng.substream(2);
    let (y_skel, _) = simulate_zigzag(&zz_base, &mut rng_y)?;
    let y_arc = Arc::new(y_skel);
    let mu_s_hat = mu_s_estimate(&y_arc, speed, t)?;
    let rep = reweighted_average(&y_arc, &g, speed, t, cfg.n_batches)?;
    let mu_g_y = rep.estimate;
    let root_mu_s = mu_s_hat.sqrt();
    let g_tilde = |x: &[f64]| root_mu_s * (g(x) - mu_g_y) / speed.value(x);
    let batch_len_y = t / b as f64;
    let mut integrals_y = Vec::with_capacity(b);
    for j in 0..b {
        let lo = j as f64 * batch_len_y;
        let hi = if j + 1 == b { t } else { (j + 1) as f64 * batch_len_y };
        integrals_y.push(path_integral(&y_arc, &g_tilde, lo, hi)?);
    }
    let gamma2_y = batch_avar(&integrals_y, batch_len_y);

    Ok(FcltReport {
        gamma2_timechanged: gamma2_x,
        gamma2_base: gamma2_y,
        ratio: gamma2_x / gamma2_y,
        mu_s_hat,
        mu_g_hat: mu_g_x,
    })
}

/// One budget point of the replicated-MSE study.
#[derive(Debug, Clone, Copy)]
pub struct MsePoint {
    pub budget: u64,
    pub median_rel_sq_error: f64,
}

/// Run `replications` independent estimates per budget and report the median
/// of `((est - truth)/truth)²`. Replicates fan out across threads with
/// deterministic per-replicate streams.
pub fn mse_harness(
    estimator: impl Fn(u64, &mut RngStream) -> Result<f64> + Sync,
    truth: f64,
    budgets: &[u64],
    replications: usize,
    rng: &RngStream,
) -> Result<Vec<MsePoint>> {
    if truth == 0.0 {
        return Err(Error::InvalidParameter("truth must be nonzero".into()));
    }
    let mut out = Vec::with_capacity(budgets.len());
    for (bi, &budget) in budgets.iter().enumerate() {
        let errs: Vec<f64> = (0..replications)
            .into_par_iter()
            .map(|rep| {
                let mut r = rng.substream((bi * replications + rep) as u64 + 1);
                let est = estimator(budget, &mut r)?;
                Ok(((est - truth) / truth).powi(2))
            })
            .collect::<Result<_>>()?;
        out.push(MsePoint {
            budget,
            median_rel_sq_error: median(&errs),
        });
    }
    Ok(out)
}
