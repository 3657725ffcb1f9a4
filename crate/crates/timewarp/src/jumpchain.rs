//! Time-changed Markov jump processes.
//!
//! Strategy: hold at state `x` for an `Exp(s(x))` time, then jump with a
//! kernel that preserves the tilted law `mu_tilde ∝ s·mu`. The resulting
//! process targets `mu` and is simulated exactly. Also includes the
//! discrete-state sampler whose transition rates are
//! `s(x) g(mu_tilde(z)/mu_tilde(x))` for neighbors `z`, together with a dense
//! generator-matrix solve that serves as its exact stationary-law oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::engine::GridEnvelopeParams;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::skeleton::{Dynamics, EventKind, PathSkeleton, SkeletonBuilder};
use crate::speed::SpeedFunction;
use crate::tilted::TiltedPotential;
use crate::zigzag::{base_characteristics, ZigZagConfig};

type SampleFn = dyn Fn(&[f64], &[f64], &mut RngStream) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// A Markov transition kernel with a declared invariant law. Invariance is
/// never assumed silently — it is property-tested per kernel.
#[derive(Clone)]
pub struct MarkovKernel {
    label: String,
    vdim: usize,
    invariant: TiltedPotential,
    sample: Arc<SampleFn>,
}

impl std::fmt::Debug for MarkovKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarkovKernel")
            .field("label", &self.label)
            .field("vdim", &self.vdim)
            .finish_non_exhaustive()
    }
}

impl MarkovKernel {
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Velocity dimension carried through kernel draws (0 for position-only
    /// kernels).
    pub fn vdim(&self) -> usize {
        self.vdim
    }

    /// The tilted law this kernel claims to preserve.
    pub fn declared_invariant(&self) -> &TiltedPotential {
        &self.invariant
    }

    pub fn sample(&self, pos: &[f64], vel: &[f64], rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        (self.sample)(pos, vel, rng)
    }
}

/// Random-walk Metropolis kernel targeting the tilted law, with isotropic
/// normal proposals of scale `sigma`. Acceptance uses potential differences
/// only.
pub fn rwm_kernel(tilted: &TiltedPotential, sigma: f64) -> Result<MarkovKernel> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("proposal scale must be positive".into()));
    }
    let t = tilted.clone();
    let sample = move |pos: &[f64], _vel: &[f64], rng: &mut RngStream| {
        let mut prop: Vec<f64> = pos.iter().map(|&x| x + sigma * rng.standard_normal()).collect();
        let du = t.potential(&prop) - t.potential(pos);
        if du <= 0.0 || rng.uniform_pos().ln() < -du {
            (std::mem::take(&mut prop), Vec::new())
        } else {
            (pos.to_vec(), Vec::new())
        }
    };
    Ok(MarkovKernel {
        label: format!("rwm(sigma={sigma})"),
        vdim: 0,
        invariant: tilted.clone(),
        sample: Arc::new(sample),
    })
}

/// The exact fixed-random-time Zig-Zag transition: refresh the velocity
/// uniformly on `{-1,+1}^d`, run the base Zig-Zag targeting the tilted law
/// for an independent `Exp(1/delta)` duration (mean `delta`), and return the
/// final state.
pub fn zz_fixed_time_kernel(tilted: &TiltedPotential, delta: f64) -> Result<MarkovKernel> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("mean duration must be positive".into()));
    }
    let d = tilted.dim();
    // horizon is per-draw; the characteristics do not depend on it
    let cfg = ZigZagConfig::new(
        tilted.base(),
        tilted.speed(),
        vec![0.0; d],
        vec![1.0; d],
        1.0,
    )?
    .with_envelope(GridEnvelopeParams::default());
    let chars = base_characteristics(&cfg);
    let sample = move |pos: &[f64], _vel: &[f64], rng: &mut RngStream| {
        let mut v = vec![0.0; d];
        rng.fill_signs(&mut v);
        let tau = rng.exp(1.0 / delta);
        let (skel, _) = crate::engine::simulate_pdmp(&chars, pos, &v, tau, rng)
            .expect("zig-zag kernel simulation failed");
        skel.final_state()
    };
    Ok(MarkovKernel {
        label: format!("zz_fixed_time(delta={delta})"),
        vdim: d,
        invariant: tilted.clone(),
        sample: Arc::new(sample),
    })
}

/// Stopping rule for the jump-process run.
#[derive(Debug, Clone, Copy)]
pub enum StopRule {
    /// Run until the given process-time horizon.
    Horizon(f64),
    /// Run for a fixed number of kernel jumps.
    Jumps(usize),
}

fn check_speed_consistency(speed: &SpeedFunction, kernel: &MarkovKernel, x0: &[f64]) -> Result<()> {
    // the kernel must preserve mu_tilde ∝ s·mu for the *same* s
    let probe = |x: &[f64]| {
        let a = speed.log_value(x);
        let b = kernel.declared_invariant().speed().log_value(x);
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    };
    let mut shifted = x0.to_vec();
    if let Some(v) = shifted.first_mut() {
        *v += 1.0;
    }
    if probe(x0) && probe(&shifted) {
        Ok(())
    } else {
        Err(Error::Precondition(
            "kernel's declared invariant uses a different speed function".into(),
        ))
    }
}

/// Exact simulation of the time-changed jump process: hold `Exp(s(x))`, then
/// draw the next state from the kernel, until the stop rule fires.
pub fn algorithm1(
    speed: &SpeedFunction,
    kernel: &MarkovKernel,
    x0: &[f64],
    stop: StopRule,
    rng: &mut RngStream,
) -> Result<PathSkeleton> {
    check_speed_consistency(speed, kernel, x0)?;
    let vdim = kernel.vdim();
    let mut pos = x0.to_vec();
    let mut vel = vec![1.0; vdim];
    let mut builder = SkeletonBuilder::new(pos.len(), vdim, Dynamics::PiecewiseConstant);
    builder.push(0.0, EventKind::Start, &pos, &vel);
    let mut time = 0.0f64;
    let mut jumps = 0usize;
    loop {
        let rate = speed.value(&pos);
        if !rate.is_finite() || rate <= 0.0 {
            return Err(Error::NonFinite(format!("speed at {pos:?} is {rate}")));
        }
        let tau = rng.exp(rate);
        match stop {
            StopRule::Horizon(t_max) => {
                if time + tau >= t_max {
                    return Ok(builder.finish(t_max));
                }
            }
            StopRule::Jumps(n) => {
                if jumps >= n {
                    return Ok(builder.finish(time + tau));
                }
            }
        }
        time += tau;
        let (p, v) = kernel.sample(&pos, &vel, rng);
        pos = p;
        vel = v;
        vel.resize(vdim, 1.0);
        builder.push(time, EventKind::Jump, &pos, &vel);
        jumps += 1;
    }
}

/// Balance functions `g` with `g(t) = t g(1/t)`, which make the discrete
/// sampler reversible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceFunction {
    /// `g(t) = min(1, t)`.
    MetropolisMin,
    /// `g(t) = t / (1 + t)`.
    Barker,
}

impl BalanceFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            BalanceFunction::MetropolisMin => t.min(1.0),
            BalanceFunction::Barker => t / (1.0 + t),
        }
    }
}

/// A finite-state chain specification: unnormalized weights, symmetric
/// neighborhood structure, a balance function and per-state speeds.
#[derive(Debug, Clone)]
pub struct DiscreteChainSpec {
    weights: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    balance: BalanceFunction,
    speeds: Vec<f64>,
}

impl DiscreteChainSpec {
    pub fn new(
        weights: Vec<f64>,
        neighbors: Vec<Vec<usize>>,
        balance: BalanceFunction,
        speeds: Vec<f64>,
    ) -> Result<Self> {
        let n = weights.len();
        if neighbors.len() != n || speeds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: neighbors.len().min(speeds.len()),
            });
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if speeds.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("speeds must be positive".into()));
        }
        for (x, nx) in neighbors.iter().enumerate() {
            for &z in nx {
                if z >= n {
                    return Err(Error::InvalidParameter(format!("neighbor {z} out of range")));
                }
                if z == x {
                    return Err(Error::InvalidParameter(format!("state {x} is its own neighbor")));
                }
                if !neighbors[z].contains(&x) {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency not symmetric: {x} -> {z} but not {z} -> {x}"
                    )));
                }
            }
        }
        Ok(Self {
            weights,
            neighbors,
            balance,
            speeds,
        })
    }

    pub fn n_states(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn balance(&self) -> BalanceFunction {
        self.balance
    }

    /// Normalized target probabilities.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let z: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / z).collect()
    }

    /// Transition rate `x -> z`: `s(x) g(mu_tilde(z)/mu_tilde(x))` with
    /// `mu_tilde ∝ s·mu`.
    pub fn rate(&self, x: usize, z: usize) -> f64 {
        let ratio = (self.speeds[z] * self.weights[z]) / (self.speeds[x] * self.weights[x]);
        self.speeds[x] * self.balance.eval(ratio)
    }
}

/// Exact competing-exponentials simulation of the time-changed discrete jump
/// process. Positions in the skeleton are state indices.
pub fn discrete_sampler(
    spec: &DiscreteChainSpec,
    x0: usize,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<PathSkeleton> {
    if x0 >= spec.n_states() {
        return Err(Error::InvalidParameter(format!("state {x0} out of range")));
    }
    let mut x = x0;
    let mut time = 0.0f64;
    let mut builder = SkeletonBuilder::new(1, 0, Dynamics::PiecewiseConstant);
    builder.push(0.0, EventKind::Start, &[x as f64], &[]);
    loop {
        let nx = &spec.neighbors[x];
        if nx.is_empty() {
            return Err(Error::IsolatedState(x));
        }
        let rates: Vec<f64> = nx.iter().map(|&z| spec.rate(x, z)).collect();
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NonFinite(format!("total exit rate at state {x}")));
        }
        let tau = rng.exp(total);
        if time + tau >= horizon {
            return Ok(builder.finish(horizon));
        }
        time += tau;
        let mut u = rng.uniform() * total;
        let mut pick = nx[nx.len() - 1];
        for (&z, &r) in nx.iter().zip(&rates) {
            if u < r {
                pick = z;
                break;
            }
            u -= r;
        }
        x = pick;
        builder.push(time, EventKind::Jump, &[x as f64], &[]);
    }
}

/// Stationary distribution of the discrete sampler by a dense linear solve:
/// builds the full rate matrix and solves `pi G = 0`, `sum pi = 1`.
pub fn exact_stationary(spec: &DiscreteChainSpec) -> Result<Vec<f64>> {
    let n = spec.n_states();
    if n > 10_000 {
        return Err(Error::InvalidParameter("state count above the 1e4 solver cap".into()));
    }
    let mut g = DMatrix::<f64>::zeros(n, n);
    for x in 0..n {
        let mut row_sum = 0.0;
        for &z in &spec.neighbors[x] {
            let r = spec.rate(x, z);
            g[(x, z)] = r;
            row_sum += r;
        }
        g[(x, x)] = -row_sum;
    }
    // solve G^T pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = g.transpose();
    for z in 0..n {
        a[(n - 1, z)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.lu();
    let pi = lu
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))?;
    // residual check against the original generator
    let residual = (g.transpose() * &pi).amax();
    let scale = g.amax().max(1.0);
    if residual > 1e-9 * scale {
        return Err(Error::SingularSystem(format!(
            "residual {residual} too large for scale {scale}"
        )));
    }
    let mut out: Vec<f64> = pi.iter().copied().collect();
    if out.iter().any(|&p| p < -1e-10) {
        return Err(Error::SingularSystem("negative stationary mass".into()));
    }
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p = p.max(0.0) / total;
    }
    Ok(out)
}
