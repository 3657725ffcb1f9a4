//! Monte Carlo sampling with time-changed Markov processes.
//!
//! A base Markov process `Y` targeting the tilted law `mu_tilde ∝ s·mu` is
//! reparameterized by the random clock `r(t) = ∫_0^t s(X_u) du`, producing a
//! process `X_t = Y_{r(t)}` that targets `mu` while moving quickly through the
//! regions where the speed `s` is large — low-density corridors between
//! modes, or the tails when rare events matter.
//!
//! The crate provides:
//!
//! - a generic PDMP engine with exact Poisson thinning ([`engine`]),
//! - the time-warp machinery `r`, `r⁻¹` ([`warp`]),
//! - concrete samplers: Zig-Zag ([`zigzag`]), Bouncy Particle ([`bps`]),
//!   Euler–Maruyama Langevin baselines ([`diffusion`]) and time-changed jump
//!   processes ([`jumpchain`]),
//! - estimators of expectations, normalizing constants and asymptotic
//!   variances ([`estimators`]),
//! - the unit-ball space transformation for side-by-side comparison
//!   ([`spacemap`]),
//! - a config-driven experiment runner ([`experiments`]) behind the
//!   `timewarp` binary.
//!
//! See the crate examples for one runnable program per capability.

pub mod bps;
pub mod diffusion;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod jumpchain;
pub mod quad;
pub mod rng;
pub mod skeleton;
pub mod spacemap;
pub mod speed;
pub mod stats;
pub mod target;
pub mod testing;
pub mod tilted;
pub mod warp;
pub mod zigzag;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use skeleton::{Dynamics, EventKind, EventRecord, PathSkeleton, SkeletonBuilder};
pub use speed::SpeedFunction;
pub use target::TargetDensity;
pub use tilted::{make_tilted, TiltedPotential};
pub use warp::{build_warp, warp_path, WarpTable};
