//! Gauss–Legendre quadrature with optional bisection refinement.

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build the rule by Newton iteration on the Legendre polynomial roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-based initial guess for the i-th root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrate `f` over `[a, b]` with a single application of the rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate `f` over `[a, b]`, bisecting recursively until the two-half
/// refinement of a segment differs from the single-panel value by less than
/// `tol` (absolute, per segment). Fails after `max_depth` subdivisions.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    f: &mut F,
) -> Result<f64> {
    let whole = rule.integrate(a, b, &mut *f);
    adaptive_inner(rule, a, b, whole, tol, max_depth, f)
}

fn adaptive_inner<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth_left: usize,
    f: &mut F,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, &mut *f);
    let right = rule.integrate(mid, b, &mut *f);
    let refined = left + right;
    if (refined - whole).abs() < tol {
        return Ok(refined);
    }
    if depth_left == 0 {
        return Err(Error::QuadratureFailure {
            tol,
            max_depth: crate::warp::MAX_BISECTION_DEPTH,
        });
    }
    let half_tol = 0.5 * tol;
    Ok(
        adaptive_inner(rule, a, mid, left, half_tol, depth_left - 1, f)?
            + adaptive_inner(rule, mid, b, right, half_tol, depth_left - 1, f)?,
    )
}
