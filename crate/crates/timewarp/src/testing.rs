//! Numerical checking helpers shared by unit tests, integration tests and
//! examples: finite differences and simple regression.

/// Central finite-difference gradient of a scalar function.
pub fn finite_difference_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    g
}

/// Central finite-difference Jacobian of a map `R^d -> R^d`.
pub fn finite_difference_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64]) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut jac = vec![vec![0.0; d]; d];
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..d {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..d {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    jac
}

/// Slope and intercept of the least-squares line through `(x_i, y_i)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Mean and (unbiased) variance of a sample.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Median of a sample (averaging the middle pair for even lengths).
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (slope, icept) = linear_fit(&xs, &ys);
        assert_relative_eq!(slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(icept, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
