//! Small 1D quadrature toolbox: Gauss–Legendre, Gauss–Hermite and
//! tanh–sinh (double-exponential) rules. The DE rule is what makes the
//! inverse-square-root endpoint singularities of the simplex integrands
//! tractable at deterministic accuracy.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on (-1, 1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
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
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
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

/// Gauss–Legendre rule mapped to (a, b).
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|t| half * t).collect(),
    )
}

/// Gauss–Hermite nodes and weights for the weight `exp(-x²)` on ℝ.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut x = 0.0f64;
    for i in 0..m {
        // Initial guesses from Stroud & Secrest.
        x = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => x - 1.14 * (n as f64).powf(0.426) / x,
            2 => 1.86 * x - 0.86 * nodes[n - 1],
            3 => 1.91 * x - 0.91 * nodes[n - 2],
            _ => 2.0 * x - nodes[n - i + 1],
        };
        let mut dh = 0.0;
        for _ in 0..200 {
            let (h, d) = hermite_and_deriv(n, x);
            dh = d;
            let dx = h / d;
            x -= dx;
            if dx.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        // Weight in terms of the orthonormal recurrence value.
        let w = 2.0 / (dh * dh);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Orthonormal Hermite function value and derivative (w.r.t. x) at x.
fn hermite_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut h0 = PI.powf(-0.25);
    let mut h1 = x * std::f64::consts::SQRT_2 * h0;
    if n == 0 {
        return (h0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let h2 = x * (2.0 / kf).sqrt() * h1 - ((kf - 1.0) / kf).sqrt() * h0;
        h0 = h1;
        h1 = h2;
    }
    let d = (2.0 * n as f64).sqrt() * h0;
    (h1, d)
}

/// Tanh–sinh (double exponential) quadrature of `f` on (a, b).
///
/// `level` controls the step: the rule uses step `2^-level` on the
/// transformed axis. Endpoint singularities as strong as an inverse
/// square root are integrated to near machine precision by level 7–8.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, level: u32) -> f64 {
    let mut acc = 0.0;
    for (x, w) in tanh_sinh_nodes(a, b, level) {
        let v = f(x);
        if v.is_finite() {
            acc += w * v;
        }
    }
    acc
}

/// Node/weight list of the tanh–sinh rule on (a, b); all abscissae lie
/// strictly inside the interval. Useful for nested multidimensional
/// integration where a closure-based driver is awkward.
pub fn tanh_sinh_nodes(a: f64, b: f64, level: u32) -> Vec<(f64, f64)> {
    let h = 0.5f64.powi(level as i32);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let t_max = 3.8;
    let n = (t_max / h).ceil() as i64;
    let mut out = Vec::with_capacity((2 * n + 1) as usize);
    for k in -n..=n {
        let t = k as f64 * h;
        let s = (0.5 * PI * t.sinh()).tanh();
        let x = mid + half * s;
        if x <= a || x >= b {
            continue;
        }
        let dx = 0.5 * PI * t.cosh() / (0.5 * PI * t.sinh()).cosh().powi(2);
        out.push((x, half * h * dx));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(6);
        // ∫_{-1}^{1} x^10 dx = 2/11 (degree 10 < 2*6)
        let s: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(10)).sum();
        assert_relative_eq!(s, 2.0 / 11.0, max_relative = 1e-13);
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(12);
        let s0: f64 = w.iter().sum();
        assert_relative_eq!(s0, PI.sqrt(), max_relative = 1e-12);
        let s2: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t * t).sum();
        assert_relative_eq!(s2, 0.5 * PI.sqrt(), max_relative = 1e-12);
        let s8: f64 = x.iter().zip(&w).map(|(t, wi)| wi * t.powi(8)).sum();
        // ∫ x^8 e^{-x²} = 105/16 √π
        assert_relative_eq!(s8, 105.0 / 16.0 * PI.sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn tanh_sinh_handles_sqrt_singularities() {
        // ∫_0^1 1/sqrt(x(1-x)) dx = π
        // accuracy plateaus around 1e-8: abscissae near the endpoints are
        // formed by subtraction from 1, which limits how well an inverse
        // square-root singularity can be resolved in double precision
        let v = tanh_sinh(|x| 1.0 / (x * (1.0 - x)).sqrt(), 0.0, 1.0, 7);
        assert_relative_eq!(v, PI, max_relative = 1e-7);
    }
}
