//! Infinite-volume grand-canonical pressure and generalized
//! susceptibilities as fugacity series over the exact kernel diagonal,
//! with certified truncation bounds.
//!
//! Series convention: expanding `(ε/β)·ln(1 + εz W)` term-wise gives
//! `P_∞ = (1/β) Σ_{k≥1} (−ε)^{k+1} z^k / k · G_∞(0,0;kβ,ω)`, positive for
//! both statistics at z ∈ (0,1). Susceptibilities differentiate the series
//! term-wise in ω via jets; no finite differences are involved.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;
use std::sync::OnceLock;

use crate::jet::{u_over_sinh_u, Taylor};
use crate::mehler::{diag_jet, mehler_diag, KernelParams, JET_ORDER_CAP};
use crate::{validation, Result};

/// Hard cap on the number of series terms; with |z| < 1 the adaptive loop
/// terminates far earlier at any practical fugacity.
const MAX_TERMS: usize = 20_000;

/// Absolute truncation target for the adaptive summation.
const TAIL_TARGET: f64 = 1e-12;

/// Parameters of the quantum gas: inverse temperature, field strength,
/// fugacity, statistics (+1 Fermi, −1 Bose).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    beta: f64,
    omega: f64,
    z: f64,
    eps: i8,
}

impl GasParams {
    pub fn new(beta: f64, omega: f64, z: f64, eps: i8) -> Result<GasParams> {
        KernelParams::new(beta, omega)?;
        if !(z.is_finite() && z.abs() < 1.0) {
            return Err(validation(format!("fugacity must satisfy |z| < 1, got {z}")));
        }
        if eps != 1 && eps != -1 {
            return Err(validation(format!("eps must be +1 (Fermi) or -1 (Bose), got {eps}")));
        }
        Ok(GasParams { beta, omega, z, eps })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn eps(&self) -> i8 {
        self.eps
    }

    pub fn kernel_params(&self) -> KernelParams {
        KernelParams::new(self.beta, self.omega).expect("validated at construction")
    }
}

/// Sign of the k-th series term, (−ε)^{k+1}.
fn sign(eps: i8, k: usize) -> f64 {
    let base = -(eps as f64);
    if (k + 1) % 2 == 0 {
        1.0
    } else {
        base
    }
}

/// A truncated series value with a certified remainder bound.
#[derive(Debug, Clone, Copy)]
pub struct SeriesResult {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

/// Grand-canonical pressure
/// `P_∞(β,ω,z,ε) = (1/β) Σ_{k≥1} (−ε)^{k+1} z^k/k · G_∞(0,0;kβ,ω)`.
pub fn pressure_infty(g: &GasParams) -> Result<SeriesResult> {
    series_sum(0, g)
}

/// Generalized susceptibility `χ⁽ⁿ⁾_∞ = ∂ⁿ_ω P_∞`, summed term-wise with
/// exact jet derivatives of the diagonal at inverse temperature kβ.
pub fn chi_infty(n: usize, g: &GasParams) -> Result<SeriesResult> {
    if n == 0 {
        return pressure_infty(g);
    }
    if n > JET_ORDER_CAP {
        return Err(validation(format!("susceptibility order {n} exceeds jet cap {JET_ORDER_CAP}")));
    }
    series_sum(n, g)
}

fn series_sum(n: usize, g: &GasParams) -> Result<SeriesResult> {
    if g.z == 0.0 {
        return Ok(SeriesResult { value: 0.0, tail_bound: 0.0, terms: 1 });
    }
    let mut value = 0.0;
    let mut k = 0usize;
    loop {
        k += 1;
        let kp = KernelParams::new(k as f64 * g.beta, g.omega)?;
        let deriv = if n == 0 {
            mehler_diag(kp)
        } else {
            diag_jet(n, kp)?.derivative(n)
        };
        value += sign(g.eps, k) * g.z.powi(k as i32) / (k as f64) * deriv / g.beta;
        let bound = tail_bound(n, g, k);
        if bound <= TAIL_TARGET || k >= MAX_TERMS {
            if !value.is_finite() {
                return Err(crate::numerical("non-finite series sum"));
            }
            return Ok(SeriesResult { value, tail_bound: bound, terms: k });
        }
    }
}

/// Global envelope constant `C_n = sup_u |g⁽ⁿ⁾(u)|` for `g(u) = u/sinh u`,
/// certified numerically on a dense pilot grid with a safety factor.
fn envelope_constant(n: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&c) = cache.lock().unwrap().get(&n) {
        return c;
    }
    // g and all derivatives decay like e^{-u}; scanning u ∈ [0, 60] at a
    // fine step captures the supremum comfortably.
    let mut sup: f64 = 0.0;
    let steps = 6000;
    for i in 0..=steps {
        let u0 = 60.0 * i as f64 / steps as f64;
        let jet = u_over_sinh_u(&Taylor::variable(u0, n));
        sup = sup.max(jet.derivative(n).abs());
    }
    let c = 2.0 * sup; // safety factor for grid resolution
    cache.lock().unwrap().insert(n, c);
    c
}

/// Certified upper bound on the absolute error of truncating the n-th
/// derivative series after K terms; monotone nonincreasing in K. Returns
/// +∞ if the geometric envelope cannot be certified (never happens for
/// |z| < 1 once K is moderately large).
pub fn tail_bound(n: usize, g: &GasParams, big_k: usize) -> f64 {
    assert!(big_k >= 1);
    if g.z == 0.0 {
        return 0.0;
    }
    // |term_k| ≤ (1/β)·|z|^k/k·(2πkβ)^{-3/2}·(kβ/2)^n·C_n = A · a_k,
    // a_k = |z|^k k^{n-5/2}, A = C_n (2πβ)^{-3/2} (β/2)^n / β.
    let c_n = envelope_constant(n);
    let a = c_n * (2.0 * PI * g.beta).powf(-1.5) * (g.beta / 2.0).powf(n as f64) / g.beta;
    let p = n as f64 - 2.5;
    let k1 = (big_k + 1) as f64;
    let a_next = g.z.abs().powi(big_k as i32 + 1) * k1.powf(p);
    // ratio a_{k+1}/a_k = |z|((k+1)/k)^p, maximized at k = K+1 when p > 0,
    // and below |z| when p ≤ 0
    let q = if p > 0.0 {
        g.z.abs() * ((k1 + 1.0) / k1).powf(p)
    } else {
        g.z.abs()
    };
    if q >= 1.0 {
        return f64::INFINITY;
    }
    a * a_next / (1.0 - q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn gp(beta: f64, omega: f64, z: f64, eps: i8) -> GasParams {
        GasParams::new(beta, omega, z, eps).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(GasParams::new(1.0, 0.0, 1.0, 1).is_err());
        assert!(GasParams::new(1.0, 0.0, -1.2, 1).is_err());
        assert!(GasParams::new(1.0, 0.0, 0.5, 0).is_err());
        assert!(GasParams::new(0.0, 0.0, 0.5, 1).is_err());
        assert!(GasParams::new(1.0, 2.0, 0.5, -1).is_ok());
    }

    #[test]
    fn empty_gas() {
        let r = pressure_infty(&gp(1.0, 1.0, 0.0, 1)).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn fermi_free_pressure_reference() {
        // β=1, ω=0, z=0.5, Fermi: P = (2π)^{-3/2} Σ (−1)^{k+1} 0.5^k k^{-5/2}
        let r = pressure_infty(&gp(1.0, 0.0, 0.5, 1)).unwrap();
        let mut reference = 0.0;
        for k in 1..200 {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            reference += s * 0.5f64.powi(k) * (k as f64).powf(-2.5);
        }
        reference *= (2.0 * PI).powf(-1.5);
        // the adaptive loop stops once its certified tail is ≤ 1e-12, so
        // agreement with the brute sum is absolute at that scale
        assert!((r.value - reference).abs() <= 2e-12, "{} vs {reference}", r.value);
        assert_relative_eq!(r.value, 0.02936, max_relative = 1e-3);
        assert!(r.tail_bound <= 1e-12);
    }

    #[test]
    fn bose_exceeds_fermi() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let beta = rng.gen_range(0.3..3.0);
            let omega = rng.gen_range(0.0..2.0);
            let z = rng.gen_range(0.05..0.9);
            let pf = pressure_infty(&gp(beta, omega, z, 1)).unwrap().value;
            let pb = pressure_infty(&gp(beta, omega, z, -1)).unwrap().value;
            assert!(pb >= pf, "Bose {pb} < Fermi {pf}");
            assert!(pf > 0.0);
        }
    }

    #[test]
    fn bose_fermi_difference_is_second_order() {
        // P_B − P_F = 2·(z²/2)·G(2β)/β + O(z³)
        let beta = 1.0;
        let omega = 0.7;
        let z = 1e-3;
        let pf = pressure_infty(&gp(beta, omega, z, 1)).unwrap().value;
        let pb = pressure_infty(&gp(beta, omega, z, -1)).unwrap().value;
        let lead = z * z * mehler_diag(KernelParams::new(2.0 * beta, omega).unwrap()) / beta;
        assert_relative_eq!(pb - pf, lead, max_relative = 1e-3);
    }

    #[test]
    fn pressure_monotone_in_fugacity() {
        for eps in [1i8, -1] {
            let mut prev = 0.0;
            for i in 1..=9 {
                let z = i as f64 * 0.1;
                let v = pressure_infty(&gp(1.0, 1.0, z, eps)).unwrap().value;
                assert!(v > prev, "pressure not increasing at z={z}, eps={eps}");
                prev = v;
            }
        }
    }

    #[test]
    fn odd_chi_vanishes_at_zero_field() {
        for n in [1usize, 3, 5] {
            let r = chi_infty(n, &gp(1.0, 0.0, 0.5, 1)).unwrap();
            assert_eq!(r.value, 0.0, "order {n}");
        }
    }

    #[test]
    fn chi2_reference_value() {
        // −(2π)^{-3/2}/12 · Σ (−1)^{k+1} 0.5^k k^{-1/2}
        let r = chi_infty(2, &gp(1.0, 0.0, 0.5, 1)).unwrap();
        let mut inner = 0.0;
        for k in 1..400 {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            inner += s * 0.5f64.powi(k) * (k as f64).powf(-0.5);
        }
        let reference = -(2.0 * PI).powf(-1.5) / 12.0 * inner;
        assert_relative_eq!(r.value, reference, max_relative = 1e-10);
        assert_relative_eq!(r.value, -0.0019775740, max_relative = 1e-6);
    }

    #[test]
    fn chi1_matches_pressure_fd() {
        let h = 1e-3;
        let g = gp(1.0, 1.0, 0.5, 1);
        let chi = chi_infty(1, &g).unwrap().value;
        let pp = pressure_infty(&gp(1.0, 1.0 + h, 0.5, 1)).unwrap().value;
        let pm = pressure_infty(&gp(1.0, 1.0 - h, 0.5, 1)).unwrap().value;
        assert_relative_eq!(chi, (pp - pm) / (2.0 * h), max_relative = 1e-5);
    }

    #[test]
    fn chi3_matches_richardson_fd() {
        let g = gp(1.0, 1.0, 0.4, -1);
        let chi = chi_infty(3, &g).unwrap().value;
        let d3 = |h: f64| {
            let p = |w: f64| pressure_infty(&gp(1.0, w, 0.4, -1)).unwrap().value;
            (p(1.0 + 2.0 * h) - 2.0 * p(1.0 + h) + 2.0 * p(1.0 - h) - p(1.0 - 2.0 * h))
                / (2.0 * h.powi(3))
        };
        let coarse = d3(2e-2);
        let fine = d3(1e-2);
        let rich = (4.0 * fine - coarse) / 3.0;
        assert_relative_eq!(chi, rich, max_relative = 1e-4);
    }

    #[test]
    fn tail_bound_monotone_and_valid() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..30 {
            let g = gp(
                rng.gen_range(0.3..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.1..0.8),
                if rng.gen_bool(0.5) { 1 } else { -1 },
            );
            let n = rng.gen_range(0..4usize);
            let mut prev = f64::INFINITY;
            for big_k in (5..60).step_by(5) {
                let b = tail_bound(n, &g, big_k);
                assert!(b <= prev * (1.0 + 1e-12), "not monotone at K={big_k}");
                prev = b;
            }
            // oversummation check: |sum(2K) − sum(K)| ≤ bound(K)
            let big_k = 12;
            let term = |k: usize| {
                let kp = KernelParams::new(k as f64 * g.beta(), g.omega()).unwrap();
                let d = if n == 0 { mehler_diag(kp) } else { diag_jet(n, kp).unwrap().derivative(n) };
                sign(g.eps(), k) * g.z().powi(k as i32) / (k as f64) * d / g.beta()
            };
            let partial: f64 = (1..=big_k).map(term).sum();
            let full: f64 = (1..=2 * big_k).map(term).sum();
            assert!(
                (full - partial).abs() <= tail_bound(n, &g, big_k) * (1.0 + 1e-9),
                "tail bound violated"
            );
        }
    }

    #[test]
    fn chi_respects_jet_cap() {
        assert!(chi_infty(JET_ORDER_CAP + 1, &gp(1.0, 1.0, 0.5, 1)).is_err());
    }

    #[test]
    fn bound_low_z_reference() {
        // spec-style sanity point: K=40 terms at z=0.5 leave < 1e-13
        let b = tail_bound(0, &gp(1.0, 0.0, 0.5, 1), 40);
        assert!(b <= 1e-13, "bound {b}");
    }
}
