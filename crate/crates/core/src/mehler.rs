//! Closed-form infinite-volume magnetic heat kernel, its diagonal,
//! arbitrary-order ω-derivatives of the diagonal through jet arithmetic,
//! and the regularized kernels R₁ and R₂.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::jet::{u_over_sinh_u, Taylor};
use crate::magcore::{gauge_vector, phase, Point3};
use crate::{validation, Result};

/// Maximum supported ω-derivative order for [`diag_jet`].
pub const JET_ORDER_CAP: usize = 12;

/// (β, ω) pair parameterizing every kernel: β > 0, ω ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    beta: f64,
    omega: f64,
}

impl KernelParams {
    pub fn new(beta: f64, omega: f64) -> Result<KernelParams> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(validation(format!("beta must be finite and > 0, got {beta}")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(validation(format!("omega must be finite and >= 0, got {omega}")));
        }
        Ok(KernelParams { beta, omega })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn with_beta(&self, beta: f64) -> Result<KernelParams> {
        KernelParams::new(beta, self.omega)
    }
}

/// Taylor coefficients in ω of a diagonal kernel value; coefficient `k`
/// is `(1/k!) ∂ω^k` of the represented scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaJet {
    pub coefficients: Vec<f64>,
}

impl OmegaJet {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `n`-th ω-derivative (not divided by n!).
    pub fn derivative(&self, n: usize) -> f64 {
        let mut fact = 1.0;
        for i in 1..=n {
            fact *= i as f64;
        }
        fact * self.coefficients[n]
    }
}

/// Free heat kernel `(2πβ)^{-3/2} exp(-|x-y|²/(2β))`.
pub fn free_heat_kernel(x: Point3, y: Point3, beta: f64) -> f64 {
    assert!(beta.is_finite() && beta > 0.0, "beta must be > 0");
    let r = x - y;
    (2.0 * PI * beta).powf(-1.5) * (-r.dot(&r) / (2.0 * beta)).exp()
}

/// The transverse stiffness pair (u/sinh u, u/tanh u) at u = ωβ/2, with
/// the removable singularity at u = 0 evaluated by series.
fn stiffness(u: f64) -> (f64, f64) {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        // u/sinh u = 1 - u²/6 + 7u⁴/360; u/tanh u = 1 + u²/3 - u⁴/45
        (
            1.0 - u2 / 6.0 + 7.0 * u2 * u2 / 360.0,
            1.0 + u2 / 3.0 - u2 * u2 / 45.0,
        )
    } else {
        (u / u.sinh(), u / u.tanh())
    }
}

/// Full complex magnetic heat kernel on ℝ³ in the transverse gauge:
/// magnetic phase factor times an anisotropic Gaussian.
pub fn mehler_kernel(x: Point3, y: Point3, p: KernelParams) -> Complex64 {
    let beta = p.beta;
    let u = 0.5 * p.omega * beta;
    let (g_sinh, g_tanh) = stiffness(u);
    let r = x - y;
    let quad = (g_tanh * r.norm2_perp() + r.x3 * r.x3) / (2.0 * beta);
    let amp = (2.0 * PI * beta).powf(-1.5) * g_sinh * (-quad).exp();
    let ph = p.omega * phase(x, y);
    Complex64::from_polar(amp, ph)
}

/// Kernel diagonal `(2πβ)^{-3/2} (ωβ/2)/sinh(ωβ/2)`; independent of the
/// spatial point.
pub fn mehler_diag(p: KernelParams) -> f64 {
    let (g_sinh, _) = stiffness(0.5 * p.omega * p.beta);
    (2.0 * PI * p.beta).powf(-1.5) * g_sinh
}

/// ω-derivative jet of the diagonal around `p.omega`, through order `n`.
///
/// Coefficient `k` equals `(1/k!) ∂ω^k mehler_diag` evaluated at
/// `p.omega`; derivatives are exact to machine precision (no finite
/// differences involved).
pub fn diag_jet(n: usize, p: KernelParams) -> Result<OmegaJet> {
    if n > JET_ORDER_CAP {
        return Err(validation(format!(
            "jet order {n} exceeds cap {JET_ORDER_CAP}"
        )));
    }
    let omega_jet = Taylor::variable(p.omega, n);
    let u = omega_jet.scale(0.5 * p.beta);
    let g = u_over_sinh_u(&u);
    let scaled = g.scale((2.0 * PI * p.beta).powf(-1.5));
    Ok(OmegaJet { coefficients: scaled.coeffs })
}

/// Covariant gradient `(i∇_x + ω a(x)) G_∞(x, y; β, ω)` in closed form.
///
/// Commuting the phase factor through `i∇_x` leaves
/// `[ω a(x-y) - (i/β)(γ r₁, γ r₂, r₃)] G_∞` with `γ = (ωβ/2)/tanh(ωβ/2)`.
pub fn covariant_gradient(x: Point3, y: Point3, p: KernelParams) -> [Complex64; 3] {
    let g = mehler_kernel(x, y, p);
    let r = x - y;
    let (_, g_tanh) = stiffness(0.5 * p.omega * p.beta);
    let a = gauge_vector(r);
    let inv_beta = 1.0 / p.beta;
    [
        Complex64::new(p.omega * a.x1, -inv_beta * g_tanh * r.x1) * g,
        Complex64::new(p.omega * a.x2, -inv_beta * g_tanh * r.x2) * g,
        Complex64::new(p.omega * a.x3, -inv_beta * r.x3) * g,
    ]
}

/// Regularized kernels:
/// `R₁(x,y) = a(x-y) · (i∇_x + ω a(x)) G_∞(x,y)`,
/// `R₂(x,y) = (1/2) a²(x-y) G_∞(x,y)`.
/// Both vanish on the diagonal since `a(0) = 0`.
///
/// For R₁ the contraction simplifies: `a(r)` is orthogonal to the
/// transverse part of `r`, so only `ω|a(r)|² G_∞` survives — in
/// particular R₁ vanishes identically at ω = 0, exactly, not just up to
/// rounding. The unsimplified gradient route is kept in tests as a
/// cross-check.
pub fn r_infty(i: u8, x: Point3, y: Point3, p: KernelParams) -> Result<Complex64> {
    match i {
        1 => {
            let a = gauge_vector(x - y);
            Ok(mehler_kernel(x, y, p) * (p.omega * a.dot(&a)))
        }
        2 => {
            let a = gauge_vector(x - y);
            Ok(mehler_kernel(x, y, p) * (0.5 * a.dot(&a)))
        }
        _ => Err(validation(format!("regularized kernel index must be 1 or 2, got {i}"))),
    }
}
