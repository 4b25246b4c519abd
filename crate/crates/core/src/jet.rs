//! Truncated univariate Taylor arithmetic.
//!
//! A `Taylor` value of order `n` holds the coefficients `c_0..c_n` of a
//! polynomial truncation around some expansion point; coefficient `k`
//! equals `(1/k!) f^{(k)}` of the represented scalar. All operations
//! propagate coefficients exactly (up to rounding), so arbitrary-order
//! derivatives come out at machine precision.

/// Truncated Taylor polynomial with `order + 1` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Taylor {
    pub coeffs: Vec<f64>,
}

impl Taylor {
    /// The constant `c` as a jet of the given order.
    pub fn constant(c: f64, order: usize) -> Taylor {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = c;
        Taylor { coeffs }
    }

    /// The identity jet `x ↦ x` expanded around `x0`.
    pub fn variable(x0: f64, order: usize) -> Taylor {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = x0;
        if order >= 1 {
            coeffs[1] = 1.0;
        }
        Taylor { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `k`-th derivative of the represented scalar: `k! * c_k`.
    pub fn derivative(&self, k: usize) -> f64 {
        assert!(k <= self.order());
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        fact * self.coeffs[k]
    }

    pub fn scale(&self, s: f64) -> Taylor {
        Taylor { coeffs: self.coeffs.iter().map(|c| s * c).collect() }
    }

    pub fn add(&self, o: &Taylor) -> Taylor {
        assert_eq!(self.order(), o.order());
        Taylor {
            coeffs: self
                .coeffs
                .iter()
                .zip(&o.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn mul(&self, o: &Taylor) -> Taylor {
        assert_eq!(self.order(), o.order());
        let n = self.order();
        let mut coeffs = vec![0.0; n + 1];
        for k in 0..=n {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.coeffs[j] * o.coeffs[k - j];
            }
            coeffs[k] = acc;
        }
        Taylor { coeffs }
    }

    /// Reciprocal; requires a nonzero constant term.
    pub fn recip(&self) -> Taylor {
        let n = self.order();
        let b0 = self.coeffs[0];
        assert!(b0 != 0.0, "reciprocal of a jet with zero constant term");
        let mut coeffs = vec![0.0; n + 1];
        coeffs[0] = 1.0 / b0;
        for k in 1..=n {
            let mut acc = 0.0;
            for j in 0..k {
                acc += coeffs[j] * self.coeffs[k - j];
            }
            coeffs[k] = -acc / b0;
        }
        Taylor { coeffs }
    }

    /// Simultaneous sinh/cosh through the jet, by the standard ODE
    /// recurrence `s' = c u'`, `c' = s u'`.
    pub fn sinh_cosh(&self) -> (Taylor, Taylor) {
        let n = self.order();
        let mut s = vec![0.0; n + 1];
        let mut c = vec![0.0; n + 1];
        s[0] = self.coeffs[0].sinh();
        c[0] = self.coeffs[0].cosh();
        for k in 1..=n {
            let mut sa = 0.0;
            let mut ca = 0.0;
            for j in 1..=k {
                let ju = j as f64 * self.coeffs[j];
                sa += ju * c[k - j];
                ca += ju * s[k - j];
            }
            s[k] = sa / k as f64;
            c[k] = ca / k as f64;
        }
        (Taylor { coeffs: s }, Taylor { coeffs: c })
    }

    /// `exp` through the jet.
    pub fn exp(&self) -> Taylor {
        let n = self.order();
        let mut e = vec![0.0; n + 1];
        e[0] = self.coeffs[0].exp();
        for k in 1..=n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.coeffs[j] * e[k - j];
            }
            e[k] = acc / k as f64;
        }
        Taylor { coeffs: e }
    }
}

/// `u / sinh(u)` through the jet, with the removable singularity at
/// `u = 0` handled on a whole neighbourhood of zero.
///
/// * `|u0| < 1/2`: reciprocal of the even Maclaurin series of
///   `sinh(u)/u = Σ_m u^{2m}/(2m+1)!`, truncated far below machine
///   precision. Dividing `sinh` by `u` directly is catastrophically
///   ill-conditioned for small expansion points, so the series branch
///   must cover a full interval, not just the singular point.
/// * `|u0| ≥ 1/2`: the overflow-safe form `2u e^{-u} / (1 - e^{-2u})`,
///   reflected through the evenness of the function when `u0 < 0`.
///
/// Both branches agree to better than 1e-14 across the tie.
pub fn u_over_sinh_u(u: &Taylor) -> Taylor {
    let n = u.order();
    let u0 = u.coeffs[0];
    if u0.abs() < 0.5 {
        let u2 = u.mul(u);
        let m_max = n / 2 + 14;
        let mut acc = Taylor::constant(inv_odd_factorial(2 * m_max + 1), n);
        for m in (0..m_max).rev() {
            acc = acc.mul(&u2);
            acc.coeffs[0] += inv_odd_factorial(2 * m + 1);
        }
        acc.recip()
    } else if u0 < 0.0 {
        // g is even in u, so the jet of g∘u equals the jet of g∘(-u).
        u_over_sinh_u(&u.scale(-1.0))
    } else {
        let e = u.scale(-1.0).exp(); // e^{-u}, underflows harmlessly for huge u
        let e2 = e.mul(&e); // e^{-2u}
        let mut denom = e2.scale(-1.0);
        denom.coeffs[0] += 1.0; // 1 - e^{-2u}
        u.scale(2.0).mul(&e).mul(&denom.recip())
    }
}

/// 1/(2m+1)! for the sinhc series.
fn inv_odd_factorial(k: usize) -> f64 {
    let mut f = 1.0f64;
    for i in 2..=k {
        f *= i as f64;
    }
    1.0 / f
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_series() {
        let x = Taylor::variable(0.0, 4);
        let e = x.exp();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (a, b) in e.coeffs.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn sinh_cosh_series() {
        let x = Taylor::variable(0.0, 5);
        let (s, c) = x.sinh_cosh();
        assert_relative_eq!(s.coeffs[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.coeffs[3], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(s.coeffs[5], 1.0 / 120.0, epsilon = 1e-15);
        assert_relative_eq!(c.coeffs[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.coeffs[2], 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.coeffs[4], 1.0 / 24.0, epsilon = 1e-15);
    }

    #[test]
    fn recip_times_self_is_one() {
        let mut x = Taylor::variable(0.7, 6);
        x.coeffs[2] = -0.3;
        let p = x.mul(&x.recip());
        assert_relative_eq!(p.coeffs[0], 1.0, epsilon = 1e-14);
        for c in &p.coeffs[1..] {
            assert!(c.abs() < 1e-13);
        }
    }

    #[test]
    fn u_over_sinh_u_series_at_zero() {
        // u/sinh u = 1 - u²/6 + 7u⁴/360 - 31u⁶/15120 + ...
        let u = Taylor::variable(0.0, 6);
        let g = u_over_sinh_u(&u);
        assert_relative_eq!(g.coeffs[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g.coeffs[2], -1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(g.coeffs[4], 7.0 / 360.0, epsilon = 1e-15);
        assert_relative_eq!(g.coeffs[6], -31.0 / 15120.0, epsilon = 1e-15);
        assert_eq!(g.coeffs[1], 0.0);
        assert_eq!(g.coeffs[3], 0.0);
        assert_eq!(g.coeffs[5], 0.0);
    }

    #[test]
    fn u_over_sinh_u_branches_agree_at_tie() {
        for &u0 in &[0.45, 0.499, 0.5, 0.55, 0.7, -0.48, -0.6] {
            let u = Taylor::variable(u0, 8);
            let g = u_over_sinh_u(&u);
            // Value against direct evaluation.
            assert_relative_eq!(g.value(), u0 / u0.sinh(), max_relative = 1e-14);
            // Force the other branch by nudging the expansion point across
            // the tie; values at the same u0 must agree through the jet.
            let other_pt = if u0.abs() < 0.5 { 0.6f64.copysign(u0) } else { 0.3f64.copysign(u0) };
            let h = u0 - other_pt;
            let g_other = u_over_sinh_u(&Taylor::variable(other_pt, 30));
            let mut val = 0.0;
            for k in (0..=30).rev() {
                val = val * h + g_other.coeffs[k];
            }
            assert_relative_eq!(g.value(), val, max_relative = 1e-13);
        }
    }

    #[test]
    fn u_over_sinh_u_huge_argument_is_finite() {
        let u = Taylor::variable(6000.0, 4);
        let g = u_over_sinh_u(&u);
        for c in &g.coeffs {
            assert!(c.is_finite());
        }
        assert_eq!(g.value(), 0.0); // underflow, exactly representable
    }
}
