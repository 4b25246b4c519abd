//! Geometry of the transverse gauge: magnetic vector potential, phase,
//! triangle flux and accumulated path flux, with their exact algebraic
//! identities.
//!
//! Everything here is a pure function of its arguments; the field direction
//! is fixed to `e3` and the gauge is `a(x) = (1/2) e3 ∧ x`.

use crate::{validation, Result};

/// A position in ℝ³ (natural units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x1: 0.0, x2: 0.0, x3: 0.0 };

    pub fn new(x1: f64, x2: f64, x3: f64) -> Point3 {
        let p = Point3 { x1, x2, x3 };
        assert!(p.is_finite(), "non-finite coordinates: {p:?}");
        p
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2 + self.x3 * o.x3
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Squared distance in the plane transverse to the field.
    pub fn norm2_perp(&self) -> f64 {
        self.x1 * self.x1 + self.x2 * self.x2
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3 { x1: self.x1 - o.x1, x2: self.x2 - o.x2, x3: self.x3 - o.x3 }
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3 { x1: self.x1 + o.x1, x2: self.x2 + o.x2, x3: self.x3 + o.x3 }
    }
}

/// A base point together with an ordered chain of nodes; the argument of
/// the accumulated path flux.
#[derive(Debug, Clone)]
pub struct FluxChain {
    pub base: Point3,
    pub nodes: Vec<Point3>,
}

impl FluxChain {
    pub fn new(base: Point3, nodes: Vec<Point3>) -> Result<FluxChain> {
        if nodes.is_empty() {
            return Err(validation("flux chain must contain at least one node"));
        }
        Ok(FluxChain { base, nodes })
    }
}

/// Transverse-gauge vector potential `a(p) = (1/2) e3 ∧ p = (1/2)(-p2, p1, 0)`.
pub fn gauge_vector(p: Point3) -> Point3 {
    assert!(p.is_finite());
    Point3 { x1: -0.5 * p.x2, x2: 0.5 * p.x1, x3: 0.0 }
}

/// Magnetic phase `φ(x, y) = (1/2) e3 · (y ∧ x)`; antisymmetric in its
/// arguments, exactly zero on the diagonal.
pub fn phase(x: Point3, y: Point3) -> f64 {
    assert!(x.is_finite() && y.is_finite());
    0.5 * (y.x1 * x.x2 - y.x2 * x.x1)
}

/// Magnetic flux through the triangle (x, y, z):
/// `fl = φ(x,y) + φ(y,z) + φ(z,x) = (1/2) e3 · {(x-y) ∧ (z-y)}`.
///
/// The cross-product form is used; agreement with the sum of phases is a
/// test, not an assumption.
pub fn tri_flux(x: Point3, y: Point3, z: Point3) -> f64 {
    let u = x - y;
    let v = z - y;
    0.5 * (u.x1 * v.x2 - u.x2 * v.x1)
}

/// Sum-of-phases form of the triangle flux; kept as an independent route
/// for property tests.
pub fn tri_flux_phase_sum(x: Point3, y: Point3, z: Point3) -> f64 {
    phase(x, y) + phase(y, z) + phase(z, x)
}

/// Accumulated flux `Fl_n` along the closed polygonal chain
/// `x → y₁ → … → y_n → x`:
/// `Fl_n = φ(y_n, x) + Σ_{k=0}^{n-1} φ(y_k, y_{k+1})`, with `y₀ = x`.
///
/// For a single node this is exactly zero; for `n ≥ 2` it equals
/// `Σ_{k=1}^{n-1} fl(x, y_k, y_{k+1})`.
pub fn path_flux(c: &FluxChain) -> f64 {
    let n = c.nodes.len();
    if n == 1 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 1..n {
        acc += tri_flux(c.base, c.nodes[k - 1], c.nodes[k]);
    }
    acc
}

/// Upper bound on |Fl_n| in terms of consecutive differences:
/// `Σ_{k=1}^{n-1} Σ_{l=1}^{k} |y_{l-1} - y_l| |y_k - y_{k+1}|` with `y₀ = x`.
pub fn path_flux_bound(c: &FluxChain) -> f64 {
    let n = c.nodes.len();
    if n == 1 {
        return 0.0;
    }
    let mut gaps = Vec::with_capacity(n);
    gaps.push((c.nodes[0] - c.base).norm());
    for l in 1..n {
        gaps.push((c.nodes[l] - c.nodes[l - 1]).norm());
    }
    let mut bound = 0.0;
    let mut prefix = 0.0;
    for k in 1..n {
        prefix += gaps[k - 1];
        bound += prefix * gaps[k];
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pt(a: f64, b: f64, c: f64) -> Point3 {
        Point3::new(a, b, c)
    }

    #[test]
    fn gauge_vector_examples() {
        assert_eq!(gauge_vector(Point3::ORIGIN), Point3::ORIGIN);
        assert_eq!(gauge_vector(pt(1.0, 0.0, 0.0)), pt(0.0, 0.5, 0.0));
        assert_eq!(gauge_vector(pt(2.0, -4.0, 7.0)), pt(2.0, 1.0, 0.0));
    }

    #[test]
    fn phase_examples() {
        assert_relative_eq!(phase(pt(1.0, 0.0, 0.0), pt(0.0, 1.0, 0.0)), -0.5);
        assert_eq!(phase(pt(3.0, -1.0, 2.0), pt(3.0, -1.0, 2.0)), 0.0);
        // both on the field axis
        assert_eq!(phase(pt(0.0, 0.0, 5.0), pt(0.0, 0.0, -3.0)), 0.0);
    }

    #[test]
    fn tri_flux_examples() {
        assert_relative_eq!(
            tri_flux(pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(1.0, 1.0, 0.0)),
            -0.5
        );
        let y = pt(0.3, -0.7, 1.1);
        assert_eq!(tri_flux(pt(2.0, 1.0, 0.0), y, y), 0.0);
    }

    #[test]
    fn path_flux_examples() {
        let single = FluxChain::new(pt(4.0, 5.0, -6.0), vec![pt(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(path_flux(&single), 0.0);

        let c = FluxChain::new(
            Point3::ORIGIN,
            vec![pt(1.0, 0.0, 0.0), pt(1.0, 1.0, 0.0)],
        )
        .unwrap();
        assert_relative_eq!(path_flux(&c), -0.5);
        assert_relative_eq!(
            path_flux(&c),
            tri_flux(Point3::ORIGIN, pt(1.0, 0.0, 0.0), pt(1.0, 1.0, 0.0))
        );
    }

    #[test]
    fn empty_chain_rejected() {
        assert!(FluxChain::new(Point3::ORIGIN, vec![]).is_err());
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b, c)| pt(a, b, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn phase_antisymmetric(x in arb_point(), y in arb_point()) {
            prop_assert_eq!(phase(x, y), -phase(y, x));
        }

        #[test]
        fn tri_flux_cyclic_and_bounded(x in arb_point(), y in arb_point(), z in arb_point()) {
            let f = tri_flux(x, y, z);
            prop_assert!((f - tri_flux(y, z, x)).abs() <= 1e-12 * (1.0 + f.abs()));
            prop_assert!((f - tri_flux(z, x, y)).abs() <= 1e-12 * (1.0 + f.abs()));
            prop_assert!(f.abs() <= (x - y).norm() * (y - z).norm() + 1e-12);
        }

        #[test]
        fn tri_flux_two_routes_agree(x in arb_point(), y in arb_point(), z in arb_point()) {
            let a = tri_flux(x, y, z);
            let b = tri_flux_phase_sum(x, y, z);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs())));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn path_flux_bound_and_translation(
            base in arb_point(),
            nodes in proptest::collection::vec(arb_point(), 1..8),
            t in arb_point(),
        ) {
            let c = FluxChain::new(base, nodes.clone()).unwrap();
            let f = path_flux(&c);
            prop_assert!(f.abs() <= path_flux_bound(&c) + 1e-10);

            let shifted = FluxChain::new(
                base + t,
                nodes.iter().map(|&p| p + t).collect(),
            ).unwrap();
            let g = path_flux(&shifted);
            prop_assert!((f - g).abs() <= 1e-9 * (1.0 + f.abs()));
        }
    }
}
