//! Points in the linearization chart, on the cross-sections and on Σ.
//!
//! The local flow near each equilibrium is the linear bifocus
//! `ṙ_s = -α r_s, φ̇_s = ω, ṙ_u = α r_u, φ̇_u = -ω` in bipolar coordinates
//! `x = (r_s cos φ_s, r_s sin φ_s, r_u cos φ_u, r_u sin φ_u)`.
//! The reversing involution swaps the stable and unstable planes.

use serde::{Deserialize, Serialize};

use crate::real::Real;

/// Tolerance under which a radius counts as zero and its angle is undefined.
pub const DEGENERATE_RADIUS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point4<T = f64> {
    pub x1: T,
    pub x2: T,
    pub x3: T,
    pub x4: T,
}

impl<T: Real> Point4<T> {
    pub fn new(x1: T, x2: T, x3: T, x4: T) -> Self {
        Point4 { x1, x2, x3, x4 }
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn distance(&self, o: &Self) -> T {
        let d = [self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3, self.x4 - o.x4];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt()
    }

    pub fn norm(&self) -> T {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3 + self.x4 * self.x4).sqrt()
    }
}

/// `R(x1, x2, x3, x4) = (x3, x4, x1, x2)`.
pub fn involution<T: Real>(p: &Point4<T>) -> Point4<T> {
    Point4::new(p.x3, p.x4, p.x1, p.x2)
}

pub fn is_symmetric<T: Real>(p: &Point4<T>, tol: f64) -> bool {
    p.distance(&involution(p)).to_f64() <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BipolarPoint<T = f64> {
    pub r_s: T,
    pub phi_s: T,
    pub r_u: T,
    pub phi_u: T,
    /// `false` when `r_s` vanishes and `phi_s` was set to 0 by convention.
    pub phi_s_defined: bool,
    pub phi_u_defined: bool,
}

/// Angles are reported in `[0, 2π)`; an angle at zero radius is 0 and flagged.
pub fn bipolar<T: Real>(p: &Point4<T>) -> BipolarPoint<T> {
    let r_s = p.x1.hypot(p.x2);
    let r_u = p.x3.hypot(p.x4);
    let s_ok = r_s.to_f64() > DEGENERATE_RADIUS;
    let u_ok = r_u.to_f64() > DEGENERATE_RADIUS;
    BipolarPoint {
        r_s,
        phi_s: if s_ok { p.x2.atan2(p.x1).wrap_tau() } else { T::zero() },
        r_u,
        phi_u: if u_ok { p.x4.atan2(p.x3).wrap_tau() } else { T::zero() },
        phi_s_defined: s_ok,
        phi_u_defined: u_ok,
    }
}

pub fn cartesian<T: Real>(b: &BipolarPoint<T>) -> Point4<T> {
    let (ss, cs) = b.phi_s.sin_cos();
    let (su, cu) = b.phi_u.sin_cos();
    Point4::new(b.r_s * cs, b.r_s * ss, b.r_u * cu, b.r_u * su)
}

/// Point of the entrance section `{r_s = r}`; `(u3, u4)` are the unstable-plane
/// coordinates, so `u3 + i u4 = r_u e^{i φ_u}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InPoint<T = f64> {
    pub phi_s: T,
    pub u3: T,
    pub u4: T,
}

impl<T: Real> InPoint<T> {
    pub fn new(phi_s: T, u3: T, u4: T) -> Self {
        InPoint { phi_s, u3, u4 }
    }

    pub fn r_u(&self) -> T {
        self.u3.hypot(self.u4)
    }

    pub fn phi_u(&self) -> T {
        self.u4.atan2(self.u3).wrap_tau()
    }

    pub fn to_point4(&self, r: T) -> Point4<T> {
        let (s, c) = self.phi_s.sin_cos();
        Point4::new(r * c, r * s, self.u3, self.u4)
    }

    /// Projects onto the section; `r_s` is ignored.
    pub fn from_point4(p: &Point4<T>) -> Self {
        InPoint::new(p.x2.atan2(p.x1).wrap_tau(), p.x3, p.x4)
    }

    /// Image under the involution, which lands on the exit section.
    pub fn reflect(&self) -> OutPoint<T> {
        OutPoint::new(self.u3, self.u4, self.phi_s)
    }
}

/// Point of the exit section `{r_u = r}`; `u1 + i u2 = r_s e^{i φ_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutPoint<T = f64> {
    pub u1: T,
    pub u2: T,
    pub phi_u: T,
}

impl<T: Real> OutPoint<T> {
    pub fn new(u1: T, u2: T, phi_u: T) -> Self {
        OutPoint { u1, u2, phi_u }
    }

    pub fn r_s(&self) -> T {
        self.u1.hypot(self.u2)
    }

    pub fn phi_s(&self) -> T {
        self.u2.atan2(self.u1).wrap_tau()
    }

    pub fn to_point4(&self, r: T) -> Point4<T> {
        let (s, c) = self.phi_u.sin_cos();
        Point4::new(self.u1, self.u2, r * c, r * s)
    }

    /// Projects onto the section; `r_u` is ignored.
    pub fn from_point4(p: &Point4<T>) -> Self {
        OutPoint::new(p.x1, p.x2, p.x4.atan2(p.x3).wrap_tau())
    }

    pub fn reflect(&self) -> InPoint<T> {
        InPoint::new(self.phi_u, self.u1, self.u2)
    }
}

/// Point of the global cross-section Σ in its chart `(a, b, c)`.
///
/// The involution acts on Σ as `(a, b, c) ↦ (a, b, -c)`, so `c = 0` is `Fix(R) ∩ Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    /// Branch the point is known to lie near (1-based), if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_hint: Option<usize>,
}

impl<T: Real> SigmaPoint<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        SigmaPoint { a, b, c, branch_hint: None }
    }

    pub fn on_fix(a: T, b: T) -> Self {
        SigmaPoint::new(a, b, T::zero())
    }

    pub fn with_hint(mut self, branch: usize) -> Self {
        self.branch_hint = Some(branch);
        self
    }

    pub fn coords(&self) -> [T; 3] {
        [self.a, self.b, self.c]
    }

    pub fn from_coords(v: [T; 3]) -> Self {
        SigmaPoint::new(v[0], v[1], v[2])
    }

    pub fn reflect(&self) -> Self {
        SigmaPoint { a: self.a, b: self.b, c: -self.c, branch_hint: self.branch_hint }
    }

    pub fn distance(&self, o: &Self) -> T {
        let d = [self.a - o.a, self.b - o.b, self.c - o.c];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn to_f64(&self) -> SigmaPoint<f64> {
        SigmaPoint { a: self.a.to_f64(), b: self.b.to_f64(), c: self.c.to_f64(), branch_hint: self.branch_hint }
    }

    pub fn lift<U: Real>(&self) -> SigmaPoint<U> {
        SigmaPoint {
            a: U::from_f64(self.a.to_f64()),
            b: U::from_f64(self.b.to_f64()),
            c: U::from_f64(self.c.to_f64()),
            branch_hint: self.branch_hint,
        }
    }
}

/// Angle reduced into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    x.wrap_tau()
}

/// Unsigned distance between two angles on the circle.
pub fn circular_distance<T: Real>(a: T, b: T) -> T {
    (a - b).wrap_pi().abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipolar_roundtrip() {
        let p = Point4::new(0.3, -0.4, -1.0, 0.25);
        let q = cartesian(&bipolar(&p));
        assert!(p.distance(&q) < 1e-15);
    }

    #[test]
    fn degenerate_angle_is_flagged() {
        let b = bipolar(&Point4::new(0.0, 0.0, 1.0, 0.0));
        assert!(!b.phi_s_defined);
        assert_eq!(b.phi_s, 0.0);
        assert!(b.phi_u_defined);
    }

    #[test]
    fn involution_swaps_sections() {
        let r = 1.0;
        let p = InPoint::new(0.7, 0.01, -0.02);
        let lhs = involution(&p.to_point4(r));
        let rhs = p.reflect().to_point4(r);
        assert!(lhs.distance(&rhs) < 1e-15);
        assert_eq!(p.reflect().reflect(), p);
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((circular_distance(0.1, std::f64::consts::TAU - 0.1) - 0.2).abs() < 1e-15);
    }
}
