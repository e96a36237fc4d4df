//! Scalar abstraction so the dynamics can run in `f64` or in double-double.
//!
//! Orbits that shadow several homoclinic excursions pick up an expansion of
//! a few hundred per passage, so deep chains and long periodic orbits are
//! only resolvable with roughly 32 significant digits. Everything in the
//! map layer is generic over [`Real`]; [`Dd`] provides the extended type.

use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigfloat::BigFloat;
use qd::Quad;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub trait Real:
    Copy
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Unit roundoff of the type.
    const EPSILON: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn pi() -> Self;
    fn tau() -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn atan2(self, x: Self) -> Self;
    fn floor(self) -> Self;
    fn is_finite(self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Reduces an angle into `[0, 2π)`.
    fn wrap_tau(self) -> Self {
        let tau = Self::tau();
        let mut r = self - tau * (self / tau).floor();
        if r >= tau {
            r -= tau;
        }
        if r < Self::zero() {
            r += tau;
        }
        r
    }

    /// Reduces an angle into `(-π, π]`.
    fn wrap_pi(self) -> Self {
        let r = self.wrap_tau();
        if r > Self::pi() {
            r - Self::tau()
        } else {
            r
        }
    }
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
    fn tau() -> Self {
        std::f64::consts::TAU
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn floor(self) -> Self {
        f64::floor(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn hypot(self, other: Self) -> Self {
        f64::hypot(self, other)
    }
}

/// Double-double number: an unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
///
/// Arithmetic and `exp`/`ln`/`sqrt` come from `qd`; trigonometry is done
/// here since `qd` does not provide it.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd(Quad);

const DD_TAU: Quad = Quad(std::f64::consts::TAU, 2.4492935982947064e-16);
const DD_PI: Quad = Quad(std::f64::consts::PI, 1.2246467991473532e-16);
const DD_FRAC_PI_2: Quad = Quad(std::f64::consts::FRAC_PI_2, 6.123233995736766e-17);

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Dd(Quad(hi, lo))
    }

    pub fn hi(self) -> f64 {
        self.0 .0
    }

    pub fn lo(self) -> f64 {
        self.0 .1
    }

    pub fn parts(self) -> [f64; 2] {
        [self.0 .0, self.0 .1]
    }

    /// Builds a value from `[hi, lo]`, renormalizing in case the pair is not canonical.
    pub fn from_parts(p: [f64; 2]) -> Self {
        Dd(Quad::from_f64(p[0]).add_accurate(Quad::from_f64(p[1])))
    }

    fn round(self) -> Self {
        (self + Dd::from_f64(0.5)).floor()
    }
}

impl Default for Dd {
    fn default() -> Self {
        Dd(Quad(0.0, 0.0))
    }
}

impl fmt::Debug for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dd({:e}, {:e})", self.hi(), self.lo())
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo() == 0.0 {
            write!(f, "{}", self.hi())
        } else {
            write!(f, "{}{:+e}", self.hi(), self.lo())
        }
    }
}

impl Serialize for Dd {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.parts().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dd {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        <[f64; 2]>::deserialize(d).map(Dd::from_parts)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, rhs: Dd) -> Dd {
        Dd(self.0.add_accurate(rhs.0))
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, rhs: Dd) -> Dd {
        Dd(self.0.sub_accurate(rhs.0))
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, rhs: Dd) -> Dd {
        Dd(self.0 * rhs.0)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, rhs: Dd) -> Dd {
        Dd(self.0 / rhs.0)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, rhs: Dd) {
        *self = *self + rhs;
    }
}

impl SubAssign for Dd {
    fn sub_assign(&mut self, rhs: Dd) {
        *self = *self - rhs;
    }
}

impl MulAssign for Dd {
    fn mul_assign(&mut self, rhs: Dd) {
        *self = *self * rhs;
    }
}

impl DivAssign for Dd {
    fn div_assign(&mut self, rhs: Dd) {
        *self = *self / rhs;
    }
}

impl Real for Dd {
    const EPSILON: f64 = 4.93038065763132e-32;

    fn from_f64(x: f64) -> Self {
        Dd(Quad::from_f64(x))
    }
    fn to_f64(self) -> f64 {
        self.hi() + self.lo()
    }
    fn pi() -> Self {
        Dd(DD_PI)
    }
    fn tau() -> Self {
        Dd(DD_TAU)
    }
    fn abs(self) -> Self {
        Dd(self.0.abs())
    }
    fn sqrt(self) -> Self {
        if self.hi() <= 0.0 {
            return Dd::from_f64(self.hi().sqrt());
        }
        Dd(self.0.sqrt())
    }
    fn exp(self) -> Self {
        Dd(self.0.exp())
    }
    fn ln(self) -> Self {
        Dd(self.0.ln())
    }

    fn sin_cos(self) -> (Self, Self) {
        if !self.is_finite() {
            return (Dd::from_f64(f64::NAN), Dd::from_f64(f64::NAN));
        }
        let tau = Dd(DD_TAU);
        let half_pi = Dd(DD_FRAC_PI_2);
        let mut r = self - tau * (self / tau).round();
        let q = (r / half_pi).round();
        r -= half_pi * q;
        let (s, c) = taylor_sin_cos(r);
        match (q.hi() as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    fn atan2(self, x: Self) -> Self {
        let y = self;
        if y.hi() == 0.0 && x.hi() == 0.0 {
            return Dd::zero();
        }
        let mut t = Dd::from_f64(y.hi().atan2(x.hi()));
        for _ in 0..2 {
            let (s, c) = t.sin_cos();
            t += (y * c - x * s) / (x * c + y * s);
        }
        t
    }

    fn floor(self) -> Self {
        let f = self.hi().floor();
        if f == self.hi() {
            Dd(Quad::from_f64(f).add_accurate(Quad::from_f64(self.lo().floor())))
        } else {
            Dd::from_f64(f)
        }
    }

    fn is_finite(self) -> bool {
        self.hi().is_finite() && self.lo().is_finite()
    }
}

/// Taylor series for `|r| <= π/4`.
/// Decimal float with 40 significant digits.
///
/// Much slower than [`Dd`]; used to re-solve the few orbits whose expansion
/// swamps double-double rounding.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct Wide(BigFloat);

/// `2^e` for the exponents that fit the decimal range, by binary powering.
fn pow2(e: i32) -> BigFloat {
    static TABLE: std::sync::OnceLock<Vec<BigFloat>> = std::sync::OnceLock::new();
    const LIMIT: i32 = 420;
    let table = TABLE.get_or_init(|| {
        (-LIMIT..=LIMIT)
            .map(|e| {
                let (mut base, mut n, mut acc) = (
                    if e < 0 { BigFloat::from_u8(5) / BigFloat::from_u8(10) } else { BigFloat::from_u8(2) },
                    e.unsigned_abs(),
                    BigFloat::from_u8(1),
                );
                while n > 0 {
                    if n & 1 == 1 {
                        acc = acc * base;
                    }
                    base = base * base;
                    n >>= 1;
                }
                acc
            })
            .collect()
    });
    match e {
        e if e < -LIMIT => BigFloat::from_u8(0),
        e if e > LIMIT => num_bigfloat::INF_POS,
        e => table[(e + LIMIT) as usize],
    }
}

/// Exact value of `x` rounded to 40 digits; `BigFloat::from_f64` only keeps
/// the shortest decimal representation.
fn exact(x: f64) -> BigFloat {
    if x == 0.0 || !x.is_finite() {
        return BigFloat::from_f64(x);
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if biased == 0 { (frac, -1074) } else { (frac | (1u64 << 52), biased - 1075) };
    let v = BigFloat::from_u64(mant) * pow2(e);
    if x < 0.0 {
        v.inv_sign()
    } else {
        v
    }
}

impl Wide {
    /// Sum of both parts of `x`, rounded to 40 digits.
    pub fn from_dd(x: Dd) -> Self {
        Wide(exact(x.hi()) + exact(x.lo()))
    }

    pub fn to_dd(self) -> Dd {
        let hi = self.0.to_f64();
        Dd::from_parts([hi, (self.0 - exact(hi)).to_f64()])
    }
}

impl fmt::Debug for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Wide({})", self.0)
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! wide_ops {
    ($($tr:ident $f:ident $atr:ident $af:ident $op:tt),*) => {$(
        impl $tr for Wide {
            type Output = Wide;
            fn $f(self, rhs: Wide) -> Wide {
                Wide(self.0 $op rhs.0)
            }
        }
        impl $atr for Wide {
            fn $af(&mut self, rhs: Wide) {
                *self = *self $op rhs;
            }
        }
    )*};
}

wide_ops!(Add add AddAssign add_assign +, Sub sub SubAssign sub_assign -, Mul mul MulAssign mul_assign *, Div div DivAssign div_assign /);

impl Neg for Wide {
    type Output = Wide;
    fn neg(self) -> Wide {
        Wide(self.0.inv_sign())
    }
}

impl Real for Wide {
    const EPSILON: f64 = 1e-39;

    fn from_f64(x: f64) -> Self {
        Wide(exact(x))
    }
    fn to_f64(self) -> f64 {
        self.0.to_f64()
    }
    fn pi() -> Self {
        Wide(num_bigfloat::PI)
    }
    fn tau() -> Self {
        Wide(num_bigfloat::PI + num_bigfloat::PI)
    }
    fn abs(self) -> Self {
        Wide(self.0.abs())
    }
    fn sqrt(self) -> Self {
        Wide(self.0.sqrt())
    }
    fn exp(self) -> Self {
        Wide(self.0.exp())
    }
    fn ln(self) -> Self {
        Wide(self.0.ln())
    }
    fn sin_cos(self) -> (Self, Self) {
        // reduce first; the library's own reduction loses digits for large arguments
        let tau = Self::tau();
        let r = self - tau * (self / tau).floor();
        (Wide(r.0.sin()), Wide(r.0.cos()))
    }
    fn atan2(self, x: Self) -> Self {
        let (y, zero) = (self, Wide::zero());
        if x == zero {
            return match y.partial_cmp(&zero) {
                Some(std::cmp::Ordering::Greater) => Wide(num_bigfloat::HALF_PI),
                Some(std::cmp::Ordering::Less) => -Wide(num_bigfloat::HALF_PI),
                _ => zero,
            };
        }
        if y.abs() > x.abs() {
            // atan(y/x) = ±π/2 - atan(x/y), better conditioned near the vertical
            let base = Wide((x / y).0.atan());
            let half = Wide(num_bigfloat::HALF_PI);
            return if y > zero { half - base } else { -half - base };
        }
        let base = Wide((y / x).0.atan());
        if x > zero {
            base
        } else if y >= zero {
            base + Self::pi()
        } else {
            base - Self::pi()
        }
    }
    fn floor(self) -> Self {
        Wide(self.0.floor())
    }
    fn is_finite(self) -> bool {
        !self.0.is_nan() && !self.0.is_inf()
    }
}

fn taylor_sin_cos(r: Dd) -> (Dd, Dd) {
    let r2 = r * r;
    let tol = 1e-34;
    let mut s = r;
    let mut term = r;
    let mut k = 1.0;
    loop {
        term = -(term * r2) / Dd::from_f64((k + 1.0) * (k + 2.0));
        s += term;
        k += 2.0;
        if term.hi().abs() < tol || k > 60.0 {
            break;
        }
    }
    let mut c = Dd::one();
    let mut term = Dd::one();
    let mut k = 0.0;
    loop {
        term = -(term * r2) / Dd::from_f64((k + 1.0) * (k + 2.0));
        c += term;
        k += 2.0;
        if term.hi().abs() < tol || k > 60.0 {
            break;
        }
    }
    (s, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: Dd, tol: f64) -> bool {
        (a - b).abs().to_f64() <= tol
    }

    #[test]
    fn sin_cos_pythagorean_identity() {
        for k in -400..400 {
            let x = Dd::from_f64(k as f64 * 0.731) + Dd::new(1e-20, 0.0);
            let (s, c) = x.sin_cos();
            assert!(close(s * s + c * c, Dd::one(), 1e-30), "k={k}");
        }
    }

    #[test]
    fn known_values() {
        let (s, c) = (Dd::pi() / Dd::from_f64(6.0)).sin_cos();
        assert!(close(s, Dd::from_f64(0.5), 1e-31));
        let sqrt3_2 = Dd::from_f64(3.0).sqrt() / Dd::from_f64(2.0);
        assert!(close(c, sqrt3_2, 1e-31));
        let (s, c) = Dd::pi().sin_cos();
        assert!(close(s, Dd::zero(), 1e-31));
        assert!(close(c, -Dd::one(), 1e-31));
    }

    #[test]
    fn sin_of_one_matches_reference() {
        // sin(1) = 0.84147098480789650665250232163029899962...
        let reference = Dd::new(0.8414709848078965, 1.776845092935536e-18);
        let (s, _) = Dd::one().sin_cos();
        assert!(close(s, reference, 1e-31));
    }

    #[test]
    fn atan2_inverts_sin_cos() {
        for k in -30..30 {
            let t = Dd::from_f64(k as f64 * 0.1 + 0.01) + Dd::new(3e-19, 0.0);
            let (s, c) = t.sin_cos();
            let scale = Dd::from_f64(2.5);
            let back = (s * scale).atan2(c * scale);
            assert!(close(back, t, 1e-30), "k={k}");
        }
    }

    #[test]
    fn exp_ln_roundtrip() {
        let x = Dd::from_f64(1e-9) * Dd::from_f64(7.0);
        assert!(close(x.ln().exp(), x, 7e-9 * 1e-30));
        let y = Dd::from_f64(13.25);
        assert!(close(y.exp().ln(), y, 1e-29));
    }

    #[test]
    fn floor_handles_lo_part() {
        let x = Dd::from_f64(3.0) - Dd::from_f64(1e-20);
        assert_eq!(x.floor().to_f64(), 2.0);
        assert_eq!(Dd::from_f64(-0.5).floor().to_f64(), -1.0);
        assert_eq!(Dd::from_f64(4.0).floor().to_f64(), 4.0);
    }

    #[test]
    fn wrapping() {
        let x = Dd::from_f64(-0.25);
        assert!(close(x.wrap_tau(), Dd::tau() - Dd::from_f64(0.25), 1e-31));
        assert!(close(Dd::from_f64(4.0).wrap_pi(), Dd::from_f64(4.0) - Dd::tau(), 1e-31));
    }

    #[test]
    fn serde_roundtrip() {
        let x = Dd::one() / Dd::from_f64(3.0);
        let s = serde_json::to_string(&x).unwrap();
        let y: Dd = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn wide_agrees_with_dd() {
        for k in -40..40 {
            let t = Dd::from_f64(k as f64 * 0.37 + 0.01) + Dd::new(3e-19, 0.0);
            let w = Wide::from_dd(t);
            assert!(close(w.to_dd(), t, 1e-38));
            let ((s, c), (ws, wc)) = (t.sin_cos(), w.sin_cos());
            assert!(
                close(ws.to_dd(), s, 1e-30) && close(wc.to_dd(), c, 1e-30),
                "k={k} {:e} {:e}",
                (ws.to_dd() - s).to_f64(),
                (wc.to_dd() - c).to_f64()
            );
            let back = (ws * Wide::from_f64(2.5)).atan2(wc * Wide::from_f64(2.5));
            assert!((back - w.wrap_pi()).abs().to_f64() < 1e-37, "k={k}");
            assert!(((ws * ws + wc * wc) - Wide::one()).abs().to_f64() < 1e-38);
        }
        let x = Wide::from_f64(13.25);
        assert!((x.exp().ln() - x).abs().to_f64() < 1e-37);
        assert_eq!(Wide::from_f64(-0.5).floor().to_f64(), -1.0);
    }
}
