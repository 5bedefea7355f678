//! Element algebras for contraction.
//!
//! Every contraction in the crate is written against [`Semiring`]. Two
//! algebras carry probability data:
//!
//! | Algebra        | ⊕   | ⊙ | zero | one |
//! |----------------|-----|---|------|-----|
//! | [`Real`]       | +   | × | 0    | 1   |
//! | [`MaxPlus`]    | max | + | −∞   | 0   |
//!
//! [`BoolMask`] is the Boolean semiring used for tropical adjoints, and
//! [`Scaled`] is a real number with its own base-2 exponent, used for scalar
//! results (partition functions) that would underflow a plain float.
//!
//! Tensors over [`Real`] keep one shared exponent per tensor instead of one per
//! element; see [`Semiring::normalize`].

use std::fmt::{self, Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar backing the numeric algebras: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A commutative semiring `(S, ⊕, ⊙, 0, 1)`.
pub trait Semiring: Copy + PartialEq + Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    /// Rescales `buf` in place and returns the base-2 exponent that was
    /// factored out, so that `old = new · 2^exponent` entrywise.
    ///
    /// Only the real algebra rescales; the default is the identity.
    fn normalize(_buf: &mut [Self]) -> i64 {
        0
    }
}

/// Splits `x` into `(m, e)` with `x = m · 2^e` and `|m| ∈ [0.5, 1)`.
///
/// Zero and non-finite inputs are returned unchanged with `e = 0`.
pub fn frexp<T: Scalar>(x: T) -> (T, i64) {
    if x.is_zero() || !x.is_finite() {
        return (x, 0);
    }
    let (mant, exp, _) = x.integer_decode();
    let bits = 64 - i64::from(mant.leading_zeros());
    let e = i64::from(exp) + bits;
    (ldexp(x, -e), e)
}

/// Computes `x · 2^e` without intermediate overflow of the power of two.
pub fn ldexp<T: Scalar>(mut x: T, mut e: i64) -> T {
    const CHUNK: i32 = 60;
    let up = T::from_f64(2f64.powi(CHUNK)).unwrap();
    let down = T::from_f64(2f64.powi(-CHUNK)).unwrap();
    while e > i64::from(CHUNK) && x.is_finite() && !x.is_zero() {
        x = x * up;
        e -= i64::from(CHUNK);
    }
    while e < -i64::from(CHUNK) && x.is_finite() && !x.is_zero() {
        x = x * down;
        e += i64::from(CHUNK);
    }
    x * T::from_f64(2f64.powi(e as i32)).unwrap()
}

/// Sum-product element.
#[derive(Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Real<T>(pub T);

impl<T: Debug> Debug for Real<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<T: Scalar> Semiring for Real<T> {
    #[inline]
    fn zero() -> Self {
        Real(T::zero())
    }
    #[inline]
    fn one() -> Self {
        Real(T::one())
    }
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Real(self.0 + rhs.0)
    }
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Real(self.0 * rhs.0)
    }

    /// Divides by the power of two nearest the max-abs entry so that the
    /// largest magnitude lands in `[0.5, 1)`.
    fn normalize(buf: &mut [Self]) -> i64 {
        let peak = buf.iter().fold(T::zero(), |m, x| m.max(x.0.abs()));
        if peak.is_zero() || !peak.is_finite() {
            return 0;
        }
        let (_, e) = frexp(peak);
        if e != 0 {
            for x in buf.iter_mut() {
                x.0 = ldexp(x.0, -e);
            }
        }
        e
    }
}

/// Max-plus tropical element in natural-log units.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct MaxPlus<T>(pub T);

impl<T: Debug> Debug for MaxPlus<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{:?}", self.0)
    }
}

impl<T: Scalar> MaxPlus<T> {
    /// Tropical reciprocal (negation); `−∞` maps to `+∞`.
    pub fn recip(self) -> Self {
        MaxPlus(-self.0)
    }
}

impl<T: Scalar> Semiring for MaxPlus<T> {
    #[inline]
    fn zero() -> Self {
        MaxPlus(T::neg_infinity())
    }
    #[inline]
    fn one() -> Self {
        MaxPlus(T::zero())
    }
    #[inline]
    fn add(self, rhs: Self) -> Self {
        if rhs.0 > self.0 {
            rhs
        } else {
            self
        }
    }
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        MaxPlus(self.0 + rhs.0)
    }
}

/// Boolean semiring (or, and). `false` plays the tropical zero and `true` the
/// tropical one.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct BoolMask(pub bool);

impl Debug for BoolMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0 { "T" } else { "F" })
    }
}

impl Semiring for BoolMask {
    fn zero() -> Self {
        BoolMask(false)
    }
    fn one() -> Self {
        BoolMask(true)
    }
    fn add(self, rhs: Self) -> Self {
        BoolMask(self.0 || rhs.0)
    }
    fn mul(self, rhs: Self) -> Self {
        BoolMask(self.0 && rhs.0)
    }
}

/// Real number stored as `mantissa · 2^exponent`.
///
/// After [`Scaled::new`] the mantissa magnitude lies in `[0.5, 1)`, or the
/// value is exactly zero with exponent 0.
#[derive(Clone, Copy, PartialEq)]
pub struct Scaled<T> {
    mantissa: T,
    exponent: i64,
}

impl<T: Scalar> Scaled<T> {
    pub fn new(mantissa: T, exponent: i64) -> Self {
        let (m, e) = frexp(mantissa);
        if m.is_zero() {
            return Scaled {
                mantissa: m,
                exponent: 0,
            };
        }
        Scaled {
            mantissa: m,
            exponent: exponent + e,
        }
    }

    pub fn from_value(x: T) -> Self {
        Self::new(x, 0)
    }

    pub fn mantissa(&self) -> T {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    /// Plain float value; may underflow to zero or overflow to infinity.
    pub fn value(&self) -> T {
        ldexp(self.mantissa, self.exponent)
    }

    /// Natural logarithm; `−∞` for zero.
    pub fn ln(&self) -> T {
        if self.mantissa.is_zero() {
            return T::neg_infinity();
        }
        self.mantissa.ln() + T::from_i64(self.exponent).unwrap() * T::from_f64(std::f64::consts::LN_2).unwrap()
    }

    /// Base-10 logarithm; `−∞` for zero.
    pub fn to_log10(&self) -> T {
        if self.mantissa.is_zero() {
            return T::neg_infinity();
        }
        self.mantissa.log10() + T::from_i64(self.exponent).unwrap() * T::from_f64(std::f64::consts::LOG10_2).unwrap()
    }

    /// `self / rhs` as a plain float. Returns NaN when `rhs` is zero.
    pub fn ratio(&self, rhs: &Self) -> T {
        ldexp(self.mantissa / rhs.mantissa, self.exponent - rhs.exponent)
    }
}

impl<T: Scalar> Debug for Scaled<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}·2^{}", self.mantissa, self.exponent)
    }
}

impl<T: Scalar> Display for Scaled<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl<T: Scalar> Semiring for Scaled<T> {
    fn zero() -> Self {
        Scaled {
            mantissa: T::zero(),
            exponent: 0,
        }
    }
    fn one() -> Self {
        Scaled::from_value(T::one())
    }
    fn add(self, rhs: Self) -> Self {
        if self.mantissa.is_zero() {
            return rhs;
        }
        if rhs.mantissa.is_zero() {
            return self;
        }
        let top = self.exponent.max(rhs.exponent);
        let sum = ldexp(self.mantissa, self.exponent - top) + ldexp(rhs.mantissa, rhs.exponent - top);
        Scaled::new(sum, top)
    }
    fn mul(self, rhs: Self) -> Self {
        if self.mantissa.is_zero() || rhs.mantissa.is_zero() {
            return Self::zero();
        }
        Scaled::new(self.mantissa * rhs.mantissa, self.exponent + rhs.exponent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frexp_ranges() {
        for x in [1.0f64, 0.5, 3.0, 1e-300, 5e-324, 1.7e308, -6.0] {
            let (m, e) = frexp(x);
            assert!(m.abs() >= 0.5 && m.abs() < 1.0, "{x}: {m}");
            assert_eq!(ldexp(m, e), x);
        }
        assert_eq!(frexp(0.0f64), (0.0, 0));
        let (m, e) = frexp(0.75f32);
        assert_eq!((m, e), (0.75, 0));
    }

    #[test]
    fn scaled_add_mul() {
        let a = Scaled::new(0.5f64, 1);
        assert_eq!(a.add(a).value(), 2.0);
        let p = Scaled::from_value(0.25f64).mul(Scaled::from_value(0.5));
        assert_eq!(p.value(), 0.125);
        assert_eq!(Scaled::<f64>::zero().exponent(), 0);
        assert_eq!(Scaled::new(0.0f64, 17).exponent(), 0);
    }

    #[test]
    fn tropical_examples() {
        let a = MaxPlus(-1.0f64);
        assert_eq!(a.add(MaxPlus(-3.0)), MaxPlus(-1.0));
        assert_eq!(MaxPlus::zero().add(MaxPlus(4.0f64)), MaxPlus(4.0));
        assert_eq!(a.mul(MaxPlus(-2.5)), MaxPlus(-3.5));
        assert_eq!(MaxPlus::<f64>::zero().mul(MaxPlus(5.0)), MaxPlus::zero());
        assert_eq!(MaxPlus(2.0f64).recip(), MaxPlus(-2.0));
    }

    #[test]
    fn log10_values() {
        assert_eq!(Scaled::from_value(1.0f64).to_log10(), 0.0);
        assert_relative_eq!(Scaled::from_value(0.5f64).to_log10(), -std::f64::consts::LOG10_2, epsilon = 1e-9);
        assert_relative_eq!(Scaled::new(1.0f64, -40).to_log10(), -40.0 * 2f64.log10(), epsilon = 1e-6);
        assert!(Scaled::<f64>::zero().to_log10().is_infinite());
    }

    #[test]
    fn real_normalize_folds_exponent() {
        let mut buf = [Real(3.0f64), Real(0.75), Real(0.0)];
        let e = Real::normalize(&mut buf);
        assert_eq!(e, 2);
        assert_eq!(buf[0].0, 0.75);
        assert_eq!(buf[1].0, 0.1875);
        let mut zeros = [Real(0.0f64); 3];
        assert_eq!(Real::normalize(&mut zeros), 0);
        let mut trop = [MaxPlus(5.0f64)];
        assert_eq!(MaxPlus::normalize(&mut trop), 0);
        assert_eq!(trop[0].0, 5.0);
    }

    #[test]
    fn bool_mask_is_boolean_semiring() {
        let (t, f) = (BoolMask(true), BoolMask(false));
        assert_eq!(t.add(f), t);
        assert_eq!(t.mul(f), f);
        assert!(BoolMask::zero().is_zero());
    }
}
