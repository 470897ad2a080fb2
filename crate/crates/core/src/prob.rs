//! Scalar types used for probabilities.
//!
//! Everything that manipulates distributions or transform matrices is generic
//! over [`Prob`], with two implementations: `f64` for the streaming codec and
//! [`Rational`] (arbitrary precision) for exact checks of dyadicity, Kraft
//! sums and marginal identities.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = num_rational::BigRational;

/// Float tolerance for "sums to one".
pub const SUM_TOLERANCE: f64 = 1e-12;

pub trait Prob:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// True when arithmetic is exact.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    /// `2^-exp`.
    fn dyadic(exp: u32) -> Self;
    fn from_ratio(num: u64, den: u64) -> Self;
    fn to_f64(&self) -> f64;
    fn parse_literal(s: &str) -> Option<Self>;
    fn to_literal(&self) -> String;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    fn is_negative(&self) -> bool {
        *self < Self::zero()
    }

    /// Total order; floats are compared with `f64::total_cmp`.
    fn cmp_total(&self, other: &Self) -> Ordering;

    /// Equality up to the mode's tolerance (exact for rationals).
    fn approx_eq(&self, other: &Self, tol: f64) -> bool;

    /// Treat values within float noise of zero as zero. Identity for rationals.
    fn negligible(&self) -> bool {
        self.is_zero()
    }

    /// `a · b`.
    fn product(a: &Self, b: &Self) -> Self {
        a.clone() * b.clone()
    }

    /// Sum of many terms, in order.
    fn sum_all<'a>(terms: impl IntoIterator<Item = &'a Self>) -> Self
    where
        Self: 'a,
    {
        terms.into_iter().fold(Self::zero(), |acc, t| acc + t.clone())
    }
}

impl Prob for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn dyadic(exp: u32) -> Self {
        (-(exp as f64)).exp2()
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn parse_literal(s: &str) -> Option<Self> {
        match s.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n.trim().parse().ok()?;
                let d: f64 = d.trim().parse().ok()?;
                (d != 0.0).then(|| n / d)
            }
            None => s.trim().parse().ok(),
        }
    }
    fn to_literal(&self) -> String {
        // Display is the shortest representation that round-trips.
        format!("{self}")
    }
    fn cmp_total(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol
    }
    fn negligible(&self) -> bool {
        self.abs() <= SUM_TOLERANCE
    }
}

impl Prob for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn dyadic(exp: u32) -> Self {
        Rational::new(BigInt::one(), BigInt::one() << exp as usize)
    }
    fn from_ratio(num: u64, den: u64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn parse_literal(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            return (!d.is_zero()).then(|| Rational::new(n, d));
        }
        parse_decimal(s)
    }
    fn to_literal(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }
    fn cmp_total(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
    fn approx_eq(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }

    fn product(a: &Self, b: &Self) -> Self {
        reduce(a.numer() * b.numer(), a.denom() * b.denom())
    }

    /// Brings every term over one common denominator and reduces once.
    /// Pairwise addition reduces after every step, which is slow when the
    /// denominators are many and pairwise coprime.
    fn sum_all<'a>(terms: impl IntoIterator<Item = &'a Self>) -> Self {
        let terms: Vec<&Rational> = terms.into_iter().collect();
        let mut lcm = BigInt::one();
        for t in &terms {
            let d = t.denom();
            let g = d.gcd(&(&lcm % d));
            if !g.is_one() || !d.is_one() {
                lcm *= d / g;
            }
        }
        let numer = terms
            .iter()
            .fold(BigInt::zero(), |acc, t| acc + t.numer() * (&lcm / t.denom()));
        Rational::new(numer, lcm)
    }
}

/// `n/d` in lowest terms for `d > 0`, with a native fast path when both fit
/// in 128 bits.
fn reduce(n: BigInt, d: BigInt) -> Rational {
    if let (Some(nu), Some(du)) = (n.to_i128(), d.to_u128()) {
        let g = binary_gcd(nu.unsigned_abs(), du);
        let (nn, dd) = (nu.unsigned_abs() / g, du / g);
        let nn = BigInt::from(nn);
        return Rational::new_raw(if nu < 0 { -nn } else { nn }, BigInt::from(dd));
    }
    Rational::new(n, d)
}

fn binary_gcd(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

/// Exact value of a plain decimal literal such as `0.125` or `3e-2`.
fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10u32);
    Some(if scale >= 0 {
        Rational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// Exact rational value of a finite float.
pub fn rational_from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_parse_exactly() {
        let r = Rational::parse_literal("0.125").unwrap();
        assert_eq!(r, Rational::dyadic(3));
        let r = Rational::parse_literal("25e-2").unwrap();
        assert_eq!(r, Rational::from_ratio(1, 4));
        let r = Rational::parse_literal("1/3").unwrap();
        assert_eq!(r, Rational::from_ratio(1, 3));
        assert!(Rational::parse_literal("1/0").is_none());
        assert!(Rational::parse_literal("x").is_none());
    }

    #[test]
    fn float_literal_round_trip() {
        for x in [1.0 / 3.0, 1e-300, 0.1, 0.5, 2.0f64.powi(-60)] {
            let s = x.to_literal();
            assert_eq!(f64::parse_literal(&s), Some(x), "{s}");
        }
        assert_eq!(f64::parse_literal("1/4"), Some(0.25));
    }

    fn ratio(n: i64, d: u64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    proptest::proptest! {
        #[test]
        fn fast_product_matches_ratio_arithmetic(
            a in -1_000_000_000i64..1_000_000_000, b in 1u64..u64::MAX,
            c in -1_000_000_000i64..1_000_000_000, d in 1u64..u64::MAX,
        ) {
            let (x, y) = (ratio(a, b), ratio(c, d));
            let p = Rational::product(&x, &y);
            proptest::prop_assert_eq!(&p, &(x.clone() * y.clone()));
            proptest::prop_assert_eq!(p.numer().clone(), (x.clone() * y.clone()).numer().clone());
        }

        #[test]
        fn sum_all_matches_pairwise(terms in proptest::collection::vec((-1000i64..1000, 1u64..5000), 0..40)) {
            let rs: Vec<Rational> = terms.iter().map(|&(n, d)| ratio(n, d)).collect();
            let pairwise = rs.iter().fold(<Rational as Zero>::zero(), |a, r| a + r);
            let fast = Rational::sum_all(&rs);
            proptest::prop_assert_eq!(fast.denom().clone(), pairwise.denom().clone());
            proptest::prop_assert_eq!(fast, pairwise);
        }
    }

    #[test]
    fn binary_gcd_values() {
        assert_eq!(binary_gcd(0, 5), 5);
        assert_eq!(binary_gcd(12, 18), 6);
        assert_eq!(binary_gcd(1 << 100, 3 << 90), 1 << 90);
    }
}
