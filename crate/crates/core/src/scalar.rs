//! Exact rationals with an explicit floating-point fallback.
//!
//! Every value produced on a symbolic path stays a [`BigRational`]. Only
//! transcendental evaluation (`exp` at a non-zero argument) and irrational
//! roots demote a [`Scalar`] to [`Scalar::Approx`]; once demoted, the result of
//! any arithmetic involving it is approximate as well.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"n"` or `"n/d"` (optional leading sign, `d > 0`).
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (text, None),
    };
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = match den {
        Some(d) => d.parse().ok()?,
        None => BigInt::one(),
    };
    if !den.is_positive() {
        return None;
    }
    Some(Rational::new(num, den))
}

/// Always `"num/den"`, the interchange form used by the JSON reports.
pub fn format_rational(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

pub fn rational_to_f64(q: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Huge numerators/denominators: scale down by bit length first.
    let shift = q.numer().bits().max(q.denom().bits()).saturating_sub(1000) as usize;
    let n = (q.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (q.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

fn exact_int_root(n: &BigInt, k: u32) -> Option<BigInt> {
    if n.is_negative() {
        if k.is_multiple_of(2) {
            return None;
        }
        return exact_int_root(&-n, k).map(|r| -r);
    }
    let r = n.nth_root(k);
    if num_traits::pow(r.clone(), k as usize) == *n {
        Some(r)
    } else {
        None
    }
}

/// Real `k`-th root of `q` if it is rational.
pub fn exact_rational_root(q: &Rational, k: u32) -> Option<Rational> {
    if k == 0 {
        return None;
    }
    let n = exact_int_root(q.numer(), k)?;
    let d = exact_int_root(q.denom(), k)?;
    Some(Rational::new(n, d))
}

/// A number that is either exact or a flagged float.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(Rational),
    Approx(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(Rational::zero())
    }

    pub fn one() -> Self {
        Scalar::Exact(Rational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::Exact(int(n))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(q) => q.is_zero(),
            Scalar::Approx(x) => *x == 0.0,
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Approx(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(q) => rational_to_f64(q),
            Scalar::Approx(x) => *x,
        }
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(q.abs()),
            Scalar::Approx(x) => Scalar::Approx(x.abs()),
        }
    }

    pub fn signum(&self) -> i32 {
        match self {
            Scalar::Exact(q) => match q.cmp(&Rational::zero()) {
                Ordering::Less => -1,
                Ordering::Equal => 0,
                Ordering::Greater => 1,
            },
            Scalar::Approx(x) if *x > 0.0 => 1,
            Scalar::Approx(x) if *x < 0.0 => -1,
            Scalar::Approx(_) => 0,
        }
    }

    /// `None` on division by an exact or floating zero.
    pub fn checked_div(&self, rhs: &Scalar) -> Option<Scalar> {
        if rhs.is_zero() {
            return None;
        }
        Some(match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a / b),
            _ => Scalar::Approx(self.to_f64() / rhs.to_f64()),
        })
    }

    pub fn recip(&self) -> Option<Scalar> {
        Scalar::one().checked_div(self)
    }

    pub fn powi(&self, e: i32) -> Option<Scalar> {
        match self {
            Scalar::Exact(q) => {
                if e < 0 && q.is_zero() {
                    return None;
                }
                Some(Scalar::Exact(num_traits::pow::Pow::pow(q, e)))
            }
            Scalar::Approx(x) => {
                if e < 0 && *x == 0.0 {
                    return None;
                }
                Some(Scalar::Approx(x.powi(e)))
            }
        }
    }

    /// Real `k`-th root; exact whenever the root is rational. `None` for an
    /// even root of a negative number.
    pub fn real_root(&self, k: u32) -> Option<Scalar> {
        if self.signum() < 0 && k.is_multiple_of(2) {
            return None;
        }
        if let Scalar::Exact(q) = self {
            if let Some(r) = exact_rational_root(q, k) {
                return Some(Scalar::Exact(r));
            }
        }
        let x = self.to_f64();
        let r = x.abs().powf(1.0 / k as f64);
        Some(Scalar::Approx(if x < 0.0 { -r } else { r }))
    }

    pub fn sqrt(&self) -> Option<Scalar> {
        self.real_root(2)
    }

    /// Equality that is exact for exact pairs and relative-tolerance based
    /// otherwise.
    pub fn approx_eq(&self, other: &Scalar, rel_tol: f64) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => {
                let a = self.to_f64();
                let b = other.to_f64();
                let scale = a.abs().max(b.abs()).max(1.0);
                (a - b).abs() <= rel_tol * scale
            }
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl From<Rational> for Scalar {
    fn from(q: Rational) -> Self {
        Scalar::Exact(q)
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Approx(x)
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                match (self, rhs) {
                    (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a $op b),
                    _ => Scalar::Approx(self.to_f64() $op rhs.to_f64()),
                }
            }
        }
        impl $trait<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                &self $op &rhs
            }
        }
    };
}

scalar_binop!(Add, add, +);
scalar_binop!(Sub, sub, -);
scalar_binop!(Mul, mul, *);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(q) => Scalar::Exact(-q),
            Scalar::Approx(x) => Scalar::Approx(-x),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(q) if q.is_integer() => write!(f, "{}", q.numer()),
            Scalar::Exact(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            Scalar::Approx(x) => write!(f, "{:.16e}", x),
        }
    }
}

/// Sign of a rational as -1, 0 or 1.
pub fn sign_of(q: &Rational) -> i32 {
    match q.numer().sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

/// JSON form of a float: 17 significant digits, `null` if not finite.
pub fn float_json(x: f64) -> serde_json::Value {
    if !x.is_finite() {
        return serde_json::Value::Null;
    }
    let text = format!("{:.16e}", x);
    serde_json::from_str::<serde_json::Number>(&text)
        .map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// JSON form of a scalar: exact values as `"num/den"` strings, floats as
/// numbers.
pub fn scalar_json(s: &Scalar) -> serde_json::Value {
    match s {
        Scalar::Exact(q) => serde_json::Value::String(format_rational(q)),
        Scalar::Approx(x) => float_json(*x),
    }
}

/// Inverse of [`scalar_json`].
pub fn scalar_from_json(v: &serde_json::Value) -> Option<Scalar> {
    match v {
        serde_json::Value::String(s) => parse_rational(s).map(Scalar::Exact),
        serde_json::Value::Number(n) => n.as_f64().map(Scalar::Approx),
        _ => None,
    }
}
