//! Exact expressions: rational polynomials in the coordinates of
//! R^{6+4p}, each term carrying a factor exp(m·y) with integer m.
//!
//! The class is closed under +, ·, and ∂/∂c for every coordinate c, which is
//! all the curvature computations need.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::scalar::{Rational, Scalar};

/// Coordinate on R^{6+4p}. The derived ordering is the basis ordering
/// x, y, z_1..z_p, ỹ, z̃_1..z̃_p followed by the starred duals in the same
/// order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coordinate {
    X,
    Y,
    Z(u16),
    YTilde,
    ZTilde(u16),
    XStar,
    YStar,
    ZStar(u16),
    YTildeStar,
    ZTildeStar(u16),
}

impl Coordinate {
    pub fn dimension(p: usize) -> usize {
        6 + 4 * p
    }

    pub fn index_of(i: u16) -> usize {
        i as usize
    }

    pub fn is_valid(&self, p: usize) -> bool {
        match *self {
            Coordinate::Z(i)
            | Coordinate::ZTilde(i)
            | Coordinate::ZStar(i)
            | Coordinate::ZTildeStar(i) => i >= 1 && (i as usize) <= p,
            _ => true,
        }
    }

    pub fn is_starred(&self) -> bool {
        matches!(
            self,
            Coordinate::XStar
                | Coordinate::YStar
                | Coordinate::ZStar(_)
                | Coordinate::YTildeStar
                | Coordinate::ZTildeStar(_)
        )
    }

    /// Position in the basis ordering for the given p.
    pub fn index(&self, p: usize) -> usize {
        let half = 3 + 2 * p;
        let unstarred = |c: &Coordinate| match *c {
            Coordinate::X => 0,
            Coordinate::Y => 1,
            Coordinate::Z(i) => 1 + i as usize,
            Coordinate::YTilde => p + 2,
            Coordinate::ZTilde(i) => p + 2 + i as usize,
            _ => unreachable!(),
        };
        match *self {
            Coordinate::XStar => half,
            Coordinate::YStar => half + 1,
            Coordinate::ZStar(i) => half + 1 + i as usize,
            Coordinate::YTildeStar => half + p + 2,
            Coordinate::ZTildeStar(i) => half + p + 2 + i as usize,
            c => unstarred(&c),
        }
    }

    pub fn from_index(p: usize, idx: usize) -> Coordinate {
        let half = 3 + 2 * p;
        assert!(
            idx < 2 * half,
            "coordinate index {idx} out of range for p={p}"
        );
        let base = |j: usize| -> Coordinate {
            match j {
                0 => Coordinate::X,
                1 => Coordinate::Y,
                j if j <= p + 1 => Coordinate::Z((j - 1) as u16),
                j if j == p + 2 => Coordinate::YTilde,
                j => Coordinate::ZTilde((j - p - 2) as u16),
            }
        };
        if idx < half {
            base(idx)
        } else {
            base(idx - half).dual()
        }
    }

    /// Starred partner (and back).
    pub fn dual(&self) -> Coordinate {
        match *self {
            Coordinate::X => Coordinate::XStar,
            Coordinate::Y => Coordinate::YStar,
            Coordinate::Z(i) => Coordinate::ZStar(i),
            Coordinate::YTilde => Coordinate::YTildeStar,
            Coordinate::ZTilde(i) => Coordinate::ZTildeStar(i),
            Coordinate::XStar => Coordinate::X,
            Coordinate::YStar => Coordinate::Y,
            Coordinate::ZStar(i) => Coordinate::Z(i),
            Coordinate::YTildeStar => Coordinate::YTilde,
            Coordinate::ZTildeStar(i) => Coordinate::ZTilde(i),
        }
    }

    pub fn all(p: usize) -> Vec<Coordinate> {
        (0..Self::dimension(p))
            .map(|i| Coordinate::from_index(p, i))
            .collect()
    }

    /// The (2p+2) coordinates y, z_i, ỹ, z̃_i on which g_xx depends.
    pub fn w_coordinates(p: usize) -> Vec<Coordinate> {
        (1..3 + 2 * p)
            .map(|i| Coordinate::from_index(p, i))
            .collect()
    }

    pub fn name(&self) -> String {
        match *self {
            Coordinate::X => "x".into(),
            Coordinate::Y => "y".into(),
            Coordinate::Z(i) => format!("z{i}"),
            Coordinate::YTilde => "yt".into(),
            Coordinate::ZTilde(i) => format!("zt{i}"),
            Coordinate::XStar => "xs".into(),
            Coordinate::YStar => "ys".into(),
            Coordinate::ZStar(i) => format!("zs{i}"),
            Coordinate::YTildeStar => "yts".into(),
            Coordinate::ZTildeStar(i) => format!("zts{i}"),
        }
    }

    /// Inverse of [`Coordinate::name`].
    pub fn parse_name(name: &str) -> Option<Coordinate> {
        let split = name
            .find(|c: char| c.is_ascii_digit())
            .unwrap_or(name.len());
        let (head, digits) = name.split_at(split);
        let index = if digits.is_empty() {
            None
        } else {
            let i: u16 = digits.parse().ok()?;
            if i == 0 {
                return None;
            }
            Some(i)
        };
        match (head, index) {
            ("x", None) => Some(Coordinate::X),
            ("y", None) => Some(Coordinate::Y),
            ("yt", None) => Some(Coordinate::YTilde),
            ("xs", None) => Some(Coordinate::XStar),
            ("ys", None) => Some(Coordinate::YStar),
            ("yts", None) => Some(Coordinate::YTildeStar),
            ("z", Some(i)) => Some(Coordinate::Z(i)),
            ("zt", Some(i)) => Some(Coordinate::ZTilde(i)),
            ("zs", Some(i)) => Some(Coordinate::ZStar(i)),
            ("zts", Some(i)) => Some(Coordinate::ZTildeStar(i)),
            _ => None,
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Product of coordinate powers, sorted by coordinate, exponents > 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(Coordinate, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(c: Coordinate) -> Self {
        Monomial(vec![(c, 1)])
    }

    pub fn factors(&self) -> &[(Coordinate, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn exponent(&self, c: Coordinate) -> u32 {
        self.0.iter().find(|(v, _)| *v == c).map_or(0, |(_, e)| *e)
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, ea) = self.0[i];
            let (b, eb) = other.0[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => {
                    out.push((a, ea));
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push((b, eb));
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Returns (exponent, monomial with that exponent lowered by one).
    fn lower(&self, c: Coordinate) -> Option<(u32, Monomial)> {
        let pos = self.0.iter().position(|(v, _)| *v == c)?;
        let e = self.0[pos].1;
        let mut out = self.0.clone();
        if e == 1 {
            out.remove(pos);
        } else {
            out[pos].1 -= 1;
        }
        Some((e, Monomial(out)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct TermKey {
    exp: i64,
    mono: Monomial,
}

/// Canonical sum of `coeff · monomial · exp(m·y)` terms; no two terms share
/// (monomial, m) and no coefficient is zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Expr {
    terms: BTreeMap<TermKey, Rational>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn constant(q: Rational) -> Self {
        Expr::term(q, Monomial::one(), 0)
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(Rational::from_integer(BigInt::from(n)))
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn var(c: Coordinate) -> Self {
        Expr::term(Rational::one(), Monomial::var(c), 0)
    }

    /// exp(m·y).
    pub fn exp_y(m: i64) -> Self {
        Expr::term(Rational::one(), Monomial::one(), m)
    }

    pub fn term(coeff: Rational, mono: Monomial, exp: i64) -> Self {
        let mut e = Expr::zero();
        e.push(TermKey { exp, mono }, coeff);
        e
    }

    fn push(&mut self, key: TermKey, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += coeff;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterates `(coefficient, monomial, m)` in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Rational, &Monomial, i64)> {
        self.terms.iter().map(|(k, c)| (c, &k.mono, k.exp))
    }

    /// The value if the expression is a constant (no coordinates, no exp).
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (k, c) = self.terms.iter().next().unwrap();
                (k.exp == 0 && k.mono.0.is_empty()).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn has_exp(&self) -> bool {
        self.terms.keys().any(|k| k.exp != 0)
    }

    pub fn coordinates(&self) -> BTreeSet<Coordinate> {
        let mut out = BTreeSet::new();
        for k in self.terms.keys() {
            out.extend(k.mono.0.iter().map(|(c, _)| *c));
            if k.exp != 0 {
                out.insert(Coordinate::Y);
            }
        }
        out
    }

    /// Total polynomial degree; `None` if any term carries an exp factor.
    pub fn polynomial_degree(&self) -> Option<u32> {
        if self.has_exp() {
            return None;
        }
        Some(
            self.terms
                .keys()
                .map(|k| k.mono.degree())
                .max()
                .unwrap_or(0),
        )
    }

    pub fn scale(&self, q: &Rational) -> Expr {
        if q.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self.terms.iter().map(|(k, c)| (k.clone(), c * q)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Expr {
        let mut acc = Expr::one();
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    pub fn differentiate(&self, c: Coordinate) -> Expr {
        let mut out = Expr::zero();
        for (k, coeff) in &self.terms {
            if let Some((e, lowered)) = k.mono.lower(c) {
                out.push(
                    TermKey {
                        exp: k.exp,
                        mono: lowered,
                    },
                    coeff * Rational::from_integer(BigInt::from(e)),
                );
            }
            if c == Coordinate::Y && k.exp != 0 {
                out.push(
                    k.clone(),
                    coeff * Rational::from_integer(BigInt::from(k.exp)),
                );
            }
        }
        out
    }

    /// Iterated derivative ∂_{c_1}…∂_{c_n}.
    pub fn differentiate_many(&self, coords: &[Coordinate]) -> Expr {
        coords.iter().fold(self.clone(), |e, c| e.differentiate(*c))
    }

    /// Exact whenever every exp factor has argument 0 at the point.
    pub fn evaluate(&self, point: &Point) -> Scalar {
        let y = point.get(Coordinate::Y);
        let mut exact = Rational::zero();
        let mut approx = 0.0f64;
        let mut inexact = false;
        for (k, coeff) in &self.terms {
            let mut value = coeff.clone();
            for (c, e) in &k.mono.0 {
                value *= num_traits::pow(point.get(*c), *e as usize);
            }
            if k.exp == 0 || y.is_zero() {
                exact += value;
            } else {
                inexact = true;
                let arg = crate::scalar::rational_to_f64(
                    &(&y * Rational::from_integer(BigInt::from(k.exp))),
                );
                approx += crate::scalar::rational_to_f64(&value) * arg.exp();
            }
        }
        if inexact {
            Scalar::Approx(crate::scalar::rational_to_f64(&exact) + approx)
        } else {
            Scalar::Exact(exact)
        }
    }

    /// Float evaluation at a float point (used by finite-difference checks).
    pub fn evaluate_f64(&self, point: &BTreeMap<Coordinate, f64>) -> f64 {
        let y = point.get(&Coordinate::Y).copied().unwrap_or(0.0);
        self.terms
            .iter()
            .map(|(k, coeff)| {
                let mut v = crate::scalar::rational_to_f64(coeff);
                for (c, e) in &k.mono.0 {
                    v *= point.get(c).copied().unwrap_or(0.0).powi(*e as i32);
                }
                if k.exp != 0 {
                    v *= (k.exp as f64 * y).exp();
                }
                v
            })
            .sum()
    }

    /// If `self == c · other` for a rational constant c, returns c.
    pub fn constant_ratio(&self, other: &Expr) -> Option<Rational> {
        if other.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Rational::zero());
        }
        let (k, c0) = other.terms.iter().next().unwrap();
        let c = self.terms.get(k)? / c0;
        (self == &other.scale(&c)).then_some(c)
    }
}

impl Add<&Expr> for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.push(k.clone(), c.clone());
        }
        out
    }
}

impl Sub<&Expr> for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.push(k.clone(), -c);
        }
        out
    }
}

impl Mul<&Expr> for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        let mut out = Expr::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                out.push(
                    TermKey {
                        exp: ka.exp + kb.exp,
                        mono: ka.mono.mul(&kb.mono),
                    },
                    ca * cb,
                );
            }
        }
        out
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr {
            terms: self.terms.iter().map(|(k, c)| (k.clone(), -c)).collect(),
        }
    }
}

macro_rules! owned_ops {
    ($trait:ident, $method:ident) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                (&self).$method(rhs)
            }
        }
    };
}

owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

fn fmt_coeff(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Prints in the input grammar of the scenario parser: `3/2*z1*y^2 - exp(2*y)`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            if i == 0 {
                if negative {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if negative { " - " } else { " + " })?;
            }
            let mag = c.abs();
            let mut factors: Vec<String> = Vec::new();
            let bare = k.mono.0.is_empty() && k.exp == 0;
            if !mag.is_one() || bare {
                factors.push(fmt_coeff(&mag));
            }
            for (v, e) in &k.mono.0 {
                if *e == 1 {
                    factors.push(v.name());
                } else {
                    factors.push(format!("{}^{}", v.name(), e));
                }
            }
            match k.exp {
                0 => {}
                1 => factors.push("exp(y)".into()),
                m => factors.push(format!("exp({m}*y)")),
            }
            f.write_str(&factors.join("*"))?;
        }
        Ok(())
    }
}

/// Evaluation site: coordinate → exact value, absent coordinates are 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Point {
    values: BTreeMap<Coordinate, Rational>,
}

impl Point {
    pub fn origin() -> Self {
        Point::default()
    }

    pub fn new(values: impl IntoIterator<Item = (Coordinate, Rational)>) -> Self {
        let mut pt = Point::default();
        for (c, v) in values {
            pt.set(c, v);
        }
        pt
    }

    pub fn set(&mut self, c: Coordinate, v: Rational) {
        if v.is_zero() {
            self.values.remove(&c);
        } else {
            self.values.insert(c, v);
        }
    }

    pub fn get(&self, c: Coordinate) -> Rational {
        self.values.get(&c).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Coordinate, &Rational)> {
        self.values.iter()
    }

    /// Every assigned coordinate exists for this p.
    pub fn is_valid_for(&self, p: usize) -> bool {
        self.values.keys().all(|c| c.is_valid(p))
    }

    pub fn to_f64_map(&self) -> BTreeMap<Coordinate, f64> {
        self.values
            .iter()
            .map(|(c, v)| (*c, v.to_f64().unwrap_or(f64::NAN)))
            .collect()
    }
}
