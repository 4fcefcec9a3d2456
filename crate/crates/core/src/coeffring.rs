//! Exact coefficient arithmetic.
//!
//! Two coefficient types are used throughout the crate: plain rationals, and
//! [`RingElem`], an element of `Q[q]/(q^{2(r+1)} + r)`. The formal variable `q`
//! stands for a fixed branch of `(-r)^{1/(2(r+1))}`, so every fractional power
//! of `-r` that shows up in the coordinate changes is a monomial `q^e`, and
//! `q^{r+1}` plays the role of `sqrt(-r)`.
//!
//! The quotient is treated as a ring, not a field: nothing here divides by a
//! general ring element, so possible zero divisors are harmless.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Exact rational number.
pub type Rational = num_rational::BigRational;

/// Builds the rational `n / d`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Builds the integer `n` as a rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `n!` as a rational.
pub fn factorial(n: u32) -> Rational {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= i;
    }
    Rational::from_integer(acc)
}

/// Binomial coefficient `C(n, k)` for non-negative arguments.
pub fn binomial(n: u32, k: u32) -> Rational {
    if k > n {
        return Rational::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    Rational::from_integer(acc)
}

/// Generalized binomial `k (k-1) ... (k-l+1) / l!` for any integer `k`.
pub fn falling_binomial(k: i64, l: u32) -> Rational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..l as i64 {
        num *= k - i;
        den *= i + 1;
    }
    Rational::new(num, den)
}

/// Parses `"p/q"` or `"p"` into a rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Coefficient arithmetic needed by the series and operator layers.
///
/// Implementors need not provide a context-free zero: every new coefficient is
/// produced from existing ones, so [`RingElem`] can carry its `r` along.
pub trait Coeff: Clone + PartialEq + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, rhs: &Self);
    fn mul(&self, rhs: &Self) -> Self;
    fn scale(&self, s: &Rational) -> Self;

    fn sub_assign(&mut self, rhs: &Self) {
        self.add_assign(&rhs.neg());
    }

    fn neg(&self) -> Self {
        self.scale(&-Rational::one())
    }

    /// The element `s * 1` of the same ring as `self`.
    fn embed(&self, s: &Rational) -> Self;

    /// Parses the textual form produced by `Display`, in the ring of `like`.
    fn parse_like(like: &Self, s: &str) -> Result<Self>;
}

impl Coeff for Rational {
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }

    fn add_assign(&mut self, rhs: &Self) {
        *self += rhs;
    }

    fn sub_assign(&mut self, rhs: &Self) {
        *self -= rhs;
    }

    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }

    fn scale(&self, s: &Rational) -> Self {
        self * s
    }

    fn neg(&self) -> Self {
        -self
    }

    fn embed(&self, s: &Rational) -> Self {
        s.clone()
    }

    fn parse_like(_: &Self, s: &str) -> Result<Self> {
        parse_rational(s)
    }
}

/// Element of `Q[q]/(q^{2(r+1)} + r)`, stored densely as the coefficients of
/// `q^0 .. q^{2r+1}`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RingElem {
    r: u32,
    coeffs: Vec<Rational>,
}

impl RingElem {
    /// Dimension of the ring over `Q`, `2(r+1)`.
    pub fn degree(r: u32) -> usize {
        2 * (r as usize + 1)
    }

    pub fn zero(r: u32) -> Self {
        assert!(r >= 2, "r must be at least 2");
        Self { r, coeffs: vec![Rational::zero(); Self::degree(r)] }
    }

    pub fn from_rational(r: u32, c: Rational) -> Self {
        let mut z = Self::zero(r);
        z.coeffs[0] = c;
        z
    }

    /// Builds an element from its `q`-coefficients, reducing any entry past
    /// `q^{2r+1}` with `q^{2(r+1)} = -r`.
    pub fn from_coeffs(r: u32, coeffs: &[Rational]) -> Self {
        let mut z = Self::zero(r);
        for (e, c) in coeffs.iter().enumerate() {
            if !Zero::is_zero(c) {
                z.add_assign(&q_power(e as i64, r).scale(c));
            }
        }
        z
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    /// Coefficients of `q^0 .. q^{2r+1}`.
    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    /// Multiplies by `q^e`.
    pub fn shift(&self, e: i64) -> Self {
        self.mul(&q_power(e, self.r))
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(self.r, other.r, "ring elements over different r");
    }
}

/// Reduced representative of `q^e`.
///
/// For `e = m * 2(r+1) + rem` with `0 <= rem < 2(r+1)` this is
/// `(-r)^m q^rem`; negative `m` realizes `q^{-1} = -q^{2r+1}/r`.
pub fn q_power(e: i64, r: u32) -> RingElem {
    let n = RingElem::degree(r) as i64;
    let (m, rem) = e.div_mod_floor(&n);
    let base = int(-(r as i64));
    let scalar = if m >= 0 {
        num_traits::pow(base, m as usize)
    } else {
        num_traits::pow(base.recip(), (-m) as usize)
    };
    let mut z = RingElem::zero(r);
    z.coeffs[rem as usize] = scalar;
    z
}

/// The `q^0` coefficient, provided every other component vanishes.
pub fn rational_part(x: &RingElem) -> Result<Rational> {
    let offending: Vec<(usize, Rational)> = x
        .coeffs
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| !Zero::is_zero(*c))
        .map(|(e, c)| (e, c.clone()))
        .collect();
    if offending.is_empty() {
        Ok(x.coeffs[0].clone())
    } else {
        Err(Error::NotRational {
            value: x.to_string(),
            components: offending.into_iter().map(|(e, _)| e).collect(),
        })
    }
}

impl Coeff for RingElem {
    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    fn add_assign(&mut self, rhs: &Self) {
        self.check_same(rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }

    fn sub_assign(&mut self, rhs: &Self) {
        self.check_same(rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }

    fn mul(&self, rhs: &Self) -> Self {
        self.check_same(rhs);
        let n = self.coeffs.len();
        let minus_r = int(-(self.r as i64));
        let mut out = vec![Rational::zero(); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if Zero::is_zero(a) {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                if Zero::is_zero(b) {
                    continue;
                }
                let p = a * b;
                if i + j < n {
                    out[i + j] += p;
                } else {
                    out[i + j - n] += p * &minus_r;
                }
            }
        }
        Self { r: self.r, coeffs: out }
    }

    fn scale(&self, s: &Rational) -> Self {
        Self { r: self.r, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    fn embed(&self, s: &Rational) -> Self {
        Self::from_rational(self.r, s.clone())
    }

    fn parse_like(like: &Self, s: &str) -> Result<Self> {
        parse_ring_elem(like.r, s)
    }
}

impl fmt::Display for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (e, c) in self.coeffs.iter().enumerate() {
            if Zero::is_zero(c) {
                continue;
            }
            let (sep, mag) = match (first, c.is_negative()) {
                (true, _) => ("", c.clone()),
                (false, true) => (" - ", -c),
                (false, false) => (" + ", c.clone()),
            };
            write!(f, "{sep}{mag}")?;
            match e {
                0 => {}
                1 => write!(f, "*q")?,
                _ => write!(f, "*q^{e}")?,
            }
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl fmt::Debug for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RingElem(r={}; {})", self.r, self)
    }
}

/// Parses the textual form `"3/2 + 1/5*q^4 - q"` for the given `r`.
pub fn parse_ring_elem(r: u32, s: &str) -> Result<RingElem> {
    let bad = || Error::Parse(format!("not a ring element: {s:?}"));
    let mut acc = RingElem::zero(r);
    // Split into signed terms, keeping a leading sign attached.
    let normalized = s.replace(" - ", " + -").replace(' ', "");
    for term in normalized.split('+').filter(|t| !t.is_empty()) {
        let (coeff, power) = match term.split_once('q') {
            None => (term, 0i64),
            Some((c, p)) => {
                let c = c.strip_suffix('*').unwrap_or(c);
                let c = match c {
                    "" => "1",
                    "-" => "-1",
                    other => other,
                };
                let p = match p.strip_prefix('^') {
                    None if p.is_empty() => 1,
                    Some(p) => p.parse::<i64>().map_err(|_| bad())?,
                    None => return Err(bad()),
                };
                (c, p)
            }
        };
        let c = parse_rational(coeff).map_err(|_| bad())?;
        acc.add_assign(&q_power(power, r).scale(&c));
    }
    Ok(acc)
}

impl FromStr for RingElem {
    type Err = Error;

    /// Accepts `"r=<r>: <poly>"`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, body) = s.split_once(':').ok_or_else(|| Error::Parse(s.to_string()))?;
        let r = head
            .trim()
            .strip_prefix("r=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(s.to_string()))?;
        parse_ring_elem(r, body)
    }
}
