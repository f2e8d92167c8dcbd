//! Exact rational helpers built on `num_rational::BigRational`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational number used throughout the game computations.
pub type Q = BigRational;

pub fn int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn ratio(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_f64(q: &Q) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Largest integer not exceeding `q`.
pub fn floor_i64(q: &Q) -> i64 {
    q.floor().to_integer().to_i64().expect("floor fits in i64")
}

/// Parses `"3/8"`, `"0.375"`, `"-2"` or `"1e-3"` into an exact rational.
pub fn parse(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Parameter(format!("cannot parse rational from {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Parameter(format!("zero denominator in {s:?}")));
        }
        return Ok(Q::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let joined = format!("{whole}{frac}");
    let num: BigInt = if joined.is_empty() {
        BigInt::zero()
    } else {
        joined.parse().map_err(|_| bad())?
    };
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut q = if scale >= 0 {
        Q::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        q = -q;
    }
    Ok(q)
}

/// Converts a float through its shortest decimal representation, so `0.1`
/// becomes exactly `1/10` rather than the nearest binary fraction.
pub fn from_f64_decimal(x: f64) -> Result<Q> {
    if !x.is_finite() {
        return Err(Error::Parameter(format!("non-finite number {x}")));
    }
    parse(&format!("{x:?}"))
}

/// Exact `k`-th root of a non-negative rational, when it is rational.
pub fn exact_root(q: &Q, k: u32) -> Option<Q> {
    if q.is_negative() {
        return None;
    }
    if k == 1 {
        return Some(q.clone());
    }
    let n = q.numer();
    let d = q.denom();
    let rn = n.nth_root(k);
    let rd = d.nth_root(k);
    if num_traits::pow(rn.clone(), k as usize) == *n && num_traits::pow(rd.clone(), k as usize) == *d {
        Some(Q::new(rn, rd))
    } else {
        None
    }
}

pub fn pow(q: &Q, k: u32) -> Q {
    num_traits::pow(q.clone(), k as usize)
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(qs: impl IntoIterator<Item = &'a Q>) -> BigInt {
    qs.into_iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()))
}

/// Formats as `a/b`, or as an integer when the denominator is one.
pub fn display(q: &Q) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}
