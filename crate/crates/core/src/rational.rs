//! Small helpers around [`BigRational`].

use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};

/// Build `num/den` as a big rational. Panics on a zero denominator.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Least common multiple of the denominators of `values` (1 for an empty input).
pub fn common_denominator<'a, I>(values: I) -> BigInt
where
    I: IntoIterator<Item = &'a BigRational>,
{
    values
        .into_iter()
        .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// Nearest `f64` to an exact rational.
pub fn to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Very large numerator or denominator: shift both down before dividing.
    let bits = r.numer().bits().max(r.denom().bits());
    let shift = bits.saturating_sub(900);
    let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
    n / d
}

/// Parse `"p/q"` or `"p"` into a rational.
pub fn parse_ratio(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(BigRational::new(n, d))
        }
        None => s.parse::<BigInt>().ok().map(BigRational::from_integer),
    }
}

/// `"num/den"` in lowest terms, with the sign on the numerator.
pub fn format_ratio(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// A vector of rationals rewritten over one common denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledVector {
    pub scale: BigInt,
    pub values: Vec<BigInt>,
}

impl ScaledVector {
    pub fn new(values: &[BigRational]) -> Self {
        let scale = common_denominator(values);
        let values = values
            .iter()
            .map(|r| r.numer() * (&scale / r.denom()))
            .collect();
        ScaledVector { scale, values }
    }
}

pub fn abs(r: &BigRational) -> BigRational {
    r.abs()
}

/// Multiply a rational by an integer count.
pub fn times(r: &BigRational, k: u64) -> BigRational {
    r * BigRational::from_integer(BigInt::from(k))
}

pub fn max<'a>(values: impl IntoIterator<Item = &'a BigRational>) -> Option<BigRational> {
    values.into_iter().max().cloned()
}

pub fn is_probability(r: &BigRational) -> bool {
    !r.is_negative() && r <= &BigRational::one()
}
