//! Closed-form security analytics: utilization, block-rate ratio, catch-up
//! and attack probabilities, and the attacker-share bound.
//!
//! Rational quantities stay exact. The attack probability needs `e^-lambda`,
//! which is evaluated by a fixed-point Taylor series at 120 decimal digits.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Decimal digits carried by the fixed-point exponential.
pub const PRECISION_DIGITS: u32 = 120;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SecurityError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"3"`, `"0.25"`, `"-1.5"` or `"2/3"` into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{whole}{frac}0").parse::<BigInt>().ok()? / 10;
    let value = BigRational::new(digits, BigInt::from(10).pow(frac.len() as u32));
    Some(if neg { -value } else { value })
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Attacker and honest shares of total power.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerSplit {
    pub p: BigRational,
    pub q: BigRational,
}

impl PowerSplit {
    pub fn from_attacker(q: BigRational) -> Self {
        PowerSplit { p: BigRational::one() - &q, q }
    }
}

/// `eta = g_total / (n_fnv * g_fnv + g_total)`.
pub fn utilization(g_total: u64, n_fnv: u64, g_fnv: u64) -> Result<BigRational, SecurityError> {
    let denom = n_fnv as u128 * g_fnv as u128 + g_total as u128;
    if denom == 0 {
        return Err(SecurityError::DegenerateInput("zero total gas"));
    }
    Ok(BigRational::new(BigInt::from(g_total), BigInt::from(denom)))
}

/// `delta = (q / p) / (1 - eta)`.
pub fn rate_ratio(split: &PowerSplit, eta: &BigRational) -> Result<BigRational, SecurityError> {
    if split.p.is_zero() {
        return Err(SecurityError::DegenerateInput("honest share is zero"));
    }
    if *eta >= BigRational::one() {
        return Err(SecurityError::DegenerateInput("utilization must be below 1"));
    }
    Ok(&split.q / &split.p / (BigRational::one() - eta))
}

/// Probability of ever catching up from `z` blocks behind: `delta^z` when
/// `delta < 1` and `z > 0`, else 1.
pub fn catch_up(delta: &BigRational, z: i64) -> BigRational {
    if *delta >= BigRational::one() || z <= 0 {
        BigRational::one()
    } else {
        delta.pow(z as i32)
    }
}

fn scale() -> BigInt {
    BigInt::from(10).pow(PRECISION_DIGITS)
}

/// `e^x * 10^PRECISION_DIGITS` for a nonnegative rational `x`, from the Taylor series.
fn exp_fixed(x: &BigRational) -> BigInt {
    let s = scale();
    // carry extra guard digits through the series
    let guard = BigInt::from(10).pow(20);
    let mut term = &s * &guard;
    let mut sum = term.clone();
    let mut n = 1u64;
    while !term.is_zero() {
        term = term * x.numer() / (x.denom() * BigInt::from(n));
        sum += &term;
        n += 1;
    }
    sum / guard
}

/// `1 - sum_{x=0}^{y} (lambda^x e^-lambda / x!) (1 - delta^(y-x))` with `lambda = delta * y`.
/// The finite sum is exact; only `e^-lambda` is approximated, so `delta = 1`
/// gives exactly 1. The result is clamped to [0, 1].
pub fn attack_probability(delta: &BigRational, y: u32) -> BigRational {
    assert!(!delta.is_negative(), "delta must be nonnegative");
    let lambda = delta * BigRational::from_integer(BigInt::from(y));
    let mut sum = BigRational::zero();
    let mut power = BigRational::one();
    let mut fact = BigInt::one();
    for x in 0..=y {
        if x > 0 {
            power *= &lambda;
            fact *= BigInt::from(x);
        }
        let tail = BigRational::one() - delta.pow((y - x) as i32);
        sum += &power / BigRational::from_integer(fact.clone()) * tail;
    }
    if sum.is_zero() {
        return BigRational::one();
    }
    let s = scale();
    let e_lambda = exp_fixed(&lambda);
    let e_neg = BigRational::new(s.clone() * s.clone(), e_lambda) / BigRational::from_integer(s);
    let p = BigRational::one() - sum * e_neg;
    clamp01(p)
}

fn clamp01(p: BigRational) -> BigRational {
    if p.is_negative() {
        BigRational::zero()
    } else if p > BigRational::one() {
        BigRational::one()
    } else {
        p
    }
}

/// `q_max = 1 - 1/(2 - eta)`.
pub fn max_attacker_share(eta: &BigRational) -> Result<BigRational, SecurityError> {
    if eta.is_negative() || *eta >= BigRational::one() {
        return Err(SecurityError::DegenerateInput("utilization must lie in [0, 1)"));
    }
    Ok(BigRational::one() - (BigRational::from_integer(BigInt::from(2)) - eta).recip())
}

/// `n_points` evenly spaced utilizations `i / n_points` with their share bound.
pub fn balance_curve(n_points: u32) -> Result<Vec<(BigRational, BigRational)>, SecurityError> {
    if n_points < 2 {
        return Err(SecurityError::DegenerateInput("need at least two points"));
    }
    (0..n_points)
        .map(|i| {
            let eta = rat(i as i64, n_points as i64);
            max_attacker_share(&eta).map(|q| (eta, q))
        })
        .collect()
}

/// Decimal rendering with up to `digits` fractional digits, trailing zeros trimmed.
pub fn fmt_decimal(x: &BigRational, digits: u32) -> String {
    let neg = x.is_negative();
    let scaled = (x.abs() * BigRational::from_integer(BigInt::from(10).pow(digits))).round().to_integer();
    let (whole, frac) = scaled.div_rem(&BigInt::from(10).pow(digits));
    let mut frac = format!("{:0>width$}", frac.to_string(), width = digits as usize);
    while frac.ends_with('0') {
        frac.pop();
    }
    let sign = if neg && !(whole.is_zero() && frac.is_empty()) { "-" } else { "" };
    if frac.is_empty() {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{frac}")
    }
}

/// `eta,q_max` rows.
pub fn balance_curve_csv(n_points: u32) -> Result<String, SecurityError> {
    let mut out = String::from("eta,q_max\n");
    for (eta, q) in balance_curve(n_points)? {
        out.push_str(&format!("{},{}\n", fmt_decimal(&eta, 12), fmt_decimal(&q, 12)));
    }
    Ok(out)
}

/// `delta,y,p_attack` rows for every pair.
pub fn attack_table_csv(deltas: &[BigRational], ys: &[u32]) -> String {
    let mut out = String::from("delta,y,p_attack\n");
    for d in deltas {
        for y in ys {
            let p = attack_probability(d, *y);
            out.push_str(&format!("{},{},{:.6e}\n", fmt_decimal(d, 12), y, to_f64(&p)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    /// |a - b| < 10^-digits
    fn close(a: &BigRational, b: &str, digits: u32) -> bool {
        let diff = (a - dec(b)).abs();
        diff < BigRational::new(BigInt::one(), BigInt::from(10).pow(digits))
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(dec("0.25"), rat(1, 4));
        assert_eq!(dec("2/3"), rat(2, 3));
        assert_eq!(dec("-1.5"), rat(-3, 2));
        assert_eq!(dec("7"), rat(7, 1));
        assert_eq!(dec(".5"), rat(1, 2));
        assert!(parse_rational("1/0").is_none());
        assert!(parse_rational("x").is_none());
        assert!(parse_rational(".").is_none());
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(utilization(0, 100, 1).unwrap(), rat(0, 1));
        assert_eq!(utilization(200, 100, 2).unwrap(), rat(1, 2));
        assert_eq!(utilization(1355, 1355, 1).unwrap(), rat(1, 2));
        assert!(utilization(0, 0, 1).is_err());
    }

    #[test]
    fn rate_ratio_examples() {
        let half = PowerSplit::from_attacker(rat(1, 2));
        assert_eq!(rate_ratio(&half, &rat(0, 1)).unwrap(), rat(1, 1));
        assert_eq!(rate_ratio(&PowerSplit::from_attacker(rat(0, 1)), &rat(1, 3)).unwrap(), rat(0, 1));
        assert_eq!(rate_ratio(&PowerSplit::from_attacker(rat(1, 4)), &rat(1, 2)).unwrap(), rat(2, 3));
        assert!(rate_ratio(&PowerSplit::from_attacker(rat(1, 1)), &rat(0, 1)).is_err());
        assert!(rate_ratio(&half, &rat(1, 1)).is_err());
    }

    #[test]
    fn catch_up_examples() {
        assert_eq!(catch_up(&rat(1, 2), 2), rat(1, 4));
        assert_eq!(catch_up(&rat(3, 2), 5), rat(1, 1));
        assert_eq!(catch_up(&rat(1, 2), 0), rat(1, 1));
    }

    #[test]
    fn exp_series() {
        // e to 40 digits
        let e = BigRational::new(exp_fixed(&rat(1, 1)), scale());
        assert!(close(&e, "2.718281828459045235360287471352662497757", 38));
    }

    #[test]
    fn attack_probability_anchors() {
        for y in [1, 6, 30] {
            assert_eq!(attack_probability(&rat(1, 1), y), rat(1, 1));
        }
        assert!(to_f64(&attack_probability(&rat(1, 1_000_000), 6)) < 1e-20);
        assert_eq!(attack_probability(&rat(0, 1), 6), rat(0, 1));
    }

    #[test]
    fn attack_probability_oracle_values() {
        // mpmath at 80 digits
        let cases = [
            ("0.5", 6, "0.2237884872272712139876896510057556137014"),
            ("0.5", 12, "0.06555623481808730477704262179951006937486"),
            ("0.25", 10, "0.001066952797483445237564896681027052102907"),
            ("0.9", 30, "0.7115833807086283605591429296010794838923"),
            ("0.9", 1, "0.9593430340259400888116545760354374012166"),
        ];
        for (d, y, want) in cases {
            assert!(close(&attack_probability(&dec(d), y), want, 38), "{d} {y}");
        }
        let tiny = attack_probability(&dec("0.1"), 30);
        assert!(close(&tiny, "0.0000000000000000002958748626965267622070368668395739762209", 55));
    }

    #[test]
    fn attack_probability_decays_in_y() {
        for i in 1..=9 {
            let d = rat(i, 10);
            let mut prev = attack_probability(&d, 1);
            for y in 2..=30 {
                let p = attack_probability(&d, y);
                assert!(p < prev, "delta {i}/10 y {y}");
                prev = p;
            }
        }
    }

    #[test]
    fn share_bound_anchors() {
        assert_eq!(max_attacker_share(&rat(0, 1)).unwrap(), rat(1, 2));
        assert_eq!(max_attacker_share(&rat(1, 2)).unwrap(), rat(1, 3));
        assert_eq!(max_attacker_share(&rat(2, 3)).unwrap(), rat(1, 4));
        assert!(max_attacker_share(&rat(1, 1)).is_err());
    }

    #[test]
    fn balance_curve_shape() {
        let c = balance_curve(100).unwrap();
        assert_eq!(c[0], (rat(0, 1), rat(1, 2)));
        assert_eq!(c[50], (rat(1, 2), rat(1, 3)));
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(to_f64(&c[99].1) < 0.01);
        let csv = balance_curve_csv(100).unwrap();
        assert!(csv.contains("\n0.5,0.333333333333\n"));
        assert!(balance_curve(1).is_err());
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(fmt_decimal(&rat(1, 3), 4), "0.3333");
        assert_eq!(fmt_decimal(&rat(1, 2), 4), "0.5");
        assert_eq!(fmt_decimal(&rat(-5, 2), 2), "-2.5");
        assert_eq!(fmt_decimal(&rat(3, 1), 2), "3");
    }
}
