//! Special functions evaluated in a numerically stable way for large arguments.
//!
//! The bounds need the regularized incomplete Gamma functions at shapes equal
//! to the blocklength (tens of thousands). `Γ(n)` itself overflows there, so
//! the regularized values are computed from a scaled prefix
//! `x^a e^{-x} / Γ(a)` written in terms of `ln(1+u) - u` and the Stirling
//! remainder, followed by a power series (`x < a + 1`) or a Lentz continued
//! fraction (`x ≥ a + 1`).

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const EPS: f64 = 1e-17;
const MAX_ITER: usize = 200_000;

/// A nonnegative quantity stored as its natural logarithm.
///
/// `f64::NEG_INFINITY` encodes zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDomainValue {
    /// Natural logarithm of the represented quantity.
    pub log_value: f64,
}

impl LogDomainValue {
    /// Wraps a logarithm.
    pub fn from_log(log_value: f64) -> Self {
        Self { log_value }
    }

    /// Logarithm of zero.
    pub fn zero() -> Self {
        Self { log_value: f64::NEG_INFINITY }
    }

    /// The value read as a probability, `min(1, exp(log_value))`.
    pub fn as_probability(&self) -> f64 {
        if self.log_value >= 0.0 {
            1.0
        } else {
            self.log_value.exp()
        }
    }
}

/// Stirling remainder `ln Γ(x) - (x - 1/2) ln x + x - ln √(2π)`.
fn stirling_remainder(x: f64) -> f64 {
    if x >= 10.0 {
        let r = 1.0 / x;
        let r2 = r * r;
        // Asymptotic series with Bernoulli-number coefficients.
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0
                        - r2 * (1.0 / 1188.0
                            - r2 * (691.0 / 360_360.0
                                - r2 * (1.0 / 156.0 - r2 * (3617.0 / 122_400.0))))))))
    } else {
        ln_gamma_small(x) - (x - 0.5) * x.ln() + x - HALF_LN_2PI
    }
}

/// `ln Γ(x)` for `0 < x < 10` by upward recurrence into the Stirling range.
fn ln_gamma_small(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut y = x;
    let mut prod = 1.0;
    while y < 10.0 {
        prod *= y;
        y += 1.0;
        if prod > 1e280 {
            shift += prod.ln();
            prod = 1.0;
        }
    }
    (y - 0.5) * y.ln() - y + HALF_LN_2PI + stirling_remainder(y) - prod.ln() - shift
}

/// Natural logarithm of the Gamma function for `x > 0`.
///
/// ```
/// use urabound::specfun::log_gamma;
/// assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
/// let half = log_gamma(0.5).unwrap();
/// assert!((half - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-14);
/// ```
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

/// `ln Γ(x)` without argument validation; `x` must be positive and finite.
pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        0.0
    } else if x >= 10.0 {
        (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_remainder(x)
    } else {
        ln_gamma_small(x)
    }
}

/// `ln k!` for a nonnegative integer `k`.
pub fn log_factorial(k: u64) -> f64 {
    ln_gamma_unchecked(k as f64 + 1.0)
}

/// `ln(1+u) - u`, accurate also for small `|u|`.
fn log1pmx(u: f64) -> f64 {
    if u.abs() < 0.25 {
        // -u²/2 + u³/3 - u⁴/4 + ...
        let mut term = u * u;
        let mut sum = 0.0;
        let mut k = 2.0;
        let mut sign = -1.0;
        loop {
            let add = sign * term / k;
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
            term *= u;
            k += 1.0;
            sign = -sign;
            if k > 200.0 {
                break;
            }
        }
        sum
    } else {
        u.ln_1p() - u
    }
}

/// Logarithm of `x^a e^{-x} / Γ(a)`.
fn ln_gamma_prefix(a: f64, x: f64) -> f64 {
    if a < 10.0 {
        a * x.ln() - x - ln_gamma_unchecked(a)
    } else {
        let u = (x - a) / a;
        a * log1pmx(u) + 0.5 * a.ln() - HALF_LN_2PI - stirling_remainder(a)
    }
}

/// Power series `Σ_k x^k / ((a+1)…(a+k))`, so that `P(a,x) = prefix · sum / a`.
fn lower_series(a: f64, x: f64) -> Result<f64> {
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut k = 1.0;
    for _ in 0..MAX_ITER {
        term *= x / (a + k);
        sum += term;
        if term < EPS * sum {
            return Ok(sum);
        }
        k += 1.0;
    }
    Err(Error::Numerical(format!("incomplete gamma series did not converge (a={a}, x={x})")))
}

/// Continued fraction for `Q(a,x) / prefix` evaluated with the modified Lentz method.
fn upper_fraction(a: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::Numerical(format!("incomplete gamma continued fraction did not converge (a={a}, x={x})")))
}

fn check_gamma_args(shape: f64, x: f64) -> Result<()> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::Domain(format!("incomplete gamma requires shape > 0, got {shape}")));
    }
    if !(x >= 0.0) || x.is_nan() {
        return Err(Error::Domain(format!("incomplete gamma requires x >= 0, got {x}")));
    }
    Ok(())
}

/// Logarithms of the regularized lower and upper incomplete Gamma functions.
///
/// Returns `(ln P(a,x), ln Q(a,x))`.
pub fn ln_reg_gamma_pair(shape: f64, x: f64) -> Result<(f64, f64)> {
    check_gamma_args(shape, x)?;
    if x == 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    if x.is_infinite() {
        return Ok((0.0, f64::NEG_INFINITY));
    }
    let ln_pre = ln_gamma_prefix(shape, x);
    if x < shape + 1.0 {
        let ln_p = ln_pre + lower_series(shape, x)?.ln() - shape.ln();
        let p = ln_p.exp();
        let ln_q = if p < 0.5 { (-p).ln_1p() } else { (-p.min(1.0)).ln_1p() };
        Ok((ln_p.min(0.0), ln_q))
    } else {
        let ln_q = ln_pre + upper_fraction(shape, x)?.ln();
        let q = ln_q.exp();
        Ok(((-q.min(1.0)).ln_1p(), ln_q.min(0.0)))
    }
}

/// Regularized lower and upper incomplete Gamma functions `(P(a,x), Q(a,x))`.
pub fn reg_gamma_pair(shape: f64, x: f64) -> Result<(f64, f64)> {
    check_gamma_args(shape, x)?;
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let ln_pre = ln_gamma_prefix(shape, x);
    if x < shape + 1.0 {
        let p = (ln_pre + lower_series(shape, x)?.ln() - shape.ln()).exp().min(1.0);
        Ok((p, 1.0 - p))
    } else {
        let q = (ln_pre + upper_fraction(shape, x)?.ln()).exp().min(1.0);
        Ok((1.0 - q, q))
    }
}

/// Regularized upper incomplete Gamma function `Γ(a,x)/Γ(a)`.
///
/// ```
/// use urabound::specfun::reg_gamma_upper;
/// assert_eq!(reg_gamma_upper(5.0, 0.0).unwrap(), 1.0);
/// assert!((reg_gamma_upper(1.0, 2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
/// ```
pub fn reg_gamma_upper(shape: f64, x: f64) -> Result<f64> {
    reg_gamma_pair(shape, x).map(|(_, q)| q)
}

/// Regularized lower incomplete Gamma function `γ(a,x)/Γ(a)`.
///
/// ```
/// use urabound::specfun::reg_gamma_lower;
/// assert_eq!(reg_gamma_lower(3.0, 0.0).unwrap(), 0.0);
/// assert!((reg_gamma_lower(1.0, std::f64::consts::LN_2).unwrap() - 0.5).abs() < 1e-15);
/// ```
pub fn reg_gamma_lower(shape: f64, x: f64) -> Result<f64> {
    reg_gamma_pair(shape, x).map(|(p, _)| p)
}

/// Natural logarithm of the regularized upper incomplete Gamma function.
pub fn ln_reg_gamma_upper(shape: f64, x: f64) -> Result<f64> {
    ln_reg_gamma_pair(shape, x).map(|(_, q)| q)
}

/// Natural logarithm of the regularized lower incomplete Gamma function.
pub fn ln_reg_gamma_lower(shape: f64, x: f64) -> Result<f64> {
    ln_reg_gamma_pair(shape, x).map(|(p, _)| p)
}

/// Smallest `x` with `Q(a, x) ≤ q`, found by safeguarded Newton iteration on `ln Q`.
///
/// Requires `0 < q < 1`.
pub fn inv_reg_gamma_upper(shape: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("inverse incomplete gamma requires 0 < q < 1, got {q}")));
    }
    check_gamma_args(shape, 0.0)?;
    let target = q.ln();
    let f = |x: f64| -> Result<f64> { Ok(ln_reg_gamma_upper(shape, x)? - target) };
    // Bracket the root: ln Q decreases from 0 to -inf.
    let mut lo = 0.0;
    let mut hi = shape.max(1.0);
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("inverse incomplete gamma bracket overflow".into()));
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = f(x)?;
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d ln Q / dx = -prefix / (x Q)
        let ln_q = fx + target;
        let slope = -(ln_gamma_prefix(shape, x) - x.ln() - ln_q).exp();
        let mut next = if slope.is_finite() && slope != 0.0 { x - fx / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(hi);
        }
        x = next;
    }
    Ok(hi)
}

/// Gaussian tail `Q(x) = P[N(0,1) > x]`.
pub fn gaussian_q(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    // erfc(y) = Q(1/2, y²) for y ≥ 0
    let y2 = 0.5 * x * x;
    let (p, q) = reg_gamma_pair(0.5, y2).expect("valid arguments");
    if x >= 0.0 {
        0.5 * q
    } else {
        0.5 * (1.0 + p)
    }
}

/// Which evaluation path [`log_binomial`] used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinomialPath {
    /// Exact value from a sum of logarithms or from `ln Γ` differences.
    Exact,
    /// Upper bound `k ln N - ln k!` for a population supplied only through `ln N`.
    LogUpperBound,
}

/// Argument of [`log_binomial`]: the population either as a number or through its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Population {
    /// Population given directly; must be a nonnegative integer-valued real.
    Value(f64),
    /// Population given by its natural logarithm.
    Log(f64),
}

/// `ln C(N, k)` together with the path taken to compute it.
///
/// An empty set (`k > N` on the exact path) yields `-inf`.
pub fn log_binomial(population: Population, k: u64) -> Result<(f64, BinomialPath)> {
    match population {
        Population::Value(n) => {
            if !(n >= 0.0) || n.fract() != 0.0 {
                return Err(Error::Domain(format!("log_binomial requires integer N >= 0, got {n}")));
            }
            Ok((log_binomial_exact(n, k), BinomialPath::Exact))
        }
        Population::Log(ln_n) => {
            if k == 0 {
                return Ok((0.0, BinomialPath::LogUpperBound));
            }
            Ok((k as f64 * ln_n - log_factorial(k), BinomialPath::LogUpperBound))
        }
    }
}

/// Exact `ln C(N, k)` for integer-valued `N`.
pub fn log_binomial_exact(n: f64, k: u64) -> f64 {
    let kf = k as f64;
    if kf > n {
        return f64::NEG_INFINITY;
    }
    let kk = kf.min(n - kf);
    if kk == 0.0 {
        return 0.0;
    }
    if kk <= 64.0 {
        let mut s = 0.0;
        let mut i = 1.0;
        while i <= kk {
            s += ((n - kk + i) / i).ln();
            i += 1.0;
        }
        s
    } else {
        ln_gamma_unchecked(n + 1.0) - ln_gamma_unchecked(kk + 1.0) - ln_gamma_unchecked(n - kk + 1.0)
    }
}

/// Numerically stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gamma_identities() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-15);
        let v = log_gamma(0.5).unwrap();
        assert!((v - 0.572_364_942_924_700_1).abs() < 1e-14 * 0.58, "{v:e}");
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.0).is_err());
    }

    #[test]
    fn log_gamma_recurrence() {
        let mut x = 1.0;
        while x <= 100.0 {
            let lhs = log_gamma(x + 1.0).unwrap();
            let rhs = x.ln() + log_gamma(x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "x={x}");
            x += 0.37;
        }
    }

    #[test]
    fn gamma_trivial_values() {
        assert_eq!(reg_gamma_upper(5.0, 0.0).unwrap(), 1.0);
        assert!((reg_gamma_upper(1.0, 2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(reg_gamma_lower(3.0, 0.0).unwrap(), 0.0);
        assert!((reg_gamma_lower(1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert!(reg_gamma_upper(0.0, 1.0).is_err());
        assert!(reg_gamma_upper(1.0, -1.0).is_err());
    }

    #[test]
    fn log_domain_matches_linear() {
        for &(a, x) in &[(3.0, 1.0), (100.0, 90.0), (19200.0, 19500.0), (19200.0, 18000.0)] {
            let (p, q) = reg_gamma_pair(a, x).unwrap();
            let (lp, lq) = ln_reg_gamma_pair(a, x).unwrap();
            assert!((lp.exp() - p).abs() < 1e-14);
            assert!((lq.exp() - q).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        for &(a, q) in &[(1.0, 0.3), (19200.0, 1e-6), (19200.0, 0.5), (50.0, 1e-12)] {
            let x = inv_reg_gamma_upper(a, q).unwrap();
            let back = reg_gamma_upper(a, x).unwrap();
            assert!((back.ln() - q.ln()).abs() < 1e-9, "a={a} q={q} back={back}");
        }
    }

    #[test]
    fn gaussian_tail() {
        assert!((gaussian_q(0.0) - 0.5).abs() < 1e-15);
        assert!((gaussian_q(1.0) - 0.158_655_253_931_457_05).abs() < 1e-14);
        assert!((gaussian_q(-1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert_eq!(gaussian_q(f64::INFINITY), 0.0);
    }

    #[test]
    fn binomials() {
        let (v, p) = log_binomial(Population::Value(5.0), 2).unwrap();
        assert!((v - 10f64.ln()).abs() < 1e-15);
        assert_eq!(p, BinomialPath::Exact);
        assert_eq!(log_binomial(Population::Value(7.0), 0).unwrap().0, 0.0);
        assert_eq!(log_binomial(Population::Log(88.0), 0).unwrap().0, 0.0);
        assert_eq!(log_binomial(Population::Value(3.0), 4).unwrap().0, f64::NEG_INFINITY);
        let ln_m = 128.0 * std::f64::consts::LN_2;
        let (v, p) = log_binomial(Population::Log(ln_m), 300).unwrap();
        assert_eq!(p, BinomialPath::LogUpperBound);
        assert!((v - (300.0 * ln_m - log_gamma(301.0).unwrap())).abs() < 1e-9);
        for n in 0..40u64 {
            for k in 0..=n {
                let a = log_binomial_exact(n as f64, k);
                let b = log_binomial_exact(n as f64, n - k);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn logsumexp() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
