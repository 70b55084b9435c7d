//! Bound `ξ(Ka, Ka′)` on the probability that the activity estimator returns
//! `Ka′` when `Ka` users are active, for maximum-likelihood and energy-based
//! estimators, at finite codebook power and in the infinite-power limit.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::activity::TruncationWindow;
use crate::error::{Error, Result};
use crate::specfun::reg_gamma_pair;

/// Metric used to estimate the number of active users from the channel output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Maximum-likelihood metric `ln p(y | K)`.
    Ml,
    /// Energy metric `-| ‖y‖² - n(1 + K P′) |`.
    Energy,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(EstimatorKind::Ml),
            "energy" => Ok(EstimatorKind::Energy),
            other => Err(Error::Config(format!("unknown estimator '{other}' (expected ml or energy)"))),
        }
    }
}

/// Arguments of `ξ` that stay fixed while `Ka` and `Ka′` vary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiContext {
    /// Blocklength `n`.
    pub n: f64,
    /// Codebook power `P′`.
    pub p_prime: f64,
    /// Candidate range `[Kℓ, Ku]` of the estimator.
    pub window: TruncationWindow,
}

/// Threshold `ζ(K, Ka, Ka′)` on `‖y0‖²` normalized by the variance of `y0`, at finite `P′`.
pub fn zeta(kind: EstimatorKind, k: u64, ka: u64, ka_prime: u64, n: f64, p_prime: f64) -> Result<f64> {
    if k == ka_prime {
        return Err(Error::Domain("zeta is undefined for K = Ka′".into()));
    }
    let (kf, kaf, kpf) = (k as f64, ka as f64, ka_prime as f64);
    Ok(match kind {
        EstimatorKind::Ml => {
            let vk = 1.0 + kf * p_prime;
            let vp = 1.0 + kpf * p_prime;
            // ln(vk/vp) / (1/vp - 1/vk) written to avoid cancellation for close variances.
            let ratio = ((kf - kpf) * p_prime / vp).ln_1p();
            let gap = (kf - kpf) * p_prime / (vp * vk);
            n * ratio / (1.0 + kaf * p_prime) / gap
        }
        EstimatorKind::Energy => n * (1.0 + 0.5 * (kf + kpf) * p_prime) / (1.0 + kaf * p_prime),
    })
}

/// Infinite-power limit of [`zeta`].
pub fn zeta_asymptotic(kind: EstimatorKind, k: u64, ka: u64, ka_prime: u64, n: f64) -> Result<f64> {
    if k == ka_prime {
        return Err(Error::Domain("zeta is undefined for K = Ka′".into()));
    }
    if ka == 0 {
        return Err(Error::Domain("asymptotic zeta requires Ka >= 1".into()));
    }
    let (kf, kaf, kpf) = (k as f64, ka as f64, ka_prime as f64);
    Ok(match kind {
        EstimatorKind::Ml => {
            if ka_prime == 0 || k == 0 {
                // Ka′·ln(K/Ka′) and K·ln(K/Ka′) both vanish in the limit, so the threshold is zero.
                return Ok(0.0);
            }
            let ratio = ((kf - kpf) / kpf).ln_1p();
            let gap = (kf - kpf) / (kpf * kf);
            n * ratio / kaf / gap
        }
        EstimatorKind::Energy => n * (kf + kpf) / (2.0 * kaf),
    })
}

/// Pairwise term of the minimum: `Q(n, ζ)` for `K < Ka′` and `P(n, ζ)` for `K > Ka′`.
fn pairwise(k: u64, ka_prime: u64, n: f64, z: f64) -> Result<f64> {
    if z.is_infinite() {
        return Ok(if k < ka_prime { 0.0 } else { 1.0 });
    }
    let (p, q) = reg_gamma_pair(n, z.max(0.0))?;
    Ok(if k < ka_prime { q } else { p })
}

fn check_ka_prime(ka_prime: u64, window: &TruncationWindow) -> Result<()> {
    if ka_prime < window.k_lower || ka_prime > window.k_upper {
        return Err(Error::Domain(format!(
            "Ka′ = {ka_prime} outside window [{}, {}]",
            window.k_lower, window.k_upper
        )));
    }
    Ok(())
}

/// Candidate `K` attaining the minimum together with the minimum itself; `None` for a singleton window.
///
/// `Q(n, ·)` decreases and `P(n, ·)` increases, so on each side of `Ka′` only the
/// extreme threshold needs an incomplete-gamma evaluation.
pub fn xi_argmin(kind: EstimatorKind, ka: u64, ka_prime: u64, ctx: &XiContext) -> Result<Option<(u64, f64)>> {
    check_ka_prime(ka_prime, &ctx.window)?;
    let mut below: Option<(u64, f64)> = None;
    let mut above: Option<(u64, f64)> = None;
    for k in ctx.window.range() {
        if k == ka_prime {
            continue;
        }
        let z = zeta(kind, k, ka, ka_prime, ctx.n, ctx.p_prime)?;
        if k < ka_prime {
            if below.is_none_or(|(_, b)| z > b) {
                below = Some((k, z));
            }
        } else if above.is_none_or(|(_, b)| z < b) {
            above = Some((k, z));
        }
    }
    let mut best: Option<(u64, f64)> = None;
    for (k, z) in below.into_iter().chain(above) {
        let v = pairwise(k, ka_prime, ctx.n, z)?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((k, v));
        }
    }
    Ok(best)
}

/// `ξ(Ka, Ka′)` at finite `P′`; equals 1 when the window holds a single value.
pub fn xi(kind: EstimatorKind, ka: u64, ka_prime: u64, ctx: &XiContext) -> Result<f64> {
    Ok(xi_argmin(kind, ka, ka_prime, ctx)?.map_or(1.0, |(_, v)| v))
}

/// `ξ(Ka, Ka′)` in the infinite-power limit; equals 1 when the window holds a single value.
pub fn xi_asymptotic(kind: EstimatorKind, ka: u64, ka_prime: u64, window: &TruncationWindow, n: f64) -> Result<f64> {
    check_ka_prime(ka_prime, window)?;
    let mut best = 1.0f64;
    for k in window.range() {
        if k == ka_prime {
            continue;
        }
        let z = zeta_asymptotic(kind, k, ka, ka_prime, n)?;
        best = best.min(pairwise(k, ka_prime, n, z)?);
    }
    Ok(best)
}

/// Dense table of `ξ(Ka, Ka′)` for every pair in the window.
#[derive(Debug, Clone)]
pub struct XiTable {
    k_lower: u64,
    len: usize,
    values: Vec<f64>,
}

impl XiTable {
    /// Finite-power table.
    pub fn finite(kind: EstimatorKind, ctx: &XiContext) -> Result<Self> {
        let w = ctx.window;
        let len = w.len();
        let mut values = Vec::with_capacity(len * len);
        for ka in w.range() {
            for kp in w.range() {
                values.push(xi(kind, ka, kp, ctx)?);
            }
        }
        Ok(Self { k_lower: w.k_lower, len, values })
    }

    /// Infinite-power table; a row with `Ka = 0` takes its limiting value directly.
    pub fn asymptotic(kind: EstimatorKind, window: &TruncationWindow, n: f64) -> Result<Self> {
        let len = window.len();
        let mut values = Vec::with_capacity(len * len);
        for ka in window.range() {
            for kp in window.range() {
                let v = if ka == 0 {
                    // With no active user the output energy stays finite while every candidate
                    // variance grows, so only candidates below Ka′ can be preferred.
                    if kp > window.k_lower {
                        0.0
                    } else {
                        1.0
                    }
                } else {
                    xi_asymptotic(kind, ka, kp, window, n)?
                };
                values.push(v);
            }
        }
        Ok(Self { k_lower: window.k_lower, len, values })
    }

    /// Looks up `ξ(ka, ka_prime)`; both must lie in the window.
    pub fn get(&self, ka: u64, ka_prime: u64) -> f64 {
        let i = (ka - self.k_lower) as usize;
        let j = (ka_prime - self.k_lower) as usize;
        self.values[i * self.len + j]
    }
}

/// Estimator metric `m(y, K)` expressed through the energy `‖y‖²`.
pub fn metric(kind: EstimatorKind, energy: f64, k: u64, n: f64, p_prime: f64) -> f64 {
    let v = 1.0 + k as f64 * p_prime;
    match kind {
        EstimatorKind::Ml => -n * (std::f64::consts::PI * v).ln() - energy / v,
        EstimatorKind::Energy => -(energy - n * v).abs(),
    }
}

/// Monte-Carlo estimate of `P[m(y0, Ka′) > m(y0, K)]` with `y0 ~ CN(0, (1 + Ka P′) I_n)`.
///
/// Returns the estimate and its binomial standard error.
#[allow(clippy::too_many_arguments)]
pub fn pairwise_mc(
    kind: EstimatorKind,
    k: u64,
    ka: u64,
    ka_prime: u64,
    n: f64,
    p_prime: f64,
    samples: u64,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // ‖y0‖² is (1 + Ka P′) times a Gamma(n, 1) variable.
    let gamma = Gamma::new(n, 1.0).expect("positive shape");
    let var = 1.0 + ka as f64 * p_prime;
    let mut hits = 0u64;
    for _ in 0..samples {
        let e = var * gamma.sample(&mut rng);
        if metric(kind, e, ka_prime, n, p_prime) > metric(kind, e, k, n, p_prime) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}
