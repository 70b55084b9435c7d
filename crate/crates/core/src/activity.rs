//! Distribution of the number of active users, its truncation window, and the
//! change-of-measure penalty added to both error probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{ln_gamma_unchecked, reg_gamma_upper};

/// Law of the random number of active users `Ka`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivityModel {
    /// `Ka ~ Pois(mean)`.
    Poisson {
        /// Expected number of active users.
        mean: f64,
    },
    /// `Ka` fixed and equal to `ka`.
    Deterministic {
        /// Number of active users.
        ka: u64,
    },
    /// Arbitrary PMF given as `(k, P[Ka = k])` pairs.
    Explicit {
        /// PMF entries; missing values of `k` have probability zero.
        pmf: Vec<(u64, f64)>,
    },
}

impl ActivityModel {
    /// Checks the invariants of the model.
    pub fn validate(&self) -> Result<()> {
        match self {
            ActivityModel::Poisson { mean } => {
                if !(*mean > 0.0) || !mean.is_finite() {
                    return Err(Error::Config(format!("poisson mean must be positive, got {mean}")));
                }
            }
            ActivityModel::Deterministic { .. } => {}
            ActivityModel::Explicit { pmf } => {
                if pmf.is_empty() {
                    return Err(Error::Config("explicit pmf has no entries".into()));
                }
                let mut total = 0.0;
                for &(k, p) in pmf {
                    if !(p >= 0.0) || !p.is_finite() {
                        return Err(Error::Config(format!("explicit pmf entry P[{k}] = {p} is invalid")));
                    }
                    total += p;
                }
                if total > 1.0 + 1e-12 {
                    return Err(Error::Config(format!("explicit pmf sums to {total} > 1")));
                }
            }
        }
        Ok(())
    }

    /// `P[Ka = k]`; the Poisson case is evaluated in the log domain.
    pub fn pmf(&self, k: u64) -> f64 {
        match self {
            ActivityModel::Poisson { mean } => {
                let kf = k as f64;
                if k == 0 {
                    return (-mean).exp();
                }
                (kf * mean.ln() - mean - ln_gamma_unchecked(kf + 1.0)).exp()
            }
            ActivityModel::Deterministic { ka } => {
                if k == *ka {
                    1.0
                } else {
                    0.0
                }
            }
            ActivityModel::Explicit { pmf } => pmf.iter().filter(|(kk, _)| *kk == k).map(|(_, p)| *p).sum(),
        }
    }

    /// `E[Ka]` over the full (untruncated) support.
    pub fn mean(&self) -> f64 {
        match self {
            ActivityModel::Poisson { mean } => *mean,
            ActivityModel::Deterministic { ka } => *ka as f64,
            ActivityModel::Explicit { pmf } => pmf.iter().map(|(k, p)| *k as f64 * p).sum(),
        }
    }

    /// Largest `k` that needs to be scanned to see all but a negligible part of the mass.
    fn support_limit(&self) -> u64 {
        match self {
            ActivityModel::Poisson { mean } => (mean + 40.0 * mean.sqrt() + 60.0).ceil() as u64,
            ActivityModel::Deterministic { ka } => *ka,
            ActivityModel::Explicit { pmf } => pmf.iter().map(|(k, _)| *k).max().unwrap_or(0),
        }
    }

    /// Total probability mass of the model (1 unless an explicit PMF is deficient).
    fn total_mass(&self) -> f64 {
        match self {
            ActivityModel::Explicit { pmf } => pmf.iter().map(|(_, p)| *p).sum(),
            _ => 1.0,
        }
    }

    /// Smallest `k` with the largest probability.
    pub fn mode(&self) -> u64 {
        let lim = self.support_limit();
        let mut best = 0;
        let mut best_p = -1.0;
        for k in 0..=lim {
            let p = self.pmf(k);
            if p > best_p {
                best_p = p;
                best = k;
            }
        }
        best
    }
}

/// Window `[Kℓ, Ku]` of activity values kept by the bound, with the mass left outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationWindow {
    /// Lower limit `Kℓ`.
    pub k_lower: u64,
    /// Upper limit `Ku`.
    pub k_upper: u64,
    /// `P[Ka ∉ [Kℓ, Ku]]`.
    pub tail_mass: f64,
}

impl TruncationWindow {
    /// Builds a window with the tail mass computed from the model.
    pub fn new(model: &ActivityModel, k_lower: u64, k_upper: u64) -> Result<Self> {
        if k_lower > k_upper {
            return Err(Error::Config(format!("window lower limit {k_lower} exceeds upper limit {k_upper}")));
        }
        Ok(Self { k_lower, k_upper, tail_mass: tail_mass(model, k_lower, k_upper) })
    }

    /// Iterator over `Kℓ..=Ku`.
    pub fn range(&self) -> std::ops::RangeInclusive<u64> {
        self.k_lower..=self.k_upper
    }

    /// Number of integers in the window.
    pub fn len(&self) -> usize {
        (self.k_upper - self.k_lower + 1) as usize
    }

    /// Always false; a window holds at least one value.
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `P[Ka ∉ [lo, hi]]` summed from the smallest terms upwards.
fn tail_mass(model: &ActivityModel, lo: u64, hi: u64) -> f64 {
    let lim = model.support_limit().max(hi);
    let mut left = 0.0;
    for k in 0..lo {
        left += model.pmf(k);
    }
    let mut right = 0.0;
    let mut k = lim;
    while k > hi {
        right += model.pmf(k);
        k -= 1;
    }
    let missing = (1.0 - model.total_mass()).max(0.0);
    left + right + missing
}

/// Minimal-width window whose outside mass does not exceed `threshold`.
///
/// Ties between windows of equal width are broken towards the smallest `Kℓ`.
pub fn truncation_bounds(model: &ActivityModel, threshold: f64) -> Result<TruncationWindow> {
    model.validate()?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("truncation threshold must lie in (0,1), got {threshold}")));
    }
    if let ActivityModel::Deterministic { ka } = model {
        return Ok(TruncationWindow { k_lower: *ka, k_upper: *ka, tail_mass: 0.0 });
    }
    let lim = model.support_limit() as usize;
    let pmf: Vec<f64> = (0..=lim as u64).map(|k| model.pmf(k)).collect();
    let missing = (1.0 - model.total_mass()).max(0.0);
    // prefix[k] = Σ_{j<k} pmf[j]; suffix[k] = Σ_{j≥k} pmf[j], both accumulated from the small end.
    let mut prefix = vec![0.0; lim + 2];
    for k in 0..=lim {
        prefix[k + 1] = prefix[k] + pmf[k];
    }
    let mut suffix = vec![0.0; lim + 2];
    for k in (0..=lim).rev() {
        suffix[k] = suffix[k + 1] + pmf[k];
    }
    for width in 0..=lim {
        for (lo, below) in prefix.iter().enumerate().take(lim - width + 1) {
            let hi = lo + width;
            let tail = below + suffix[hi + 1] + missing;
            if tail <= threshold {
                return TruncationWindow::new(model, lo as u64, hi as u64);
            }
        }
    }
    Err(Error::Config(format!("no window reaches covered mass 1 - {threshold}")))
}

/// `E[C(Ka,2)] / M` over the window, which upper-bounds the collision part of the penalty.
pub fn collision_term(model: &ActivityModel, window: &TruncationWindow, log_m: f64) -> f64 {
    let s: f64 = window
        .range()
        .map(|k| {
            let kf = k as f64;
            model.pmf(k) * kf * (kf - 1.0) / 2.0
        })
        .sum();
    if s <= 0.0 {
        0.0
    } else {
        (s.ln() - log_m).exp()
    }
}

/// Components of the change-of-measure penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ptilde {
    /// Mass outside the truncation window.
    pub tail: f64,
    /// Collision bound `E[C(Ka,2)]/M`.
    pub collision: f64,
    /// Power-violation term `E[Ka] Γ(n, nP/P′)/Γ(n)`.
    pub power: f64,
    /// Sum of the three, clamped to `[0, 1]`.
    pub value: f64,
    /// Whether the clamp was active.
    pub clamped: bool,
}

/// Power-violation term `E[Ka] Γ(n, nP/P′)/Γ(n)`.
pub fn power_violation(model: &ActivityModel, n: f64, p: f64, p_prime: f64) -> Result<f64> {
    if !(p_prime < p) {
        return Err(Error::Config(format!("codebook power P′ = {p_prime} must be below P = {p}")));
    }
    if !(p_prime > 0.0) {
        return Err(Error::Config(format!("codebook power P′ = {p_prime} must be positive")));
    }
    let mean = model.mean();
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok(mean * reg_gamma_upper(n, n * p / p_prime)?)
}

/// Change-of-measure penalty `p̃ = tail + collision + power`, clamped to `[0,1]`.
pub fn ptilde(
    model: &ActivityModel,
    window: &TruncationWindow,
    log_m: f64,
    n: f64,
    p: f64,
    p_prime: f64,
) -> Result<Ptilde> {
    let power = power_violation(model, n, p, p_prime)?;
    Ok(assemble(window.tail_mass, collision_term(model, window, log_m), power))
}

/// Penalty without the power-violation term (the `P → ∞` limit).
pub fn pbar(model: &ActivityModel, window: &TruncationWindow, log_m: f64) -> Ptilde {
    assemble(window.tail_mass, collision_term(model, window, log_m), 0.0)
}

fn assemble(tail: f64, collision: f64, power: f64) -> Ptilde {
    let raw = tail + collision + power;
    Ptilde { tail, collision, power, value: raw.clamp(0.0, 1.0), clamped: raw > 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_pmf_values() {
        let m = ActivityModel::Poisson { mean: 1.0 };
        assert!((m.pmf(0) - (-1.0f64).exp()).abs() < 1e-16);
        let d = ActivityModel::Deterministic { ka: 25 };
        assert_eq!(d.pmf(25), 1.0);
        assert_eq!(d.pmf(24), 0.0);
    }

    #[test]
    fn deterministic_window() {
        let d = ActivityModel::Deterministic { ka: 25 };
        let w = truncation_bounds(&d, 1e-9).unwrap();
        assert_eq!((w.k_lower, w.k_upper, w.tail_mass), (25, 25, 0.0));
    }

    #[test]
    fn invalid_models() {
        assert!(ActivityModel::Poisson { mean: 0.0 }.validate().is_err());
        assert!(ActivityModel::Explicit { pmf: vec![(0, 0.7), (1, 0.7)] }.validate().is_err());
        assert!(truncation_bounds(&ActivityModel::Poisson { mean: 3.0 }, 1.0).is_err());
        let deficient = ActivityModel::Explicit { pmf: vec![(0, 0.3), (1, 0.3)] };
        assert!(truncation_bounds(&deficient, 1e-3).is_err());
    }

    #[test]
    fn ptilde_rejects_pprime_above_p() {
        let d = ActivityModel::Deterministic { ka: 2 };
        let w = truncation_bounds(&d, 1e-9).unwrap();
        assert!(ptilde(&d, &w, 10.0, 100.0, 1.0, 1.0).is_err());
        assert!(ptilde(&d, &w, 10.0, 100.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn zero_users_zero_penalty() {
        let d = ActivityModel::Deterministic { ka: 0 };
        let w = truncation_bounds(&d, 1e-9).unwrap();
        let pt = ptilde(&d, &w, 128.0 * std::f64::consts::LN_2, 19200.0, 1.0, 0.5).unwrap();
        assert_eq!(pt.value, 0.0);
    }
}
