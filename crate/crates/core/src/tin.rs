//! Random-coding bound for treating interference as noise: the tail
//! probability `η(s)` of the generalized information density, its normal
//! approximation, and the assembly of the two error probabilities.
//!
//! Per channel use the information density is a Hermitian form in the
//! standardized pair `(x, z)`, so its sum over `n` uses equals
//! `n ln(1 + sP̄) + λ₊ G₁ + λ₋ G₂` with the eigenvalues `λ±` of that form and
//! independent `G₁, G₂ ~ Gamma(n, 1)`. The uniform variable is integrated out
//! exactly, which leaves `η = E[min(1, (M - Ka) e^{-Σ ı})]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{pbar, ptilde, ActivityModel, TruncationWindow};
use crate::bound_core::{eval_floors, Floors};
use crate::dt_mc::{derive_seed, McConfig, Z95};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, XiContext, XiTable};
use crate::exponent::ln_m_minus;
use crate::search::BoundFamily;
use crate::specfun::gaussian_q;

/// Arguments of `η(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TinParams {
    /// Parameter `s > 0` of the generalized information density.
    pub s: f64,
    /// Blocklength.
    pub n: f64,
    /// `ln M`.
    pub log_m: f64,
    /// Codebook power `P′`.
    pub p_prime: f64,
    /// Active users `Ka`.
    pub ka: u64,
    /// Estimated number of users `Ka′`.
    pub ka_prime: u64,
}

impl TinParams {
    /// Effective signal-to-interference-plus-noise ratio `P̄ = P′/(1 + (Ka - 1)P′)`.
    pub fn p_bar(&self) -> f64 {
        let others = self.ka.saturating_sub(1) as f64;
        self.p_prime / (1.0 + others * self.p_prime)
    }
}

/// Monte-Carlo estimate of `η` with a 95% upper confidence limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    /// Sample mean.
    pub estimate: f64,
    /// Upper confidence limit, clamped to 1.
    pub upper: f64,
    /// Standard error of the mean.
    pub std_error: f64,
}

/// Pairs of `Gamma(n, 1)` draws shared by every evaluation of `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaSampler {
    n: f64,
    draws: Vec<(f64, f64)>,
}

impl EtaSampler {
    /// Draws the shared samples with per-batch seeds.
    pub fn new(n: f64, mc: &McConfig) -> Result<Self> {
        mc.validate()?;
        if !(n >= 1.0) {
            return Err(Error::Domain(format!("blocklength must be at least 1, got {n}")));
        }
        let gamma = Gamma::new(n, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
        let batches = mc.samples.div_ceil(mc.batch);
        let draws = (0..batches)
            .into_par_iter()
            .flat_map_iter(|b| {
                let count = mc.batch.min(mc.samples - b * mc.batch);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(mc.seed, &[0x0074_696e, n.to_bits(), b]));
                (0..count).map(|_| (gamma.sample(&mut rng), gamma.sample(&mut rng))).collect::<Vec<_>>()
            })
            .collect();
        Ok(Self { n, draws })
    }

    /// `η(s)` for the given parameters; the blocklength must match the sampler.
    pub fn eta(&self, params: &TinParams) -> Result<EtaEstimate> {
        if params.n != self.n {
            return Err(Error::Domain("sampler blocklength differs from the parameters".into()));
        }
        if !(params.s > 0.0) {
            return Err(Error::Domain(format!("s must be positive, got {}", params.s)));
        }
        let (lp, lm, offset) = eigen(params);
        let threshold = ln_m_minus(params.log_m, params.ka as f64);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for &(g1, g2) in &self.draws {
            let total = offset + lp * g1 + lm * g2;
            let v = (threshold - total).min(0.0).exp();
            sum += v;
            sum2 += v * v;
        }
        let m = self.draws.len() as f64;
        let mean = sum / m;
        let var = ((sum2 / m - mean * mean) * m / (m - 1.0)).max(0.0);
        let se = (var / m).sqrt();
        Ok(EtaEstimate { estimate: mean, upper: (mean + Z95 * se).min(1.0), std_error: se })
    }
}

/// Eigenvalues `(λ₊, λ₋)` of the per-use Hermitian form and the offset `n ln(1 + sP̄)`.
fn eigen(params: &TinParams) -> (f64, f64, f64) {
    let s = params.s;
    let pb = params.p_bar();
    let c = s / (1.0 + s * pb);
    // Form c|√P̄ a + b|² - s|b|² in the standardized variables (a, b).
    let trace = c * (pb + 1.0) - s;
    let det = -c * s * pb;
    let disc = (trace * trace - 4.0 * det).max(0.0).sqrt();
    let lp = 0.5 * (trace + disc);
    // det / λ₊ avoids cancellation in the negative eigenvalue.
    let lm = if lp != 0.0 { det / lp } else { 0.5 * (trace - disc) };
    (lp, lm, params.n * (s * pb).ln_1p())
}

/// Monte-Carlo `η(s)` from freshly drawn samples.
pub fn eta_mc(params: &TinParams, mc: &McConfig) -> Result<EtaEstimate> {
    EtaSampler::new(params.n, mc)?.eta(params)
}

/// Normal approximation `Q((nC - ln(M - Ka))/√(nV))` with `C` and `V` evaluated at `Ka′`; only for `s = 1`.
pub fn eta_normal(params: &TinParams) -> Result<f64> {
    if params.s != 1.0 {
        return Err(Error::Domain("the normal approximation is available for s = 1 only; use the Monte-Carlo estimate".into()));
    }
    let pp = params.p_prime;
    let kp = params.ka_prime as f64;
    let cap = (pp / (1.0 + (kp - 1.0).max(0.0) * pp)).ln_1p();
    let disp = 2.0 * pp / (1.0 + kp * pp);
    let num = params.n * cap - ln_m_minus(params.log_m, params.ka as f64);
    Ok(gaussian_q(num / (params.n * disp).sqrt()))
}

/// How `η` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EtaMethod {
    /// Monte-Carlo estimate; the upper confidence limit enters the bound.
    MonteCarlo(McConfig),
    /// Normal approximation at `s = 1`.
    Normal,
}

/// Choice of `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SChoice {
    /// A fixed value.
    Fixed(f64),
    /// Golden section on `ln s ∈ [ln 0.05, ln 20]`, compared against `s = 1`.
    Optimize,
}

/// Inputs of the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinInputs {
    /// Law of the number of active users.
    pub activity: ActivityModel,
    /// Truncation window.
    pub window: TruncationWindow,
    /// Blocklength.
    pub n: f64,
    /// `ln M`.
    pub log_m: f64,
    /// Payload in bits.
    pub payload_bits: f64,
    /// Activity estimator.
    pub estimator: EstimatorKind,
    /// Evaluation of `η`.
    pub method: EtaMethod,
    /// Choice of `s`.
    pub s: SChoice,
}

/// Result of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TinResult {
    /// Misdetection bound.
    pub eps_md: f64,
    /// False-alarm bound.
    pub eps_fa: f64,
    /// `s` used.
    pub s: f64,
    /// Penalty `p̃`.
    pub ptilde: f64,
}

/// The bound with its shared Monte-Carlo samples.
#[derive(Debug, Clone)]
pub struct TinBound {
    inputs: TinInputs,
    sampler: Option<EtaSampler>,
}

const S_LOW: f64 = 0.05;
const S_HIGH: f64 = 20.0;

impl TinBound {
    /// Validates the inputs and draws the shared samples.
    pub fn new(inputs: TinInputs) -> Result<Self> {
        inputs.activity.validate()?;
        let sampler = match inputs.method {
            EtaMethod::MonteCarlo(mc) => Some(EtaSampler::new(inputs.n, &mc)?),
            EtaMethod::Normal => {
                if !matches!(inputs.s, SChoice::Fixed(s) if s == 1.0) {
                    return Err(Error::Config("the normal approximation requires s = 1".into()));
                }
                None
            }
        };
        if let SChoice::Fixed(s) = inputs.s {
            if !(s > 0.0) {
                return Err(Error::Config(format!("s must be positive, got {s}")));
            }
        }
        Ok(Self { inputs, sampler })
    }

    /// The inputs.
    pub fn inputs(&self) -> &TinInputs {
        &self.inputs
    }

    fn eta(&self, s: f64, p_prime: f64, ka: u64, ka_prime: u64) -> Result<f64> {
        let params = TinParams { s, n: self.inputs.n, log_m: self.inputs.log_m, p_prime, ka, ka_prime };
        match &self.sampler {
            Some(sm) => Ok(sm.eta(&params)?.upper),
            None => eta_normal(&params),
        }
    }

    /// Sums without the power-violation term at a fixed `s`, including `p̄`.
    pub fn sums_at(&self, p_prime: f64, s: f64) -> Result<(f64, f64)> {
        let inp = &self.inputs;
        let w = inp.window;
        let ctx = XiContext { n: inp.n, p_prime, window: w };
        let xi = XiTable::finite(inp.estimator, &ctx)?;
        let mc = self.sampler.is_some();
        let mut eta_ka = Vec::with_capacity(w.len());
        if mc {
            for ka in w.range() {
                eta_ka.push(self.eta(s, p_prime, ka, ka)?);
            }
        }
        let mut md = 0.0;
        let mut fa = 0.0;
        for ka in w.range() {
            let pka = inp.activity.pmf(ka);
            if pka <= 0.0 {
                continue;
            }
            for kp in w.range() {
                let x = xi.get(ka, kp);
                let eta = if mc { eta_ka[(ka - w.k_lower) as usize] } else { self.eta(s, p_prime, ka, kp)? };
                let common = ka.min(kp) as f64 * eta.min(x);
                if ka >= w.k_lower.max(1) {
                    md += pka / ka as f64 * (ka.saturating_sub(kp) as f64 * x + common);
                }
                if kp >= 1 {
                    fa += pka / kp as f64 * (kp.saturating_sub(ka) as f64 * x + common);
                }
            }
        }
        let base = pbar(&inp.activity, &w, inp.log_m).value;
        Ok((md + base, fa + base))
    }

    /// `s` and the sums at that `s`, minimizing the larger of the two sums.
    pub fn best_s(&self, p_prime: f64) -> Result<(f64, f64, f64)> {
        let eval = |s: f64| -> Result<(f64, f64, f64)> {
            let (md, fa) = self.sums_at(p_prime, s)?;
            Ok((s, md, fa))
        };
        match self.inputs.s {
            SChoice::Fixed(s) => eval(s),
            SChoice::Optimize => {
                let score = |r: &(f64, f64, f64)| r.1.max(r.2);
                let mut best = eval(1.0)?;
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                let (mut a, mut b) = (S_LOW.ln(), S_HIGH.ln());
                let mut c = b - phi * (b - a);
                let mut d = a + phi * (b - a);
                let mut rc = eval(c.exp())?;
                let mut rd = eval(d.exp())?;
                while b - a > 1e-3 {
                    if score(&rc) <= score(&rd) {
                        b = d;
                        d = c;
                        rd = rc;
                        c = b - phi * (b - a);
                        rc = eval(c.exp())?;
                    } else {
                        a = c;
                        c = d;
                        rc = rd;
                        d = a + phi * (b - a);
                        rd = eval(d.exp())?;
                    }
                }
                for r in [rc, rd] {
                    if score(&r) < score(&best) {
                        best = r;
                    }
                }
                Ok(best)
            }
        }
    }

    /// Both bounds at powers `(P, P′)`.
    pub fn eval(&self, p: f64, p_prime: f64) -> Result<TinResult> {
        let (s, md, fa) = self.best_s(p_prime)?;
        let pt = ptilde(&self.inputs.activity, &self.inputs.window, self.inputs.log_m, self.inputs.n, p, p_prime)?;
        let base = pbar(&self.inputs.activity, &self.inputs.window, self.inputs.log_m).value;
        Ok(TinResult {
            eps_md: (md - base + pt.value).min(1.0),
            eps_fa: (fa - base + pt.value).min(1.0),
            s,
            ptilde: pt.value,
        })
    }
}

impl BoundFamily for TinBound {
    fn sums(&self, p_prime: f64) -> Result<(f64, f64)> {
        let (_, md, fa) = self.best_s(p_prime)?;
        Ok((md, fa))
    }

    fn power_channel(&self) -> (f64, f64) {
        (self.inputs.n, self.inputs.activity.mean())
    }

    fn floors(&self) -> Result<Floors> {
        let i = &self.inputs;
        eval_floors(&i.activity, &i.window, i.n, i.log_m, 0, 0, i.estimator)
    }

    fn payload_bits(&self) -> f64 {
        self.inputs.payload_bits
    }

    fn frame_n(&self) -> f64 {
        self.inputs.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p_prime: f64) -> TinParams {
        TinParams { s: 1.0, n: 200.0, log_m: 10.0, p_prime, ka: 3, ka_prime: 3 }
    }

    #[test]
    fn degenerate_signal_gives_one() {
        let mc = McConfig { samples: 2000, seed: 3, batch: 500 };
        let e = eta_mc(&params(1e-15), &mc).unwrap();
        assert!((e.estimate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normal_at_capacity_is_half() {
        let mut p = params(0.5);
        let pb = 0.5 / (1.0 + 2.0 * 0.5);
        // Choose M so that n C = ln(M - Ka).
        let target = p.n * (1.0f64 + pb).ln();
        p.log_m = (target.exp() + 3.0).ln();
        assert!((eta_normal(&p).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn normal_rejects_other_s() {
        let mut p = params(0.5);
        p.s = 2.0;
        assert!(eta_normal(&p).is_err());
    }

    #[test]
    fn eigen_decomposition_matches_form() {
        let p = TinParams { s: 0.7, n: 1.0, log_m: 5.0, p_prime: 0.3, ka: 4, ka_prime: 4 };
        let (lp, lm, _) = eigen(&p);
        let pb = p.p_bar();
        let c = p.s / (1.0 + p.s * pb);
        assert!(((lp + lm) - (c * (pb + 1.0) - p.s)).abs() < 1e-14);
        assert!((lp * lm + c * p.s * pb).abs() < 1e-14);
    }
}
