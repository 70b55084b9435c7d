//! Assembly of the misdetection and false-alarm bounds from the estimator
//! term `ξ`, the exponent terms `p`, the Monte-Carlo terms `q` and the penalty
//! `p̃`, together with their infinite-power error floors.
//!
//! Evaluation proceeds in three passes. The first enumerates every weighted
//! term and discards those whose closed-form upper bound is negligible, adding
//! that bound to the result so that it remains an upper bound. The second
//! computes each distinct exponent once. The third draws the Monte-Carlo terms
//! that can still change the result and reduces all terms in enumeration order,
//! which keeps the output independent of the thread count.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{pbar, ptilde, ActivityModel, Ptilde, TruncationWindow};
use crate::dt_mc::{q_term, sample_info_density_min, ItParams, ItSampleSet, McConfig};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, XiContext, XiTable};
use crate::exponent::{
    index_sets, ln_closed_form_bound, m_value, p_from_exponent, rate_terms, CellParams, E0Grid, ExponentCell,
    ExponentSettings, InnerProblem,
};

/// Channel, codebook and decoder parameters shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Blocklength `n` in complex channel uses.
    pub n: f64,
    /// `ln M`, the natural logarithm of the number of messages.
    pub log_m: f64,
    /// Average transmit power `P`.
    pub p: f64,
    /// Codebook power `P′ < P`.
    pub p_prime: f64,
    /// Decoding radius below the estimate, `rℓ`.
    pub r_lower: u64,
    /// Decoding radius above the estimate, `r_u`.
    pub r_upper: u64,
    /// Activity estimator.
    pub estimator: EstimatorKind,
}

impl SystemConfig {
    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) || self.n.fract() != 0.0 {
            return Err(Error::Config(format!("blocklength must be a positive integer, got {}", self.n)));
        }
        if !(self.log_m > 0.0) {
            return Err(Error::Config(format!("ln M must be positive, got {}", self.log_m)));
        }
        if !(self.p_prime > 0.0 && self.p_prime < self.p) || !self.p.is_finite() {
            return Err(Error::Config(format!(
                "powers must satisfy 0 < P′ < P, got P = {}, P′ = {}",
                self.p, self.p_prime
            )));
        }
        Ok(())
    }
}

/// Everything that defines one bound evaluation apart from numerical options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// System parameters.
    pub system: SystemConfig,
    /// Law of the number of active users.
    pub activity: ActivityModel,
    /// Truncation window `[Kℓ, Ku]`.
    pub window: TruncationWindow,
}

/// Which Monte-Carlo terms are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QPolicy {
    /// Sampler settings; `None` disables every `q` term.
    pub mc: Option<McConfig>,
    /// Largest `t` for which `q` is drawn.
    pub t_max: u64,
    /// Largest `Ka` for which `q` is drawn.
    pub ka_max: u64,
    /// `q` is drawn only for terms whose weighted exponent bound reaches this value.
    pub gate: f64,
    /// Largest number of subsets enumerated by the sampler.
    pub subset_cap: f64,
}

impl Default for QPolicy {
    fn default() -> Self {
        Self { mc: None, t_max: 1, ka_max: 50, gate: 1e-6, subset_cap: 1e4 }
    }
}

/// Numerical options of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Exponent optimizer settings.
    pub exponent: ExponentSettings,
    /// Terms below `prune_rel` times the `P`-independent part of `p̃` are bounded in closed form.
    pub prune_rel: f64,
    /// Monte-Carlo policy.
    pub q: QPolicy,
    /// Whether per-term rows are collected.
    pub breakdown: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { exponent: ExponentSettings::default(), prune_rel: 1e-15, q: QPolicy::default(), breakdown: false }
    }
}

/// Error event a term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// Misdetection.
    Md,
    /// False alarm.
    Fa,
}

/// One evaluated term of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    /// Error event.
    pub kind: TermKind,
    /// Active users.
    pub ka: u64,
    /// Estimated number of users.
    pub ka_prime: u64,
    /// Additional misdetections.
    pub t: u64,
    /// Additional false alarms; `None` for a misdetection term, which sums over `t′`.
    pub t_prime: Option<u64>,
    /// Exponent term.
    pub p: f64,
    /// Monte-Carlo term (1 when not drawn).
    pub q: f64,
    /// Estimator term.
    pub xi: f64,
    /// Weight `(t+δ)/Ka` (misdetection) or `(t′+e)/L` (false alarm).
    pub weight: f64,
    /// `P[Ka]` times the weight times the minimum.
    pub contribution: f64,
}

/// Counters describing the work done by an evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Terms evaluated exactly.
    pub terms: usize,
    /// Terms replaced by their closed-form bound.
    pub pruned_terms: usize,
    /// Distinct exponents computed.
    pub exponent_cells: usize,
    /// Monte-Carlo sample sets drawn.
    pub mc_cells: usize,
    /// Monte-Carlo sample sets skipped because of the subset cap.
    pub capped_cells: usize,
}

/// Result of a bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// Misdetection bound, clamped to `[0, 1]`.
    pub eps_md: f64,
    /// False-alarm bound, clamped to `[0, 1]`.
    pub eps_fa: f64,
    /// Misdetection sum without `p̃`, including the pruned mass.
    pub sum_md: f64,
    /// False-alarm sum without `p̃`, including the pruned mass.
    pub sum_fa: f64,
    /// Closed-form bound of the pruned misdetection terms.
    pub pruned_md: f64,
    /// Closed-form bound of the pruned false-alarm terms.
    pub pruned_fa: f64,
    /// Penalty components.
    pub ptilde: Ptilde,
    /// Work counters.
    pub stats: EvalStats,
    /// Per-term rows when requested.
    pub breakdown: Vec<BreakdownRow>,
}

/// A weighted term before `p`, `q` are known.
#[derive(Debug, Clone, Copy)]
struct Term {
    kind: TermKind,
    ka: u64,
    ka_prime: u64,
    low: u64,
    high: u64,
    t: u64,
    tp_lo: u64,
    tp_hi: u64,
    weight: f64,
    /// `P[Ka]` times the weight.
    scale: f64,
    xi: f64,
}

/// Identifies an exponent: `(t, t′, initial errors, R1 bits, R2 bits)`.
type ExpKey = (u64, u64, u64, u64, u64);

fn exp_key(cell: &CellParams) -> ExpKey {
    let (r1, r2) = rate_terms(cell);
    (cell.t, cell.t_prime, cell.initial_md() + cell.initial_fa(), r1.to_bits(), r2.to_bits())
}

fn cell_of(sys: &SystemConfig, term: &Term, tp: u64) -> CellParams {
    CellParams {
        ka: term.ka,
        ka_prime_low: term.low,
        ka_prime_high: term.high,
        t: term.t,
        t_prime: tp,
        n: sys.n,
        log_m: sys.log_m,
        p_prime: sys.p_prime,
    }
}

/// Collects terms for enumeration and applies the pruning rule.
struct TermSink<'a> {
    sys: &'a SystemConfig,
    tau: f64,
    terms: Vec<Term>,
    pruned_md: f64,
    pruned_fa: f64,
    pruned_terms: usize,
}

impl<'a> TermSink<'a> {
    fn push(&mut self, term: Term) {
        if term.scale <= 0.0 || term.tp_lo > term.tp_hi {
            return;
        }
        let mut bound = term.scale * term.xi;
        if bound >= self.tau {
            let ln_terms: Vec<f64> =
                (term.tp_lo..=term.tp_hi).map(|tp| ln_closed_form_bound(&cell_of(self.sys, &term, tp))).collect();
            let rb = crate::specfun::log_sum_exp(&ln_terms).exp();
            bound = term.scale * term.xi.min(rb).min(1.0);
        }
        if bound < self.tau {
            match term.kind {
                TermKind::Md => self.pruned_md += bound,
                TermKind::Fa => self.pruned_fa += bound,
            }
            self.pruned_terms += 1;
        } else {
            self.terms.push(term);
        }
    }
}

/// Enumerates the terms of the general bound with decoding radii `(rℓ, r_u)`.
fn enumerate_general(inputs: &BoundInputs, xi: &XiTable, sink: &mut TermSink) {
    let sys = &inputs.system;
    let w = inputs.window;
    for ka in w.range() {
        let pka = inputs.activity.pmf(ka);
        if pka <= 0.0 {
            continue;
        }
        for kp in w.range() {
            let low = w.k_lower.max(kp.saturating_sub(sys.r_lower));
            let high = w.k_upper.min(kp + sys.r_upper);
            let delta = ka.saturating_sub(high);
            let extra = low.saturating_sub(ka);
            let sets = index_sets(ka, low, high, sys.log_m);
            let x = xi.get(ka, kp);
            for t in sets.t_values() {
                if ka >= w.k_lower.max(1) && t + delta > 0 {
                    let (lo, hi) = sets.t_bar(t);
                    if lo <= hi {
                        let weight = (t + delta) as f64 / ka as f64;
                        sink.push(Term {
                            kind: TermKind::Md,
                            ka,
                            ka_prime: kp,
                            low,
                            high,
                            t,
                            tp_lo: lo as u64,
                            tp_hi: hi as u64,
                            weight,
                            scale: pka * weight,
                            xi: x,
                        });
                    }
                }
                let (lo, hi) = sets.t_set(t);
                for tp in lo.max(0)..=hi {
                    let tp = tp as u64;
                    let list = ka + tp + extra - t - delta;
                    if tp + extra == 0 || list == 0 {
                        continue;
                    }
                    let weight = (tp + extra) as f64 / list as f64;
                    sink.push(Term {
                        kind: TermKind::Fa,
                        ka,
                        ka_prime: kp,
                        low,
                        high,
                        t,
                        tp_lo: tp,
                        tp_hi: tp,
                        weight,
                        scale: pka * weight,
                        xi: x,
                    });
                }
            }
        }
    }
}

/// Enumerates the terms of the zero-radius bound directly from its own index range.
fn enumerate_zero_radius(inputs: &BoundInputs, xi: &XiTable, sink: &mut TermSink) {
    let sys = &inputs.system;
    let w = inputs.window;
    let m = m_value(sys.log_m);
    for ka in w.range() {
        let pka = inputs.activity.pmf(ka);
        if pka <= 0.0 {
            continue;
        }
        for kp in w.range() {
            let x = xi.get(ka, kp);
            let room = m - ka.max(kp) as f64;
            let room = if room > u64::MAX as f64 / 4.0 { u64::MAX / 4 } else { room.max(0.0) as u64 };
            let psi = ka.min(kp).min(room);
            let over = ka.saturating_sub(kp);
            let under = kp.saturating_sub(ka);
            for t in 0..=psi {
                if ka >= w.k_lower.max(1) && t + over > 0 {
                    let weight = (t + over) as f64 / ka as f64;
                    sink.push(Term {
                        kind: TermKind::Md,
                        ka,
                        ka_prime: kp,
                        low: kp,
                        high: kp,
                        t,
                        tp_lo: t,
                        tp_hi: t,
                        weight,
                        scale: pka * weight,
                        xi: x,
                    });
                }
                if kp >= w.k_lower.max(1) && t + under > 0 {
                    let weight = (t + under) as f64 / kp as f64;
                    sink.push(Term {
                        kind: TermKind::Fa,
                        ka,
                        ka_prime: kp,
                        low: kp,
                        high: kp,
                        t,
                        tp_lo: t,
                        tp_hi: t,
                        weight,
                        scale: pka * weight,
                        xi: x,
                    });
                }
            }
        }
    }
}

/// Rates `(r1, r2)` keyed by `(t, t′)` for one `E0` grid.
type RateGroup = BTreeMap<(u64, u64), (f64, f64)>;

/// Computes every distinct exponent needed by `terms`, grouping cells that share an `E0` grid.
fn compute_exponents(sys: &SystemConfig, terms: &[Term], settings: &ExponentSettings) -> HashMap<ExpKey, ExponentCell> {
    let mut groups: BTreeMap<(u64, u64, u64), RateGroup> = BTreeMap::new();
    for term in terms {
        for tp in term.tp_lo..=term.tp_hi {
            let cell = cell_of(sys, term, tp);
            let (r1, r2) = rate_terms(&cell);
            let k = exp_key(&cell);
            groups.entry((k.0, k.1, k.2)).or_default().insert((k.3, k.4), (r1, r2));
        }
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let pp = sys.p_prime;
    groups
        .par_iter()
        .flat_map_iter(|((t, tp, d), rates)| {
            let problem = InnerProblem { t: *t as f64, tp: *tp as f64, pp, p2: 1.0 + *d as f64 * pp };
            let grid = E0Grid::new(problem, settings.grid);
            rates
                .iter()
                .map(|(&(b1, b2), &(r1, r2))| ((*t, *tp, *d, b1, b2), grid.maximize(r1, r2, settings.refine_iters)))
                .collect::<Vec<_>>()
        })
        .collect()
}

type SampleKey = (u64, u64, u64, u64);

fn evaluate(inputs: &BoundInputs, opts: &EvalOptions, zero_radius: bool) -> Result<BoundResult> {
    let sys = &inputs.system;
    sys.validate()?;
    inputs.activity.validate()?;
    if let Some(mc) = &opts.q.mc {
        mc.validate()?;
    }
    let pt = ptilde(&inputs.activity, &inputs.window, sys.log_m, sys.n, sys.p, sys.p_prime)?;
    let base = pbar(&inputs.activity, &inputs.window, sys.log_m);
    let ctx = XiContext { n: sys.n, p_prime: sys.p_prime, window: inputs.window };
    let xi = XiTable::finite(sys.estimator, &ctx)?;
    let mut sink = TermSink {
        sys,
        tau: opts.prune_rel * base.value,
        terms: Vec::new(),
        pruned_md: 0.0,
        pruned_fa: 0.0,
        pruned_terms: 0,
    };
    if zero_radius {
        enumerate_zero_radius(inputs, &xi, &mut sink);
    } else {
        enumerate_general(inputs, &xi, &mut sink);
    }
    let terms = std::mem::take(&mut sink.terms);
    let exps = compute_exponents(sys, &terms, &opts.exponent);

    // Exponent term of each kept term together with what the Monte-Carlo term needs.
    let mut p_values = Vec::with_capacity(terms.len());
    let mut log_rates: Vec<Vec<f64>> = Vec::with_capacity(terms.len());
    for term in &terms {
        let mut p = 0.0;
        let mut rates = Vec::new();
        for tp in term.tp_lo..=term.tp_hi {
            let cell = cell_of(sys, term, tp);
            let e = exps[&exp_key(&cell)];
            p += p_from_exponent(sys.n, e.exponent);
            rates.push(sys.n * (tp as f64 * e.r1 + e.r2));
        }
        p_values.push(p.min(1.0));
        log_rates.push(rates);
    }

    let mut wanted: BTreeMap<SampleKey, ()> = BTreeMap::new();
    let q_enabled = |term: &Term, p: f64| {
        opts.q.mc.is_some()
            && term.t >= 1
            && term.t <= opts.q.t_max
            && term.ka <= opts.q.ka_max
            && term.scale * p.min(term.xi) >= opts.q.gate
    };
    for (term, &p) in terms.iter().zip(&p_values) {
        if q_enabled(term, p) {
            wanted.insert((term.ka, term.low, term.high, term.t), ());
        }
    }
    let keys: Vec<SampleKey> = wanted.into_keys().collect();
    let mut capped = 0usize;
    let mut samples: HashMap<SampleKey, ItSampleSet> = HashMap::new();
    if let Some(mc) = &opts.q.mc {
        let drawn: Vec<(SampleKey, Result<ItSampleSet>)> = keys
            .par_iter()
            .map(|&(ka, low, high, t)| {
                let params = ItParams { n: sys.n, p_prime: sys.p_prime, ka, ka_prime_low: low, ka_prime_high: high, t };
                ((ka, low, high, t), sample_info_density_min(&params, mc, opts.q.subset_cap))
            })
            .collect();
        for (k, r) in drawn {
            match r {
                Ok(s) => {
                    samples.insert(k, s);
                }
                Err(Error::SubsetCap { .. }) => capped += 1,
                Err(e) => return Err(e),
            }
        }
    }

    let mut sum_md = 0.0;
    let mut sum_fa = 0.0;
    let mut rows = Vec::new();
    for (i, term) in terms.iter().enumerate() {
        let p = p_values[i];
        let q = if q_enabled(term, p) {
            samples.get(&(term.ka, term.low, term.high, term.t)).map_or(1.0, |s| q_term(s, &log_rates[i]).upper)
        } else {
            1.0
        };
        let contribution = term.scale * p.min(q).min(term.xi);
        match term.kind {
            TermKind::Md => sum_md += contribution,
            TermKind::Fa => sum_fa += contribution,
        }
        if opts.breakdown {
            rows.push(BreakdownRow {
                kind: term.kind,
                ka: term.ka,
                ka_prime: term.ka_prime,
                t: term.t,
                t_prime: if term.kind == TermKind::Fa { Some(term.tp_lo) } else { None },
                p,
                q,
                xi: term.xi,
                weight: term.weight,
                contribution,
            });
        }
    }
    sum_md += sink.pruned_md;
    sum_fa += sink.pruned_fa;
    let stats = EvalStats {
        terms: terms.len(),
        pruned_terms: sink.pruned_terms,
        exponent_cells: exps.len(),
        mc_cells: samples.len(),
        capped_cells: capped,
    };
    Ok(BoundResult {
        eps_md: (sum_md + pt.value).min(1.0),
        eps_fa: (sum_fa + pt.value).min(1.0),
        sum_md,
        sum_fa,
        pruned_md: sink.pruned_md,
        pruned_fa: sink.pruned_fa,
        ptilde: pt,
        stats,
        breakdown: rows,
    })
}

/// Misdetection and false-alarm bounds with decoding radii `(rℓ, r_u)`.
pub fn eval_theorem1(inputs: &BoundInputs, opts: &EvalOptions) -> Result<BoundResult> {
    evaluate(inputs, opts, false)
}

/// Zero-radius bounds enumerated from their own index range; requires `rℓ = r_u = 0`.
pub fn eval_corollary1(inputs: &BoundInputs, opts: &EvalOptions) -> Result<BoundResult> {
    if inputs.system.r_lower != 0 || inputs.system.r_upper != 0 {
        return Err(Error::Config("the zero-radius bound requires both decoding radii to be 0".into()));
    }
    evaluate(inputs, opts, true)
}

/// Infinite-power limits of the two bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    /// Misdetection floor.
    pub md: f64,
    /// False-alarm floor.
    pub fa: f64,
    /// Penalty without the power term.
    pub pbar: f64,
}

/// Error floors: the estimator term in the infinite-power limit weighted by the initial errors, plus `p̄`.
pub fn eval_floors(
    activity: &ActivityModel,
    window: &TruncationWindow,
    n: f64,
    log_m: f64,
    r_lower: u64,
    r_upper: u64,
    estimator: EstimatorKind,
) -> Result<Floors> {
    activity.validate()?;
    let xi = XiTable::asymptotic(estimator, window, n)?;
    let pb = pbar(activity, window, log_m).value;
    let mut md = 0.0;
    let mut fa = 0.0;
    for ka in window.range() {
        let pka = activity.pmf(ka);
        if pka <= 0.0 {
            continue;
        }
        let mut row_md = 0.0;
        let mut row_fa = 0.0;
        for kp in window.range() {
            let low = window.k_lower.max(kp.saturating_sub(r_lower));
            let high = window.k_upper.min(kp + r_upper);
            let delta = ka.saturating_sub(high);
            let extra = low.saturating_sub(ka);
            let x = xi.get(ka, kp);
            if ka >= window.k_lower.max(1) && delta > 0 {
                row_md += delta as f64 / ka as f64 * x;
            }
            let list = ka - delta + extra;
            if extra > 0 && list > 0 {
                row_fa += extra as f64 / list as f64 * x;
            }
        }
        md += pka * row_md;
        fa += pka * row_fa;
    }
    Ok(Floors { md: (md + pb).min(1.0), fa: (fa + pb).min(1.0), pbar: pb })
}

/// Conversion from `Eb/N0` in dB to the per-symbol power `P = (k/n) 10^{dB/10}`.
pub fn power_from_ebn0(ebn0_db: f64, payload_bits: f64, n: f64) -> f64 {
    payload_bits / n * 10f64.powf(ebn0_db / 10.0)
}

/// Inverse of [`power_from_ebn0`].
pub fn ebn0_from_power(p: f64, payload_bits: f64, n: f64) -> f64 {
    10.0 * (p * n / payload_bits).log10()
}

/// One point of an error curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Energy per bit in dB.
    pub ebn0_db: f64,
    /// Misdetection bound.
    pub eps_md: f64,
    /// False-alarm bound.
    pub eps_fa: f64,
    /// Misdetection floor.
    pub floor_md: f64,
    /// False-alarm floor.
    pub floor_fa: f64,
}

/// Bounds over a list of `Eb/N0` values with `P′ = ratio · P`.
pub fn md_fa_curve(
    inputs: &BoundInputs,
    opts: &EvalOptions,
    payload_bits: f64,
    ebn0_db: &[f64],
    pprime_ratio: f64,
) -> Result<Vec<CurvePoint>> {
    if !(pprime_ratio > 0.0 && pprime_ratio < 1.0) {
        return Err(Error::Config(format!("P′/P ratio must lie in (0,1), got {pprime_ratio}")));
    }
    let sys = inputs.system;
    let floors = eval_floors(
        &inputs.activity,
        &inputs.window,
        sys.n,
        sys.log_m,
        sys.r_lower,
        sys.r_upper,
        sys.estimator,
    )?;
    let mut out = Vec::with_capacity(ebn0_db.len());
    for &db in ebn0_db {
        let p = power_from_ebn0(db, payload_bits, sys.n);
        let mut local = inputs.clone();
        local.system.p = p;
        local.system.p_prime = p * pprime_ratio;
        let r = eval_theorem1(&local, opts)?;
        out.push(CurvePoint { ebn0_db: db, eps_md: r.eps_md, eps_fa: r.eps_fa, floor_md: floors.md, floor_fa: floors.fa });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::truncation_bounds;

    fn small(r: u64) -> BoundInputs {
        let activity = ActivityModel::Poisson { mean: 4.0 };
        let window = truncation_bounds(&activity, 1e-6).unwrap();
        BoundInputs {
            system: SystemConfig {
                n: 400.0,
                log_m: 20.0 * std::f64::consts::LN_2,
                p: 0.2,
                p_prime: 0.19,
                r_lower: r,
                r_upper: r,
                estimator: EstimatorKind::Ml,
            },
            activity,
            window,
        }
    }

    #[test]
    fn zero_radius_routes_agree_exactly() {
        let inputs = small(0);
        let opts = EvalOptions::default();
        let a = eval_theorem1(&inputs, &opts).unwrap();
        let b = eval_corollary1(&inputs, &opts).unwrap();
        assert_eq!(a.eps_md, b.eps_md);
        assert_eq!(a.eps_fa, b.eps_fa);
    }

    #[test]
    fn bounds_above_floor_margins() {
        let inputs = small(1);
        let r = eval_theorem1(&inputs, &EvalOptions::default()).unwrap();
        assert!(r.eps_md >= r.ptilde.value && r.eps_fa >= r.ptilde.value);
        assert!(r.eps_md <= 1.0 && r.eps_fa <= 1.0);
    }

    #[test]
    fn corollary_rejects_radius() {
        assert!(eval_corollary1(&small(1), &EvalOptions::default()).is_err());
    }

    #[test]
    fn ebn0_roundtrip() {
        let p = power_from_ebn0(1.3, 128.0, 19200.0);
        assert!((ebn0_from_power(p, 128.0, 19200.0) - 1.3).abs() < 1e-12);
    }
}
