//! Minimum energy per bit meeting a pair of misdetection and false-alarm
//! targets, with the codebook power `P′` chosen from a ratio grid, fixed, or
//! optimized continuously, and selection of the decoding radii.
//!
//! Every bound family splits into a part that depends on `P′` only and the
//! power-violation term `E[K] Q(n_c, n_c P/P′)`. The continuous mode uses this
//! split: for each `P′` the smallest admissible `P` follows from inverting the
//! regularized incomplete gamma function, and `P′` is then chosen to make that
//! `P` smallest.

use serde::{Deserialize, Serialize};

use crate::bound_core::{ebn0_from_power, eval_corollary1, eval_theorem1, power_from_ebn0, BoundInputs, EvalOptions, Floors};
use crate::error::{Error, Result};
use crate::specfun::{inv_reg_gamma_upper, reg_gamma_upper};

/// Upper limits on the two error probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    /// Largest admissible misdetection probability.
    pub eps_md_max: f64,
    /// Largest admissible false-alarm probability.
    pub eps_fa_max: f64,
}

impl Targets {
    /// Checks that both targets lie in `(0, 1)`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("misdetection", self.eps_md_max), ("false-alarm", self.eps_fa_max)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} target must lie in (0,1), got {v}")));
            }
        }
        Ok(())
    }

    /// Whether a pair of bounds meets both targets.
    pub fn met(&self, eps_md: f64, eps_fa: f64) -> bool {
        eps_md <= self.eps_md_max && eps_fa <= self.eps_fa_max
    }
}

/// A bound that separates into a `P′`-only part and a power-violation term.
pub trait BoundFamily: Sync {
    /// Bounds without the power-violation term, at frame-level codebook power `p_prime`.
    fn sums(&self, p_prime: f64) -> Result<(f64, f64)>;
    /// `(n_c, E[K])`: channel uses and mean user count entering the power-violation term.
    fn power_channel(&self) -> (f64, f64);
    /// Error floors used to reject unreachable targets.
    fn floors(&self) -> Result<Floors>;
    /// Payload `k` in bits, used for the energy per bit.
    fn payload_bits(&self) -> f64;
    /// Frame blocklength `n`, used for the energy per bit.
    fn frame_n(&self) -> f64;

    /// Power-violation term `E[K] Q(n_c, n_c P/P′)`.
    fn power_term(&self, p: f64, p_prime: f64) -> Result<f64> {
        if !(p_prime > 0.0 && p_prime < p) {
            return Err(Error::Config(format!("powers must satisfy 0 < P′ < P, got P = {p}, P′ = {p_prime}")));
        }
        let (nc, mean) = self.power_channel();
        if mean == 0.0 {
            return Ok(0.0);
        }
        Ok(mean * reg_gamma_upper(nc, nc * p / p_prime)?)
    }

    /// Both bounds at powers `(P, P′)`, clamped to 1.
    fn eval(&self, p: f64, p_prime: f64) -> Result<(f64, f64)> {
        let (md, fa) = self.sums(p_prime)?;
        let pw = self.power_term(p, p_prime)?;
        Ok(((md + pw).min(1.0), (fa + pw).min(1.0)))
    }
}

/// Choice of the codebook power relative to `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PprimeMode {
    /// `P′ = ratio · P`.
    Fixed(f64),
    /// Best of several fixed ratios.
    Grid(Vec<f64>),
    /// `P′` optimized continuously through the power split.
    Continuous,
}

impl Default for PprimeMode {
    fn default() -> Self {
        PprimeMode::Grid(vec![0.999, 0.99, 0.95, 0.9])
    }
}

/// Search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    /// How `P′` is chosen.
    pub mode: PprimeMode,
    /// Initial bracket in dB.
    pub bracket_db: (f64, f64),
    /// Bisection tolerance in dB.
    pub tol_db: f64,
    /// The bracket is widened up to this value before the search gives up.
    pub max_db: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { mode: PprimeMode::default(), bracket_db: (-2.0, 12.0), tol_db: 0.05, max_db: 40.0 }
    }
}

/// Result of a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Smallest energy per bit found to meet the targets.
    pub ebn0_db: f64,
    /// Power `P` at that point.
    pub p: f64,
    /// Codebook power `P′`.
    pub p_prime: f64,
    /// `P′/P`.
    pub pprime_ratio: f64,
    /// Misdetection bound at that point.
    pub eps_md: f64,
    /// False-alarm bound at that point.
    pub eps_fa: f64,
    /// Number of bound evaluations performed.
    pub evaluations: usize,
}

fn check_floors(family: &dyn BoundFamily, targets: &Targets) -> Result<()> {
    let f = family.floors()?;
    if f.md > targets.eps_md_max || f.fa > targets.eps_fa_max {
        return Err(Error::BelowFloor { floor_md: f.md, floor_fa: f.fa });
    }
    Ok(())
}

/// Smallest `Eb/N0` meeting the targets.
pub fn required_ebn0(family: &dyn BoundFamily, targets: &Targets, settings: &SearchSettings) -> Result<SearchOutcome> {
    targets.validate()?;
    check_floors(family, targets)?;
    match &settings.mode {
        PprimeMode::Fixed(r) => bisect_ratio(family, targets, settings, *r, None),
        PprimeMode::Grid(ratios) => {
            if ratios.is_empty() {
                return Err(Error::Config("P′ ratio grid is empty".into()));
            }
            let mut best: Option<SearchOutcome> = None;
            let mut evaluations = 0;
            let mut last_err = None;
            for &r in ratios {
                let cap = best.map(|b| b.ebn0_db - settings.tol_db);
                match bisect_ratio(family, targets, settings, r, cap) {
                    Ok(o) => {
                        evaluations += o.evaluations;
                        if best.is_none_or(|b| o.ebn0_db < b.ebn0_db) {
                            best = Some(o);
                        }
                    }
                    Err(e @ Error::InfeasibleBracket(_)) => {
                        evaluations += 1;
                        last_err = Some(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            let Some(mut out) = best else {
                return Err(last_err.expect("grid is nonempty"));
            };
            out.evaluations = evaluations;
            Ok(out)
        }
        PprimeMode::Continuous => continuous(family, targets, settings),
    }
}

/// Bisection on `Eb/N0` at a fixed ratio. With `cap`, only values at or below `cap` are of interest.
fn bisect_ratio(
    family: &dyn BoundFamily,
    targets: &Targets,
    settings: &SearchSettings,
    ratio: f64,
    cap: Option<f64>,
) -> Result<SearchOutcome> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("P′/P ratio must lie in (0,1), got {ratio}")));
    }
    let (k, n) = (family.payload_bits(), family.frame_n());
    let mut evaluations = 0usize;
    let mut probe = |db: f64| -> Result<(bool, f64, f64)> {
        let p = power_from_ebn0(db, k, n);
        let (md, fa) = family.eval(p, ratio * p)?;
        evaluations += 1;
        Ok((targets.met(md, fa), md, fa))
    };
    let (mut lo, mut hi) = settings.bracket_db;
    if let Some(c) = cap {
        hi = hi.min(c);
        if hi <= lo {
            lo = hi - 1.0;
        }
    }
    let mut at_hi = probe(hi)?;
    if cap.is_some() && !at_hi.0 {
        return Err(Error::InfeasibleBracket(format!("ratio {ratio} does not improve on {hi:.3} dB")));
    }
    while !at_hi.0 {
        if hi >= settings.max_db {
            return Err(Error::InfeasibleBracket(format!(
                "targets not met at {hi} dB with P′/P = {ratio}"
            )));
        }
        lo = hi;
        hi = (hi + 10.0).min(settings.max_db);
        at_hi = probe(hi)?;
    }
    loop {
        let at_lo = probe(lo)?;
        if !at_lo.0 {
            break;
        }
        hi = lo;
        at_hi = at_lo;
        if lo <= settings.bracket_db.0 - 20.0 {
            break;
        }
        lo -= 5.0;
    }
    while hi - lo > settings.tol_db {
        let mid = 0.5 * (lo + hi);
        let r = probe(mid)?;
        if r.0 {
            hi = mid;
            at_hi = r;
        } else {
            lo = mid;
        }
    }
    let p = power_from_ebn0(hi, k, n);
    Ok(SearchOutcome {
        ebn0_db: hi,
        p,
        p_prime: ratio * p,
        pprime_ratio: ratio,
        eps_md: at_hi.1,
        eps_fa: at_hi.2,
        evaluations,
    })
}

/// Smallest `P` for a given `P′`, or `None` when the `P′`-only part already violates a target.
fn power_for(family: &dyn BoundFamily, targets: &Targets, p_prime: f64) -> Result<Option<f64>> {
    let (md, fa) = family.sums(p_prime)?;
    let slack = (targets.eps_md_max - md).min(targets.eps_fa_max - fa);
    if !(slack > 0.0) {
        return Ok(None);
    }
    let (nc, mean) = family.power_channel();
    if mean == 0.0 {
        return Ok(Some(p_prime * (1.0 + 1e-12)));
    }
    let y = slack / mean;
    if y >= 1.0 {
        return Ok(Some(p_prime * (1.0 + 1e-12)));
    }
    let x = inv_reg_gamma_upper(nc, y)?;
    Ok(Some(p_prime * (x / nc).max(1.0 + 1e-12)))
}

/// Continuous `P′` optimization: bisection for the smallest feasible `P′`, then golden section on `ln P′`.
fn continuous(family: &dyn BoundFamily, targets: &Targets, settings: &SearchSettings) -> Result<SearchOutcome> {
    let (k, n) = (family.payload_bits(), family.frame_n());
    let mut evaluations = 0usize;
    let mut g = |lp: f64| -> Result<f64> {
        evaluations += 1;
        Ok(power_for(family, targets, lp.exp())?.map_or(f64::INFINITY, f64::ln))
    };
    let mut hi = power_from_ebn0(settings.bracket_db.1, k, n).ln();
    let max = power_from_ebn0(settings.max_db, k, n).ln();
    while !g(hi)?.is_finite() {
        if hi >= max {
            return Err(Error::InfeasibleBracket(format!("targets not met at {} dB", settings.max_db)));
        }
        hi = (hi + 10f64.ln()).min(max);
    }
    let floor = power_from_ebn0(settings.bracket_db.0 - 20.0, k, n).ln();
    let mut lo = power_from_ebn0(settings.bracket_db.0, k, n).ln();
    while g(lo)?.is_finite() && lo > floor {
        hi = lo;
        lo -= 0.5 * 10f64.ln();
    }
    // Boundary of feasibility within 1e-4 in ln P′.
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if g(mid)?.is_finite() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Above the boundary the required power first falls and then grows with P′; scan
    // geometrically for the turning point and refine it by golden section.
    let mut pts = vec![(hi, g(hi)?)];
    let mut step = 1e-3;
    loop {
        let x = pts.last().expect("nonempty").0 + step;
        let v = g(x)?;
        pts.push((x, v));
        let m = pts.len();
        if m >= 3 && pts[m - 1].1 > pts[m - 2].1 {
            break;
        }
        if x > hi + 1.0 {
            break;
        }
        step *= 1.6;
    }
    let m = pts.len();
    let i = (0..m).min_by(|&a, &b| pts[a].1.partial_cmp(&pts[b].1).expect("ordered")).expect("nonempty");
    let (mut a, mut b) = (pts[i.saturating_sub(1)].0, pts[(i + 1).min(m - 1)].0);
    let mut best = pts[i];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = g(c)?;
    let mut fd = g(d)?;
    while b - a > 1e-5 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d)?;
        }
    }
    for cand in [(c, fc), (d, fd)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    let p_prime = best.0.exp();
    let p = best.1.exp();
    let (md, fa) = family.eval(p, p_prime)?;
    evaluations += 1;
    Ok(SearchOutcome {
        ebn0_db: ebn0_from_power(p, k, n),
        p,
        p_prime,
        pprime_ratio: p_prime / p,
        eps_md: md,
        eps_fa: fa,
        evaluations,
    })
}

/// Whether the pair `a = (ε_MD, ε_FA)` beats `b`: smaller maximum first, then smaller sum.
pub fn ranks_before(a: (f64, f64), b: (f64, f64)) -> bool {
    let (x, y) = (a.0.max(a.1), b.0.max(b.1));
    x < y || (x == y && a.0 + a.1 < b.0 + b.1)
}

/// Best ratio at a fixed `P`, ranked by [`ranks_before`].
pub fn optimize_pprime(family: &dyn BoundFamily, p: f64, ratios: &[f64]) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &r in ratios {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!("P′/P ratio must lie in (0,1), got {r}")));
        }
        let (md, fa) = family.eval(p, r * p)?;
        let better = best.is_none_or(|(_, bm, bf)| ranks_before((md, fa), (bm, bf)));
        if better {
            best = Some((r, md, fa));
        }
    }
    best.ok_or_else(|| Error::Config("P′ ratio grid is empty".into()))
}

/// Pair of radii with the smallest requirement; ties go to the earlier pair in the grid.
pub fn optimize_radius<F>(
    grid: &[(u64, u64)],
    targets: &Targets,
    settings: &SearchSettings,
    make: F,
) -> Result<((u64, u64), SearchOutcome)>
where
    F: Fn((u64, u64)) -> Result<Box<dyn BoundFamily>>,
{
    let mut best: Option<((u64, u64), SearchOutcome)> = None;
    let mut last_err = None;
    for &pair in grid {
        let family = make(pair)?;
        match required_ebn0(family.as_ref(), targets, settings) {
            Ok(o) => {
                if best.is_none_or(|(_, b)| o.ebn0_db < b.ebn0_db) {
                    best = Some((pair, o));
                }
            }
            Err(e @ (Error::BelowFloor { .. } | Error::InfeasibleBracket(_))) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Config("radius grid is empty".into())))
}

/// The random-coding bound as a [`BoundFamily`].
#[derive(Debug, Clone)]
pub struct Theorem1Family {
    /// Inputs; the powers are overwritten on every evaluation.
    pub inputs: BoundInputs,
    /// Numerical options.
    pub opts: EvalOptions,
    /// Payload `k` in bits.
    pub payload_bits: f64,
    /// Evaluate through the zero-radius enumeration.
    pub zero_radius_route: bool,
}

impl BoundFamily for Theorem1Family {
    fn sums(&self, p_prime: f64) -> Result<(f64, f64)> {
        let mut inputs = self.inputs.clone();
        inputs.system.p_prime = p_prime;
        // Any P above P′ will do; the power-violation term is added separately.
        inputs.system.p = 2.0 * p_prime;
        let r = if self.zero_radius_route {
            eval_corollary1(&inputs, &self.opts)?
        } else {
            eval_theorem1(&inputs, &self.opts)?
        };
        let base = r.ptilde.tail + r.ptilde.collision;
        Ok((r.sum_md + base, r.sum_fa + base))
    }

    fn power_channel(&self) -> (f64, f64) {
        (self.inputs.system.n, self.inputs.activity.mean())
    }

    fn floors(&self) -> Result<Floors> {
        let s = self.inputs.system;
        crate::bound_core::eval_floors(
            &self.inputs.activity,
            &self.inputs.window,
            s.n,
            s.log_m,
            s.r_lower,
            s.r_upper,
            s.estimator,
        )
    }

    fn payload_bits(&self) -> f64 {
        self.payload_bits
    }

    fn frame_n(&self) -> f64 {
        self.inputs.system.n
    }
}
