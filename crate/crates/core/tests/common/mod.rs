//! Deterministic property checks shared by the property tests and the acceptance run.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use urabound::activity::{truncation_bounds, ActivityModel, TruncationWindow};
use urabound::bound_core::{eval_theorem1, power_from_ebn0, BoundInputs, EvalOptions, SystemConfig, TermKind};
use urabound::dt_mc::McConfig;
use urabound::estimator::{pairwise_mc, xi_argmin, EstimatorKind, XiContext};
use urabound::exponent::{exponent_e, index_sets, ln_closed_form_bound, m_value, p_term, CellParams, ExponentSettings};
use urabound::sa_mpr::{binomial_mixture, per_slot_pmf};
use urabound::specfun::{reg_gamma_lower, reg_gamma_upper};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Lower plus upper regularized gamma equals one within 1e-12 on 1000 points.
pub fn reg_gamma_complement() -> Check {
    let mut count = 0;
    for i in 0..25 {
        let a = 10f64.powf(-1.0 + 6.0 * i as f64 / 24.0);
        let mut xs: Vec<f64> = (0..20).map(|j| a * 10f64.powf(-2.0 + 4.0 * j as f64 / 19.0)).collect();
        xs.extend((0..20).map(|j| (a + (-6.0 + 12.0 * j as f64 / 19.0) * a.sqrt()).max(1e-3)));
        for x in xs {
            let s = reg_gamma_lower(a, x).map_err(|e| e.to_string())? + reg_gamma_upper(a, x).map_err(|e| e.to_string())?;
            ensure((s - 1.0).abs() <= 1e-12, || format!("P + Q = {s} at a = {a}, x = {x}"))?;
            count += 1;
        }
    }
    ensure(count == 1000, || format!("grid has {count} points"))
}

/// `E(0,0) = 0` and `p_{0,0} = 1` exactly.
pub fn zero_cell_is_trivial() -> Check {
    let settings = ExponentSettings::default();
    for ka in 0..=12u64 {
        for (low, high) in [(ka, ka), (ka.saturating_sub(2), ka + 1), (ka + 1, ka + 3)] {
            for &(n, pp) in &[(100.0, 0.01), (19200.0, 1e-3), (500.0, 2.0)] {
                let cell =
                    CellParams { ka, ka_prime_low: low, ka_prime_high: high, t: 0, t_prime: 0, n, log_m: 20.0, p_prime: pp };
                let e = exponent_e(&cell, &settings).exponent;
                let p = p_term(&cell, &settings);
                ensure(e == 0.0 && p == 1.0, || format!("E = {e}, p = {p} for {cell:?}"))?;
            }
        }
    }
    Ok(())
}

/// A random cell with `t ∈ 𝒯`, `t′ ∈ 𝒯̄_t` and `t + t′ > 0`.
pub fn random_cell(rng: &mut ChaCha8Rng) -> Option<CellParams> {
    let ka: u64 = rng.gen_range(1..=30);
    let kp: u64 = rng.gen_range(0..=32);
    let (rl, ru): (u64, u64) = (rng.gen_range(0..=3), rng.gen_range(0..=3));
    let low = kp.saturating_sub(rl);
    let high = kp + ru;
    let log_m = if rng.gen_bool(0.5) { 128.0 * std::f64::consts::LN_2 } else { rng.gen_range(4.0..30.0) };
    let sets = index_sets(ka, low, high, log_m);
    let ts: Vec<u64> = sets.t_values().collect();
    if ts.is_empty() {
        return None;
    }
    let t = ts[rng.gen_range(0..ts.len())];
    let (lo, hi) = sets.t_bar(t);
    if lo > hi {
        return None;
    }
    let tp = rng.gen_range(lo..=hi) as u64;
    if t + tp == 0 {
        return None;
    }
    let n = 10f64.powf(rng.gen_range(2.0..4.3)).round();
    let p_prime = 10f64.powf(rng.gen_range(-4.0..0.0));
    Some(CellParams { ka, ka_prime_low: low, ka_prime_high: high, t, t_prime: tp, n, log_m, p_prime })
}

/// The closed-form upper bound dominates the optimized `p_{t,t′}` on a random cell sample.
pub fn closed_form_bound_dominates(cells: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings = ExponentSettings::default();
    let mut done = 0;
    while done < cells {
        let Some(cell) = random_cell(&mut rng) else { continue };
        let p = p_term(&cell, &settings);
        let rb = ln_closed_form_bound(&cell).exp();
        ensure(p <= rb * (1.0 + 1e-9) || p <= f64::MIN_POSITIVE, || format!("p = {p} > bound {rb} for {cell:?}"))?;
        done += 1;
    }
    Ok(())
}

fn small_inputs(model: ActivityModel, n: f64, k: f64, ebn0: f64, ratio: f64, radius: (u64, u64)) -> BoundInputs {
    let window = truncation_bounds(&model, 1e-9).expect("window");
    let p = power_from_ebn0(ebn0, k, n);
    BoundInputs {
        system: SystemConfig {
            n,
            log_m: k * std::f64::consts::LN_2,
            p,
            p_prime: ratio * p,
            r_lower: radius.0,
            r_upper: radius.1,
            estimator: EstimatorKind::Ml,
        },
        activity: model,
        window,
    }
}

fn mc_options(samples: u64) -> EvalOptions {
    let mut opts = EvalOptions::default();
    opts.q.mc = Some(McConfig { samples, seed: 7, batch: 1000 });
    opts.q.gate = 0.0;
    opts.breakdown = true;
    opts
}

/// Every evaluated term contributes at most `P[Ka]` times its weight times each of `p`, `q` and `ξ`.
pub fn min_below_arguments() -> Check {
    let configs = [
        (ActivityModel::Poisson { mean: 3.0 }, 300.0, 10.0, 8.0, (0, 0)),
        (ActivityModel::Poisson { mean: 4.0 }, 400.0, 12.0, 10.0, (1, 1)),
        (ActivityModel::Deterministic { ka: 3 }, 200.0, 8.0, 6.0, (0, 0)),
    ];
    for (model, n, k, db, radius) in configs {
        let inputs = small_inputs(model.clone(), n, k, db, 0.9, radius);
        let r = eval_theorem1(&inputs, &mc_options(4000)).map_err(|e| e.to_string())?;
        ensure(r.breakdown.iter().any(|row| row.q < 1.0), || format!("no Monte-Carlo term below one for {model:?}"))?;
        for row in &r.breakdown {
            let scale = model.pmf(row.ka) * row.weight;
            for (name, x) in [("p", row.p), ("q", row.q), ("xi", row.xi)] {
                ensure(row.contribution <= scale * x * (1.0 + 1e-12), || {
                    format!("contribution {} exceeds {name} = {x} times {scale} in {row:?}", row.contribution)
                })?;
            }
        }
    }
    Ok(())
}

/// Known activity with zero radius gives bit-identical bounds.
pub fn deterministic_md_equals_fa() -> Check {
    for (ka, n, k, db, mc) in
        [(1, 100.0, 6.0, 4.0, false), (2, 200.0, 8.0, 6.0, true), (3, 300.0, 10.0, 3.0, false), (5, 400.0, 12.0, 5.0, true), (8, 800.0, 16.0, 7.0, false)]
    {
        let inputs = small_inputs(ActivityModel::Deterministic { ka }, n, k, db, 0.95, (0, 0));
        let opts = if mc { mc_options(2000) } else { EvalOptions::default() };
        let r = eval_theorem1(&inputs, &opts).map_err(|e| e.to_string())?;
        ensure(r.eps_md.to_bits() == r.eps_fa.to_bits(), || {
            format!("Ka = {ka}: eps_md = {} and eps_fa = {} differ", r.eps_md, r.eps_fa)
        })?;
        let md: usize = r.breakdown.iter().filter(|x| x.kind == TermKind::Md).count();
        let fa: usize = r.breakdown.iter().filter(|x| x.kind == TermKind::Fa).count();
        ensure(md == fa, || format!("Ka = {ka}: {md} misdetection rows against {fa} false-alarm rows"))?;
    }
    Ok(())
}

/// Largest absolute difference between the thinned Poisson law and the explicit binomial mixture.
pub fn thinning_distance(mean: f64, slots: u64) -> f64 {
    let model = ActivityModel::Poisson { mean };
    let top = (mean + 40.0 * mean.sqrt() + 60.0) as u64;
    let entries: Vec<(u64, f64)> = (0..=top).map(|k| (k, model.pmf(k))).collect();
    let mixed = binomial_mixture(&entries, slots);
    let thinned = per_slot_pmf(&model, slots).expect("valid law");
    mixed.iter().map(|&(k, p)| (p - thinned.pmf(k)).abs()).fold(0.0, f64::max)
}

/// The Poisson thinning identity holds within 1e-12.
pub fn poisson_thinning() -> Check {
    for &mean in &[0.5, 5.0, 50.0, 200.0] {
        for &slots in &[2, 3, 10, 50] {
            let d = thinning_distance(mean, slots);
            ensure(d <= 1e-12, || format!("sup distance {d} for mean {mean}, {slots} slots"))?;
        }
    }
    Ok(())
}

/// `(estimator, K, Ka′, n, P′, window)` for one `ξ` comparison.
pub type XiConfig = (EstimatorKind, u64, u64, f64, f64, (u64, u64));

/// Configurations of the `ξ` Monte-Carlo comparison.
pub fn xi_configs() -> Vec<XiConfig> {
    vec![
        (EstimatorKind::Ml, 10, 10, 100.0, 0.1, (5, 15)),
        (EstimatorKind::Ml, 10, 12, 200.0, 0.05, (5, 15)),
        (EstimatorKind::Ml, 3, 1, 50.0, 0.3, (0, 6)),
        (EstimatorKind::Energy, 10, 9, 100.0, 0.1, (5, 15)),
        (EstimatorKind::Energy, 20, 20, 500.0, 0.02, (15, 25)),
        (EstimatorKind::Energy, 4, 6, 80.0, 0.5, (1, 8)),
    ]
}

/// The closed-form `ξ` agrees with a direct Monte-Carlo estimate within three binomial standard errors.
pub fn xi_matches_monte_carlo(samples: u64) -> Check {
    for (i, (kind, ka, kp, n, pp, (kl, ku))) in xi_configs().into_iter().enumerate() {
        let model = ActivityModel::Poisson { mean: ka as f64 };
        let window = TruncationWindow::new(&model, kl, ku).map_err(|e| e.to_string())?;
        let ctx = XiContext { n, p_prime: pp, window };
        let (k, xi) = xi_argmin(kind, ka, kp, &ctx).map_err(|e| e.to_string())?.ok_or("singleton window")?;
        let (est, _) = pairwise_mc(kind, k, ka, kp, n, pp, samples, 1000 + i as u64);
        let se = (xi * (1.0 - xi) / samples as f64).sqrt();
        ensure((est - xi).abs() <= 3.0 * se, || {
            format!("{kind:?} Ka = {ka}, Ka′ = {kp}: closed form {xi}, Monte Carlo {est}, 3 SE = {}", 3.0 * se)
        })?;
    }
    Ok(())
}

/// Index sets by direct constraint checking on the decoded list.
///
/// Returns `𝒯` and, for each `t`, the sets of `t′` entering the misdetection and false-alarm sums.
pub fn brute_index_sets(ka: u64, low: u64, high: u64, m: f64) -> Vec<(u64, Vec<u64>, Vec<u64>)> {
    let delta = ka.saturating_sub(high);
    let extra = low.saturating_sub(ka);
    let fits = |tp: u64| (extra + tp) as f64 <= m - ka as f64;
    let list = |t: u64, tp: u64| (ka - delta - t + extra + tp) as i64;
    let mut out = Vec::new();
    for t in 0..=ka {
        if delta + t > ka || !(0..=high + 1).any(|tp| list(t, tp) >= low as i64 && fits(tp)) {
            continue;
        }
        let md: Vec<u64> =
            (0..=high + 1).filter(|&tp| (low as i64..=high as i64).contains(&list(t, tp)) && fits(tp)).collect();
        let fa: Vec<u64> = (0..=high + 1)
            .filter(|&tp| (low.max(1) as i64..=high as i64).contains(&list(t, tp)) && fits(tp))
            .collect();
        out.push((t, md, fa));
    }
    out
}

fn range_vec((lo, hi): (i64, i64)) -> Vec<u64> {
    if lo > hi {
        Vec::new()
    } else {
        (lo.max(0) as u64..=hi as u64).collect()
    }
}

/// The interval formulas of the index sets equal constraint checking for all `Ka ≤ 12` and radii up to 3.
pub fn index_sets_match_brute_force() -> Check {
    let mut cells = 0;
    for &log_m in &[16f64.ln(), 24f64.ln(), 128.0 * std::f64::consts::LN_2] {
        let m = m_value(log_m);
        for &(kl, ku) in &[(0u64, 15u64), (2, 15)] {
            for ka in 0..=12u64 {
                for kp in kl..=ku {
                    for rl in 0..=3u64 {
                        for ru in 0..=3u64 {
                            let low = kl.max(kp.saturating_sub(rl));
                            let high = ku.min(kp + ru);
                            let sets = index_sets(ka, low, high, log_m);
                            let got: Vec<(u64, Vec<u64>, Vec<u64>)> = sets
                                .t_values()
                                .map(|t| (t, range_vec(sets.t_bar(t)), range_vec(sets.t_set(t))))
                                .collect();
                            let want = brute_index_sets(ka, low, high, m);
                            ensure(got == want, || {
                                format!("Ka = {ka}, [{low}, {high}], M = {m}: formulas {got:?}, brute force {want:?}")
                            })?;
                            cells += 1;
                        }
                    }
                }
            }
        }
    }
    ensure(cells > 0, || "no cells checked".into())
}
