//! Slotted ALOHA with multi-packet reception: the frame is split into `L`
//! slots, each active user picks one slot uniformly, and every slot is decoded
//! with the random-coding bound at blocklength `⌊n/L⌋` and power `P·L`.
//! Optionally `⌊log₂ L⌋` payload bits are carried by the slot index.

use serde::{Deserialize, Serialize};

use crate::activity::{truncation_bounds, ActivityModel};
use crate::bound_core::{eval_floors, eval_theorem1, BoundInputs, BoundResult, EvalOptions, Floors, SystemConfig};
use crate::error::{Error, Result};
use crate::estimator::EstimatorKind;
use crate::search::{required_ebn0, BoundFamily, SearchOutcome, SearchSettings, Targets};
use crate::specfun::log_binomial_exact;

/// Slot structure of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlottedConfig {
    /// Number of slots `L`.
    pub slots: u64,
    /// Whether `⌊log₂ L⌋` payload bits are conveyed by the slot index.
    pub slot_index_coding: bool,
}

/// Law of the number of users in one slot.
///
/// A Poisson law thins to a Poisson law with mean divided by `L`; any other law
/// becomes the binomial mixture `Σ P(Ka) C(Ka,K) L^{-K} (1 - 1/L)^{Ka-K}`.
pub fn per_slot_pmf(model: &ActivityModel, slots: u64) -> Result<ActivityModel> {
    model.validate()?;
    if slots == 0 {
        return Err(Error::Config("number of slots must be positive".into()));
    }
    if slots == 1 {
        return Ok(model.clone());
    }
    if let ActivityModel::Poisson { mean } = model {
        return Ok(ActivityModel::Poisson { mean: mean / slots as f64 });
    }
    let entries: Vec<(u64, f64)> = match model {
        ActivityModel::Deterministic { ka } => vec![(*ka, 1.0)],
        ActivityModel::Explicit { pmf } => pmf.clone(),
        ActivityModel::Poisson { .. } => unreachable!("handled above"),
    };
    Ok(ActivityModel::Explicit { pmf: binomial_mixture(&entries, slots) })
}

/// PMF of the binomial mixture over `0..=max Ka`.
pub fn binomial_mixture(entries: &[(u64, f64)], slots: u64) -> Vec<(u64, f64)> {
    let max = entries.iter().map(|e| e.0).max().unwrap_or(0);
    let q = 1.0 / slots as f64;
    let (lq, lr) = (q.ln(), (-q).ln_1p());
    (0..=max)
        .map(|k| {
            let p: f64 = entries
                .iter()
                .filter(|(ka, _)| *ka >= k)
                .map(|&(ka, w)| {
                    let rest = (ka - k) as f64;
                    let l = log_binomial_exact(ka as f64, k) + k as f64 * lq + if rest > 0.0 { rest * lr } else { 0.0 };
                    w * l.exp()
                })
                .sum();
            (k, p)
        })
        .collect()
}

/// Frame-level parameters of a slotted evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaMprInputs {
    /// Frame activity law.
    pub activity: ActivityModel,
    /// Frame blocklength `n`.
    pub n: f64,
    /// Payload `k` in bits.
    pub payload_bits: f64,
    /// Frame power `P`.
    pub p: f64,
    /// Frame codebook power `P′`.
    pub p_prime: f64,
    /// Per-slot decoding radii `(rℓ, r_u)`.
    pub radius: (u64, u64),
    /// Activity estimator.
    pub estimator: EstimatorKind,
    /// Truncation threshold applied to the per-slot law.
    pub truncation: f64,
}

/// Per-slot inputs of the random-coding bound.
pub fn slot_inputs(inputs: &SaMprInputs, slotted: &SlottedConfig) -> Result<BoundInputs> {
    let l = slotted.slots;
    if l == 0 {
        return Err(Error::Config("number of slots must be positive".into()));
    }
    let n_slot = (inputs.n / l as f64).floor();
    if n_slot < 1.0 {
        return Err(Error::Config(format!("{l} slots leave no channel use per slot")));
    }
    let index_bits = if slotted.slot_index_coding { (l as f64).log2().floor() } else { 0.0 };
    if index_bits >= inputs.payload_bits {
        return Err(Error::Config(format!(
            "slot-index coding needs more than {index_bits} payload bits, got {}",
            inputs.payload_bits
        )));
    }
    let activity = per_slot_pmf(&inputs.activity, l)?;
    let window = truncation_bounds(&activity, inputs.truncation)?;
    Ok(BoundInputs {
        system: SystemConfig {
            n: n_slot,
            log_m: (inputs.payload_bits - index_bits) * std::f64::consts::LN_2,
            p: inputs.p * l as f64,
            p_prime: inputs.p_prime * l as f64,
            r_lower: inputs.radius.0,
            r_upper: inputs.radius.1,
            estimator: inputs.estimator,
        },
        activity,
        window,
    })
}

/// Bounds of the slotted scheme; the per-user error probabilities equal the per-slot ones.
pub fn eval_sa_mpr(inputs: &SaMprInputs, slotted: &SlottedConfig, opts: &EvalOptions) -> Result<BoundResult> {
    eval_theorem1(&slot_inputs(inputs, slotted)?, opts)
}

/// The slotted scheme as a [`BoundFamily`] in frame-level powers.
#[derive(Debug, Clone)]
pub struct SaMprFamily {
    slot: BoundInputs,
    slots: u64,
    frame_n: f64,
    payload_bits: f64,
    opts: EvalOptions,
}

impl SaMprFamily {
    /// Builds the per-slot problem; the powers in `inputs` are ignored.
    pub fn new(inputs: &SaMprInputs, slotted: &SlottedConfig, opts: EvalOptions) -> Result<Self> {
        let mut probe = inputs.clone();
        probe.p = 2.0;
        probe.p_prime = 1.0;
        let slot = slot_inputs(&probe, slotted)?;
        Ok(Self { slot, slots: slotted.slots, frame_n: inputs.n, payload_bits: inputs.payload_bits, opts })
    }

    /// Per-slot inputs.
    pub fn slot(&self) -> &BoundInputs {
        &self.slot
    }
}

impl BoundFamily for SaMprFamily {
    fn sums(&self, p_prime: f64) -> Result<(f64, f64)> {
        let mut inputs = self.slot.clone();
        inputs.system.p_prime = p_prime * self.slots as f64;
        inputs.system.p = 2.0 * inputs.system.p_prime;
        let r = eval_theorem1(&inputs, &self.opts)?;
        let base = r.ptilde.tail + r.ptilde.collision;
        Ok((r.sum_md + base, r.sum_fa + base))
    }

    fn power_channel(&self) -> (f64, f64) {
        (self.slot.system.n, self.slot.activity.mean())
    }

    fn floors(&self) -> Result<Floors> {
        let s = self.slot.system;
        eval_floors(&self.slot.activity, &self.slot.window, s.n, s.log_m, s.r_lower, s.r_upper, s.estimator)
    }

    fn payload_bits(&self) -> f64 {
        self.payload_bits
    }

    fn frame_n(&self) -> f64 {
        self.frame_n
    }
}

/// Outcome of the slot and radius optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotChoice {
    /// Best number of slots.
    pub slots: u64,
    /// Best per-slot radii.
    pub radius: (u64, u64),
    /// Search result at that choice.
    pub outcome: SearchOutcome,
}

/// Smallest requirement over slot counts and radii; ties go to fewer slots, then to the earlier radius pair.
pub fn optimize_slots(
    inputs: &SaMprInputs,
    slot_grid: &[u64],
    radius_grid: &[(u64, u64)],
    slot_index_coding: bool,
    targets: &Targets,
    settings: &SearchSettings,
    opts: &EvalOptions,
) -> Result<SlotChoice> {
    let mut slots: Vec<u64> = slot_grid.to_vec();
    slots.sort_unstable();
    slots.dedup();
    let mut best: Option<SlotChoice> = None;
    let mut last_err = None;
    for &l in &slots {
        for &radius in radius_grid {
            let mut local = inputs.clone();
            local.radius = radius;
            let family = SaMprFamily::new(&local, &SlottedConfig { slots: l, slot_index_coding }, *opts)?;
            match required_ebn0(&family, targets, settings) {
                Ok(o) => {
                    if best.is_none_or(|b| o.ebn0_db < b.outcome.ebn0_db) {
                        best = Some(SlotChoice { slots: l, radius, outcome: o });
                    }
                }
                Err(e @ (Error::BelowFloor { .. } | Error::InfeasibleBracket(_))) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Config("slot or radius grid is empty".into())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_splits_binomially() {
        let m = per_slot_pmf(&ActivityModel::Deterministic { ka: 4 }, 2).unwrap();
        let ActivityModel::Explicit { pmf } = m else { panic!("expected explicit pmf") };
        let want = [1.0, 4.0, 6.0, 4.0, 1.0];
        for (k, p) in pmf {
            assert!((p - want[k as usize] / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_slot_is_identity() {
        let m = ActivityModel::Poisson { mean: 7.0 };
        assert_eq!(per_slot_pmf(&m, 1).unwrap(), m);
    }

    #[test]
    fn index_bits_must_fit() {
        let inputs = SaMprInputs {
            activity: ActivityModel::Poisson { mean: 2.0 },
            n: 100.0,
            payload_bits: 3.0,
            p: 1.0,
            p_prime: 0.9,
            radius: (0, 0),
            estimator: EstimatorKind::Ml,
            truncation: 1e-6,
        };
        assert!(slot_inputs(&inputs, &SlottedConfig { slots: 8, slot_index_coding: true }).is_err());
        assert!(slot_inputs(&inputs, &SlottedConfig { slots: 8, slot_index_coding: false }).is_ok());
    }
}
