//! Run configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [system]
//! n = 19200
//! k = 128
//! radius = 3, 3
//!
//! [activity]
//! model = poisson
//! mean = 50
//!
//! [sweep]
//! ebn0 = 0db, 0.5db, 1db
//! ```
//!
//! Numbers accept scientific notation, energies per bit carry a `db` suffix,
//! lists are comma separated and radius pairs are written `rl:ru`. Every key is
//! consumed exactly once; anything left over is reported as unknown.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activity::ActivityModel;
use crate::bound_core::{EvalOptions, QPolicy};
use crate::dt_mc::McConfig;
use crate::error::{Error, Result};
use crate::estimator::EstimatorKind;
use crate::exponent::ExponentSettings;
use crate::search::{PprimeMode, SearchSettings, Targets};

/// Slot counts tried by the slotted scheme when none are configured.
pub const DEFAULT_SLOT_GRID: [u64; 12] = [1, 2, 4, 5, 8, 10, 16, 20, 25, 32, 40, 50];

/// Radius pairs tried by the slotted scheme when none are configured.
pub const DEFAULT_SLOT_RADII: [(u64, u64); 2] = [(0, 0), (1, 1)];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl RawConfig {
    /// Parses the text form; reports the offending line on syntax errors and duplicates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {no}: unterminated section header")))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Config(format!("line {no}: empty section name")));
                }
                raw.sections.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {no}: expected `key = value`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {no}: empty key")));
            }
            let sec = section
                .as_ref()
                .ok_or_else(|| Error::Config(format!("line {no}: key `{key}` appears before any section")))?;
            let map = raw.sections.get_mut(sec).expect("section was inserted");
            if let Some(prev) = map.get(key) {
                return Err(Error::Config(format!(
                    "line {no}: duplicate key `{key}` in [{sec}] (first set on line {})",
                    prev.line
                )));
            }
            map.insert(key.to_string(), Entry { line: no, value: value.trim().to_string() });
        }
        Ok(raw)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.sections.get_mut(section).and_then(|m| m.remove(key))
    }

    fn take_parsed<T>(&mut self, section: &str, key: &str, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).ok_or_else(|| {
                Error::Config(format!("line {}: [{section}] {key} = `{}` is not {what}", e.line, e.value))
            }),
        }
    }

    fn take_str(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.take(section, key).map(|e| (e.line, e.value))
    }

    fn f64(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        self.take_parsed(section, key, parse_number, "a number")
    }

    fn u64(&mut self, section: &str, key: &str) -> Result<Option<u64>> {
        self.take_parsed(section, key, parse_count, "a nonnegative integer")
    }

    fn bool(&mut self, section: &str, key: &str) -> Result<Option<bool>> {
        self.take_parsed(
            section,
            key,
            |s| match s {
                "true" | "yes" | "on" => Some(true),
                "false" | "no" | "off" => Some(false),
                _ => None,
            },
            "a boolean",
        )
    }

    fn db(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        self.take_parsed(section, key, parse_db, "a dB value such as `1.5db`")
    }

    fn list<T>(&mut self, section: &str, key: &str, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<Vec<T>>> {
        self.take_parsed(section, key, |s| parse_list(s, &f), what)
    }

    fn required<T>(value: Option<T>, section: &str, key: &str) -> Result<T> {
        value.ok_or_else(|| Error::Config(format!("missing required field `{key}` in [{section}]")))
    }

    fn finish(&self) -> Result<()> {
        for (sec, map) in &self.sections {
            if let Some((key, e)) = map.iter().min_by_key(|(_, e)| e.line) {
                return Err(Error::Config(format!("line {}: unknown key `{key}` in [{sec}]", e.line)));
            }
        }
        Ok(())
    }
}

fn parse_number(s: &str) -> Option<f64> {
    if s.to_ascii_lowercase().ends_with("db") {
        return None;
    }
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_count(s: &str) -> Option<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    let x = parse_number(s)?;
    (x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63)).then_some(x as u64)
}

fn parse_db(s: &str) -> Option<f64> {
    let lower = s.to_ascii_lowercase();
    let num = lower.strip_suffix("db")?.trim_end();
    num.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_pair(s: &str) -> Option<(u64, u64)> {
    let (a, b) = s.split_once(':')?;
    Some((parse_count(a.trim())?, parse_count(b.trim())?))
}

fn parse_list<T>(s: &str, f: &impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    let items: Option<Vec<T>> = s.split(',').map(|x| f(x.trim())).collect();
    items.filter(|v| !v.is_empty())
}

/// Activity section before any sweep over the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityConfig {
    /// Law of the number of active users.
    pub model: ActivityModel,
    /// Mass allowed outside the truncation window.
    pub truncation: f64,
}

/// System section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSection {
    /// Blocklength `n`.
    pub n: f64,
    /// Payload `k` in bits.
    pub k: f64,
    /// Activity estimator.
    pub estimator: EstimatorKind,
    /// Decoding radii `(rℓ, r_u)`.
    pub radius: (u64, u64),
    /// Codebook power policy.
    pub pprime: PprimeMode,
}

/// Slotted scheme settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlottedSection {
    /// Whether `⌊log₂ L⌋` payload bits ride on the slot index.
    pub slot_index_coding: bool,
    /// Slot counts to try.
    pub slots: Vec<u64>,
    /// Radius pairs to try.
    pub radius_grid: Vec<(u64, u64)>,
}

/// Interference-as-noise settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinSection {
    /// `None` optimizes `s`.
    pub s: Option<f64>,
    /// Use the normal approximation instead of Monte Carlo.
    pub normal: bool,
}

/// Fully resolved run configuration; every default is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Base seed of every Monte-Carlo stream.
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Not serialized, since it does not affect results.
    #[serde(skip)]
    pub threads: usize,
    /// System parameters.
    pub system: SystemSection,
    /// Activity law.
    pub activity: ActivityConfig,
    /// Targets, if given.
    pub targets: Option<Targets>,
    /// Energy-per-bit grid of curves, in dB.
    pub ebn0_db: Vec<f64>,
    /// Point at which a per-term breakdown is written, in dB.
    pub breakdown_db: Option<f64>,
    /// Means of the Poisson activity swept by the search commands.
    pub e_ka: Vec<f64>,
    /// Radius pairs tried by `search`.
    pub radius_grid: Vec<(u64, u64)>,
    /// Whether Monte-Carlo terms are used.
    pub mc_enabled: bool,
    /// Monte-Carlo sampling settings; the seed field mirrors [`RunConfig::seed`].
    pub mc: McConfig,
    /// Numerical options of the bound.
    pub eval: EvalOptions,
    /// Search settings.
    pub search: SearchSettings,
    /// Interference-as-noise settings.
    pub tin: TinSection,
    /// Slotted scheme settings.
    pub slotted: SlottedSection,
}

impl RunConfig {
    /// Parses and validates a configuration text.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let cfg = Self::from_raw(&mut raw)?;
        raw.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_raw(raw: &mut RawConfig) -> Result<Self> {
        let seed = raw.u64("run", "seed")?.unwrap_or(1);
        let threads = raw.u64("run", "threads")?.unwrap_or(0) as usize;

        let n = RawConfig::required(raw.f64("system", "n")?, "system", "n")?;
        let k = RawConfig::required(raw.f64("system", "k")?, "system", "k")?;
        let estimator = match raw.take_str("system", "estimator") {
            None => EstimatorKind::Ml,
            Some((line, v)) => v.parse().map_err(|_| {
                Error::Config(format!("line {line}: [system] estimator = `{v}` must be `ml` or `energy`"))
            })?,
        };
        let radius = match raw.take_str("system", "radius") {
            None => (0, 0),
            Some((line, v)) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [r] => parse_count(r).map(|r| (r, r)),
                    [a, b] => parse_count(a).zip(parse_count(b)),
                    _ => None,
                }
                .ok_or_else(|| Error::Config(format!("line {line}: [system] radius = `{v}` must be `r` or `rl, ru`")))?
            }
        };
        let ratio_grid = raw.list("system", "pprime_grid", parse_number, "a list of numbers")?;
        let pprime = match raw.take_str("system", "pprime") {
            None => PprimeMode::Grid(ratio_grid.clone().unwrap_or_else(default_ratio_grid)),
            Some((_, v)) if v == "grid" => PprimeMode::Grid(ratio_grid.clone().unwrap_or_else(default_ratio_grid)),
            Some((_, v)) if v == "continuous" => PprimeMode::Continuous,
            Some((line, v)) => PprimeMode::Fixed(parse_number(&v).ok_or_else(|| {
                Error::Config(format!(
                    "line {line}: [system] pprime = `{v}` must be `grid`, `continuous` or a ratio in (0,1)"
                ))
            })?),
        };
        if ratio_grid.is_some() && !matches!(pprime, PprimeMode::Grid(_)) {
            return Err(Error::Config("[system] pprime_grid requires pprime = grid".into()));
        }

        let model = match raw.take_str("activity", "model") {
            None => return Err(Error::Config("missing required field `model` in [activity]".into())),
            Some((_, m)) if m == "poisson" => {
                ActivityModel::Poisson { mean: RawConfig::required(raw.f64("activity", "mean")?, "activity", "mean")? }
            }
            Some((_, m)) if m == "deterministic" => {
                ActivityModel::Deterministic { ka: RawConfig::required(raw.u64("activity", "ka")?, "activity", "ka")? }
            }
            Some((_, m)) if m == "explicit" => {
                let pmf = raw.list(
                    "activity",
                    "pmf",
                    |s| {
                        let (k, w) = s.split_once(':')?;
                        Some((parse_count(k.trim())?, parse_number(w.trim())?))
                    },
                    "a list of `k:weight` pairs",
                )?;
                ActivityModel::Explicit { pmf: RawConfig::required(pmf, "activity", "pmf")? }
            }
            Some((line, m)) => {
                return Err(Error::Config(format!(
                    "line {line}: [activity] model = `{m}` must be `poisson`, `deterministic` or `explicit`"
                )))
            }
        };
        let truncation = raw.f64("activity", "truncation")?.unwrap_or(1e-9);

        let eps_md = raw.f64("targets", "eps_md")?;
        let eps_fa = raw.f64("targets", "eps_fa")?;
        let targets = match (eps_md, eps_fa) {
            (Some(eps_md_max), Some(eps_fa_max)) => Some(Targets { eps_md_max, eps_fa_max }),
            (None, None) => None,
            (None, Some(_)) => return Err(Error::Config("missing required field `eps_md` in [targets]".into())),
            (Some(_), None) => return Err(Error::Config("missing required field `eps_fa` in [targets]".into())),
        };

        let ebn0_db = raw.list("sweep", "ebn0", parse_db, "a list of dB values such as `1db, 2db`")?.unwrap_or_default();
        let breakdown_db = raw.db("sweep", "breakdown_at")?;
        let e_ka = raw.list("sweep", "e_ka", parse_number, "a list of numbers")?.unwrap_or_default();
        let radius_grid = raw.list("sweep", "radius_grid", parse_pair, "a list of `rl:ru` pairs")?.unwrap_or_else(|| vec![radius]);

        let mc_default = McConfig::default();
        let mc_enabled = raw.bool("mc", "enabled")?.unwrap_or(true);
        let mc = McConfig {
            samples: raw.u64("mc", "samples")?.unwrap_or(mc_default.samples),
            seed,
            batch: raw.u64("mc", "batch")?.unwrap_or(mc_default.batch),
        };
        let qd = QPolicy::default();
        let q = QPolicy {
            mc: mc_enabled.then_some(mc),
            t_max: raw.u64("mc", "t_max")?.unwrap_or(qd.t_max),
            ka_max: raw.u64("mc", "ka_max")?.unwrap_or(qd.ka_max),
            gate: raw.f64("mc", "gate")?.unwrap_or(qd.gate),
            subset_cap: raw.f64("mc", "subset_cap")?.unwrap_or(qd.subset_cap),
        };
        let ed = EvalOptions::default();
        let eval = EvalOptions {
            exponent: ExponentSettings {
                grid: raw.u64("numerics", "exponent_grid")?.map_or(ed.exponent.grid, |v| v as usize),
                refine_iters: raw.u64("numerics", "refine_iters")?.map_or(ed.exponent.refine_iters, |v| v as usize),
            },
            prune_rel: raw.f64("numerics", "prune_rel")?.unwrap_or(ed.prune_rel),
            q,
            breakdown: false,
        };

        let sd = SearchSettings::default();
        let bracket = raw.list("search", "bracket", parse_db, "a pair of dB values such as `-2db, 12db`")?;
        let bracket_db = match bracket.as_deref() {
            None => sd.bracket_db,
            Some([a, b]) => (*a, *b),
            Some(_) => return Err(Error::Config("[search] bracket needs exactly two dB values".into())),
        };
        let search = SearchSettings {
            mode: pprime.clone(),
            bracket_db,
            tol_db: raw.db("search", "tol")?.unwrap_or(sd.tol_db),
            max_db: raw.db("search", "max")?.unwrap_or(sd.max_db),
        };

        let s = match raw.take_str("tin", "s") {
            None => None,
            Some((_, v)) if v == "optimize" => None,
            Some((line, v)) => Some(parse_number(&v).ok_or_else(|| {
                Error::Config(format!("line {line}: [tin] s = `{v}` must be `optimize` or a positive number"))
            })?),
        };
        let normal = match raw.take_str("tin", "method") {
            None => false,
            Some((_, v)) if v == "mc" => false,
            Some((_, v)) if v == "normal" => true,
            Some((line, v)) => {
                return Err(Error::Config(format!("line {line}: [tin] method = `{v}` must be `mc` or `normal`")))
            }
        };

        let slotted = SlottedSection {
            slot_index_coding: raw.bool("sampr", "slot_index_coding")?.unwrap_or(true),
            slots: raw.list("sampr", "slots", parse_count, "a list of slot counts")?.unwrap_or_else(|| DEFAULT_SLOT_GRID.to_vec()),
            radius_grid: raw
                .list("sampr", "radius_grid", parse_pair, "a list of `rl:ru` pairs")?
                .unwrap_or_else(|| DEFAULT_SLOT_RADII.to_vec()),
        };

        Ok(RunConfig {
            seed,
            threads,
            system: SystemSection { n, k, estimator, radius, pprime },
            activity: ActivityConfig { model, truncation },
            targets,
            ebn0_db,
            breakdown_db,
            e_ka,
            radius_grid,
            mc_enabled,
            mc,
            eval,
            search,
            tin: TinSection { s, normal },
            slotted,
        })
    }

    /// Checks ranges that the parser cannot.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if !(s.n >= 1.0 && s.n.fract() == 0.0) {
            return Err(Error::Config(format!("[system] n must be a positive integer, got {}", s.n)));
        }
        if !(s.k > 0.0) {
            return Err(Error::Config(format!("[system] k must be positive, got {}", s.k)));
        }
        match &s.pprime {
            PprimeMode::Fixed(r) => check_ratio(*r)?,
            PprimeMode::Grid(g) => g.iter().try_for_each(|r| check_ratio(*r))?,
            PprimeMode::Continuous => {}
        }
        self.activity.model.validate()?;
        if !(self.activity.truncation > 0.0 && self.activity.truncation < 1.0) {
            return Err(Error::Config(format!(
                "[activity] truncation must lie in (0,1), got {}",
                self.activity.truncation
            )));
        }
        if let Some(t) = &self.targets {
            t.validate()?;
        }
        if !self.e_ka.is_empty() && !matches!(self.activity.model, ActivityModel::Poisson { .. }) {
            return Err(Error::Config("[sweep] e_ka requires model = poisson".into()));
        }
        if self.e_ka.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config("[sweep] e_ka values must be positive".into()));
        }
        if self.mc_enabled {
            self.mc.validate()?;
        }
        if !(self.eval.prune_rel >= 0.0 && self.eval.prune_rel < 1.0) {
            return Err(Error::Config(format!("[numerics] prune_rel must lie in [0,1), got {}", self.eval.prune_rel)));
        }
        if self.eval.exponent.grid < 2 {
            return Err(Error::Config("[numerics] exponent_grid must be at least 2".into()));
        }
        let (lo, hi) = self.search.bracket_db;
        if !(lo < hi && hi <= self.search.max_db) {
            return Err(Error::Config(format!("[search] bracket ({lo}, {hi}) must be increasing and below max")));
        }
        if !(self.search.tol_db > 0.0) {
            return Err(Error::Config("[search] tol must be positive".into()));
        }
        if let Some(s) = self.tin.s {
            if !(s > 0.0) {
                return Err(Error::Config(format!("[tin] s must be positive, got {s}")));
            }
        }
        if self.slotted.slots.contains(&0) {
            return Err(Error::Config("[sampr] slot counts must be positive".into()));
        }
        Ok(())
    }

    /// Activity laws visited by the search commands: one per `e_ka`, or the configured law.
    pub fn activity_sweep(&self) -> Vec<ActivityModel> {
        if self.e_ka.is_empty() {
            vec![self.activity.model.clone()]
        } else {
            self.e_ka.iter().map(|&mean| ActivityModel::Poisson { mean }).collect()
        }
    }

    /// `ln M` for the configured payload.
    pub fn log_m(&self) -> f64 {
        self.system.k * std::f64::consts::LN_2
    }

    /// Targets, or an error naming the missing section.
    pub fn require_targets(&self) -> Result<Targets> {
        self.targets.ok_or_else(|| Error::Config("missing required field `eps_md` in [targets]".into()))
    }
}

fn default_ratio_grid() -> Vec<f64> {
    match PprimeMode::default() {
        PprimeMode::Grid(g) => g,
        _ => unreachable!("default mode is a grid"),
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("P′/P ratio must lie in (0,1), got {r}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[system]\nn = 200\nk = 8\n[activity]\nmodel = deterministic\nka = 2\n";

    #[test]
    fn minimal_fills_defaults() {
        let c = RunConfig::from_text(MINIMAL).unwrap();
        assert_eq!(c.system.radius, (0, 0));
        assert_eq!(c.system.pprime, PprimeMode::default());
        assert_eq!(c.activity.truncation, 1e-9);
        assert_eq!(c.slotted.slots, DEFAULT_SLOT_GRID.to_vec());
        assert!(c.mc_enabled);
    }

    #[test]
    fn missing_n_is_named() {
        let err = RunConfig::from_text("[system]\nk = 8\n[activity]\nmodel = deterministic\nka = 2\n").unwrap_err();
        assert!(err.to_string().contains("`n`"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::from_text(&format!("{MINIMAL}[mc]\nsampels = 10\n")).unwrap_err();
        assert!(err.to_string().contains("line 8") && err.to_string().contains("sampels"), "{err}");
    }

    #[test]
    fn db_suffix_is_enforced() {
        let ok = RunConfig::from_text(&format!("{MINIMAL}[sweep]\nebn0 = -1.5dB, 2e0db\n")).unwrap();
        assert_eq!(ok.ebn0_db, vec![-1.5, 2.0]);
        assert!(RunConfig::from_text(&format!("{MINIMAL}[sweep]\nebn0 = 1, 2\n")).is_err());
        assert!(RunConfig::from_text(&MINIMAL.replace("n = 200", "n = 200db")).is_err());
    }

    #[test]
    fn scientific_notation_and_pairs() {
        let c = RunConfig::from_text(&format!("{MINIMAL}[mc]\nsamples = 2e4\n[sweep]\nradius_grid = 0:0, 3:1\n")).unwrap();
        assert_eq!(c.mc.samples, 20000);
        assert_eq!(c.radius_grid, vec![(0, 0), (3, 1)]);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(RunConfig::from_text(&format!("{MINIMAL}[system]\nk = 9\n")).is_err());
    }
}
