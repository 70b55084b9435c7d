//! Command-line front end: subcommands, CSV tables and JSON metadata.
//!
//! Every command reads a [`RunConfig`], writes one CSV table headed by
//! `# schema=1` and a `metadata.json` with the resolved configuration and the
//! per-row diagnostics. Apart from the `runtime` object of the metadata, the
//! outputs depend only on the configuration and the seed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::activity::{truncation_bounds, ActivityModel, Ptilde};
use crate::bound_core::{
    eval_floors, eval_theorem1, power_from_ebn0, BoundInputs, BoundResult, BreakdownRow, EvalStats, SystemConfig,
    TermKind,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::sa_mpr::{optimize_slots, SaMprInputs};
use crate::search::{optimize_radius, ranks_before, required_ebn0, BoundFamily, PprimeMode, Theorem1Family};
use crate::tin::{EtaMethod, SChoice, TinBound, TinInputs};

/// Version of the CSV layout, written as the first line of every table.
pub const SCHEMA: u32 = 1;

/// Command-line arguments.
#[derive(Debug, Parser)]
#[command(name = "urabound", version, about = "Random-coding bounds for unsourced random access with unknown activity")]
pub struct Cli {
    /// What to compute.
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Misdetection and false-alarm bounds over an Eb/N0 grid.
    Bound,
    /// Error floors for every activity law and radius pair.
    Floors,
    /// Minimum required Eb/N0 of the random-coding bound.
    Search,
    /// Minimum required Eb/N0 when interference is treated as noise.
    Tin,
    /// Minimum required Eb/N0 of slotted ALOHA with multi-packet reception.
    Sampr,
    /// Quick internal consistency checks.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bound => "bound",
            Command::Floors => "floors",
            Command::Search => "search",
            Command::Tin => "tin",
            Command::Sampr => "sampr",
            Command::Selftest => "selftest",
        }
    }
}

/// Process exit status of an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) => 2,
        Error::BelowFloor { .. } | Error::InfeasibleBracket(_) => 3,
        Error::Domain(_) | Error::Numerical(_) | Error::SubsetCap { .. } => 4,
    }
}

/// Runs the command line and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Loads the configuration, applies the flag overrides and runs the command.
pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            Some(RunConfig::from_text(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?)
        }
        None if cli.command == Command::Selftest => None,
        None => return Err(Error::Config("--config is required for this command".into())),
    };
    if let Some(c) = cfg.as_mut() {
        if let Some(seed) = cli.seed {
            c.seed = seed;
            c.mc.seed = seed;
            if let Some(mc) = c.eval.q.mc.as_mut() {
                mc.seed = seed;
            }
        }
        if let Some(t) = cli.threads {
            c.threads = t;
        }
    }
    let threads = cli.threads.or(cfg.as_ref().map(|c| c.threads)).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let start = Instant::now();
    let report = pool.install(|| match (cli.command, cfg.as_ref()) {
        (Command::Selftest, _) => selftest(),
        (Command::Bound, Some(c)) => cmd_bound(c),
        (Command::Floors, Some(c)) => cmd_floors(c),
        (Command::Search, Some(c)) => cmd_search(c),
        (Command::Tin, Some(c)) => cmd_tin(c),
        (Command::Sampr, Some(c)) => cmd_sampr(c),
        (_, None) => unreachable!("configuration checked above"),
    })?;
    let runtime = json!({ "threads": pool.current_num_threads(), "wall_time_s": start.elapsed().as_secs_f64() });
    report.write(&cli.out, cli.command, cfg.as_ref(), runtime)
}

/// Tables and diagnostics produced by one command.
#[derive(Debug, Clone, Default)]
pub struct Report {
    /// `(file name, CSV text)` pairs.
    pub tables: Vec<(String, String)>,
    /// Per-row diagnostics for the metadata.
    pub results: Vec<Value>,
    /// Lines echoed to standard output.
    pub console: Vec<String>,
}

impl Report {
    fn write(&self, dir: &Path, command: Command, cfg: Option<&RunConfig>, runtime: Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.tables {
            std::fs::write(dir.join(name), text)?;
        }
        if cfg.is_some() {
            let meta = json!({
                "schema": SCHEMA,
                "command": command.name(),
                "version": env!("CARGO_PKG_VERSION"),
                "config": cfg,
                "results": self.results,
                "runtime": runtime,
            });
            let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(dir.join("metadata.json"), text + "\n")?;
        }
        for line in &self.console {
            println!("{line}");
        }
        Ok(())
    }
}

/// CSV table with the schema line and a header.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
}

impl Table {
    /// Starts a table with the given columns.
    pub fn new(columns: &[&str]) -> Self {
        Self { text: format!("# schema={SCHEMA}\n{}\n", columns.join(",")) }
    }

    /// Appends a row.
    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    /// The CSV text.
    pub fn finish(self) -> String {
        self.text
    }
}

fn prob(x: f64) -> String {
    format!("{x:e}")
}

fn plain(x: f64) -> String {
    format!("{x}")
}

fn pair(r: (u64, u64)) -> String {
    format!("{}:{}", r.0, r.1)
}

fn bound_inputs(cfg: &RunConfig, model: &ActivityModel, radius: (u64, u64)) -> Result<BoundInputs> {
    let window = truncation_bounds(model, cfg.activity.truncation)?;
    Ok(BoundInputs {
        system: SystemConfig {
            n: cfg.system.n,
            log_m: cfg.log_m(),
            p: 2.0,
            p_prime: 1.0,
            r_lower: radius.0,
            r_upper: radius.1,
            estimator: cfg.system.estimator,
        },
        activity: model.clone(),
        window,
    })
}

fn family(cfg: &RunConfig, inputs: BoundInputs) -> Theorem1Family {
    Theorem1Family { inputs, opts: cfg.eval, payload_bits: cfg.system.k, zero_radius_route: false }
}

fn eval_at(inputs: &BoundInputs, cfg: &RunConfig, p: f64, ratio: f64, breakdown: bool) -> Result<BoundResult> {
    let mut local = inputs.clone();
    local.system.p = p;
    local.system.p_prime = ratio * p;
    let mut opts = cfg.eval;
    opts.breakdown = breakdown;
    eval_theorem1(&local, &opts)
}

fn best_ratio(inputs: &BoundInputs, cfg: &RunConfig, p: f64) -> Result<(f64, BoundResult)> {
    let ratios = match &cfg.system.pprime {
        PprimeMode::Fixed(r) => vec![*r],
        PprimeMode::Grid(g) => g.clone(),
        PprimeMode::Continuous => {
            return Err(Error::Config("pprime = continuous applies to searches only; use a ratio or grid".into()))
        }
    };
    let mut best: Option<(f64, BoundResult)> = None;
    for r in ratios {
        let res = eval_at(inputs, cfg, p, r, false)?;
        if best.as_ref().is_none_or(|(_, b)| ranks_before((res.eps_md, res.eps_fa), (b.eps_md, b.eps_fa))) {
            best = Some((r, res));
        }
    }
    best.ok_or_else(|| Error::Config("[system] pprime_grid is empty".into()))
}

#[derive(Serialize)]
struct PointMeta {
    ebn0_db: f64,
    pprime_ratio: f64,
    eps_md: f64,
    eps_fa: f64,
    ptilde: Ptilde,
    pruned_md: f64,
    pruned_fa: f64,
    stats: EvalStats,
}

fn point_meta(ebn0_db: f64, ratio: f64, r: &BoundResult) -> Value {
    serde_json::to_value(PointMeta {
        ebn0_db,
        pprime_ratio: ratio,
        eps_md: r.eps_md,
        eps_fa: r.eps_fa,
        ptilde: r.ptilde,
        pruned_md: r.pruned_md,
        pruned_fa: r.pruned_fa,
        stats: r.stats,
    })
    .unwrap_or(Value::Null)
}

/// Bounds over the configured Eb/N0 grid, plus an optional per-term breakdown.
pub fn cmd_bound(cfg: &RunConfig) -> Result<Report> {
    if cfg.ebn0_db.is_empty() {
        return Err(Error::Config("missing required field `ebn0` in [sweep]".into()));
    }
    let inputs = bound_inputs(cfg, &cfg.activity.model, cfg.system.radius)?;
    let fam = family(cfg, inputs.clone());
    let floors = fam.floors()?;
    let mut table = Table::new(&["ebn0_db", "eps_md", "eps_fa", "floor_md", "floor_fa"]);
    let mut report = Report::default();
    for &db in &cfg.ebn0_db {
        let p = power_from_ebn0(db, cfg.system.k, cfg.system.n);
        let (ratio, r) = best_ratio(&inputs, cfg, p)?;
        table.row(&[plain(db), prob(r.eps_md), prob(r.eps_fa), prob(floors.md), prob(floors.fa)]);
        report.results.push(point_meta(db, ratio, &r));
    }
    report.tables.push(("curve.csv".into(), table.finish()));
    if let Some(db) = cfg.breakdown_db {
        let p = power_from_ebn0(db, cfg.system.k, cfg.system.n);
        let (ratio, _) = best_ratio(&inputs, cfg, p)?;
        let r = eval_at(&inputs, cfg, p, ratio, true)?;
        report.tables.push(("breakdown.csv".into(), breakdown_table(&r.breakdown)));
        let mut meta = point_meta(db, ratio, &r);
        meta["breakdown"] = Value::Bool(true);
        report.results.push(meta);
    }
    report.results.push(json!({ "floors": floors, "window": inputs.window }));
    Ok(report)
}

/// Breakdown rows; misdetection terms leave the false-alarm columns and `t_prime` empty and vice versa.
pub fn breakdown_table(rows: &[BreakdownRow]) -> String {
    let mut table = Table::new(&[
        "ka",
        "ka_prime",
        "t",
        "t_prime",
        "p",
        "q",
        "xi",
        "weight_md",
        "weight_fa",
        "contribution_md",
        "contribution_fa",
    ]);
    for r in rows {
        let (wm, wf, cm, cf) = match r.kind {
            TermKind::Md => (prob(r.weight), String::new(), prob(r.contribution), String::new()),
            TermKind::Fa => (String::new(), prob(r.weight), String::new(), prob(r.contribution)),
        };
        table.row(&[
            r.ka.to_string(),
            r.ka_prime.to_string(),
            r.t.to_string(),
            r.t_prime.map(|t| t.to_string()).unwrap_or_default(),
            prob(r.p),
            prob(r.q),
            prob(r.xi),
            wm,
            wf,
            cm,
            cf,
        ]);
    }
    table.finish()
}

/// Error floors for every activity law of the sweep and every radius pair.
pub fn cmd_floors(cfg: &RunConfig) -> Result<Report> {
    let mut table = Table::new(&["e_ka", "radius_used", "floor_md", "floor_fa", "pbar"]);
    let mut report = Report::default();
    for model in cfg.activity_sweep() {
        let window = truncation_bounds(&model, cfg.activity.truncation)?;
        for &radius in &cfg.radius_grid {
            let f = eval_floors(&model, &window, cfg.system.n, cfg.log_m(), radius.0, radius.1, cfg.system.estimator)?;
            table.row(&[plain(model.mean()), pair(radius), prob(f.md), prob(f.fa), prob(f.pbar)]);
            report.console.push(format!(
                "e_ka={} radius={} floor_md={:e} floor_fa={:e}",
                model.mean(),
                pair(radius),
                f.md,
                f.fa
            ));
            report.results.push(json!({ "e_ka": model.mean(), "radius": radius, "window": window, "floors": f }));
        }
    }
    report.tables.push(("floors.csv".into(), table.finish()));
    Ok(report)
}

/// Minimum required Eb/N0 of the random-coding bound, with the radius chosen from the grid.
pub fn cmd_search(cfg: &RunConfig) -> Result<Report> {
    let targets = cfg.require_targets()?;
    let mut table = Table::new(&["e_ka", "required_ebn0_db", "radius_used", "pprime_ratio"]);
    let mut report = Report::default();
    for model in cfg.activity_sweep() {
        let make = |radius: (u64, u64)| -> Result<Box<dyn BoundFamily>> {
            Ok(Box::new(family(cfg, bound_inputs(cfg, &model, radius)?)))
        };
        let (radius, o) = optimize_radius(&cfg.radius_grid, &targets, &cfg.search, make)?;
        let inputs = bound_inputs(cfg, &model, radius)?;
        let r = eval_at(&inputs, cfg, o.p, o.pprime_ratio, false)?;
        table.row(&[plain(model.mean()), plain(o.ebn0_db), pair(radius), plain(o.pprime_ratio)]);
        let mut meta = point_meta(o.ebn0_db, o.pprime_ratio, &r);
        meta["e_ka"] = json!(model.mean());
        meta["radius"] = json!(radius);
        meta["outcome"] = json!(o);
        report.results.push(meta);
        report.console.push(format!("e_ka={} required_ebn0_db={:.4} radius={}", model.mean(), o.ebn0_db, pair(radius)));
    }
    report.tables.push(("search.csv".into(), table.finish()));
    Ok(report)
}

/// Minimum required Eb/N0 when interference is treated as noise; records the chosen `s`.
pub fn cmd_tin(cfg: &RunConfig) -> Result<Report> {
    let targets = cfg.require_targets()?;
    let mut table = Table::new(&["e_ka", "required_ebn0_db", "radius_used", "pprime_ratio", "s"]);
    let mut report = Report::default();
    for model in cfg.activity_sweep() {
        let window = truncation_bounds(&model, cfg.activity.truncation)?;
        let bound = TinBound::new(TinInputs {
            activity: model.clone(),
            window,
            n: cfg.system.n,
            log_m: cfg.log_m(),
            payload_bits: cfg.system.k,
            estimator: cfg.system.estimator,
            method: if cfg.tin.normal { EtaMethod::Normal } else { EtaMethod::MonteCarlo(cfg.mc) },
            s: cfg.tin.s.map_or(SChoice::Optimize, SChoice::Fixed),
        })?;
        let o = required_ebn0(&bound, &targets, &cfg.search)?;
        let at = bound.eval(o.p, o.p_prime)?;
        table.row(&[plain(model.mean()), plain(o.ebn0_db), String::new(), plain(o.pprime_ratio), plain(at.s)]);
        report.results.push(json!({
            "e_ka": model.mean(),
            "window": window,
            "outcome": o,
            "s_star": at.s,
            "at_outcome": at,
            "normal_remainder_ignored": cfg.tin.normal,
        }));
        report.console.push(format!("e_ka={} required_ebn0_db={:.4} s={:.4}", model.mean(), o.ebn0_db, at.s));
    }
    report.tables.push(("tin.csv".into(), table.finish()));
    Ok(report)
}

/// Minimum required Eb/N0 of the slotted scheme over the slot and radius grids.
pub fn cmd_sampr(cfg: &RunConfig) -> Result<Report> {
    let targets = cfg.require_targets()?;
    let mut table = Table::new(&["e_ka", "required_ebn0_db", "radius_used", "pprime_ratio", "slots"]);
    let mut report = Report::default();
    for model in cfg.activity_sweep() {
        let inputs = SaMprInputs {
            activity: model.clone(),
            n: cfg.system.n,
            payload_bits: cfg.system.k,
            p: 2.0,
            p_prime: 1.0,
            radius: (0, 0),
            estimator: cfg.system.estimator,
            truncation: cfg.activity.truncation,
        };
        let c = optimize_slots(
            &inputs,
            &cfg.slotted.slots,
            &cfg.slotted.radius_grid,
            cfg.slotted.slot_index_coding,
            &targets,
            &cfg.search,
            &cfg.eval,
        )?;
        let o = c.outcome;
        table.row(&[plain(model.mean()), plain(o.ebn0_db), pair(c.radius), plain(o.pprime_ratio), c.slots.to_string()]);
        report.results.push(json!({ "e_ka": model.mean(), "choice": c }));
        report.console.push(format!(
            "e_ka={} required_ebn0_db={:.4} slots={} radius={}",
            model.mean(),
            o.ebn0_db,
            c.slots,
            pair(c.radius)
        ));
    }
    report.tables.push(("sampr.csv".into(), table.finish()));
    Ok(report)
}

/// Fast identities that every build must satisfy; fails with a numerical error if one does not hold.
pub fn selftest() -> Result<Report> {
    use crate::exponent::{exponent_e, CellParams, ExponentSettings};
    use crate::sa_mpr::per_slot_pmf;
    use crate::specfun::{reg_gamma_lower, reg_gamma_upper};

    let mut checks: Vec<(&str, bool)> = Vec::new();

    let mut worst: f64 = 0.0;
    for &(a, x) in &[(0.5, 0.1), (3.0, 2.5), (50.0, 48.0), (19200.0, 19500.0), (1e4, 5e3)] {
        worst = worst.max((reg_gamma_lower(a, x)? + reg_gamma_upper(a, x)? - 1.0).abs());
    }
    checks.push(("regularized gamma halves sum to one", worst <= 1e-12));

    let cell = CellParams {
        ka: 5,
        ka_prime_low: 5,
        ka_prime_high: 5,
        t: 0,
        t_prime: 0,
        n: 1000.0,
        log_m: 20.0,
        p_prime: 1.0,
    };
    let e = exponent_e(&cell, &ExponentSettings::default());
    checks.push(("E(0,0) vanishes", e.exponent == 0.0));

    let thinned = per_slot_pmf(&ActivityModel::Poisson { mean: 12.0 }, 4)?;
    checks.push(("Poisson thinning keeps the law", thinned == ActivityModel::Poisson { mean: 3.0 }));

    let model = ActivityModel::Deterministic { ka: 2 };
    let window = truncation_bounds(&model, 1e-9)?;
    let inputs = BoundInputs {
        system: SystemConfig {
            n: 200.0,
            log_m: 8.0 * std::f64::consts::LN_2,
            p: power_from_ebn0(8.0, 8.0, 200.0),
            p_prime: 0.95 * power_from_ebn0(8.0, 8.0, 200.0),
            r_lower: 0,
            r_upper: 0,
            estimator: crate::estimator::EstimatorKind::Ml,
        },
        activity: model,
        window,
    };
    let r = eval_theorem1(&inputs, &Default::default())?;
    checks.push(("known activity with zero radius gives equal bounds", r.eps_md == r.eps_fa));

    let mut report = Report::default();
    let mut failed = Vec::new();
    for (name, ok) in checks {
        report.console.push(format!("{} {name}", if ok { "PASS" } else { "FAIL" }));
        if !ok {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(report)
    } else {
        for line in &report.console {
            println!("{line}");
        }
        Err(Error::Numerical(format!("self-test failed: {}", failed.join("; "))))
    }
}
