use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use urabound::activity::{truncation_bounds, ActivityModel};
use urabound::bound_core::eval_floors;
use urabound::estimator::EstimatorKind;

fn urabound(args: &[&str], config: &str, out: &Path) -> Output {
    let cfg = out.join("run.cfg");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_urabound"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn without_runtime(meta: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(meta).unwrap();
    v.as_object_mut().unwrap().remove("runtime");
    v
}

const MINIMAL: &str = "\
[system]
n = 200
k = 8
[activity]
model = deterministic
ka = 2
[sweep]
ebn0 = 4db, 6db, 8db
";

#[test]
fn minimal_bound_writes_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = urabound(&["bound"], MINIMAL, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let csv = read(&dir.path().join("curve.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# schema=1");
    assert_eq!(lines[1], "ebn0_db,eps_md,eps_fa,floor_md,floor_fa");
    assert_eq!(lines.len(), 5);
    let meta: serde_json::Value = serde_json::from_str(&read(&dir.path().join("metadata.json"))).unwrap();
    assert_eq!(meta["config"]["eval"]["prune_rel"], 1e-15);
    assert_eq!(meta["config"]["seed"], 1);
    assert!(meta["runtime"]["wall_time_s"].is_number());
    assert_eq!(meta["results"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_blocklength_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = urabound(&["bound"], &MINIMAL.replace("n = 200\n", ""), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`n`"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = urabound(&["bound"], &format!("{MINIMAL}[mc]\nseeds = 3\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}

#[test]
fn identical_runs_are_byte_identical_across_thread_counts() {
    let config = format!("{MINIMAL}breakdown_at = 6db\n[mc]\nsamples = 4000\nbatch = 500\ngate = 0\n")
        .replace("model = deterministic\nka = 2", "model = poisson\nmean = 3");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = urabound(&["bound", "--threads", "1", "--seed", "9"], &config, a.path());
    let rb = urabound(&["bound", "--threads", "3", "--seed", "9"], &config, b.path());
    assert!(ra.status.success() && rb.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    for name in ["curve.csv", "breakdown.csv"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name} differs");
    }
    let (ma, mb) = (read(&a.path().join("metadata.json")), read(&b.path().join("metadata.json")));
    assert_eq!(without_runtime(&ma), without_runtime(&mb));
    assert!(read(&a.path().join("breakdown.csv")).lines().count() > 3);
    let meta = without_runtime(&ma);
    assert_eq!(meta["config"]["mc"]["seed"], 9);
    assert!(meta["results"][0]["stats"]["mc_cells"].as_u64().unwrap() > 0);
}

#[test]
fn floors_command_delegates() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[system]\nn = 19200\nk = 128\nradius = 3, 3\n[activity]\nmodel = poisson\nmean = 50\n";
    let out = urabound(&["floors"], config, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("floors.csv"));
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    let model = ActivityModel::Poisson { mean: 50.0 };
    let window = truncation_bounds(&model, 1e-9).unwrap();
    let f = eval_floors(&model, &window, 19200.0, 128.0 * std::f64::consts::LN_2, 3, 3, EstimatorKind::Ml).unwrap();
    assert_eq!(row[1], "3:3");
    assert_eq!(row[2].parse::<f64>().unwrap(), f.md);
    assert_eq!(row[3].parse::<f64>().unwrap(), f.fa);
}

#[test]
fn search_below_floor_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[system]\nn = 19200\nk = 128\n[activity]\nmodel = poisson\nmean = 50\n[targets]\neps_md = 1e-3\neps_fa = 1e-3\n";
    let out = urabound(&["search"], config, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target below error floor"));
}

#[test]
fn search_over_two_loads_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
[system]
n = 2000
k = 32
[activity]
model = poisson
mean = 5
[targets]
eps_md = 0.1
eps_fa = 0.1
[sweep]
e_ka = 2, 5
[mc]
enabled = false
";
    let out = urabound(&["search"], config, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("search.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "e_ka,required_ebn0_db,radius_used,pprime_ratio");
    assert_eq!(lines.len(), 4);
    for (line, e_ka) in lines[2..].iter().zip(["2", "5"]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], e_ka);
        assert!(cells[1].parse::<f64>().unwrap().is_finite());
        assert_eq!(cells[2], "0:0");
    }
}

#[test]
fn tin_records_optimized_s() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
[system]
n = 2000
k = 32
[activity]
model = poisson
mean = 4
[targets]
eps_md = 0.1
eps_fa = 0.1
[mc]
samples = 20000
[tin]
s = optimize
";
    let out = urabound(&["tin"], config, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value = serde_json::from_str(&read(&dir.path().join("metadata.json"))).unwrap();
    let s = meta["results"][0]["s_star"].as_f64().unwrap();
    assert!(s > 0.0);
    assert!(meta["config"]["tin"]["s"].is_null());
}

#[test]
fn sampr_reports_slot_choice() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
[system]
n = 2000
k = 32
[activity]
model = poisson
mean = 4
[targets]
eps_md = 0.1
eps_fa = 0.1
[mc]
enabled = false
[sampr]
slots = 1, 2, 4
radius_grid = 0:0
";
    let out = urabound(&["sampr"], config, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("sampr.csv"));
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert!(["1", "2", "4"].contains(&row[4]));
}

#[test]
fn selftest_passes_without_config() {
    let out = Command::new(env!("CARGO_BIN_EXE_urabound")).arg("selftest").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}
