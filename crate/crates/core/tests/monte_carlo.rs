use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use urabound::bound_core::power_from_ebn0;
use urabound::dt_mc::{next_combination, q_term, sample_info_density_min, ItParams, ItSampleSet, McConfig};
use urabound::tin::{eta_mc, eta_normal, TinParams};

type Vector = Vec<(f64, f64)>;

fn draw(rng: &mut ChaCha20Rng, n: usize, var: f64) -> Vector {
    let s = (var / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            (s * re, s * im)
        })
        .collect()
}

fn add(a: &Vector, b: &Vector, sign: f64) -> Vector {
    a.iter().zip(b).map(|(x, y)| (x.0 + sign * y.0, x.1 + sign * y.1)).collect()
}

fn norm2(a: &Vector) -> f64 {
    a.iter().map(|x| x.0 * x.0 + x.1 * x.1).sum()
}

/// `I_t` from explicit codewords and noise under `y = c([Ka]) + z`.
fn full_vector_sample(p: &ItParams, rng: &mut ChaCha20Rng) -> f64 {
    let n = p.n as usize;
    let ka = p.ka as usize;
    let delta = p.ka.saturating_sub(p.ka_prime_high) as usize;
    let extra = p.ka_prime_low.saturating_sub(p.ka) as usize;
    let t = p.t as usize;
    let z = draw(rng, n, 1.0);
    let users: Vec<Vector> = (0..ka).map(|_| draw(rng, n, p.p_prime)).collect();
    let extras: Vec<Vector> = (0..extra).map(|_| draw(rng, n, p.p_prime)).collect();
    let mut y = z;
    for u in &users {
        y = add(&y, u, 1.0);
    }
    let mut d = vec![(0.0, 0.0); n];
    for e in &extras {
        d = add(&d, e, 1.0);
    }
    let s2 = 1.0 + (t + delta) as f64 * p.p_prime;
    let candidates = ka - delta;
    let mut subset: Vec<usize> = (0..t).collect();
    let mut best = f64::INFINITY;
    loop {
        let mut removed: Vec<bool> = vec![false; ka];
        for r in removed.iter_mut().take(delta) {
            *r = true;
        }
        for &w in &subset {
            removed[delta + w] = true;
        }
        let mut rest = vec![(0.0, 0.0); n];
        let mut w02 = vec![(0.0, 0.0); n];
        for (i, u) in users.iter().enumerate() {
            if !removed[i] {
                rest = add(&rest, u, 1.0);
            } else if i >= delta {
                w02 = add(&w02, u, 1.0);
            }
        }
        let resid = add(&y, &rest, -1.0);
        let hyp = add(&add(&resid, &d, -1.0), &w02, -1.0);
        let v = p.n * s2.ln() + norm2(&resid) / s2 - norm2(&hyp);
        best = best.min(v);
        if !next_combination(&mut subset, candidates) {
            break;
        }
    }
    best
}

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn compare_samplers(params: ItParams, samples: usize) -> f64 {
    let mc = McConfig { samples: samples as u64, seed: 3, batch: 10_000 };
    let fast = sample_info_density_min(&params, &mc, 1e4).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let mut slow: Vec<f64> = (0..samples).map(|_| full_vector_sample(&params, &mut rng)).collect();
    slow.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ks_statistic(&fast.values, &slow)
}

#[test]
fn projection_sampler_matches_full_vectors() {
    for (low, high) in [(2, 2), (1, 1), (3, 3), (1, 3)] {
        let params = ItParams { n: 4.0, p_prime: 0.5, ka: 2, ka_prime_low: low, ka_prime_high: high, t: 1 };
        let ks = compare_samplers(params, 200_000);
        assert!(ks < 0.01, "window [{low}, {high}]: KS distance {ks}");
    }
}

#[test]
fn gram_sampler_matches_full_vectors() {
    for (low, high) in [(3, 3), (4, 4), (2, 2)] {
        let params = ItParams { n: 8.0, p_prime: 0.3, ka: 3, ka_prime_low: low, ka_prime_high: high, t: 2 };
        let ks = compare_samplers(params, 100_000);
        assert!(ks < 0.01, "window [{low}, {high}]: KS distance {ks}");
    }
}

/// `P̂[I ≤ γ] + exp(c - γ)` minimized over a dense threshold grid.
fn dense_infimum(samples: &[f64], c: f64, points: usize) -> f64 {
    let lo = samples[0] - 10.0;
    let hi = samples[samples.len() - 1] + 10.0;
    let mut best = 1.0f64;
    for i in 0..=points {
        let g = lo + (hi - lo) * i as f64 / points as f64;
        let below = samples.partition_point(|&x| x <= g) as f64 / samples.len() as f64;
        best = best.min(below + (c - g).exp());
    }
    best
}

#[test]
fn q_scan_matches_dense_threshold_grid() {
    let params = ItParams { n: 50.0, p_prime: 0.2, ka: 3, ka_prime_low: 3, ka_prime_high: 3, t: 1 };
    let set: ItSampleSet =
        sample_info_density_min(&params, &McConfig { samples: 20_000, seed: 5, batch: 5000 }, 1e4).unwrap();
    let median = set.values[set.values.len() / 2];
    for shift in [-6.0, -3.0, 0.0, 2.0] {
        let c = median + shift;
        let q = q_term(&set, &[c - 0.7, c - 0.7]);
        let dense = dense_infimum(&set.values, c, 400_000);
        assert!(q.estimate <= dense + 1e-12, "shift {shift}: scan {} above dense {dense}", q.estimate);
        assert!(dense - q.estimate <= 2e-3, "shift {shift}: scan {} far below dense {dense}", q.estimate);
        assert!(q.upper >= q.estimate);
    }
}

/// Spot configurations `(Ka, Eb/N0 in dB, samples)` with `Ka′ = Ka` and `P′` equal to the power at that energy per bit.
pub const ETA_SPOTS: [(u64, f64, u64); 3] = [(50, 2.0, 100_000), (100, 4.0, 100_000), (300, 6.0, 1_000_000)];

#[test]
fn eta_normal_agrees_with_monte_carlo() {
    let n = 19200.0;
    let log_m = 128.0 * std::f64::consts::LN_2;
    for (ka, db, samples) in ETA_SPOTS {
        let p_prime = power_from_ebn0(db, 128.0, n);
        let params = TinParams { s: 1.0, n, log_m, p_prime, ka, ka_prime: ka };
        let normal = eta_normal(&params).unwrap();
        let sim = eta_mc(&params, &McConfig { samples, seed: 17, batch: 10_000 }).unwrap().estimate;
        println!("Ka = {ka}, {db} dB: normal {normal}, Monte Carlo {sim}");
        assert!((normal - sim).abs() <= 1e-2, "Ka = {ka}, {db} dB: normal {normal}, Monte Carlo {sim}");
    }
}
