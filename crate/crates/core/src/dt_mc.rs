//! Monte-Carlo branch of the random-coding bound: samples of the minimum
//! information density `I_t` and the tail terms `q_t`, `q_{t,t′}` obtained by an
//! infimum over the threshold `γ`.
//!
//! Only inner products between the few vectors involved matter, so the samplers
//! draw those inner products directly with their exact joint law. For `t ≤ 1`
//! every candidate codeword is projected onto the received-signal residual. For
//! larger `t` the Gram matrix of all vectors is drawn through its Bartlett
//! factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::log_binomial_exact;

/// Two-sided 95% normal quantile used for confidence limits.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample count, seed and batching of a Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    /// Number of samples.
    pub samples: u64,
    /// Base seed.
    pub seed: u64,
    /// Samples per independently seeded batch.
    pub batch: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 100_000, seed: 1, batch: 10_000 }
    }
}

impl McConfig {
    /// Checks that the configuration can produce a reportable value.
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1000 {
            return Err(Error::Config(format!("Monte-Carlo samples must be at least 1000, got {}", self.samples)));
        }
        if self.batch == 0 {
            return Err(Error::Config("Monte-Carlo batch size must be positive".into()));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer used to derive independent seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one batch derived from a base seed and a list of identifying integers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(base);
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

/// Parameters of the information-density sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItParams {
    /// Blocklength.
    pub n: f64,
    /// Codebook power.
    pub p_prime: f64,
    /// Active users `Ka`.
    pub ka: u64,
    /// `K̲a′`.
    pub ka_prime_low: u64,
    /// `K̄a′`.
    pub ka_prime_high: u64,
    /// Subset size `t` of the minimization.
    pub t: u64,
}

impl ItParams {
    fn delta(&self) -> u64 {
        self.ka.saturating_sub(self.ka_prime_high)
    }
    fn extra(&self) -> u64 {
        self.ka_prime_low.saturating_sub(self.ka)
    }
    /// Number of candidate codewords the subset is drawn from.
    pub fn candidates(&self) -> u64 {
        self.ka - self.delta()
    }
    /// Number of subsets minimized over.
    pub fn subsets(&self) -> f64 {
        log_binomial_exact(self.candidates() as f64, self.t).exp()
    }
}

/// Sorted samples of `I_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItSampleSet {
    /// Samples in ascending order.
    pub values: Vec<f64>,
    /// Parameters the samples were drawn with.
    pub params: ItParams,
}

#[inline]
fn cn<R: Rng>(rng: &mut R) -> (f64, f64) {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Draws samples of `I_t` for one batch with the projection sampler (`t ≤ 1`).
fn batch_projection(p: &ItParams, count: u64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.n;
    let pp = p.p_prime;
    let delta = p.delta() as f64;
    let extra = p.extra() as f64;
    let m = p.candidates();
    let s2 = 1.0 + (p.t as f64 + delta) * pp;
    let var_a = 1.0 + delta * pp;
    let sd_d = (extra * pp).sqrt();
    let g_n = Gamma::new(n, 1.0).expect("shape");
    let g_n1 = if n > 1.0 { Some(Gamma::new(n - 1.0, 1.0).expect("shape")) } else { None };
    let resid = |rng: &mut ChaCha8Rng| g_n1.as_ref().map_or(0.0, |g| g.sample(rng));
    let sqrt_pp = pp.sqrt();
    let base = n * s2.ln();
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let norm_a2 = var_a * g_n.sample(rng);
        let norm_a = norm_a2.sqrt();
        let a_minus_d = if extra > 0.0 {
            let (hr, hi) = cn(rng);
            let d2 = sd_d * sd_d * (hr * hr + hi * hi + resid(rng));
            norm_a2 - 2.0 * norm_a * sd_d * hr + d2
        } else {
            norm_a2
        };
        let best = if p.t == 0 {
            norm_a2
        } else {
            let mut best = f64::INFINITY;
            for _ in 0..m {
                let (ur, ui) = cn(rng);
                let c2 = pp * (ur * ur + ui * ui + resid(rng));
                let v = norm_a2 + 2.0 * norm_a * sqrt_pp * ur + c2;
                if v < best {
                    best = v;
                }
            }
            best
        };
        out.push(base + best / s2 - a_minus_d);
    }
    out
}

/// Draws samples of `I_t` for one batch with the Bartlett Gram-matrix sampler.
fn batch_bartlett(p: &ItParams, count: u64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.n;
    let pp = p.p_prime;
    let delta = p.delta() as f64;
    let extra = p.extra() as f64;
    let m = p.candidates() as usize;
    let t = p.t as usize;
    let dim = m + 2;
    let s2 = 1.0 + (t as f64 + delta) * pp;
    let sd_a = (1.0 + delta * pp).sqrt();
    let sd_d = (extra * pp).sqrt();
    let sqrt_pp = pp.sqrt();
    let base = n * s2.ln();
    let gammas: Vec<Gamma<f64>> = (0..dim).map(|i| Gamma::new(n - i as f64, 1.0).expect("shape")).collect();
    // Column-major upper-triangular factor: r[j*dim + i] holds R_ij (complex).
    let mut re = vec![0.0; dim * dim];
    let mut im = vec![0.0; dim * dim];
    let mut out = Vec::with_capacity(count as usize);
    let mut subset: Vec<usize> = (0..t).collect();
    let mut acc_re = vec![0.0; dim];
    let mut acc_im = vec![0.0; dim];
    for _ in 0..count {
        for j in 0..dim {
            for i in 0..j {
                let (a, b) = cn(rng);
                re[j * dim + i] = a;
                im[j * dim + i] = b;
            }
            re[j * dim + j] = gammas[j].sample(rng).sqrt();
            im[j * dim + j] = 0.0;
        }
        // Column 0 is A, column 1 is D, columns 2.. are the candidates.
        let mut amd = 0.0;
        for i in 0..dim {
            let vr = sd_a * re[i] - sd_d * re[dim + i];
            let vi = sd_a * im[i] - sd_d * im[dim + i];
            amd += vr * vr + vi * vi;
        }
        for (k, s) in subset.iter_mut().enumerate() {
            *s = k;
        }
        let mut best = f64::INFINITY;
        loop {
            for i in 0..dim {
                acc_re[i] = sd_a * re[i];
                acc_im[i] = sd_a * im[i];
            }
            for &w in subset.iter() {
                let col = (w + 2) * dim;
                for i in 0..=(w + 2) {
                    acc_re[i] += sqrt_pp * re[col + i];
                    acc_im[i] += sqrt_pp * im[col + i];
                }
            }
            let mut v = 0.0;
            for i in 0..dim {
                v += acc_re[i] * acc_re[i] + acc_im[i] * acc_im[i];
            }
            if v < best {
                best = v;
            }
            if !next_combination(&mut subset, m) {
                break;
            }
        }
        out.push(base + best / s2 - amd);
    }
    out
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
pub fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Samples `I_t`; cells with more than `subset_cap` subsets are rejected.
///
/// Each batch draws from its own stream seeded by the base seed, the cell and
/// the batch index. The result is therefore identical for any thread count.
pub fn sample_info_density_min(params: &ItParams, mc: &McConfig, subset_cap: f64) -> Result<ItSampleSet> {
    mc.validate()?;
    if params.ka == 0 && params.t > 0 {
        return Err(Error::Domain("subset size exceeds the number of candidates".into()));
    }
    if params.t > params.candidates() {
        return Err(Error::Domain(format!(
            "subset size {} exceeds the {} candidate codewords",
            params.t,
            params.candidates()
        )));
    }
    let subsets = params.subsets();
    if params.t >= 2 && subsets > subset_cap {
        return Err(Error::SubsetCap { subsets, cap: subset_cap });
    }
    if params.t >= 2 && (params.candidates() + 2) as f64 > params.n {
        return Err(Error::Domain("Gram-matrix sampler requires n >= candidates + 2".into()));
    }
    let batches = mc.samples.div_ceil(mc.batch);
    let cell_id = [params.ka, params.ka_prime_low, params.ka_prime_high, params.t, params.n.to_bits()];
    let mut values: Vec<f64> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let count = mc.batch.min(mc.samples - b * mc.batch);
            let mut parts = cell_id.to_vec();
            parts.push(b);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(mc.seed, &parts));
            if params.t <= 1 {
                batch_projection(params, count, &mut rng)
            } else {
                batch_bartlett(params, count, &mut rng)
            }
        })
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    Ok(ItSampleSet { values, params: *params })
}

/// Wilson score upper confidence limit of a binomial proportion `k / n`.
pub fn wilson_upper(k: usize, n: usize) -> f64 {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let centre = p + z2 / (2.0 * n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre + half) / (1.0 + z2 / n)).min(1.0)
}

/// Estimate of `q` and its 95% upper confidence limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QValue {
    /// Point estimate from the empirical CDF.
    pub estimate: f64,
    /// Upper confidence limit used inside the bound.
    pub upper: f64,
    /// Threshold `γ` (left limit at a sample value) attaining `upper`.
    pub gamma: f64,
}

/// `inf_γ (P[I_t ≤ γ] + Σ_j exp(c_j - γ))` with `c_j = n(t′_j R1 + R2)`.
///
/// The CDF is constant between sample points while the exponential term
/// decreases, so the infimum is approached just left of a sample point or at
/// `γ = +∞` (value 1).
pub fn q_term(samples: &ItSampleSet, log_terms: &[f64]) -> QValue {
    let c = crate::specfun::log_sum_exp(log_terms);
    let v = &samples.values;
    let n = v.len();
    let mut est = 1.0f64;
    let mut up = 1.0f64;
    let mut gamma = f64::INFINITY;
    for (i, &x) in v.iter().enumerate() {
        let tail = (c - x).exp();
        let e = i as f64 / n as f64 + tail;
        if e < est {
            est = e;
        }
        let u = wilson_upper(i, n) + tail;
        if u < up {
            up = u;
            gamma = x;
        }
    }
    QValue { estimate: est.min(1.0), upper: up.min(1.0), gamma }
}
