//! Error-exponent branch of the random-coding bound: index sets of the
//! additional misdetections `t` and false alarms `t′`, the rate terms, the
//! inner maximization over `λ`, the outer maximization over `(ρ, ρ1)`, and the
//! resulting terms `p_{t,t′} = exp(-n E(t,t′))`.

use serde::{Deserialize, Serialize};

use crate::specfun::{log_binomial_exact, log_factorial};

/// Positive part of an integer difference.
#[inline]
pub fn pos(x: i64) -> i64 {
    x.max(0)
}

/// Population `M` as a float; exact for payloads up to 53 bits.
#[inline]
pub fn m_value(log_m: f64) -> f64 {
    if log_m < 700.0 {
        log_m.exp().round()
    } else {
        f64::INFINITY
    }
}

/// Arguments identifying one `(Ka, K̲a′, K̄a′, t, t′)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Number of active users `Ka`.
    pub ka: u64,
    /// Smallest admissible decoded list size `K̲a′`.
    pub ka_prime_low: u64,
    /// Largest admissible decoded list size `K̄a′`.
    pub ka_prime_high: u64,
    /// Additional misdetections `t`.
    pub t: u64,
    /// Additional false alarms `t′`.
    pub t_prime: u64,
    /// Blocklength `n`.
    pub n: f64,
    /// `ln M`.
    pub log_m: f64,
    /// Codebook power `P′`.
    pub p_prime: f64,
}

impl CellParams {
    /// Initial misdetections `(Ka - K̄a′)^+`.
    pub fn initial_md(&self) -> u64 {
        self.ka.saturating_sub(self.ka_prime_high)
    }

    /// Initial false alarms `(K̲a′ - Ka)^+`.
    pub fn initial_fa(&self) -> u64 {
        self.ka_prime_low.saturating_sub(self.ka)
    }

    /// `P2 = 1 + ((Ka - K̄a′)^+ + (K̲a′ - Ka)^+) P′`.
    pub fn p2(&self) -> f64 {
        p2_value(self.initial_md() + self.initial_fa(), self.p_prime)
    }
}

/// `P2` from the number of initial errors.
#[inline]
pub fn p2_value(initial_errors: u64, p_prime: f64) -> f64 {
    1.0 + initial_errors as f64 * p_prime
}

/// Index sets `𝒯`, `𝒯_t` and `𝒯̄_t` for one `(Ka, K̲a′, K̄a′)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexSets {
    ka: i64,
    low: i64,
    high: i64,
    m: f64,
    t_max: i64,
}

impl IndexSets {
    /// Largest element of `𝒯`, or `None` when `𝒯` is empty.
    pub fn t_max(&self) -> Option<u64> {
        if self.t_max >= 0 {
            Some(self.t_max as u64)
        } else {
            None
        }
    }

    /// Iterator over `𝒯`.
    pub fn t_values(&self) -> std::ops::RangeInclusive<u64> {
        match self.t_max() {
            Some(m) => 0..=m,
            #[allow(clippy::reversed_empty_ranges)]
            None => 1..=0,
        }
    }

    fn upper(&self, t: i64) -> i64 {
        let (ka, low, high) = (self.ka, self.low, self.high);
        let a = pos(high - ka) - pos(low - ka) + t;
        let b = high - pos(low - ka);
        let c = self.m - low.max(ka) as f64;
        let c = if c > i64::MAX as f64 / 4.0 { i64::MAX / 4 } else { c.floor() as i64 };
        a.min(b).min(c)
    }

    /// Inclusive bounds of `𝒯̄_t` (empty when the first exceeds the second).
    pub fn t_bar(&self, t: u64) -> (i64, i64) {
        let (ka, low, high) = (self.ka, self.low, self.high);
        let t = t as i64;
        let lo = pos(pos(ka - high) - pos(ka - low) + t);
        (lo, self.upper(t))
    }

    /// Inclusive bounds of `𝒯_t` (empty when the first exceeds the second).
    pub fn t_set(&self, t: u64) -> (i64, i64) {
        let (ka, low, high) = (self.ka, self.low, self.high);
        let t = t as i64;
        let lo = pos(pos(ka - high) - pos(low - ka) + low.max(1) - ka + t);
        (lo, self.upper(t))
    }
}

/// Builds the index sets for `Ka`, `K̲a′`, `K̄a′` and a codebook of size `e^{log_m}`.
pub fn index_sets(ka: u64, ka_prime_low: u64, ka_prime_high: u64, log_m: f64) -> IndexSets {
    let (k, l, h) = (ka as i64, ka_prime_low as i64, ka_prime_high as i64);
    let m = m_value(log_m);
    let delta = pos(k - h);
    let cap = m - l as f64 - delta as f64;
    let cap = if cap > i64::MAX as f64 / 4.0 { i64::MAX / 4 } else { cap.floor() as i64 };
    let t_max = h.min(k).min(cap);
    IndexSets { ka: k, low: l, high: h, m, t_max }
}

/// `ln(M - x)` for huge or moderate `M`.
#[inline]
pub(crate) fn ln_m_minus(log_m: f64, x: f64) -> f64 {
    if log_m > 700.0 {
        log_m
    } else {
        let m = m_value(log_m);
        if x >= m {
            f64::NEG_INFINITY
        } else {
            log_m + (-x / m).ln_1p()
        }
    }
}

/// Rate terms `(R1, R2)`; `R1` uses the bound `ln C(N,t′) ≤ t′ ln N - ln t′!` and is 0 for `t′ = 0`.
pub fn rate_terms(cell: &CellParams) -> (f64, f64) {
    let r1 = if cell.t_prime == 0 {
        0.0
    } else {
        let big = cell.ka.max(cell.ka_prime_low) as f64;
        let tp = cell.t_prime as f64;
        ln_m_minus(cell.log_m, big) / cell.n - log_factorial(cell.t_prime) / (cell.n * tp)
    };
    let r2 = log_binomial_exact(cell.ka.min(cell.ka_prime_high) as f64, cell.t) / cell.n;
    (r1, r2)
}

/// Inner problem of `E0` for fixed `(t, t′, P′, P2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProblem {
    /// Additional misdetections.
    pub t: f64,
    /// Additional false alarms.
    pub tp: f64,
    /// Codebook power.
    pub pp: f64,
    /// `P2`.
    pub p2: f64,
}

/// Intermediate quantities at a given `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerTerms {
    /// `a` term.
    pub a: f64,
    /// `b` term.
    pub b: f64,
    /// `μ = ρλ / (1 + P′ t′ λ)`.
    pub mu: f64,
    /// `ρ1 a + ln(1 - ρ1 P2 b)`, `-inf` outside the feasible region.
    pub value: f64,
}

impl InnerProblem {
    /// Evaluates `a`, `b`, `μ` and the inner objective at `λ`.
    #[inline]
    pub fn terms(&self, rho: f64, rho1: f64, lambda: f64) -> InnerTerms {
        let x = self.pp * self.tp * lambda;
        let mu = rho * lambda / (1.0 + x);
        let y = self.pp * self.t * mu;
        let a = rho * x.ln_1p() + y.ln_1p();
        // ρλ - μ/(1+y) = ρλ (x + y + xy) / ((1+x)(1+y)), free of cancellation.
        let b = rho * lambda * (x + y + x * y) / ((1.0 + x) * (1.0 + y));
        let arg = 1.0 - rho1 * self.p2 * b;
        let value = if arg > 0.0 { rho1 * a + arg.ln() } else { f64::NEG_INFINITY };
        InnerTerms { a, b, mu, value }
    }

    /// Coefficients `(c1, c2, c3, c4)` of the cubic whose roots are the stationary points in `λ`.
    ///
    /// The quadratic coefficient carries `(2 + ρρ1 - ρ1)` in its middle term, which is what
    /// differentiating the inner objective yields.
    pub fn cubic(&self, rho: f64, rho1: f64) -> [f64; 4] {
        let (t, tp, pp, p2) = (self.t, self.tp, self.pp, self.p2);
        let p3 = (tp + rho * t) * pp;
        let rr = rho * rho1;
        let c1 = -rr * (rr + 1.0) * tp * pp * p2 * p3 * p3;
        let c2 = rr * tp * pp * p3 * p3 - rr * (2.0 + rr - rho1) * tp * pp * p2 * p3 - rr * (rho1 + 1.0) * p2 * p3 * p3;
        let c3 = (2.0 * rho - 1.0) * rho1 * tp * pp * p3 + rho1 * p3 * p3 - 2.0 * rr * p2 * p3;
        let c4 = (rho - 1.0) * rho1 * tp * pp + rho1 * p3;
        [c1, c2, c3, c4]
    }

    /// Maximizer `λ*` of the inner objective and the maximum `E0(ρ, ρ1)`.
    pub fn lambda_star(&self, rho: f64, rho1: f64) -> (f64, f64) {
        if rho <= 0.0 || rho1 <= 0.0 || (self.t == 0.0 && self.tp == 0.0) {
            return (0.0, 0.0);
        }
        let c = self.cubic(rho, rho1);
        let mut best = (0.0, 0.0);
        let mut found = false;
        for root in real_roots(c) {
            if root > 0.0 {
                let v = self.terms(rho, rho1, root).value;
                if v.is_finite() {
                    found = true;
                    if v > best.1 {
                        best = (root, v);
                    }
                }
            }
        }
        if !found {
            best = self.golden_fallback(rho, rho1);
        }
        best
    }

    /// Bounded golden-section search of the inner objective over its feasible interval.
    fn golden_fallback(&self, rho: f64, rho1: f64) -> (f64, f64) {
        let f = |l: f64| self.terms(rho, rho1, l).value;
        let mut hi = 1.0;
        while f(hi).is_finite() && hi < 1e12 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - gr * (hi - lo);
        let mut x2 = lo + gr * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..200 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = f(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = f(x1);
            }
            if hi - lo < 1e-14 * hi.max(1e-300) {
                break;
            }
        }
        let (l, v) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
        if v > 0.0 {
            (l, v)
        } else {
            (0.0, 0.0)
        }
    }

    /// `E0(ρ, ρ1)`.
    #[inline]
    pub fn e0(&self, rho: f64, rho1: f64) -> f64 {
        self.lambda_star(rho, rho1).1
    }
}

/// Real roots of `c[0] x³ + c[1] x² + c[2] x + c[3]`, polished by Newton steps.
pub fn real_roots(c: [f64; 4]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let [a, b, cc, d] = [c[0] / scale, c[1] / scale, c[2] / scale, c[3] / scale];
    let mut roots = Vec::with_capacity(3);
    if a.abs() > 1e-13 {
        let (p2, p1, p0) = (b / a, cc / a, d / a);
        // Depressed cubic y³ + p y + q with x = y - p2/3.
        let shift = p2 / 3.0;
        let p = p1 - p2 * p2 / 3.0;
        let q = 2.0 * p2 * p2 * p2 / 27.0 - p2 * p1 / 3.0 + p0;
        let disc = q * q / 4.0 + p * p * p / 27.0;
        if disc > 0.0 {
            let s = disc.sqrt();
            let u = (-q / 2.0 + s).cbrt();
            let v = (-q / 2.0 - s).cbrt();
            roots.push(u + v - shift);
        } else if p == 0.0 {
            roots.push(-shift);
        } else {
            let r = (-p / 3.0).sqrt();
            let arg = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0);
            let phi = arg.acos();
            for k in 0..3 {
                roots.push(2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - shift);
            }
        }
    } else if b.abs() > 1e-13 {
        let disc = cc * cc - 4.0 * b * d;
        if disc >= 0.0 {
            let s = disc.sqrt();
            let qq = -0.5 * (cc + cc.signum() * s);
            if qq != 0.0 {
                roots.push(qq / b);
                roots.push(d / qq);
            } else {
                roots.push(0.0);
            }
        }
    } else if cc.abs() > 1e-13 {
        roots.push(-d / cc);
    }
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((a * *r + b) * *r + cc) * *r + d;
            let df = (3.0 * a * *r + 2.0 * b) * *r + cc;
            if df != 0.0 {
                let step = f / df;
                if step.is_finite() {
                    *r -= step;
                }
            }
        }
    }
    roots
}

/// Optimizers and intermediate values of `E(t,t′)` for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentCell {
    /// `P2`.
    pub p2: f64,
    /// `P3 = (t′ + ρ t) P′` at the optimum.
    pub p3: f64,
    /// `R1`.
    pub r1: f64,
    /// `R2`.
    pub r2: f64,
    /// Optimal `λ`.
    pub lambda_opt: f64,
    /// Optimal `ρ`.
    pub rho_opt: f64,
    /// Optimal `ρ1`.
    pub rho1_opt: f64,
    /// `E(t,t′)`.
    pub exponent: f64,
    /// `a` at the optimum.
    pub a: f64,
    /// `b` at the optimum.
    pub b: f64,
    /// `μ` at the optimum.
    pub mu: f64,
}

/// Settings of the `(ρ, ρ1)` maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSettings {
    /// Points per axis of the uniform grid on `[0,1]²`.
    pub grid: usize,
    /// Maximum Nelder–Mead iterations of the local refinement.
    pub refine_iters: usize,
}

impl Default for ExponentSettings {
    fn default() -> Self {
        Self { grid: 33, refine_iters: 400 }
    }
}

/// `E0` sampled on the `(ρ, ρ1)` grid; shared by every cell with the same `(t, t′, P2)`.
#[derive(Debug, Clone)]
pub struct E0Grid {
    problem: InnerProblem,
    grid: usize,
    values: Vec<f64>,
}

impl E0Grid {
    /// Tabulates `E0` on a `grid × grid` lattice.
    pub fn new(problem: InnerProblem, grid: usize) -> Self {
        let grid = grid.max(2);
        let step = 1.0 / (grid - 1) as f64;
        let mut values = Vec::with_capacity(grid * grid);
        for i in 0..grid {
            let rho = i as f64 * step;
            for j in 0..grid {
                let rho1 = j as f64 * step;
                values.push(problem.e0(rho, rho1));
            }
        }
        Self { problem, grid, values }
    }

    /// The underlying inner problem.
    pub fn problem(&self) -> &InnerProblem {
        &self.problem
    }

    /// Maximizes `-ρρ1 t′R1 - ρ1 R2 + E0(ρ,ρ1)` by grid search followed by Nelder–Mead.
    pub fn maximize(&self, r1: f64, r2: f64, refine_iters: usize) -> ExponentCell {
        let pr = self.problem;
        let g = self.grid;
        let step = 1.0 / (g - 1) as f64;
        let lin = |rho: f64, rho1: f64| -rho * rho1 * pr.tp * r1 - rho1 * r2;
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for i in 0..g {
            let rho = i as f64 * step;
            for j in 0..g {
                let rho1 = j as f64 * step;
                let v = lin(rho, rho1) + self.values[i * g + j];
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        let start = [best.0 as f64 * step, best.1 as f64 * step];
        let obj = |x: [f64; 2]| lin(x[0], x[1]) + pr.e0(x[0], x[1]);
        let (x, v) = if refine_iters > 0 && !(pr.t == 0.0 && pr.tp == 0.0) {
            nelder_mead_box(obj, start, best.2, step, refine_iters)
        } else {
            (start, best.2)
        };
        let (lambda, _) = pr.lambda_star(x[0], x[1]);
        let terms = pr.terms(x[0], x[1], lambda);
        ExponentCell {
            p2: pr.p2,
            p3: (pr.tp + x[0] * pr.t) * pr.pp,
            r1,
            r2,
            lambda_opt: lambda,
            rho_opt: x[0],
            rho1_opt: x[1],
            exponent: v,
            a: terms.a,
            b: terms.b,
            mu: terms.mu,
        }
    }
}

/// Nelder–Mead maximization on `[0,1]²` with coordinates clamped into the box.
fn nelder_mead_box<F: Fn([f64; 2]) -> f64>(f: F, start: [f64; 2], f_start: f64, h: f64, iters: usize) -> ([f64; 2], f64) {
    let clamp = |x: [f64; 2]| [x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0)];
    let dir = |c: f64| if c + h <= 1.0 { h } else { -h };
    let mut pts = [
        start,
        clamp([start[0] + dir(start[0]), start[1]]),
        clamp([start[0], start[1] + dir(start[1])]),
    ];
    // Values are negated so the simplex minimizes.
    let mut vals = [-f_start, -f(pts[1]), -f(pts[2])];
    for _ in 0..iters {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let (b, m, w) = (idx[0], idx[1], idx[2]);
        let size = (pts[w][0] - pts[b][0]).abs().max((pts[w][1] - pts[b][1]).abs())
            .max((pts[m][0] - pts[b][0]).abs().max((pts[m][1] - pts[b][1]).abs()));
        if size < 1e-10 || (vals[w] - vals[b]).abs() <= 1e-16 * (1.0 + vals[b].abs()) && size < 1e-6 {
            break;
        }
        let cen = [(pts[b][0] + pts[m][0]) / 2.0, (pts[b][1] + pts[m][1]) / 2.0];
        let refl = clamp([2.0 * cen[0] - pts[w][0], 2.0 * cen[1] - pts[w][1]]);
        let fr = -f(refl);
        if fr < vals[b] {
            let exp = clamp([3.0 * cen[0] - 2.0 * pts[w][0], 3.0 * cen[1] - 2.0 * pts[w][1]]);
            let fe = -f(exp);
            if fe < fr {
                pts[w] = exp;
                vals[w] = fe;
            } else {
                pts[w] = refl;
                vals[w] = fr;
            }
        } else if fr < vals[m] {
            pts[w] = refl;
            vals[w] = fr;
        } else {
            let con = if fr < vals[w] {
                clamp([(cen[0] + refl[0]) / 2.0, (cen[1] + refl[1]) / 2.0])
            } else {
                clamp([(cen[0] + pts[w][0]) / 2.0, (cen[1] + pts[w][1]) / 2.0])
            };
            let fc = -f(con);
            if fc < vals[w].min(fr) {
                pts[w] = con;
                vals[w] = fc;
            } else {
                for &i in &[m, w] {
                    pts[i] = [(pts[i][0] + pts[b][0]) / 2.0, (pts[i][1] + pts[b][1]) / 2.0];
                    vals[i] = -f(pts[i]);
                }
            }
        }
    }
    let mut bi = 0;
    for i in 1..3 {
        if vals[i] < vals[bi] {
            bi = i;
        }
    }
    if -vals[bi] >= f_start {
        (pts[bi], -vals[bi])
    } else {
        (start, f_start)
    }
}

/// Computes `E(t,t′)` for a cell from scratch.
pub fn exponent_e(cell: &CellParams, settings: &ExponentSettings) -> ExponentCell {
    let (r1, r2) = rate_terms(cell);
    let problem = InnerProblem { t: cell.t as f64, tp: cell.t_prime as f64, pp: cell.p_prime, p2: cell.p2() };
    E0Grid::new(problem, settings.grid).maximize(r1, r2, settings.refine_iters)
}

/// `p_{t,t′} = min(1, exp(-n E))`.
#[inline]
pub fn p_from_exponent(n: f64, exponent: f64) -> f64 {
    (-n * exponent).exp().min(1.0)
}

/// `p_{t,t′}` for a cell.
pub fn p_term(cell: &CellParams, settings: &ExponentSettings) -> f64 {
    p_from_exponent(cell.n, exponent_e(cell, settings).exponent)
}

/// Logarithm of the upper bound `C(M - max, t′) C(min, t) (1 + (t+t′)P′/(4P2))^{-n}` on `p_{t,t′}`,
/// with the first binomial replaced by `(M - max)^{t′}/t′!`.
pub fn ln_closed_form_bound(cell: &CellParams) -> f64 {
    let (r1, r2) = rate_terms(cell);
    let tt = (cell.t + cell.t_prime) as f64;
    cell.n * (cell.t_prime as f64 * r1 + r2) - cell.n * (tt * cell.p_prime / (4.0 * cell.p2())).ln_1p()
}
