//! Step functions, Skorohod distances, KS/χ² harness and the triangular-array
//! sum harness.

use std::sync::Arc;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::logmag::{LogMagnitude, LogSum};
use crate::svt::TailFunction;

/// Right-continuous piecewise-constant function on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CadlagStep {
    initial: f64,
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl CadlagStep {
    /// Jump times must be strictly increasing inside `[0, horizon]`. A jump at
    /// time 0 replaces the initial value and jumps that do not change the value
    /// are dropped.
    pub fn new(initial: f64, jumps: &[(f64, f64)], horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", "0 < horizon < ∞", horizon));
        }
        let mut cur = initial;
        let mut times = Vec::with_capacity(jumps.len());
        let mut values = Vec::with_capacity(jumps.len());
        let mut last_t = f64::NEG_INFINITY;
        for &(t, v) in jumps {
            if !(t >= 0.0 && t <= horizon) || t <= last_t {
                return Err(Error::param(
                    "jump times",
                    "strictly increasing within [0, horizon]",
                    t,
                ));
            }
            last_t = t;
            if t == 0.0 {
                cur = v;
                continue;
            }
            if v != cur {
                times.push(t);
                values.push(v);
                cur = v;
            }
        }
        let initial = if jumps.first().is_some_and(|j| j.0 == 0.0) {
            jumps[0].1
        } else {
            initial
        };
        Ok(CadlagStep {
            initial,
            times,
            values,
            horizon,
        })
    }

    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        Self::new(value, &[], horizon)
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    /// Values `x_0, x_1, ..` of the successive constant pieces.
    fn levels(&self) -> Vec<f64> {
        std::iter::once(self.initial).chain(self.values.iter().copied()).collect()
    }

    pub fn is_non_decreasing(&self) -> bool {
        let l = self.levels();
        l.windows(2).all(|w| w[1] >= w[0])
    }
}

fn check_horizons(f: &CadlagStep, g: &CadlagStep) -> Result<()> {
    if (f.horizon - g.horizon).abs() > 1e-12 * f.horizon.max(g.horizon) {
        return Err(Error::HorizonMismatch(f.horizon, g.horizon));
    }
    Ok(())
}

/// Skorohod J1 distance between step functions:
/// `inf_λ max(sup|f∘λ − g|, sup|λ − id|)` over increasing bijections of
/// `[0, T]`.
///
/// For a fixed `ε`, feasibility is decided by a dynamic program over the
/// interleavings of `f`'s jumps (moved by `λ⁻¹` within `ε`) with `g`'s fixed
/// jumps: state `(k, l)` holds the earliest time at which `k` jumps of `f` and
/// `l` of `g` have happened while every visited pair of levels stayed within
/// `ε`. Coinciding jumps are the matched pairs; a jump left unmatched pays its
/// level gap against the other function's current level. The optimum is one
/// of the pairwise level or jump-time gaps, found by bisection over those.
pub fn j1_distance(f: &CadlagStep, g: &CadlagStep) -> Result<f64> {
    check_horizons(f, g)?;
    let fl = f.levels();
    let gl = g.levels();
    let mut cand: Vec<f64> = vec![0.0];
    for &x in &fl {
        for &y in &gl {
            cand.push((x - y).abs());
        }
    }
    for &a in &f.times {
        for &b in &g.times {
            cand.push((a - b).abs());
        }
    }
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    let (mut lo, mut hi) = (0usize, cand.len() - 1);
    debug_assert!(j1_feasible(f, g, &fl, &gl, cand[hi]));
    while lo < hi {
        let mid = (lo + hi) / 2;
        if j1_feasible(f, g, &fl, &gl, cand[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cand[lo])
}

fn j1_feasible(f: &CadlagStep, g: &CadlagStep, fl: &[f64], gl: &[f64], eps: f64) -> bool {
    let (p, q) = (f.times.len(), g.times.len());
    let t_end = f.horizon;
    let ok = |k: usize, l: usize| (fl[k] - gl[l]).abs() <= eps;
    let next_g = |l: usize| if l < q { g.times[l] } else { t_end };
    let width = q + 1;
    let mut reach = vec![f64::INFINITY; (p + 1) * width];
    if !ok(0, 0) {
        return false;
    }
    reach[0] = 0.0;
    for k in 0..=p {
        for l in 0..=q {
            let tau = reach[k * width + l];
            if tau == f64::INFINITY {
                continue;
            }
            if k < p && ok(k + 1, l) {
                let a = f.times[k];
                let s = tau.max(a - eps).max(0.0);
                if s <= (a + eps).min(next_g(l)).min(t_end) {
                    let r = &mut reach[(k + 1) * width + l];
                    *r = r.min(s);
                }
            }
            if l < q {
                let b = g.times[l];
                if tau <= b {
                    if ok(k, l + 1) {
                        let r = &mut reach[k * width + l + 1];
                        *r = r.min(b);
                    }
                    if k < p && (b - f.times[k]).abs() <= eps && ok(k + 1, l + 1) {
                        let r = &mut reach[(k + 1) * width + l + 1];
                        *r = r.min(b);
                    }
                }
            }
        }
    }
    reach[p * width + q] < f64::INFINITY
}

/// Completed graph of a step function as a polyline in the (time, value)
/// plane, each segment cut into `2^m` equal pieces no longer than `h`.
fn completed_graph(f: &CadlagStep, h: f64) -> Vec<(f64, f64)> {
    let mut corners = vec![(0.0, f.initial)];
    let mut cur = f.initial;
    for (t, v) in f.jumps() {
        corners.push((t, cur));
        corners.push((t, v));
        cur = v;
    }
    corners.push((f.horizon, cur));
    let mut pts = vec![corners[0]];
    for w in corners.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b.0 - a.0).abs().max((b.1 - a.1).abs());
        if len == 0.0 {
            continue;
        }
        let mut pieces = 1usize;
        while len / pieces as f64 > h {
            pieces *= 2;
        }
        for i in 1..=pieces {
            let s = i as f64 / pieces as f64;
            pts.push((a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)));
        }
    }
    pts
}

/// Discrete Fréchet distance (sup norm, no diagonal moves) between the sampled
/// completed graphs. Every coupling it finds interpolates to a pair of
/// parametric representations with the same sup distance, so it bounds `d_M1`
/// from above; halving the mesh keeps old nodes and never raises it.
pub fn m1_upper_discrete(f: &CadlagStep, g: &CadlagStep, resolution: usize) -> Result<f64> {
    check_horizons(f, g)?;
    if resolution == 0 {
        return Err(Error::param("resolution", "resolution ≥ 1", resolution));
    }
    let span = {
        let all = f.levels().into_iter().chain(g.levels());
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in all {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        f.horizon.max(hi - lo)
    };
    // mesh is a power-of-two fraction of the span so doubling the resolution nests
    let mut h = span;
    while h > span / resolution as f64 {
        h /= 2.0;
    }
    let pf = completed_graph(f, h);
    let pg = completed_graph(g, h);
    let d = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs().max((a.1 - b.1).abs());
    let mut row = vec![0.0f64; pg.len()];
    for (i, &a) in pf.iter().enumerate() {
        for j in 0..pg.len() {
            let here = d(a, pg[j]);
            row[j] = if i == 0 && j == 0 {
                here
            } else if i == 0 {
                here.max(row[j - 1])
            } else if j == 0 {
                here.max(row[0])
            } else {
                here.max(row[j].min(row[j - 1]))
            };
        }
    }
    Ok(row[pg.len() - 1])
}

/// Upper approximation of the Skorohod M1 distance: the smaller of the
/// discretized parametric-representation bound and the exact J1 distance
/// (which always dominates M1). Non-increasing in `resolution`.
pub fn m1_distance(f: &CadlagStep, g: &CadlagStep, resolution: usize) -> Result<f64> {
    Ok(m1_upper_discrete(f, g, resolution)?.min(j1_distance(f, g)?))
}

/// One-sample KS result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsReport {
    pub statistic: f64,
    /// DKW radius `sqrt(ln(2/δ)/(2N))`.
    pub bound: f64,
    pub samples: usize,
}

impl KsReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.statistic <= self.bound + slack
    }
}

pub const DKW_LEVEL: f64 = 0.01;
pub const MIN_KS_SAMPLES: usize = 50;

pub fn dkw_bound(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// `sup |ECDF − cdf|` with the DKW radius at level `delta`.
pub fn ks_test_at(samples: &[f64], cdf: impl Fn(f64) -> f64, delta: f64) -> Result<KsReport> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: MIN_KS_SAMPLES,
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut stat = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        // treat ties as one ECDF jump
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        let f_left = cdf_left(&cdf, xs[i]);
        stat = stat.max((f_left - i as f64 / n).abs());
        stat = stat.max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(KsReport {
        statistic: stat,
        bound: dkw_bound(xs.len(), delta),
        samples: xs.len(),
    })
}

fn cdf_left(cdf: &impl Fn(f64) -> f64, x: f64) -> f64 {
    let below = if x == 0.0 { -f64::MIN_POSITIVE } else { x - x.abs() * 1e-12 };
    cdf(below).min(cdf(x))
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsReport> {
    ks_test_at(samples, cdf, DKW_LEVEL)
}

/// Two-sample KS with the asymptotic critical radius
/// `sqrt(ln(2/δ)/2)·sqrt((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], delta: f64) -> Result<KsReport> {
    let need = MIN_KS_SAMPLES;
    if a.len() < need || b.len() < need {
        return Err(Error::TooFewSamples {
            got: a.len().min(b.len()),
            need,
        });
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut stat = 0.0f64;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        stat = stat.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsReport {
        statistic: stat,
        bound: ((2.0 / delta).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt(),
        samples: x.len() + y.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub df: usize,
    pub critical: f64,
}

impl ChiSquareReport {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Pearson χ² goodness of fit; cells with zero expected mass must be empty.
pub fn chi_square_test(observed: &[u64], probs: &[f64], level: f64) -> Result<ChiSquareReport> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::param("cells", "matching lengths ≥ 2", observed.len()));
    }
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e == 0.0 {
            if o > 0 {
                return Ok(ChiSquareReport {
                    statistic: f64::INFINITY,
                    df: 1,
                    critical: 0.0,
                });
            }
            continue;
        }
        cells += 1;
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = cells.saturating_sub(1).max(1);
    let critical = ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - level);
    Ok(ChiSquareReport {
        statistic: stat,
        df,
        critical,
    })
}

/// Validated increasing grid of positive times.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("grid", "at least one time", "empty"));
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("grid", "strictly increasing positive times", format!("{grid:?}")));
    }
    Ok(())
}

/// Builds the grid path `t_k ↦ value_k` with value `initial` on `[0, t_1)`.
pub fn grid_path(initial: f64, grid: &[f64], values: &[f64]) -> Result<CadlagStep> {
    check_grid(grid)?;
    let jumps: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    CadlagStep::new(initial, &jumps, *grid.last().unwrap())
}

pub type RowLaw = Arc<dyn Fn(u64) -> TailFunction + Send + Sync>;
pub type WindowFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Row laws `F_n` compared against a reference tail on the window
/// `[c₁(g₁ ∨ 1), c₂ g₂]`, `g_i = F̄⁻¹(h_i(n)/n)`.
#[derive(Clone)]
pub struct TriangularArraySpec {
    pub row_law: RowLaw,
    pub reference: TailFunction,
    pub h1: WindowFn,
    pub h2: WindowFn,
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
}

impl std::fmt::Debug for TriangularArraySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TriangularArraySpec")
            .field("reference", &self.reference)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

impl TriangularArraySpec {
    /// Rows iid with the reference law; windows `h₁ = ln n`, `h₂ = 1/ln n`.
    pub fn iid(reference: TailFunction, eps: f64) -> Self {
        let row = reference.clone();
        TriangularArraySpec {
            row_law: Arc::new(move |_| row.clone()),
            reference,
            h1: Arc::new(|n| (n as f64).ln()),
            h2: Arc::new(|n| 1.0 / (n as f64).ln()),
            c1: 1.0,
            c2: 1.0,
            eps,
        }
    }

    pub fn with_rows(mut self, row_law: RowLaw) -> Self {
        self.row_law = row_law;
        self
    }

    /// `(ln lower, ln upper)` of the comparison window.
    pub fn window(&self, n: u64) -> Result<(f64, f64)> {
        let nf = n as f64;
        let p1 = (self.h1)(n) / nf;
        let p2 = (self.h2)(n) / nf;
        let g1 = self.reference.inverse(p1.min(1.0))?;
        let g2 = self.reference.inverse(p2)?;
        let lo = self.c1.ln() + g1.log().max(0.0);
        let hi = self.c2.ln() + g2.log();
        if !(lo < hi) {
            return Err(Error::DegenerateWindow {
                lower: lo,
                upper: hi,
            });
        }
        Ok((lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpcondReport {
    pub log_lower: f64,
    pub log_upper: f64,
    /// `max |F̄(x)/F̄_n(x) − 1|` over the grid.
    pub worst_deviation: f64,
    pub passes: bool,
}

/// Checks `(1−ε)F̄_n ≤ F̄ ≤ (1+ε)F̄_n` on `grid` points spaced evenly in `ln x`.
pub fn check_epcond(spec: &TriangularArraySpec, n: u64, grid: usize) -> Result<EpcondReport> {
    if grid < 10 {
        return Err(Error::param("grid size", "grid size ≥ 10", grid));
    }
    let (lo, hi) = spec.window(n)?;
    let row = (spec.row_law)(n);
    let mut worst = 0.0f64;
    for k in 0..grid {
        let lx = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
        let fr = spec.reference.eval_log(lx);
        let fnx = row.eval_log(lx);
        let dev = if fnx == 0.0 {
            if fr == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (fr / fnx - 1.0).abs()
        };
        worst = worst.max(dev);
    }
    Ok(EpcondReport {
        log_lower: lo,
        log_upper: hi,
        worst_deviation: worst,
        passes: worst <= spec.eps,
    })
}

/// `t ↦ (1/n) L(S^n_{⌊nt⌋})` on `grid`, with `S^n_m` the partial sums of row
/// `n` and `L = 1/F̄` of the reference tail.
pub fn rescaled_sum_path<R: Rng + ?Sized>(
    spec: &TriangularArraySpec,
    n: u64,
    grid: &[f64],
    rng: &mut R,
) -> Result<CadlagStep> {
    check_grid(grid)?;
    let row = (spec.row_law)(n);
    let nf = n as f64;
    let mut acc = LogSum::new();
    let mut m = 0u64;
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        let target = (nf * t).floor() as u64;
        while m < target {
            acc.push(row.sample(rng));
            m += 1;
        }
        values.push(spec.reference.l_mag(acc.total()) / nf);
    }
    grid_path(spec.reference.l_mag(LogMagnitude::ZERO) / nf, grid, &values)
}
