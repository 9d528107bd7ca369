//! Critical Galton-Watson machinery: offspring laws, survival probabilities,
//! size-biasing, the spinal skeleton of the tree conditioned to survive, and
//! construction of trees conditioned on their exact height.

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, Zeta};

use crate::error::{Error, Result};
use crate::special::{log1m_plus, zeta, Polylog};

/// Default length of the survival table for laws without a closed form.
pub const DEFAULT_TABLE_LEN: usize = 100_000;

/// Default bound on the number of vertices of a realized tree.
pub const DEFAULT_SIZE_CAP: u64 = 10_000_000;

/// Above this many buds at one spine vertex, only heights reaching the
/// critical height are drawn individually.
pub const EXPLICIT_BUDS: u64 = 1 << 12;

/// Below this `q` the Zipf excess is evaluated through the expansion of the
/// polylogarithm around 1.
const SERIES_BELOW: f64 = 0.1;

/// Sums of at most this many tilted geometric draws are taken one by one.
const DIRECT_SUM: u64 = 32;

#[derive(Clone, Debug)]
struct ZipfLaw {
    alpha: f64,
    zeta_alpha: f64,
    p0: f64,
    li_pgf: Polylog,
    li_deriv: Polylog,
    sampler: Zeta<f64>,
    biased: Zeta<f64>,
    q: Vec<f64>,
    drop: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Family {
    Geometric,
    Zipf(Box<ZipfLaw>),
}

/// A critical offspring law with stable index `α`, together with its
/// survival probabilities `q_n = P(Z_n > 0)`.
#[derive(Clone, Debug)]
pub struct OffspringLaw {
    family: Arc<Family>,
}

/// A leaf height drawn from `P(h ≥ k) = q_k`. `capped` marks a draw that ran
/// past the end of the survival table; `height` is then the table length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LeafHeight {
    pub height: u64,
    pub capped: bool,
}

impl OffspringLaw {
    /// `p_k = 2^{-(k+1)}`, `α = 2`.
    pub fn geometric() -> Self {
        OffspringLaw {
            family: Arc::new(Family::Geometric),
        }
    }

    /// `p_k = k^{-(1+α)}/ζ(α)` for `k ≥ 1` with survival table `q_0..q_N`.
    pub fn zipf(alpha: f64, table_len: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::param("alpha", "1 < alpha < 2", alpha));
        }
        if table_len < 1 {
            return Err(Error::param("table_len", "at least 1", table_len));
        }
        let zeta_alpha = zeta(alpha);
        let zeta_next = zeta(1.0 + alpha);
        let mut law = ZipfLaw {
            alpha,
            zeta_alpha,
            p0: 1.0 - zeta_next / zeta_alpha,
            li_pgf: Polylog::new(1.0 + alpha),
            li_deriv: Polylog::new(alpha),
            sampler: Zeta::new(1.0 + alpha).expect("zeta exponent above 1"),
            biased: Zeta::new(alpha).expect("zeta exponent above 1"),
            q: Vec::new(),
            drop: Vec::new(),
        };
        let len = table_len + 3;
        let mut q = Vec::with_capacity(len);
        let mut drop = Vec::with_capacity(len);
        let mut qn = 1.0;
        for _ in 0..len {
            let d = law.excess(qn);
            q.push(qn);
            drop.push(d);
            qn -= d;
        }
        law.q = q;
        law.drop = drop;
        Ok(OffspringLaw {
            family: Arc::new(Family::Zipf(Box::new(law))),
        })
    }

    pub fn alpha(&self) -> f64 {
        match &*self.family {
            Family::Geometric => 2.0,
            Family::Zipf(z) => z.alpha,
        }
    }

    /// Largest `n` for which `q_n` is available, or `None` when unbounded.
    pub fn table_len(&self) -> Option<u64> {
        match &*self.family {
            Family::Geometric => None,
            Family::Zipf(z) => Some((z.q.len() - 3) as u64),
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match &*self.family {
            Family::Geometric => 0.5f64.powi((k + 1).min(2000) as i32),
            Family::Zipf(z) => {
                if k == 0 {
                    z.p0
                } else {
                    (k as f64).powf(-(1.0 + z.alpha)) / z.zeta_alpha
                }
            }
        }
    }

    /// `f(s) = E s^Z` on `[0, 1]`.
    pub fn pgf(&self, s: f64) -> f64 {
        match &*self.family {
            Family::Geometric => 1.0 / (2.0 - s),
            Family::Zipf(z) => z.p0 + z.li_pgf.eval(s) / z.zeta_alpha,
        }
    }

    /// `f′(s)` on `[0, 1]`.
    pub fn pgf_deriv(&self, s: f64) -> f64 {
        match &*self.family {
            Family::Geometric => 1.0 / ((2.0 - s) * (2.0 - s)),
            Family::Zipf(z) => {
                if s == 0.0 {
                    1.0 / z.zeta_alpha
                } else {
                    z.li_deriv.eval(s) / (s * z.zeta_alpha)
                }
            }
        }
    }

    /// `f(1 − q) − (1 − q) = q^α L(q)`, accurate for small `q`.
    pub fn excess(&self, q: f64) -> f64 {
        match &*self.family {
            Family::Geometric => q * q / (1.0 + q),
            Family::Zipf(z) => z.excess(q),
        }
    }

    /// The slowly varying factor `L(u) = (f(1 − u) − 1 + u)/u^α`.
    pub fn l_fn(&self, u: f64) -> f64 {
        self.excess(u) / u.powf(self.alpha())
    }

    /// `q_n = P(h(T) ≥ n)`; saturates at the last table entry.
    pub fn survival(&self, n: u64) -> f64 {
        match &*self.family {
            Family::Geometric => 1.0 / (n as f64 + 1.0),
            Family::Zipf(z) => z.q[(n as usize).min(z.q.len() - 1)],
        }
    }

    /// `q_n − q_{n+1} = P(h(T) = n)` without cancellation.
    pub fn height_pmf(&self, n: u64) -> f64 {
        match &*self.family {
            Family::Geometric => {
                let m = n as f64 + 1.0;
                1.0 / (m * (m + 1.0))
            }
            Family::Zipf(z) => z.drop[(n as usize).min(z.drop.len() - 1)],
        }
    }

    /// `ln(1 − q_n)`.
    fn ln_not_survive(&self, n: u64) -> f64 {
        match &*self.family {
            Family::Geometric => {
                (-1.0 / (n as f64 + 1.0)).ln_1p()
            }
            Family::Zipf(_) => (-self.survival(n)).ln_1p(),
        }
    }

    /// `c_n = P(h(T) = n)/P(h(T) = n + 1)`.
    pub fn height_ratio(&self, n: u64) -> f64 {
        if let Some(len) = self.table_len() {
            assert!(n <= len, "survival table too short for c_{n}");
        }
        let num = self.height_pmf(n);
        let den = self.height_pmf(n + 1);
        assert!(den > 0.0, "consecutive survival probabilities coincide at {n}");
        num / den
    }

    /// `P(max of Z̃ − 1 leaf heights ≥ x) = 1 − f′(1 − q_x)`.
    pub fn full_height_tail(&self, x: u64) -> f64 {
        let q = self.survival(x);
        match &*self.family {
            Family::Geometric => {
                let a = 1.0 + q;
                (a * a - 1.0) / (a * a)
            }
            Family::Zipf(z) => {
                if q < SERIES_BELOW {
                    let lambda = -(-q).ln_1p();
                    let se = z.li_deriv.singular_excess(lambda);
                    (-q * z.zeta_alpha - se) / ((1.0 - q) * z.zeta_alpha)
                } else {
                    1.0 - self.pgf_deriv(1.0 - q)
                }
            }
        }
    }

    /// `q_x^{α−1} L(q_x)`, the tail of the largest height seen from one
    /// spine vertex after the walk's visits are accounted for.
    pub fn visited_height_tail(&self, x: u64) -> f64 {
        let q = self.survival(x);
        self.excess(q) / q
    }

    /// Inverse transform on `P(h ≥ k) = q_k`.
    pub fn height_from_uniform(&self, u: f64) -> LeafHeight {
        debug_assert!(u > 0.0 && u <= 1.0);
        match &*self.family {
            Family::Geometric => LeafHeight {
                height: (1.0 / u - 1.0).floor() as u64,
                capped: false,
            },
            Family::Zipf(z) => {
                let last = z.q.len() - 3;
                if z.q[last] >= u {
                    return LeafHeight {
                        height: last as u64,
                        capped: true,
                    };
                }
                // q is decreasing; count entries with q_k >= u.
                let count = z.q[..=last].partition_point(|&qk| qk >= u);
                LeafHeight {
                    height: count as u64 - 1,
                    capped: false,
                }
            }
        }
    }

    pub fn sample_height<R: Rng + ?Sized>(&self, rng: &mut R) -> LeafHeight {
        self.height_from_uniform(open_unit(rng))
    }

    /// A height conditioned on `h ≥ threshold`.
    pub fn sample_height_at_least<R: Rng + ?Sized>(&self, threshold: u64, rng: &mut R) -> LeafHeight {
        self.height_from_uniform(open_unit(rng) * self.survival(threshold))
    }

    /// The maximum of `m` independent heights, drawn directly.
    pub fn sample_max_height<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> Option<LeafHeight> {
        if m == 0 {
            return None;
        }
        let target = open_unit(rng).ln();
        Some(self.max_height_below(m, u64::MAX, target))
    }

    /// Smallest `x < limit` with `m·(ln(1 − q_{x+1}) − ln(1 − q_limit)) ≥ target`,
    /// i.e. inverse transform for the maximum of `m` heights conditioned to
    /// stay below `limit`.
    fn max_height_below(&self, m: u64, limit: u64, target: f64) -> LeafHeight {
        let mf = m as f64;
        let top = self.table_len().unwrap_or(1 << 62);
        let base = if limit >= top { 0.0 } else { self.ln_not_survive(limit) };
        let accept = |x: u64| mf * (self.ln_not_survive(x + 1) - base) >= target;
        let hi = limit.min(top);
        if hi == 0 {
            return LeafHeight { height: 0, capped: false };
        }
        if !accept(hi - 1) {
            return LeafHeight {
                height: hi,
                capped: limit > top,
            };
        }
        let (mut lo, mut hi) = (0u64, hi - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if accept(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        LeafHeight {
            height: lo,
            capped: false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &*self.family {
            Family::Geometric => half_geometric(rng),
            Family::Zipf(z) => {
                if rng.random::<f64>() < z.p0 {
                    0
                } else {
                    z.sampler.sample(rng) as u64
                }
            }
        }
    }

    /// `Z̃` with `P(Z̃ = k) = k p_k`.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &*self.family {
            Family::Geometric => 1 + half_geometric(rng) + half_geometric(rng),
            Family::Zipf(z) => z.biased.sample(rng) as u64,
        }
    }

    /// A draw from `p_k s^k / f(s)`: the offspring of a vertex whose
    /// children must each die out with probability `s`.
    pub fn sample_tilted<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> u64 {
        if s <= 0.0 {
            return 0;
        }
        match &*self.family {
            Family::Geometric => tilted_geometric(s / 2.0, rng),
            Family::Zipf(z) => loop {
                let k = if rng.random::<f64>() < z.p0 {
                    0
                } else {
                    z.sampler.sample(rng) as u64
                };
                if k == 0 || open_unit(rng).ln() <= k as f64 * s.ln() {
                    return k;
                }
            },
        }
    }

    /// The total of `m` independent draws from `p_k s^k / f(s)`.
    pub fn sample_tilted_sum<R: Rng + ?Sized>(&self, m: u64, s: f64, rng: &mut R) -> u64 {
        if m == 0 || s <= 0.0 {
            return 0;
        }
        match &*self.family {
            Family::Geometric if m > DIRECT_SUM => {
                let r = s / 2.0;
                let rate = Gamma::new(m as f64, r / (1.0 - r))
                    .expect("positive gamma parameters")
                    .sample(rng);
                if rate <= 0.0 {
                    0
                } else {
                    Poisson::new(rate).expect("finite poisson rate").sample(rng) as u64
                }
            }
            _ => (0..m).map(|_| self.sample_tilted(s, rng)).sum(),
        }
    }

    /// A draw from `P(k) ∝ k p_k s^k`.
    pub fn sample_size_biased_tilted<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> u64 {
        match &*self.family {
            Family::Geometric => {
                let r = s / 2.0;
                1 + tilted_geometric(r, rng) + tilted_geometric(r, rng)
            }
            Family::Zipf(z) => loop {
                let k = z.biased.sample(rng) as u64;
                if open_unit(rng).ln() <= (k - 1) as f64 * s.ln() {
                    return k;
                }
            },
        }
    }

    /// `(ξ, ζ)` for a tree of height exactly `n + 1`: `ζ` is the root's
    /// offspring count and `ξ` the position of its first child of height `n`.
    /// The law is `c_n p_k (1 − q_n)^{j−1} (1 − q_{n+1})^{k−j}`.
    pub fn sample_first_generation<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> (u64, u64) {
        let r1 = 1.0 - self.survival(n + 1);
        // 1 − (1 − q_n)/(1 − q_{n+1})
        let gap = (self.height_pmf(n) / r1).min(1.0);
        let ln_rho = (-gap).ln_1p();
        let k = loop {
            let k = self.sample_size_biased_tilted(r1, rng);
            let accept = if gap >= 1.0 {
                1.0 / k as f64
            } else {
                -(k as f64 * ln_rho).exp_m1() / (k as f64 * gap)
            };
            if rng.random::<f64>() < accept {
                break k;
            }
        };
        if gap >= 1.0 {
            return (1, k);
        }
        let mass = -(k as f64 * ln_rho).exp_m1();
        let u: f64 = open_unit(rng);
        let j = 1 + ((-u * mass).ln_1p() / ln_rho).floor() as u64;
        (j.clamp(1, k), k)
    }

    /// The joint pmf of `(ξ, ζ)` for a tree of height `n + 1`.
    pub fn first_generation_pmf(&self, n: u64, j: u64, k: u64) -> f64 {
        if j < 1 || j > k {
            return 0.0;
        }
        let a = 1.0 - self.survival(n);
        let b = 1.0 - self.survival(n + 1);
        self.height_ratio(n) * self.pmf(k) * a.powi((j - 1) as i32) * b.powi((k - j) as i32)
    }
}

impl ZipfLaw {
    fn excess(&self, q: f64) -> f64 {
        if q >= SERIES_BELOW {
            return self.p0 + self.li_pgf.eval(1.0 - q) / self.zeta_alpha - (1.0 - q);
        }
        let lambda = -(-q).ln_1p();
        self.li_pgf.singular_excess_beyond_linear(lambda) / self.zeta_alpha + log1m_plus(q)
    }
}

/// Iterates `q_{n+1} = q_n − (f(1 − q_n) − (1 − q_n))` from `q_0 = 1`.
pub fn survival_table(law: &OffspringLaw, n: usize) -> Vec<f64> {
    let mut q = Vec::with_capacity(n + 1);
    let mut qn = 1.0;
    for _ in 0..=n {
        q.push(qn);
        qn -= law.excess(qn);
    }
    q
}

#[inline]
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Failures before the first success of fair coin flips.
#[inline]
fn half_geometric<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    let mut total = 0;
    loop {
        let bits: u64 = rng.random();
        if bits != 0 {
            return total + bits.trailing_zeros() as u64;
        }
        total += 64;
    }
}

/// `P(k) = (1 − r) r^k` on `{0, 1, ..}`.
#[inline]
fn tilted_geometric<R: Rng + ?Sized>(r: f64, rng: &mut R) -> u64 {
    if r <= 0.0 {
        return 0;
    }
    (open_unit(rng).ln() / r.ln()).floor() as u64
}

/// One vertex of the backbone with its buds.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineVertex {
    /// `Z̃ − 1`.
    pub buds: u64,
    /// Every bud's leaf height, kept when `buds ≤ EXPLICIT_BUDS`.
    pub heights: Option<Vec<LeafHeight>>,
    /// Heights reaching the critical height.
    pub big: Vec<LeafHeight>,
    /// Largest leaf height, `None` without buds.
    pub max_height: Option<LeafHeight>,
}

impl SpineVertex {
    pub fn big_count(&self) -> usize {
        self.big.len()
    }

    pub fn any_capped(&self) -> bool {
        self.max_height.is_some_and(|h| h.capped)
    }
}

/// Draws spine vertices one at a time; leaf heights only, no leaf trees.
#[derive(Clone, Debug)]
pub struct SpineGrower {
    law: OffspringLaw,
    critical_height: f64,
    threshold: u64,
}

impl SpineGrower {
    /// `critical_height` is `h_n`; a leaf is big when `h ≥ h_n`.
    pub fn new(law: OffspringLaw, critical_height: f64) -> Result<Self> {
        if !(critical_height >= 0.0 && critical_height.is_finite()) {
            return Err(Error::param("critical_height", "finite and non-negative", critical_height));
        }
        Ok(SpineGrower {
            law,
            critical_height,
            threshold: critical_height.ceil() as u64,
        })
    }

    /// Uses `h_n = n/ln n`.
    pub fn for_scale(law: OffspringLaw, n_scale: f64) -> Result<Self> {
        if !(n_scale > 1.0) {
            return Err(Error::param("n_scale", "greater than 1", n_scale));
        }
        Self::new(law, critical_height(n_scale))
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn critical_height(&self) -> f64 {
        self.critical_height
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn next_vertex<R: Rng + ?Sized>(&self, rng: &mut R) -> SpineVertex {
        let buds = self.law.sample_size_biased(rng) - 1;
        if buds <= EXPLICIT_BUDS {
            let heights: Vec<LeafHeight> = (0..buds).map(|_| self.law.sample_height(rng)).collect();
            let big = heights.iter().copied().filter(|h| h.height >= self.threshold).collect();
            let max_height = heights.iter().copied().max();
            return SpineVertex {
                buds,
                heights: Some(heights),
                big,
                max_height,
            };
        }
        let p = self.law.survival(self.threshold);
        let count = Binomial::new(buds, p.clamp(0.0, 1.0))
            .expect("valid binomial")
            .sample(rng);
        let big: Vec<LeafHeight> = (0..count)
            .map(|_| self.law.sample_height_at_least(self.threshold, rng))
            .collect();
        let max_height = if count > 0 {
            big.iter().copied().max()
        } else {
            let target = open_unit(rng).ln();
            Some(self.law.max_height_below(buds, self.threshold, target))
        };
        SpineVertex {
            buds,
            heights: None,
            big,
            max_height,
        }
    }
}

pub fn critical_height(n_scale: f64) -> f64 {
    n_scale / n_scale.ln()
}

/// Backbone vertices `ρ_0..ρ_{N−1}` with their buds' leaf heights.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinalSkeleton {
    pub critical_height: f64,
    pub vertices: Vec<SpineVertex>,
}

impl SpinalSkeleton {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `N_n(i)`.
    pub fn big_count(&self, i: usize) -> usize {
        self.vertices[i].big_count()
    }

    /// Backbone indices carrying at least one big leaf.
    pub fn big_sites(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.big_count(i) > 0).collect()
    }
}

pub fn build_spine<R: Rng + ?Sized>(
    law: &OffspringLaw,
    n_vertices: usize,
    n_scale: f64,
    rng: &mut R,
) -> Result<SpinalSkeleton> {
    let grower = SpineGrower::for_scale(law.clone(), n_scale)?;
    let vertices = (0..n_vertices).map(|_| grower.next_vertex(rng)).collect();
    Ok(SpinalSkeleton {
        critical_height: grower.critical_height,
        vertices,
    })
}

/// What to condition a realized tree on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafMode {
    Unconditioned,
    HeightExact(u64),
}

/// A rooted ordered tree stored with contiguous child ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitTree {
    parent: Vec<u32>,
    depth: Vec<u32>,
    child_start: Vec<u32>,
    child_count: Vec<u32>,
}

pub const NO_PARENT: u32 = u32::MAX;

impl ExplicitTree {
    /// The single-vertex tree.
    pub fn root_only() -> Self {
        ExplicitTree {
            parent: vec![NO_PARENT],
            depth: vec![0],
            child_start: vec![1],
            child_count: vec![0],
        }
    }

    /// Builds from per-vertex child counts in breadth-first order.
    pub fn from_child_counts(counts: &[u32]) -> Result<Self> {
        let mut tree = ExplicitTree::root_only();
        tree.child_start.clear();
        tree.child_count.clear();
        let mut v = 0;
        while v < tree.parent.len() {
            let k = *counts
                .get(v)
                .ok_or_else(|| Error::param("counts", "one entry per vertex", counts.len()))?;
            tree.attach_children(v, k as usize);
            v += 1;
        }
        if counts.len() != tree.parent.len() {
            return Err(Error::param("counts", "one entry per vertex", counts.len()));
        }
        Ok(tree)
    }

    fn attach_children(&mut self, v: usize, k: usize) -> Range<usize> {
        let start = self.parent.len();
        if self.child_start.len() <= v {
            self.child_start.resize(v + 1, 0);
            self.child_count.resize(v + 1, 0);
        }
        self.child_start[v] = start as u32;
        self.child_count[v] = k as u32;
        let d = self.depth[v] + 1;
        for _ in 0..k {
            self.parent.push(v as u32);
            self.depth.push(d);
        }
        start..start + k
    }

    fn finish(&mut self) {
        let n = self.parent.len();
        if self.child_start.len() < n {
            self.child_start.resize(n, n as u32);
            self.child_count.resize(n, 0);
        }
    }

    pub fn size(&self) -> usize {
        self.parent.len()
    }

    pub fn height(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        match self.parent[v] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn depth(&self, v: usize) -> u32 {
        self.depth[v]
    }

    pub fn children(&self, v: usize) -> Range<usize> {
        let s = self.child_start[v] as usize;
        s..s + self.child_count[v] as usize
    }

    pub fn child_count(&self, v: usize) -> usize {
        self.child_count[v] as usize
    }

    /// Vertex counts per depth.
    pub fn generation_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.height() as usize + 1];
        for &d in &self.depth {
            sizes[d as usize] += 1;
        }
        sizes
    }

    /// The first vertex of maximal depth in depth-first (lexicographic) order.
    pub fn first_deepest(&self) -> usize {
        let h = self.height();
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            if self.depth[v] == h {
                return v;
            }
            stack.extend(self.children(v).rev());
        }
        unreachable!("a vertex of maximal depth exists")
    }

    /// Vertices from the root down to `v`.
    pub fn path_from_root(&self, v: usize) -> Vec<usize> {
        let mut path = vec![v];
        let mut u = v;
        while let Some(p) = self.parent(u) {
            path.push(p);
            u = p;
        }
        path.reverse();
        path
    }

    /// Parent-array CSV: `vertex,parent,depth`, root parent `-1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vertex", "parent", "depth"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for v in 0..self.size() {
            let p = self.parent(v).map_or(-1, |p| p as i64);
            w.write_record([v.to_string(), p.to_string(), self.depth[v].to_string()])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Task {
    Free,
    Exact(u64),
    Below(u64),
}

/// Grows a tree; subtrees conditioned on their height use the tilted
/// offspring law `p_k (1 − q_{m−1})^k / (1 − q_m)` at each vertex.
pub fn realize_leaf<R: Rng + ?Sized>(
    law: &OffspringLaw,
    mode: LeafMode,
    cap: u64,
    rng: &mut R,
) -> Result<ExplicitTree> {
    let cap = cap.min(u32::MAX as u64 - 1);
    let mut tree = ExplicitTree::root_only();
    tree.child_start.clear();
    tree.child_count.clear();
    let root = match mode {
        LeafMode::Unconditioned => Task::Free,
        LeafMode::HeightExact(n) => Task::Exact(n),
    };
    let mut stack = vec![(0usize, root)];
    let mut tasks: Vec<Task> = Vec::new();
    while let Some((v, task)) = stack.pop() {
        tasks.clear();
        match task {
            Task::Free => {
                let k = law.sample(rng);
                check_cap(tree.size() as u64, k, cap)?;
                tasks.extend(std::iter::repeat_n(Task::Free, k as usize));
            }
            Task::Below(m) => {
                let s = 1.0 - law.survival(m - 1);
                let k = law.sample_tilted(s, rng);
                check_cap(tree.size() as u64, k, cap)?;
                tasks.extend(std::iter::repeat_n(Task::Below(m - 1), k as usize));
            }
            Task::Exact(0) => {}
            Task::Exact(a) => {
                let (j, k) = law.sample_first_generation(a - 1, rng);
                check_cap(tree.size() as u64, k, cap)?;
                tasks.extend(std::iter::repeat_n(Task::Below(a - 1), (j - 1) as usize));
                tasks.push(Task::Exact(a - 1));
                tasks.extend(std::iter::repeat_n(Task::Below(a), (k - j) as usize));
            }
        }
        let range = tree.attach_children(v, tasks.len());
        for (c, t) in range.zip(tasks.iter()).rev() {
            stack.push((c, *t));
        }
    }
    tree.finish();
    Ok(tree)
}

fn check_cap(size: u64, extra: u64, cap: u64) -> Result<()> {
    if size.saturating_add(extra) > cap {
        Err(Error::SizeCapExceeded { cap })
    } else {
        Ok(())
    }
}

/// Generation sizes `Z_0..Z_H` of a tree of height exactly `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationProfile {
    pub sizes: Vec<u64>,
    /// Set when the vertex count passed the cap; `sizes` is then truncated.
    pub capped: bool,
}

impl GenerationProfile {
    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }
}

/// Generation sizes of a tree conditioned on height exactly `height`,
/// without storing vertices. Side subtrees hanging off the distinguished
/// line are pooled by the depth before which they must die out.
pub fn realize_profile<R: Rng + ?Sized>(
    law: &OffspringLaw,
    height: u64,
    cap: u64,
    rng: &mut R,
) -> GenerationProfile {
    let h = height;
    let mut sizes = Vec::with_capacity(h as usize + 1);
    // Left pool: every vertex at depth e must have height < h − e.
    // Right pool: height < h + 1 − e.
    let (mut left, mut right) = (0u64, 0u64);
    let mut total = 0u64;
    for e in 0..=h {
        let size = 1 + left + right;
        sizes.push(size);
        total = total.saturating_add(size);
        if total > cap {
            return GenerationProfile { sizes, capped: true };
        }
        if e == h {
            break;
        }
        let next_left = law.sample_tilted_sum(left, 1.0 - law.survival(h - e - 1), rng);
        let next_right = law.sample_tilted_sum(right, 1.0 - law.survival(h - e), rng);
        let (j, k) = law.sample_first_generation(h - e - 1, rng);
        left = next_left + (j - 1);
        right = next_right + (k - j);
    }
    GenerationProfile { sizes, capped: false }
}
