//! The biased random walk on Kesten's tree: an exact step-by-step engine on
//! lazily grown trees, quenched means of backbone hitting times from
//! conductance sums, the law of deeply visited leaves, and the log-scale
//! surrogate used at scales the exact engine cannot reach.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::kestentree::{realize_leaf, realize_profile, ExplicitTree, LeafHeight, LeafMode, OffspringLaw, SpineGrower};
use crate::limits::{check_grid, grid_path, CadlagStep};
use crate::logmag::{LogMagnitude, LogSum};
use crate::seed::{stream, tag};

/// Default bound on walk steps per exact run.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

/// Default vertex cap for generation profiles in quenched means.
pub const DEFAULT_PROFILE_CAP: u64 = 1_000_000_000_000;

/// Largest tree the dense oracle accepts.
pub const DENSE_LIMIT: usize = 1000;

/// Above this many non-trivial leaves at one vertex only the tallest is realized.
const EXPLICIT_LEAVES: u64 = 1_000_000;

const UNEXPANDED: u32 = u32::MAX;
const NO_PARENT: u32 = u32::MAX;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 1.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("beta", "beta > 1", beta))
    }
}

/// Edge conductances of a leaf hanging from backbone vertex `ρ_i`: the edge
/// above a vertex at local depth `d` carries `β^{i+d}` (the bud edge is `d = 0`).
#[derive(Clone, Debug)]
pub struct ConductanceView {
    log_beta: f64,
    generation: u64,
    /// `ln Σ c` over the edges of each vertex's subtree, including its parent edge.
    log_subtree: Vec<f64>,
}

impl ConductanceView {
    pub fn new(tree: &ExplicitTree, beta: f64, generation: u64) -> Result<Self> {
        check_beta(beta)?;
        let log_beta = beta.ln();
        let base = generation as f64 * log_beta;
        let mut acc: Vec<LogSum> = (0..tree.size())
            .map(|v| {
                let mut s = LogSum::new();
                s.push_log(base + tree.depth(v) as f64 * log_beta);
                s
            })
            .collect();
        // parents precede children
        for v in (1..tree.size()).rev() {
            let p = tree.parent(v).expect("non-root vertex has a parent");
            let t = acc[v].total();
            acc[p].push(t);
        }
        Ok(ConductanceView {
            log_beta,
            generation,
            log_subtree: acc.iter().map(|s| s.total().log()).collect(),
        })
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// `ln c` of the edge above `v`.
    pub fn log_edge(&self, tree: &ExplicitTree, v: usize) -> f64 {
        (self.generation as f64 + tree.depth(v) as f64) * self.log_beta
    }

    pub fn subtree(&self, v: usize) -> LogMagnitude {
        LogMagnitude::from_log(self.log_subtree[v])
    }

    /// Every edge of the leaf plus the bud edge.
    pub fn total(&self) -> LogMagnitude {
        self.subtree(0)
    }

    /// The total divided by `β^i`: `Σ_e Z_e β^e`.
    pub fn relative_total(&self) -> LogMagnitude {
        self.total().shift(-(self.generation as f64) * self.log_beta)
    }
}

/// `Σ_e Z_e β^e` for a leaf given by its generation sizes.
pub fn profile_weight(sizes: &[u64], beta: f64) -> LogMagnitude {
    let lb = beta.ln();
    let mut acc = LogSum::new();
    for (e, &z) in sizes.iter().enumerate() {
        if z > 0 {
            acc.push_log((z as f64).ln() + e as f64 * lb);
        }
    }
    acc.total()
}

/// `E σ_i` given `W = Σ_j Σ_e Z_e^{(j)} β^e` over the leaves of `ρ_i`:
/// `1 + 2W` at the root, `1 + 2βW/(1+β)` elsewhere.
pub fn sigma_from_weight(weight: LogMagnitude, i: u64, beta: f64) -> LogMagnitude {
    let factor = if i == 0 { 2.0 } else { 2.0 * beta / (1.0 + beta) };
    LogMagnitude::ONE + weight.shift(factor.ln())
}

/// Expected time `X` spends in `ρ_i` and its leaves per visit from `ρ_i`.
pub fn quenched_mean_sigma(leaves: &[ExplicitTree], i: u64, beta: f64) -> Result<LogMagnitude> {
    let mut w = LogSum::new();
    for leaf in leaves {
        w.push(ConductanceView::new(leaf, beta, i)?.relative_total());
    }
    Ok(sigma_from_weight(w.total(), i, beta))
}

/// `E_ρ Δ_n` with its two-sided bound from the `E σ_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuenchedMean {
    /// `Σ E σ_i`.
    pub lower: LogMagnitude,
    /// `(β+1)/(β−1) Σ E σ_i`; infinite when some `σ_i` is only bounded below.
    pub upper: LogMagnitude,
    /// The backbone recursion; absent when some `σ_i` is only bounded below.
    pub exact: Option<LogMagnitude>,
    /// The recursion evaluated on whatever is known (a lower bound when capped).
    pub estimate: LogMagnitude,
}

/// One `E σ_i`, exact or a lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sigma {
    pub value: LogMagnitude,
    pub exact: bool,
}

/// `e_0 = s_0`, `e_i = (1+β)/β s_i + e_{i−1}/β`, `E_ρ Δ_n = Σ_{i<n} e_i`.
pub fn quenched_mean_delta(sigmas: &[Sigma], beta: f64) -> Result<QuenchedMean> {
    check_beta(beta)?;
    let lb = beta.ln();
    let lead = ((1.0 + beta) / beta).ln();
    let mut total = LogSum::new();
    let mut sum_s = LogSum::new();
    let mut e = LogMagnitude::ZERO;
    for (i, s) in sigmas.iter().enumerate() {
        e = if i == 0 {
            s.value
        } else {
            s.value.shift(lead) + e.shift(-lb)
        };
        total.push(e);
        sum_s.push(s.value);
    }
    let all_exact = sigmas.iter().all(|s| s.exact);
    let lower = sum_s.total();
    Ok(QuenchedMean {
        lower,
        upper: if all_exact {
            lower.shift(((beta + 1.0) / (beta - 1.0)).ln())
        } else {
            LogMagnitude::from_log(f64::INFINITY)
        },
        exact: all_exact.then(|| total.total()),
        estimate: total.total(),
    })
}

/// Quenched mean from explicit leaves of `ρ_0..ρ_{n−1}`.
pub fn quenched_mean_from_leaves(leaves: &[Vec<ExplicitTree>], beta: f64) -> Result<QuenchedMean> {
    let sigmas = leaves
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(Sigma {
                value: quenched_mean_sigma(l, i as u64, beta)?,
                exact: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    quenched_mean_delta(&sigmas, beta)
}

/// `E_ρ Δ_n` by solving `(I − P)h = 1` on the tree up to `ρ_n`.
pub fn dense_hitting_mean(leaves: &[Vec<ExplicitTree>], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let n = leaves.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut tree = SpineTree::from_leaves(leaves.to_vec());
    tree.ensure_backbone(n)?;
    // transient states: every vertex projecting below n
    let ids: Vec<usize> = (0..tree.size()).filter(|&v| (tree.spine[v] as usize) < n).collect();
    if ids.len() > DENSE_LIMIT {
        return Err(Error::param("tree", "at most 1000 vertices for the dense solve", ids.len()));
    }
    let index: HashMap<usize, usize> = ids.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let m = ids.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    for (row, &v) in ids.iter().enumerate() {
        let mut nbrs: Vec<(usize, f64)> = Vec::new();
        let d = tree.depth[v] as f64;
        if let Some(p) = tree.parent(v) {
            nbrs.push((p, beta.powf(d - 1.0)));
        }
        for c in tree.children(v) {
            nbrs.push((c, beta.powf(d)));
        }
        let total: f64 = nbrs.iter().map(|x| x.1).sum();
        for (u, c) in nbrs {
            if let Some(&col) = index.get(&u) {
                a[(row, col)] -= c / total;
            }
        }
    }
    let h = a
        .lu()
        .solve(&DVector::from_element(m, 1.0))
        .ok_or_else(|| Error::param("tree", "a non-singular hitting system", m))?;
    Ok(h[index[&(tree.backbone[0] as usize)]])
}

/// Supplies the leaves of backbone vertex `i`.
pub type LeafSource = Box<dyn FnMut(usize) -> Result<Vec<ExplicitTree>> + Send>;

/// A leaf placed in a [`SpineTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafInfo {
    pub root: u32,
    pub height: u32,
    pub size: u32,
    /// First deepest vertex in lexicographic order.
    pub deepest: u32,
}

/// Kesten's tree grown on demand as the walk reaches new backbone vertices.
/// The children of `ρ_i` are its leaf roots followed by `ρ_{i+1}`.
pub struct SpineTree {
    parent: Vec<u32>,
    depth: Vec<u32>,
    child_start: Vec<u32>,
    child_count: Vec<u32>,
    spine: Vec<u32>,
    backbone: Vec<u32>,
    leaves: Vec<Vec<LeafInfo>>,
    source: LeafSource,
    size_cap: usize,
}

impl SpineTree {
    pub fn new(source: LeafSource, size_cap: usize) -> Self {
        SpineTree {
            parent: vec![NO_PARENT],
            depth: vec![0],
            child_start: vec![0],
            child_count: vec![UNEXPANDED],
            spine: vec![0],
            backbone: vec![0],
            leaves: Vec::new(),
            source,
            size_cap: size_cap.min(u32::MAX as usize - 1),
        }
    }

    /// A backbone with no buds.
    pub fn bare() -> Self {
        Self::new(Box::new(|_| Ok(Vec::new())), u32::MAX as usize)
    }

    /// The given leaves at `ρ_0, ρ_1, ..`, bare beyond.
    pub fn from_leaves(leaves: Vec<Vec<ExplicitTree>>) -> Self {
        let mut leaves = leaves.into_iter();
        Self::new(Box::new(move |_| Ok(leaves.next().unwrap_or_default())), u32::MAX as usize)
    }

    /// Leaves drawn from the law with heights clamped at `height_clamp`:
    /// `Z̃_i − 1` buds per vertex, each a tree of height `min(h, clamp)`.
    /// Vertex `i` uses its own stream, so the tree does not depend on the
    /// order of growth. `bare_below` vertices at the start get no buds.
    pub fn random(law: OffspringLaw, seed: u64, height_clamp: u64, bare_below: usize, size_cap: usize) -> Self {
        let leaf_cap = size_cap as u64;
        let source = move |i: usize| -> Result<Vec<ExplicitTree>> {
            if i < bare_below {
                return Ok(Vec::new());
            }
            let mut rng = stream(seed, i as u64, tag::LEAVES);
            let buds = law.sample_size_biased(&mut rng) - 1;
            (0..buds)
                .map(|_| {
                    let h = law.sample_height(&mut rng).height.min(height_clamp);
                    realize_leaf(&law, LeafMode::HeightExact(h), leaf_cap, &mut rng)
                })
                .collect()
        };
        Self::new(Box::new(source), size_cap)
    }

    pub fn size(&self) -> usize {
        self.parent.len()
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

    /// Panics on a frontier vertex whose children are not yet grown.
    pub fn children(&self, v: usize) -> std::ops::Range<usize> {
        assert_ne!(self.child_count[v], UNEXPANDED, "vertex {v} not expanded");
        let s = self.child_start[v] as usize;
        s..s + self.child_count[v] as usize
    }

    /// `π(v)`: the backbone index `v` projects to.
    pub fn projection(&self, v: usize) -> usize {
        self.spine[v] as usize
    }

    /// Id of `ρ_i`; grows the backbone as needed.
    pub fn backbone_vertex(&mut self, i: usize) -> Result<usize> {
        self.ensure_backbone(i)?;
        Ok(self.backbone[i] as usize)
    }

    pub fn is_backbone(&self, v: usize) -> bool {
        self.backbone[self.spine[v] as usize] as usize == v
    }

    /// Leaves of `ρ_i`; grows the tree as needed.
    pub fn leaves(&mut self, i: usize) -> Result<&[LeafInfo]> {
        self.ensure_backbone(i + 1)?;
        Ok(&self.leaves[i])
    }

    /// Makes `ρ_0..ρ_i` exist with the leaves of `ρ_0..ρ_{i−1}`.
    pub fn ensure_backbone(&mut self, i: usize) -> Result<()> {
        while self.backbone.len() <= i {
            let last = self.backbone.len() - 1;
            self.expand(last)?;
        }
        Ok(())
    }

    /// The vertex at local depth `depth` on the path from the root of leaf
    /// `j` of `ρ_i` to its first deepest vertex.
    pub fn entrance(&mut self, i: usize, j: usize, depth: u32) -> Result<usize> {
        let info = *self
            .leaves(i)?
            .get(j)
            .ok_or_else(|| Error::param("leaf", "an existing leaf index", j))?;
        if info.height < depth {
            return Err(Error::param("entrance depth", "at most the leaf height", depth));
        }
        let target = self.depth[info.root as usize] + depth;
        let mut v = info.deepest as usize;
        while self.depth[v] > target {
            v = self.parent[v] as usize;
        }
        Ok(v)
    }

    fn expand(&mut self, i: usize) -> Result<()> {
        let v = self.backbone[i] as usize;
        debug_assert_eq!(self.child_count[v], UNEXPANDED);
        let trees = (self.source)(i)?;
        let extra: usize = trees.iter().map(|t| t.size()).sum::<usize>() + 1;
        if self.size() + extra > self.size_cap {
            return Err(Error::SizeCapExceeded {
                cap: self.size_cap as u64,
            });
        }
        let d = self.depth[v] + 1;
        let start = self.size();
        let m = trees.len();
        self.child_start[v] = start as u32;
        self.child_count[v] = (m + 1) as u32;
        for _ in 0..=m {
            self.parent.push(v as u32);
            self.depth.push(d);
            self.spine.push(i as u32);
            self.child_start.push(0);
            self.child_count.push(0);
        }
        let next = start + m;
        self.spine[next] = (i + 1) as u32;
        self.child_count[next] = UNEXPANDED;
        self.backbone.push(next as u32);
        let mut infos = Vec::with_capacity(m);
        for (j, t) in trees.iter().enumerate() {
            let root = start + j;
            let base = self.size();
            let map = |u: usize| if u == 0 { root } else { base + u - 1 };
            for u in 1..t.size() {
                self.parent.push(map(t.parent(u).expect("non-root")) as u32);
                self.depth.push(d + t.depth(u));
                self.spine.push(i as u32);
                self.child_start.push(0);
                self.child_count.push(0);
            }
            for u in 0..t.size() {
                let c = t.children(u);
                let g = map(u);
                self.child_count[g] = c.len() as u32;
                self.child_start[g] = if c.is_empty() { 0 } else { map(c.start) as u32 };
            }
            infos.push(LeafInfo {
                root: root as u32,
                height: t.height(),
                size: t.size() as u32,
                deepest: map(t.first_deepest()) as u32,
            });
        }
        self.leaves.push(infos);
        Ok(())
    }

    /// One step of the walk from `v` driven by `u ∈ [0, 1)`: from the root a
    /// uniform child, elsewhere the parent with probability `1/(1 + βk)`.
    #[inline]
    fn step(&mut self, v: usize, beta: f64, u: f64) -> Result<usize> {
        if self.child_count[v] == UNEXPANDED {
            self.expand(self.spine[v] as usize)?;
        }
        let k = self.child_count[v] as usize;
        let start = self.child_start[v] as usize;
        if self.parent[v] == NO_PARENT {
            return Ok(start + ((u * k as f64) as usize).min(k - 1));
        }
        let w = u * (1.0 + beta * k as f64);
        if w < 1.0 || k == 0 {
            Ok(self.parent[v] as usize)
        } else {
            Ok(start + (((w - 1.0) / beta) as usize).min(k - 1))
        }
    }
}

/// Runs the walk from `from` until `stop` says so, calling `visit(step, vertex)`
/// after each move. Returns the step count.
fn run_walk<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    beta: f64,
    from: usize,
    budget: u64,
    rng: &mut R,
    mut visit: impl FnMut(&SpineTree, u64, usize, usize) -> bool,
) -> Result<u64> {
    let mut x = from;
    let mut t = 0u64;
    loop {
        if t >= budget {
            return Err(Error::StepBudgetExceeded { budget });
        }
        let y = tree.step(x, beta, rng.random::<f64>())?;
        t += 1;
        if visit(tree, t, x, y) {
            return Ok(t);
        }
        x = y;
    }
}

/// `Δ_1..Δ_n` for the walk from `ρ_0`. Panics if a level is reached before
/// the one below it.
pub fn exact_hitting_times<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    beta: f64,
    n: usize,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    check_beta(beta)?;
    let mut hits = Vec::with_capacity(n);
    if n == 0 {
        return Ok(hits);
    }
    let root = tree.backbone_vertex(0)?;
    run_walk(tree, beta, root, budget, rng, |tr, t, _, y| {
        if tr.is_backbone(y) {
            let k = tr.projection(y);
            assert!(k <= hits.len() + 1, "level {k} hit before level {}", hits.len() + 1);
            if k == hits.len() + 1 {
                hits.push(t);
            }
        }
        hits.len() == n
    })?;
    Ok(hits)
}

/// Steps taken inside `ρ_i` and its leaves, starting at `ρ_i`, before the
/// walk first moves to `ρ_{i−1}` or `ρ_{i+1}`.
pub fn exact_exit_time<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    i: usize,
    beta: f64,
    budget: u64,
    rng: &mut R,
) -> Result<u64> {
    check_beta(beta)?;
    let start = tree.backbone_vertex(i)?;
    run_walk(tree, beta, start, budget, rng, |tr, _, _, y| {
        tr.is_backbone(y) && tr.projection(y) != i
    })
}

/// Which of the leaves `big` of `ρ_i` have their entrance (local depth
/// `entrance`) hit by the walk from `ρ_i` before `ρ_{i+1+entrance}`.
pub fn exact_visited_set<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    i: usize,
    big: &[usize],
    entrance: u32,
    beta: f64,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_beta(beta)?;
    let mut targets = HashMap::new();
    for &j in big {
        targets.insert(tree.entrance(i, j, entrance)?, j);
    }
    let escape = i + 1 + entrance as usize;
    let start = tree.backbone_vertex(i)?;
    let mut hit = Vec::new();
    run_walk(tree, beta, start, budget, rng, |tr, _, _, y| {
        if let Some(&j) = targets.get(&y) {
            if !hit.contains(&j) {
                hit.push(j);
            }
        }
        tr.is_backbone(y) && tr.projection(y) == escape
    })?;
    hit.sort_unstable();
    Ok(hit)
}

/// `π(X_t)` at each of the non-decreasing step counts `times`, from `ρ_0`.
pub fn exact_projections<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    beta: f64,
    times: &[u64],
    budget: u64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_beta(beta)?;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("times", "non-decreasing step counts", format!("{times:?}")));
    }
    let mut out = Vec::with_capacity(times.len());
    while out.len() < times.len() && times[out.len()] == 0 {
        out.push(0);
    }
    if out.len() == times.len() {
        return Ok(out);
    }
    let root = tree.backbone_vertex(0)?;
    run_walk(tree, beta, root, budget, rng, |tr, t, _, y| {
        while out.len() < times.len() && times[out.len()] == t {
            out.push(tr.projection(y));
        }
        out.len() == times.len()
    })?;
    Ok(out)
}

/// Time `X` spends below the entrances of the leaves of `ρ_i` of height at
/// least `big_height`, from `ρ_i` until `ρ_{i+1+entrance}` is hit.
pub fn exact_leaf_time<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    i: usize,
    big_height: u32,
    entrance: u32,
    beta: f64,
    budget: u64,
    rng: &mut R,
) -> Result<u64> {
    check_beta(beta)?;
    if entrance > big_height {
        return Err(Error::param("entrance", "at most the big-leaf height", entrance));
    }
    let big: Vec<usize> = tree
        .leaves(i)?
        .iter()
        .enumerate()
        .filter(|(_, l)| l.height >= big_height)
        .map(|(j, _)| j)
        .collect();
    let mut gates = HashMap::new();
    for &j in &big {
        let x = tree.entrance(i, j, entrance)?;
        gates.insert(x, tree.parent(x).expect("entrance below the bud"));
    }
    if gates.is_empty() {
        return Ok(0);
    }
    let escape = i + 1 + entrance as usize;
    let start = tree.backbone_vertex(i)?;
    let mut inside = false;
    let mut time = 0u64;
    run_walk(tree, beta, start, budget, rng, |tr, _, x, y| {
        if let Some(&p) = gates.get(&y) {
            if p == x {
                inside = true;
            }
        }
        if let Some(&p) = gates.get(&x) {
            if p == y {
                inside = false;
            }
        }
        if inside {
            time += 1;
        }
        tr.is_backbone(y) && tr.projection(y) == escape
    })?;
    Ok(time)
}

/// `P(V = A)` for `#B = b_size` and `#A = a_size`.
pub fn visited_set_pmf(b_size: u64, a_size: u64) -> f64 {
    if a_size > b_size {
        return 0.0;
    }
    let mut binom = 1.0f64;
    for k in 0..a_size.min(b_size - a_size) {
        binom = binom * (b_size - k) as f64 / (k + 1) as f64;
    }
    1.0 / ((b_size + 1) as f64 * binom)
}

/// A subset of `0..b_size`: size uniform on `0..=b_size`, then uniform
/// among subsets of that size. Sorted.
pub fn sample_visited_set<R: Rng + ?Sized>(b_size: usize, rng: &mut R) -> Vec<usize> {
    let k = rng.random_range(0..=b_size);
    let mut pool: Vec<usize> = (0..b_size).collect();
    for m in 0..k {
        let r = rng.random_range(m..b_size);
        pool.swap(m, r);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Big leaves at one backbone vertex and which of them are deeply visited.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitedSet {
    pub big: Vec<LeafHeight>,
    /// Indices into `big`.
    pub visited: Vec<usize>,
}

impl VisitedSet {
    pub fn sample<R: Rng + ?Sized>(big: Vec<LeafHeight>, rng: &mut R) -> Self {
        let visited = sample_visited_set(big.len(), rng);
        VisitedSet { big, visited }
    }

    pub fn max_height(&self) -> Option<LeafHeight> {
        self.visited.iter().map(|&j| self.big[j]).max()
    }
}

/// `P(max_{j∈V_i} h ≥ x) = q_x^{α−1} L(q_x)` for `x ≥ h_n`.
pub fn visited_height_tail(law: &OffspringLaw, x: u64, critical_height: f64) -> Result<f64> {
    if x == 0 || (x as f64) < critical_height {
        return Err(Error::param("x", "x >= h_n and x >= 1", x));
    }
    Ok(law.visited_height_tail(x))
}

/// Per backbone vertex, the largest deeply visited big-leaf height, grown lazily.
#[derive(Clone, Debug)]
pub struct VisitedSpine {
    grower: SpineGrower,
    height_clamp: Option<u64>,
    maxima: Vec<Option<LeafHeight>>,
}

impl VisitedSpine {
    pub fn new(grower: SpineGrower) -> Self {
        VisitedSpine {
            grower,
            height_clamp: None,
            maxima: Vec::new(),
        }
    }

    /// Leaf heights replaced by `min(h, clamp)`.
    pub fn with_clamp(mut self, clamp: u64) -> Self {
        self.height_clamp = Some(clamp);
        self
    }

    pub fn grower(&self) -> &SpineGrower {
        &self.grower
    }

    pub fn len(&self) -> usize {
        self.maxima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maxima.is_empty()
    }

    pub fn ensure<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) {
        while self.maxima.len() < len {
            let v = self.grower.next_vertex(rng);
            let mut big = v.big;
            if let Some(c) = self.height_clamp {
                for h in &mut big {
                    h.height = h.height.min(c);
                }
            }
            self.maxima.push(VisitedSet::sample(big, rng).max_height());
        }
    }

    /// `max_{j∈V_i} h(T_ij)`, `None` when no big leaf of `ρ_i` is visited.
    pub fn max_height<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) -> Option<LeafHeight> {
        self.ensure(i + 1, rng);
        self.maxima[i]
    }

    pub fn any_capped(&self) -> bool {
        self.maxima.iter().flatten().any(|h| h.capped)
    }
}

/// `l(u) = min{i : max_{j∈V_i} h ≥ u/ln β}`. With `alpha_normalized` the
/// threshold is `u/((α−1) ln β)`. Fails past `limit` vertices.
pub fn tree_localization_index<R: Rng + ?Sized>(
    spine: &mut VisitedSpine,
    u: f64,
    beta: f64,
    alpha_normalized: bool,
    limit: usize,
    rng: &mut R,
) -> Result<usize> {
    check_beta(beta)?;
    if !(u >= 0.0) {
        return Err(Error::param("u", "u >= 0", u));
    }
    let mut threshold = u / beta.ln();
    if alpha_normalized {
        threshold /= spine.grower.law().alpha() - 1.0;
    }
    for i in 0..limit {
        if let Some(h) = spine.max_height(i, rng) {
            if h.height as f64 >= threshold {
                return Ok(i);
            }
        }
    }
    Err(Error::param("limit", "enough spine vertices to clear the threshold", limit))
}

/// Whether `l(an) = l(bn)` on one spine with `h_n = n/ln n`.
#[allow(clippy::too_many_arguments)]
pub fn tree_aging_indicator<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    n: u64,
    a: f64,
    b: f64,
    alpha_normalized: bool,
    limit: usize,
    rng: &mut R,
) -> Result<bool> {
    check_aging(a, b)?;
    let mut spine = VisitedSpine::new(SpineGrower::for_scale(law.clone(), n as f64)?);
    let nf = n as f64;
    let la = tree_localization_index(&mut spine, a * nf, beta, alpha_normalized, limit, rng)?;
    let lb = tree_localization_index(&mut spine, b * nf, beta, alpha_normalized, limit, rng)?;
    Ok(la == lb)
}

fn check_aging(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b >= a && b.is_finite()) {
        return Err(Error::param("a, b", "0 < a <= b", format!("{a}, {b}")));
    }
    Ok(())
}

/// Which engine produced a [`TreeHittingRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Exact,
    Surrogate,
}

/// `ln Δ_k` for `k = 1..=levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeHittingRecord {
    pub log_hits: Vec<f64>,
    pub engine: Engine,
    /// Some leaf height came from the end of a survival table.
    pub capped: bool,
}

impl TreeHittingRecord {
    pub fn levels(&self) -> usize {
        self.log_hits.len()
    }

    /// `ln Δ_k`, with `ln Δ_0 = −∞`.
    pub fn log_hit(&self, k: usize) -> f64 {
        if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.log_hits[k - 1]
        }
    }

    /// `t ↦ (α−1) ln₊ Δ_{⌊nt⌋}/(n ln β)` on the grid.
    pub fn rescaled_path(&self, alpha: f64, beta: f64, n: u64, grid: &[f64]) -> Result<CadlagStep> {
        check_grid(grid)?;
        let nf = n as f64;
        let need = (nf * grid.last().unwrap()).floor() as usize;
        if need > self.levels() {
            return Err(Error::param("record", "levels up to n·max(grid)", self.levels()));
        }
        let scale = (alpha - 1.0) / (nf * beta.ln());
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| self.log_hit((nf * t).floor() as usize).max(0.0) * scale)
            .collect();
        grid_path(0.0, grid, &values)
    }
}

/// `ln Δ_k = ln β · max_{i<k} max_{j∈V_i} h(T_ij)` (zero before any visit)
/// for `k = 1..=levels`, with `h_n = n/ln n`.
pub fn surrogate_hitting_record<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    n: u64,
    levels: usize,
    rng: &mut R,
) -> Result<TreeHittingRecord> {
    check_beta(beta)?;
    if n < 10 {
        return Err(Error::param("n", "n >= 10", n));
    }
    let mut spine = VisitedSpine::new(SpineGrower::for_scale(law.clone(), n as f64)?);
    spine.ensure(levels, rng);
    let lb = beta.ln();
    let mut running = 0u64;
    let log_hits = spine
        .maxima
        .iter()
        .map(|h| {
            if let Some(h) = h {
                running = running.max(h.height);
            }
            running as f64 * lb
        })
        .collect();
    Ok(TreeHittingRecord {
        log_hits,
        engine: Engine::Surrogate,
        capped: spine.any_capped(),
    })
}

/// The surrogate record and its rescaled path on `grid`.
pub fn surrogate_hitting_path<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    n: u64,
    grid: &[f64],
    rng: &mut R,
) -> Result<(TreeHittingRecord, CadlagStep)> {
    check_grid(grid)?;
    let levels = (n as f64 * grid.last().unwrap()).floor() as usize;
    let record = surrogate_hitting_record(law, beta, n, levels, rng)?;
    let path = record.rescaled_path(law.alpha(), beta, n, grid)?;
    Ok((record, path))
}

/// Exact-engine record of `ln Δ_1..ln Δ_n`.
pub fn exact_hitting_record<R: Rng + ?Sized>(
    tree: &mut SpineTree,
    beta: f64,
    n: usize,
    budget: u64,
    rng: &mut R,
) -> Result<TreeHittingRecord> {
    let hits = exact_hitting_times(tree, beta, n, budget, rng)?;
    Ok(TreeHittingRecord {
        log_hits: hits.iter().map(|&t| (t as f64).ln()).collect(),
        engine: Engine::Exact,
        capped: false,
    })
}

/// `E σ_i` for a freshly drawn backbone vertex, from its leaves' generation
/// profiles. Leaves past the profile cap or the survival table contribute
/// the weight of their deepest path alone and clear `exact`.
pub fn sample_sigma<R: Rng + ?Sized>(law: &OffspringLaw, i: u64, beta: f64, cap: u64, rng: &mut R) -> Sigma {
    let lb = beta.ln();
    let buds = law.sample_size_biased(rng) - 1;
    let q1 = law.survival(1);
    // height-zero leaves each weigh one
    let tall = if buds <= 64 {
        (0..buds).filter(|_| rng.random::<f64>() < q1).count() as u64
    } else {
        Binomial::new(buds, q1).expect("valid binomial").sample(rng)
    };
    let mut w = LogSum::new();
    w.push_log(((buds - tall) as f64).ln());
    let mut exact = true;
    let path_weight = |h: u64, w: &mut LogSum| {
        // Σ_{e≤h} β^e
        w.push_log(((h + 1) as f64 * lb).exp_m1().ln() - (lb.exp_m1()).ln());
    };
    if tall > EXPLICIT_LEAVES {
        exact = false;
        let h = law
            .sample_max_height(tall, rng)
            .map(|h| h.height.max(1))
            .unwrap_or(1);
        path_weight(h, &mut w);
    } else {
        for _ in 0..tall {
            let h = law.sample_height_at_least(1, rng);
            if h.capped {
                exact = false;
                path_weight(h.height, &mut w);
                continue;
            }
            let profile = realize_profile(law, h.height, cap, rng);
            if profile.capped {
                exact = false;
                path_weight(h.height, &mut w);
            } else {
                w.push(profile_weight(&profile.sizes, beta));
            }
        }
    }
    Sigma {
        value: sigma_from_weight(w.total(), i, beta),
        exact,
    }
}

/// `(α−1) ln₊ E_ρ Δ_n / (n α ln β)` on one freshly drawn spine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuenchedStat {
    pub stat: f64,
    pub mean: QuenchedMean,
    /// The statistic used a lower bound for some leaf.
    pub capped: bool,
}

pub fn quenched_mean_rescaled_stat<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    n: u64,
    cap: u64,
    rng: &mut R,
) -> Result<QuenchedStat> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::param("n", "n >= 1", n));
    }
    let sigmas: Vec<Sigma> = (0..n).map(|i| sample_sigma(law, i, beta, cap, rng)).collect();
    let mean = quenched_mean_delta(&sigmas, beta)?;
    let alpha = law.alpha();
    let stat = (alpha - 1.0) * mean.estimate.log().max(0.0) / (n as f64 * alpha * beta.ln());
    Ok(QuenchedStat {
        stat,
        mean,
        capped: mean.exact.is_none(),
    })
}

/// Exact-walk aging at toy scale: `π(X_t)` at `t = ⌊e^{an}⌋, ⌊e^{bn}⌋` on a
/// tree whose leaf heights are clamped at `height_clamp`.
#[allow(clippy::too_many_arguments)]
pub fn toy_exact_aging<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    n: u64,
    a: f64,
    b: f64,
    height_clamp: u64,
    tree_seed: u64,
    rng: &mut R,
) -> Result<bool> {
    check_aging(a, b)?;
    let nf = n as f64;
    let times = [(a * nf).exp().floor() as u64, (b * nf).exp().floor() as u64];
    let mut tree = SpineTree::random(law.clone(), tree_seed, height_clamp, 0, u32::MAX as usize - 1);
    let pos = exact_projections(&mut tree, beta, &times, DEFAULT_STEP_BUDGET, rng)?;
    Ok(pos[0] == pos[1])
}

/// The surrogate counterpart of [`toy_exact_aging`]: leaves count as big
/// once they reach the entrance depth, heights clamped the same way.
#[allow(clippy::too_many_arguments)]
pub fn toy_surrogate_aging<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    n: u64,
    a: f64,
    b: f64,
    height_clamp: u64,
    entrance: u64,
    rng: &mut R,
) -> Result<bool> {
    check_aging(a, b)?;
    let grower = SpineGrower::new(law.clone(), entrance as f64)?;
    let mut spine = VisitedSpine::new(grower).with_clamp(height_clamp);
    let nf = n as f64;
    let limit = 100_000_000;
    let la = tree_localization_index(&mut spine, a * nf, beta, false, limit, rng)?;
    let lb = tree_localization_index(&mut spine, b * nf, beta, false, limit, rng)?;
    Ok(la == lb)
}

/// One draw of the deep time `t_1` at backbone vertex 1 (with `ρ_0` bare
/// and no buds beyond), leaves clamped at `height_clamp`.
#[allow(clippy::too_many_arguments)]
pub fn deep_time_sample<R: Rng + ?Sized>(
    law: &OffspringLaw,
    beta: f64,
    height_clamp: u64,
    big_height: u32,
    entrance: u32,
    tree_seed: u64,
    budget: u64,
    rng: &mut R,
) -> Result<u64> {
    let law2 = law.clone();
    let leaf_cap = u32::MAX as u64 - 1;
    let source = move |i: usize| -> Result<Vec<ExplicitTree>> {
        if i != 1 {
            return Ok(Vec::new());
        }
        let mut r = stream(tree_seed, i as u64, tag::LEAVES);
        let buds = law2.sample_size_biased(&mut r) - 1;
        (0..buds)
            .map(|_| {
                let h = law2.sample_height(&mut r).height.min(height_clamp);
                realize_leaf(&law2, LeafMode::HeightExact(h), leaf_cap, &mut r)
            })
            .collect()
    };
    let mut tree = SpineTree::new(Box::new(source), u32::MAX as usize - 1);
    exact_leaf_time(&mut tree, 1, big_height, entrance, beta, budget, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kestentree::build_spine;
    use crate::limits::chi_square_test;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_leaf(depth: usize) -> ExplicitTree {
        let mut counts = vec![1u32; depth];
        counts.push(0);
        ExplicitTree::from_child_counts(&counts).unwrap()
    }

    fn star(i: usize, leaves: Vec<ExplicitTree>) -> SpineTree {
        let mut all = vec![Vec::new(); i];
        all.push(leaves);
        SpineTree::from_leaves(all)
    }

    fn random_leaves(law: &OffspringLaw, n: usize, max_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<ExplicitTree>> {
        loop {
            let leaves: Vec<Vec<ExplicitTree>> = (0..n)
                .map(|_| {
                    let buds = law.sample_size_biased(rng) - 1;
                    (0..buds)
                        .map(|_| realize_leaf(law, LeafMode::Unconditioned, 1000, rng))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()
                .unwrap_or_default();
            let size: usize = n + 1 + leaves.iter().flatten().map(|t| t.size()).sum::<usize>();
            if leaves.len() == n && size <= max_size {
                return leaves;
            }
        }
    }

    #[test]
    fn bare_backbone_quenched_mean() {
        let sig = vec![
            Sigma {
                value: LogMagnitude::ONE,
                exact: true
            };
            3
        ];
        let q = quenched_mean_delta(&sig, 3.0).unwrap();
        assert!((q.exact.unwrap().value() - 41.0 / 9.0).abs() < 1e-12);
        assert!((q.lower.value() - 3.0).abs() < 1e-12);
        assert!((q.upper.value() - 6.0).abs() < 1e-12);
        let dense = dense_hitting_mean(&vec![Vec::new(); 3], 3.0).unwrap();
        assert!((dense - 41.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn bare_backbone_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tree = SpineTree::bare();
        let reps = 100_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            let h = exact_hitting_times(&mut tree, 3.0, 3, 1_000_000, &mut rng).unwrap();
            assert!(h.windows(2).all(|w| w[0] < w[1]));
            sum += h[2] as f64;
        }
        let mean = sum / reps as f64;
        assert!((mean - 41.0 / 9.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn sigma_closed_values() {
        assert_eq!(quenched_mean_sigma(&[], 4, 2.0).unwrap(), LogMagnitude::ONE);
        let s = quenched_mean_sigma(&[ExplicitTree::root_only()], 5, 2.0).unwrap();
        assert!((s.value() - 7.0 / 3.0).abs() < 1e-12);
        let s0 = quenched_mean_sigma(&[ExplicitTree::root_only()], 0, 2.0).unwrap();
        assert!((s0.value() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn conductance_sums_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let law = OffspringLaw::geometric();
        for _ in 0..50 {
            let t = realize_leaf(&law, LeafMode::HeightExact(6), 10_000, &mut rng).unwrap();
            let view = ConductanceView::new(&t, 1.7, 3).unwrap();
            for v in 0..t.size() {
                let mut parts = LogSum::new();
                parts.push_log(view.log_edge(&t, v));
                for c in t.children(v) {
                    parts.push(view.subtree(c));
                }
                assert!((parts.total().log() - view.subtree(v).log()).abs() < 1e-12);
            }
            let profile = profile_weight(&t.generation_sizes(), 1.7);
            assert!((profile.log() - view.relative_total().log()).abs() < 1e-12);
        }
    }

    #[test]
    fn exit_time_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let leaves = vec![path_leaf(2), ExplicitTree::from_child_counts(&[2, 1, 0, 0]).unwrap(), ExplicitTree::root_only()];
        for i in [0usize, 2] {
            let beta = 1.5;
            let mut tree = star(i, leaves.clone());
            let reps = 100_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..reps {
                let t = exact_exit_time(&mut tree, i, beta, 1_000_000, &mut rng).unwrap() as f64;
                s += t;
                s2 += t * t;
            }
            let mean = s / reps as f64;
            let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
            let sigma = quenched_mean_sigma(&leaves, i as u64, beta).unwrap().value();
            assert!((mean - sigma).abs() < 3.0 * se, "i {i}: {mean} vs {sigma} (se {se})");
        }
    }

    #[test]
    fn bud_before_escape() {
        let beta: f64 = 2.0;
        let d = 30;
        let s: f64 = (0..d).map(|k| beta.powi(-k)).sum();
        let p = s / (1.0 + s);
        assert!((p - 2.0 / 3.0).abs() < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tree = star(2, vec![ExplicitTree::root_only()]);
        let bud = tree.entrance(2, 0, 0).unwrap();
        let escape = tree.backbone_vertex(2 + d as usize).unwrap();
        let start = tree.backbone_vertex(2).unwrap();
        let reps = 100_000;
        let mut first = 0u64;
        for _ in 0..reps {
            let mut hit_bud = false;
            run_walk(&mut tree, beta, start, 1_000_000, &mut rng, |_, _, _, y| {
                if y == bud {
                    hit_bud = true;
                }
                hit_bud || y == escape
            })
            .unwrap();
            first += hit_bud as u64;
        }
        let emp = first as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((emp - p).abs() < 3.0 * se, "{emp} vs {p}");
    }

    #[test]
    fn visited_pmf_sums_to_one() {
        for b in 0..=10u64 {
            let total: f64 = (0u32..(1 << b)).map(|mask| visited_set_pmf(b, mask.count_ones() as u64)).sum();
            assert!((total - 1.0).abs() < 1e-12, "b {b}: {total}");
        }
        assert!((visited_set_pmf(2, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(visited_set_pmf(2, 3), 0.0);
    }

    fn subset_index(set: &[usize]) -> usize {
        set.iter().map(|&j| 1 << j).sum()
    }

    #[test]
    fn visited_sampler_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_visited_set(0, &mut rng).is_empty());
        for b in 1..=4usize {
            let mut counts = vec![0u64; 1 << b];
            for _ in 0..100_000 {
                counts[subset_index(&sample_visited_set(b, &mut rng))] += 1;
            }
            let probs: Vec<f64> = (0..1u32 << b)
                .map(|m| visited_set_pmf(b as u64, m.count_ones() as u64))
                .collect();
            let r = chi_square_test(&counts, &probs, 0.01).unwrap();
            assert!(r.passes(), "b {b}: {r:?}");
        }
    }

    #[test]
    fn walk_visits_match_vlem() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for b in 1..=3usize {
            let leaves: Vec<ExplicitTree> = (0..b).map(|j| path_leaf(1 + j)).collect();
            let mut tree = star(1, leaves);
            let big: Vec<usize> = (0..b).collect();
            let mut counts = vec![0u64; 1 << b];
            for _ in 0..100_000 {
                let v = exact_visited_set(&mut tree, 1, &big, 1, 1.5, 1_000_000, &mut rng).unwrap();
                counts[subset_index(&v)] += 1;
            }
            let probs: Vec<f64> = (0..1u32 << b)
                .map(|m| visited_set_pmf(b as u64, m.count_ones() as u64))
                .collect();
            let r = chi_square_test(&counts, &probs, 0.01).unwrap();
            assert!(r.passes(), "b {b}: {r:?}");
        }
    }

    #[test]
    fn geometric_visited_tail() {
        let law = OffspringLaw::geometric();
        for x in 1..200u64 {
            let p = visited_height_tail(&law, x, 1.0).unwrap();
            assert!((p - 1.0 / (x as f64 + 2.0)).abs() < 1e-12, "x {x}");
        }
        assert!(visited_height_tail(&law, 0, 0.0).is_err());
        assert!(visited_height_tail(&law, 4, 5.0).is_err());
    }

    #[test]
    fn visited_tail_monte_carlo() {
        let law = OffspringLaw::geometric();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut spine = VisitedSpine::new(SpineGrower::new(law, 5.0).unwrap());
        let m = 200_000;
        spine.ensure(m, &mut rng);
        for x in 5..=20u64 {
            let count = spine.maxima.iter().flatten().filter(|h| h.height >= x).count();
            let p = 1.0 / (x as f64 + 2.0);
            let emp = count as f64 / m as f64;
            let se = (p * (1.0 - p) / m as f64).sqrt();
            assert!((emp - p).abs() < 3.0 * se, "x {x}: {emp} vs {p}");
        }
    }

    #[test]
    fn dense_matches_recursion() {
        let law = OffspringLaw::geometric();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let n = rng.random_range(2..8);
            let beta = rng.random_range(1.2..4.0);
            let leaves = random_leaves(&law, n, 50, &mut rng);
            let rec = quenched_mean_from_leaves(&leaves, beta).unwrap();
            let dense = dense_hitting_mean(&leaves, beta).unwrap();
            let exact = rec.exact.unwrap().value();
            assert!(((exact - dense) / dense).abs() < 1e-9, "{exact} vs {dense}");
        }
    }

    #[test]
    fn walk_matches_quenched_mean() {
        let law = OffspringLaw::geometric();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let leaves = random_leaves(&law, 4, 30, &mut rng);
        let beta = 2.0;
        let exact = quenched_mean_from_leaves(&leaves, beta).unwrap().exact.unwrap().value();
        let mut tree = SpineTree::from_leaves(leaves);
        let reps = 50_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            let t = *exact_hitting_times(&mut tree, beta, 4, 10_000_000, &mut rng).unwrap().last().unwrap() as f64;
            s += t;
            s2 += t * t;
        }
        let mean = s / reps as f64;
        let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact}");
    }

    #[test]
    fn lazy_growth_is_order_free() {
        let law = OffspringLaw::geometric();
        let mut a = SpineTree::random(law.clone(), 11, 8, 0, 1 << 24);
        let mut b = SpineTree::random(law, 11, 8, 0, 1 << 24);
        a.ensure_backbone(20).unwrap();
        for i in (0..20).step_by(3) {
            b.ensure_backbone(i).unwrap();
        }
        b.ensure_backbone(20).unwrap();
        assert_eq!(a.parent, b.parent);
        assert_eq!(a.spine, b.spine);
        for i in 0..20 {
            assert_eq!(a.leaves(i).unwrap().to_vec(), b.leaves(i).unwrap().to_vec());
        }
        // every child's parent points back
        for v in 0..a.size() {
            if a.child_count[v] == UNEXPANDED {
                continue;
            }
            for c in a.children(v) {
                assert_eq!(a.parent(c), Some(v));
                assert_eq!(a.depth(c), a.depth(v) + 1);
            }
        }
    }

    #[test]
    fn surrogate_and_localization_basics() {
        let law = OffspringLaw::geometric();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let grid = [0.25, 0.5, 1.0, 2.0];
        for _ in 0..20 {
            let (rec, path) = surrogate_hitting_path(&law, 2.0, 200, &grid, &mut rng).unwrap();
            assert_eq!(rec.engine, Engine::Surrogate);
            assert!(rec.log_hits.windows(2).all(|w| w[0] <= w[1]));
            assert!(path.is_non_decreasing());
        }
        for _ in 0..20 {
            let mut spine = VisitedSpine::new(SpineGrower::for_scale(law.clone(), 100.0).unwrap());
            let mut last = 0;
            for u in [0.0, 10.0, 50.0, 100.0, 200.0] {
                let l = tree_localization_index(&mut spine, u, 2.0, false, 1 << 20, &mut rng).unwrap();
                assert!(l >= last);
                last = l;
            }
            let first = spine.maxima.iter().position(|h| h.is_some()).unwrap();
            assert_eq!(tree_localization_index(&mut spine, 0.0, 2.0, false, 1 << 20, &mut rng).unwrap(), first);
            assert!(tree_aging_indicator(&law, 2.0, 100, 1.5, 1.5, false, 1 << 20, &mut rng).unwrap());
        }
        assert!(surrogate_hitting_record(&law, 2.0, 5, 10, &mut rng).is_err());
        assert!(tree_aging_indicator(&law, 2.0, 100, 2.0, 1.0, false, 1 << 20, &mut rng).is_err());
    }

    #[test]
    fn quenched_stat_scaling() {
        // the statistic is linear in 1/n for a fixed quenched mean
        let law = OffspringLaw::geometric();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = quenched_mean_rescaled_stat(&law, 2.0, 50, DEFAULT_PROFILE_CAP, &mut rng).unwrap();
        let twice = (law.alpha() - 1.0) * q.mean.estimate.log() / (100.0 * law.alpha() * 2f64.ln());
        assert!((q.stat / 2.0 - twice).abs() < 1e-12);
        assert!(q.mean.lower <= q.mean.estimate);
        let sp = build_spine(&law, 10, 100.0, &mut rng).unwrap();
        assert_eq!(sp.len(), 10);
    }

    #[test]
    fn projections_follow_the_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let law = OffspringLaw::geometric();
        let mut tree = SpineTree::random(law, 3, 10, 0, 1 << 24);
        let p = exact_projections(&mut tree, 1.3, &[0, 10, 100, 1000], 1 << 30, &mut rng).unwrap();
        assert_eq!(p[0], 0);
        assert!(p.iter().all(|&k| k <= 1000));
        assert!(exact_projections(&mut tree, 1.3, &[5, 2], 100, &mut rng).is_err());
    }

    #[test]
    fn deep_time_counts_only_deep_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        // one bud of depth 0: nothing below an entrance at depth 1
        let mut tree = star(1, vec![ExplicitTree::root_only(), path_leaf(3)]);
        let mut total = 0;
        for _ in 0..1000 {
            total += exact_leaf_time(&mut tree, 1, 2, 1, 1.3, 1 << 30, &mut rng).unwrap();
        }
        assert!(total > 0);
        let mut bare = star(1, vec![path_leaf(1)]);
        assert_eq!(exact_leaf_time(&mut bare, 1, 2, 1, 1.3, 1 << 30, &mut rng).unwrap(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn sandwich_holds(seed in 0u64..1_000_000, beta in 1.05f64..5.0, n in 1usize..12) {
            let law = OffspringLaw::geometric();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let leaves = random_leaves(&law, n, 5000, &mut rng);
            let q = quenched_mean_from_leaves(&leaves, beta).unwrap();
            let e = q.exact.unwrap();
            prop_assert!(q.lower.log() <= e.log() + 1e-12);
            prop_assert!(e.log() <= q.upper.log() + 1e-12);
        }

        #[test]
        fn sampled_sandwich_holds(seed in 0u64..1_000_000, n in 1u64..40) {
            let law = OffspringLaw::geometric();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = quenched_mean_rescaled_stat(&law, 1.5, n, DEFAULT_PROFILE_CAP, &mut rng).unwrap();
            let e = q.mean.exact.unwrap();
            prop_assert!(q.mean.lower.log() <= e.log() + 1e-12);
            prop_assert!(e.log() <= q.mean.upper.log() + 1e-12);
        }
    }
}
