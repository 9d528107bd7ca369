//! The directed trap model on Z: a walk stepping right with probability
//! `β/(β+1)` that holds at site `x` for `τ_x` times a unit exponential.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::error::{Error, Result};
use crate::logmag::{LogMagnitude, LogSum};
use crate::limits::{grid_path, CadlagStep, check_grid};
use crate::seed::{derive_seed, tag, unit_from_bits};
use crate::svt::TailFunction;

/// Default bound on embedded steps per run.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

const CHUNK: usize = 1024;

/// Trap depths on a window of sites, keyed by `(seed, site)` so that
/// extending the window in either direction never changes existing sites.
#[derive(Clone, Debug)]
pub struct TrapEnvironment {
    tail: TailFunction,
    seed: u64,
    lo: i64,
    log_tau: Vec<f64>,
}

#[inline]
fn zigzag(x: i64) -> u64 {
    ((x << 1) ^ (x >> 63)) as u64
}

impl TrapEnvironment {
    /// Covers `[−left, right]`.
    pub fn generate(tail: TailFunction, left: u64, right: u64, seed: u64) -> Result<Self> {
        if right < 1 {
            return Err(Error::param("right", "right ≥ 1", right));
        }
        let lo = -(left as i64);
        let mut env = TrapEnvironment {
            tail,
            seed,
            lo,
            log_tau: Vec::new(),
        };
        env.log_tau = (lo..=right as i64).map(|x| env.site_log_tau(x)).collect();
        Ok(env)
    }

    #[inline]
    fn site_log_tau(&self, x: i64) -> f64 {
        let u = unit_from_bits(derive_seed(self.seed, zigzag(x), tag::ENVIRONMENT));
        self.tail.from_uniform(u).log()
    }

    pub fn tail(&self) -> &TailFunction {
        &self.tail
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Current window `[lo, hi]`.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.lo + self.log_tau.len() as i64 - 1)
    }

    /// `ln τ_x` if `x` is inside the window.
    pub fn get(&self, x: i64) -> Option<f64> {
        let i = x - self.lo;
        if i >= 0 {
            self.log_tau.get(i as usize).copied()
        } else {
            None
        }
    }

    /// `ln τ_x`, extending the window when needed.
    #[inline]
    pub fn log_tau(&mut self, x: i64) -> f64 {
        let i = x - self.lo;
        if i >= 0 && (i as usize) < self.log_tau.len() {
            return self.log_tau[i as usize];
        }
        self.ensure(x);
        self.log_tau[(x - self.lo) as usize]
    }

    pub fn tau(&mut self, x: i64) -> LogMagnitude {
        LogMagnitude::from_log(self.log_tau(x))
    }

    /// Grows the window to contain `x`.
    pub fn ensure(&mut self, x: i64) {
        let (lo, hi) = self.window();
        if x > hi {
            let grow = ((x - hi) as usize).max(CHUNK).max(self.log_tau.len() / 2);
            let start = hi + 1;
            for y in start..start + grow as i64 {
                let v = self.site_log_tau(y);
                self.log_tau.push(v);
            }
        } else if x < lo {
            let grow = ((lo - x) as usize).max(CHUNK).max(self.log_tau.len() / 2);
            let new_lo = lo - grow as i64;
            let mut fresh: Vec<f64> = (new_lo..lo).map(|y| self.site_log_tau(y)).collect();
            fresh.extend_from_slice(&self.log_tau);
            self.log_tau = fresh;
            self.lo = new_lo;
        }
    }
}

/// Occupation of one site during a run.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteOccupation {
    pub site: i64,
    pub visits: u64,
    pub time: LogMagnitude,
}

#[derive(Clone, Debug)]
pub struct WalkOptions {
    pub step_budget: u64,
    /// Also accumulate the clock over sites with `ln τ ≤` this value.
    pub shallow_log_threshold: Option<f64>,
    pub watch_sites: Vec<i64>,
    pub store_trajectory: bool,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            step_budget: DEFAULT_STEP_BUDGET,
            shallow_log_threshold: None,
            watch_sites: Vec::new(),
            store_trajectory: false,
        }
    }
}

/// Summary of a run from 0 to the first hit of level `n`.
#[derive(Clone, Debug)]
pub struct WalkRecord {
    pub beta: f64,
    pub final_site: i64,
    pub steps: u64,
    /// `ln Δ_k` for `k = 1..n`.
    pub log_hits: Vec<f64>,
    /// `max_{i<j} (Y_i − Y_j)`.
    pub backtrack: u64,
    /// Clock time spent at shallow sites with the threshold used.
    pub shallow: Option<(f64, LogMagnitude)>,
    pub watch: Vec<SiteOccupation>,
    /// Per step: site and `ln(τ e)`.
    pub trajectory: Option<Vec<(i64, f64)>>,
}

impl WalkRecord {
    pub fn level(&self) -> u64 {
        self.log_hits.len() as u64
    }

    /// `Δ_k`, with `Δ_0 = 0`.
    pub fn hit(&self, k: u64) -> LogMagnitude {
        if k == 0 {
            LogMagnitude::ZERO
        } else {
            LogMagnitude::from_log(self.log_hits[k as usize - 1])
        }
    }
}

fn check_beta(beta: f64) -> Result<f64> {
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::param("beta", "β > 1", beta));
    }
    Ok(beta / (beta + 1.0))
}

/// Runs the embedded walk from 0 until it first reaches `n`, accumulating
/// the clock `S = Σ τ_{Y_i} e_i` in the log domain.
pub fn run_to_level<R: Rng + ?Sized>(
    env: &mut TrapEnvironment,
    beta: f64,
    n: u64,
    opts: &WalkOptions,
    rng: &mut R,
) -> Result<WalkRecord> {
    let p_right = check_beta(beta)?;
    if n < 1 {
        return Err(Error::param("n", "n ≥ 1", n));
    }
    env.ensure(n as i64);
    let mut clock = LogSum::new();
    let mut shallow = LogSum::new();
    let mut watch: Vec<(SiteOccupation, LogSum)> = opts
        .watch_sites
        .iter()
        .map(|&site| {
            (
                SiteOccupation {
                    site,
                    visits: 0,
                    time: LogMagnitude::ZERO,
                },
                LogSum::new(),
            )
        })
        .collect();
    let mut trajectory = opts.store_trajectory.then(Vec::new);
    let mut log_hits = Vec::with_capacity(n as usize);
    let (mut x, mut run_max, mut backtrack) = (0i64, 0i64, 0u64);
    let mut steps = 0u64;
    while x < n as i64 {
        if steps >= opts.step_budget {
            return Err(Error::StepBudgetExceeded {
                budget: opts.step_budget,
            });
        }
        let lt = env.log_tau(x);
        let e: f64 = Exp1.sample(rng);
        let term = lt + e.ln();
        clock.push_log(term);
        if let Some(th) = opts.shallow_log_threshold {
            if lt <= th {
                shallow.push_log(term);
            }
        }
        for (occ, sum) in watch.iter_mut() {
            if occ.site == x {
                occ.visits += 1;
                sum.push_log(term);
            }
        }
        if let Some(t) = trajectory.as_mut() {
            t.push((x, term));
        }
        steps += 1;
        if rng.random::<f64>() < p_right {
            x += 1;
            if x > run_max {
                run_max = x;
                log_hits.push(clock.total().log());
            }
        } else {
            x -= 1;
            backtrack = backtrack.max((run_max - x) as u64);
        }
    }
    Ok(WalkRecord {
        beta,
        final_site: x,
        steps,
        log_hits,
        backtrack,
        shallow: opts.shallow_log_threshold.map(|th| (th, shallow.total())),
        watch: watch
            .into_iter()
            .map(|(mut occ, sum)| {
                occ.time = sum.total();
                occ
            })
            .collect(),
        trajectory,
    })
}

/// `t ↦ (1/n) L(Δ_{⌊nt⌋})` on `grid`, with `L = 1/F̄` of `tail`.
pub fn rescaled_hitting_path(record: &WalkRecord, tail: &TailFunction, n: u64, grid: &[f64]) -> Result<CadlagStep> {
    check_grid(grid)?;
    let nf = n as f64;
    let need = (nf * grid.last().unwrap()).floor() as u64;
    if record.level() < need {
        return Err(Error::param("record", "a run reaching n·max(grid)", record.level()));
    }
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| tail.l_mag(record.hit((nf * t).floor() as u64)) / nf)
        .collect();
    grid_path(tail.l_mag(LogMagnitude::ZERO) / nf, grid, &values)
}

/// The site occupied when the clock first exceeds each of `targets`
/// (non-decreasing). A target of zero gives the starting site.
pub fn position_at_timescale<R: Rng + ?Sized>(
    env: &mut TrapEnvironment,
    beta: f64,
    targets: &[LogMagnitude],
    step_budget: u64,
    rng: &mut R,
) -> Result<Vec<i64>> {
    let p_right = check_beta(beta)?;
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("targets", "non-decreasing clock values", format!("{targets:?}")));
    }
    let mut out = Vec::with_capacity(targets.len());
    let mut next = 0;
    let mut clock = LogSum::new();
    let mut max_term = f64::NEG_INFINITY;
    let (mut x, mut steps) = (0i64, 0u64);
    while next < targets.len() {
        if steps >= step_budget {
            return Err(Error::StepBudgetExceeded { budget: step_budget });
        }
        let e: f64 = Exp1.sample(rng);
        let term = env.log_tau(x) + e.ln();
        clock.push_log(term);
        max_term = max_term.max(term);
        steps += 1;
        // the clock is at most max_term + ln(steps); skip the exact total
        // while that bound is below the next target
        let target = targets[next].log();
        if max_term + (steps as f64).ln() >= target {
            let now = clock.total().log();
            while next < targets.len() && targets[next].log() < now {
                out.push(x);
                next += 1;
            }
        }
        if rng.random::<f64>() < p_right {
            x += 1;
        } else {
            x -= 1;
        }
    }
    Ok(out)
}

/// `l(u) = min{x ≥ 0 : τ_x ≥ F̄⁻¹(1/u)}`, searching at most `max_site` sites.
pub fn localization_site(env: &mut TrapEnvironment, u: f64, tail: &TailFunction, max_site: u64) -> Result<i64> {
    if !(u >= 1.0) {
        return Err(Error::param("u", "u ≥ 1", u));
    }
    let level = tail.inverse(1.0 / u)?.log();
    for x in 0..=max_site as i64 {
        if env.log_tau(x) >= level {
            return Ok(x);
        }
    }
    Err(Error::StepBudgetExceeded { budget: max_site })
}

/// Clock values `F̄⁻¹(1/(n s))` for the scales `s`.
pub fn aging_clock_values(tail: &TailFunction, n: u64, scales: &[f64]) -> Result<Vec<LogMagnitude>> {
    scales
        .iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(Error::param("scale", "positive", s));
            }
            tail.inverse((1.0 / (n as f64 * s)).min(1.0))
        })
        .collect()
}

/// Whether the walk occupies the same site at clock values `F̄⁻¹(1/(na))`
/// and `F̄⁻¹(1/(nb))`.
#[allow(clippy::too_many_arguments)]
pub fn aging_indicator<R: Rng + ?Sized>(
    env: &mut TrapEnvironment,
    beta: f64,
    n: u64,
    a: f64,
    b: f64,
    tail: &TailFunction,
    step_budget: u64,
    rng: &mut R,
) -> Result<bool> {
    if !(a > 0.0 && a <= b) {
        return Err(Error::param("a", "0 < a ≤ b", format!("a = {a}, b = {b}")));
    }
    let targets = aging_clock_values(tail, n, &[a, b])?;
    let sites = position_at_timescale(env, beta, &targets, step_budget, rng)?;
    Ok(sites[0] == sites[1])
}

/// Indicators of the good environment and trajectory events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiagnosticFlags {
    /// Deep traps in `[1, nT]` are more than `n^κ` apart.
    pub separated: bool,
    /// No deep trap in `[−(ln n)^{1+γ′}, 0]`.
    pub clear_left: bool,
    /// The walk never backtracks `(ln n)^{1+γ′}` or more.
    pub shallow_backtrack: bool,
    /// Time in traps at most `g(n)` deep is below `F̄⁻¹((ln n)^{1/2}/n)`.
    pub shallow_time: bool,
}

impl DiagnosticFlags {
    pub fn all(&self) -> bool {
        self.separated && self.clear_left && self.shallow_backtrack && self.shallow_time
    }
}

/// `ln g(n)` with `g(n) = F̄⁻¹(ln n/n)`.
pub fn deep_log_threshold(tail: &TailFunction, n: u64) -> Result<f64> {
    Ok(tail.critical_depth(n as f64)?.log())
}

/// Evaluates the events for a run to level `⌊nT⌋` made with
/// `shallow_log_threshold = ln g(n)`.
pub fn diagnostics(
    env: &mut TrapEnvironment,
    record: &WalkRecord,
    n: u64,
    t: f64,
    kappa: f64,
    gamma_p: f64,
) -> Result<DiagnosticFlags> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::param("kappa", "0 < κ < 1", kappa));
    }
    if !(gamma_p > 0.0 && gamma_p < 1.0) {
        return Err(Error::param("gamma'", "0 < γ′ < 1", gamma_p));
    }
    let deep = deep_log_threshold(env.tail(), n)?;
    let reach = (n as f64 * t).floor() as u64;
    if record.level() < reach {
        return Err(Error::param("record", "a run reaching nT", record.level()));
    }
    let shallow_time = match record.shallow {
        Some((th, time)) if th == deep => time,
        _ => {
            return Err(Error::param(
                "record",
                "a run made with the deep-trap threshold as shallow threshold",
                "other threshold",
            ))
        }
    };
    let nf = n as f64;
    let gap = nf.powf(kappa);
    let left = nf.ln().powf(1.0 + gamma_p);
    let mut last: Option<i64> = None;
    let mut separated = true;
    for x in 1..=reach as i64 {
        if env.log_tau(x) > deep {
            if let Some(y) = last {
                if ((x - y) as f64) <= gap {
                    separated = false;
                    break;
                }
            }
            last = Some(x);
        }
    }
    let clear_left = (-(left.floor() as i64)..=0).all(|x| env.log_tau(x) <= deep);
    let shallow_backtrack = (record.backtrack as f64) < left;
    let bound = env.tail().inverse((nf.ln().sqrt() / nf).min(1.0))?;
    Ok(DiagnosticFlags {
        separated,
        clear_left,
        shallow_backtrack,
        shallow_time: shallow_time < bound,
    })
}

/// Probability that among `sites` independent sites, each deep with
/// probability `p`, no two deep sites are within distance `d`.
pub fn separation_probability(p: f64, sites: u64, d: u64) -> f64 {
    // state r: distance from the last deep site to the next site, capped at d + 1
    let free = d as usize + 1;
    let mut prob = vec![0.0; free + 1];
    prob[free] = 1.0;
    let mut next = vec![0.0; free + 1];
    for _ in 0..sites {
        next.iter_mut().for_each(|v| *v = 0.0);
        for r in 1..=free {
            let w = prob[r];
            if w == 0.0 {
                continue;
            }
            next[(r + 1).min(free)] += w * (1.0 - p);
            if r == free {
                next[1] += w * p;
            }
        }
        std::mem::swap(&mut prob, &mut next);
    }
    prob.iter().sum()
}

/// Total time at a site of depth `τ` before the walk escapes to the right:
/// `τ·Σ_{i≤G} e_i` with `G` geometric with success `(β−1)/(β+1)` on `{1, 2, ..}`.
pub fn sample_occupation<R: Rng + ?Sized>(tau: LogMagnitude, beta: f64, rng: &mut R) -> Result<LogMagnitude> {
    check_beta(beta)?;
    let p = (beta - 1.0) / (beta + 1.0);
    let u: f64 = 1.0 - rng.random::<f64>();
    let g = 1.0 + (u.ln() / (-p).ln_1p()).floor();
    let total = Gamma::new(g, 1.0).expect("positive shape").sample(rng);
    Ok(tau.shift(total.ln()))
}

/// The embedded walk's first `steps` positions when every step is decided
/// by the given uniforms; larger `β` gives a pointwise larger path.
pub fn embedded_path(beta: f64, uniforms: &[f64]) -> Result<Vec<i64>> {
    let p_right = check_beta(beta)?;
    let mut x = 0i64;
    Ok(uniforms
        .iter()
        .map(|&u| {
            x += if u < p_right { 1 } else { -1 };
            x
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{chi_square_test, ks_two_sample};
    use crate::svt::TailTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lp1() -> TailFunction {
        TailFunction::log_power(1.0).unwrap()
    }

    fn unit_tail() -> TailFunction {
        TailFunction::table(TailTable::from_rows(&[(1.0, 0.0)]).unwrap())
    }

    #[test]
    fn environment_is_reproducible() {
        let a = TrapEnvironment::generate(lp1(), 5, 100, 9).unwrap();
        let b = TrapEnvironment::generate(lp1(), 5, 100, 9).unwrap();
        assert_eq!(a.log_tau, b.log_tau);
        assert_eq!(a.window(), (-5, 100));
        let c = TrapEnvironment::generate(lp1(), 0, 10, 9).unwrap();
        assert_eq!(c.window().0, 0);
        assert!(TrapEnvironment::generate(lp1(), 0, 0, 9).is_err());
    }

    #[test]
    fn extension_keeps_existing_sites() {
        let mut a = TrapEnvironment::generate(lp1(), 0, 10, 4).unwrap();
        let before: Vec<f64> = (0..=10).map(|x| a.get(x).unwrap()).collect();
        a.ensure(-3000);
        a.ensure(5000);
        let after: Vec<f64> = (0..=10).map(|x| a.get(x).unwrap()).collect();
        assert_eq!(before, after);
        let b = TrapEnvironment::generate(lp1(), 3000, 5000, 4).unwrap();
        for x in [-3000i64, -17, 0, 4999] {
            assert_eq!(a.get(x), b.get(x));
        }
    }

    #[test]
    fn deep_site_frequency() {
        let n = 10_000u64;
        let env = TrapEnvironment::generate(lp1(), 0, 999_999, 21).unwrap();
        let deep = deep_log_threshold(env.tail(), n).unwrap();
        let count = env.log_tau.iter().filter(|&&l| l > deep).count() as f64;
        let p = (n as f64).ln() / n as f64;
        let m = 1e6;
        assert!((count - m * p).abs() < 3.0 * (m * p * (1.0 - p)).sqrt(), "{count}");
    }

    #[test]
    fn unit_traps_give_wald_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reps = 10_000;
        let mut sum = 0.0;
        for r in 0..reps {
            let mut env = TrapEnvironment::generate(unit_tail(), 0, 100, r).unwrap();
            let rec = run_to_level(&mut env, 3.0, 100, &WalkOptions::default(), &mut rng).unwrap();
            assert!(rec.log_hits.windows(2).all(|w| w[1] >= w[0]));
            assert!(rec.steps >= 100);
            sum += rec.hit(100).value();
        }
        let mean = sum / reps as f64;
        assert!((mean - 200.0).abs() < 3.0, "{mean}");
    }

    #[test]
    fn visits_are_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = 10_000;
        let mut counts = vec![0u64; 8];
        let mut direct = Vec::with_capacity(reps);
        let mut sampled = Vec::with_capacity(reps);
        let opts = WalkOptions {
            watch_sites: vec![10],
            ..WalkOptions::default()
        };
        for r in 0..reps {
            let mut env = TrapEnvironment::generate(lp1(), 0, 100, r as u64).unwrap();
            let rec = run_to_level(&mut env, 3.0, 100, &opts, &mut rng).unwrap();
            let occ = &rec.watch[0];
            counts[(occ.visits as usize - 1).min(7)] += 1;
            let tau = env.tau(10);
            direct.push(occ.time.log() - tau.log());
            sampled.push(sample_occupation(LogMagnitude::ONE, 3.0, &mut rng).unwrap().log());
        }
        let mut probs: Vec<f64> = (1..8).map(|k| 0.5f64.powi(k)).collect();
        probs.push(0.5f64.powi(7));
        assert!(chi_square_test(&counts, &probs, 0.01).unwrap().passes());
        assert!(ks_two_sample(&direct, &sampled, 0.01).unwrap().passes(0.0));
    }

    #[test]
    fn trajectory_resums_to_clock() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut env = TrapEnvironment::generate(lp1(), 0, 500, 3).unwrap();
        let opts = WalkOptions {
            store_trajectory: true,
            ..WalkOptions::default()
        };
        let rec = run_to_level(&mut env, 2.0, 500, &opts, &mut rng).unwrap();
        let traj = rec.trajectory.as_ref().unwrap();
        assert_eq!(traj.len() as u64, rec.steps);
        let mut acc = LogSum::new();
        for &(x, term) in traj {
            assert!(term - env.log_tau(x) < 50.0);
            acc.push_log(term);
        }
        let total = rec.hit(500).log();
        assert!((acc.total().log() - total).abs() < 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn embedded_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 1_000_000;
        let us: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let path = embedded_path(3.0, &us).unwrap();
        let v = 0.5;
        // steps are ±1 with mean v, variance 1 − v²
        let se = ((1.0 - v * v) / k as f64).sqrt();
        assert!((path[k - 1] as f64 / k as f64 - v).abs() < 3.0 * se);
    }

    #[test]
    fn monotone_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let us: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let lo = embedded_path(1.5, &us).unwrap();
        let hi = embedded_path(2.5, &us).unwrap();
        assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
    }

    #[test]
    fn positions_for_equal_and_zero_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut env = TrapEnvironment::generate(lp1(), 0, 100, 6).unwrap();
        let t = LogMagnitude::from_log(50.0);
        let sites = position_at_timescale(&mut env, 3.0, &[LogMagnitude::ZERO, t, t], DEFAULT_STEP_BUDGET, &mut rng).unwrap();
        assert_eq!(sites[0], 0);
        assert_eq!(sites[1], sites[2]);
        assert!(position_at_timescale(&mut env, 3.0, &[t, LogMagnitude::ZERO], 10, &mut rng).is_err());
    }

    #[test]
    fn localization_monotone() {
        let tail = lp1();
        let mut env = TrapEnvironment::generate(tail.clone(), 0, 100, 8).unwrap();
        let mut prev = 0;
        for u in [1.0, 10.0, 100.0, 1000.0, 10_000.0] {
            let l = localization_site(&mut env, u, &tail, 1 << 30).unwrap();
            assert!(l >= prev);
            prev = l;
        }
        // the deepest of the first 50 sites sitting at 0
        let mut env = TrapEnvironment::generate(tail.clone(), 0, 50, 8).unwrap();
        let best = (0..=50).map(|x| env.log_tau(x)).fold(f64::MIN, f64::max);
        env.log_tau[0] = best;
        let u = 1.0 / tail.eval_log(best);
        assert_eq!(localization_site(&mut env, u, &tail, 1 << 30).unwrap(), 0);
    }

    #[test]
    fn aging_with_equal_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for s in 0..20 {
            let mut env = TrapEnvironment::generate(lp1(), 0, 100, s).unwrap();
            assert!(aging_indicator(&mut env, 3.0, 100, 2.0, 2.0, &lp1(), DEFAULT_STEP_BUDGET, &mut rng).unwrap());
        }
    }

    #[test]
    fn rejects_bad_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = TrapEnvironment::generate(lp1(), 0, 10, 0).unwrap();
        let err = run_to_level(&mut env, 1.0, 5, &WalkOptions::default(), &mut rng).unwrap_err();
        assert!(err.to_string().contains("β > 1"));
    }

    #[test]
    fn step_budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = TrapEnvironment::generate(lp1(), 0, 10, 0).unwrap();
        let opts = WalkOptions {
            step_budget: 50,
            ..WalkOptions::default()
        };
        let err = run_to_level(&mut env, 2.0, 1000, &opts, &mut rng).unwrap_err();
        assert_eq!(err, Error::StepBudgetExceeded { budget: 50 });
    }

    #[test]
    fn separation_dp_small_cases() {
        // exhaustive enumeration over 10 sites, distance 2
        let (p, sites, d) = (0.3f64, 10u64, 2u64);
        let mut exact = 0.0;
        for mask in 0u32..1 << sites {
            let deep: Vec<i32> = (0..sites as i32).filter(|i| mask >> i & 1 == 1).collect();
            if deep.windows(2).all(|w| (w[1] - w[0]) as u64 > d) {
                let k = deep.len() as i32;
                exact += p.powi(k) * (1.0 - p).powi(sites as i32 - k);
            }
        }
        assert!((separation_probability(p, sites, d) - exact).abs() < 1e-12);
        assert!((separation_probability(p, 1, 5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clear_left_matches_direct_scan() {
        let n = 100u64;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for s in 0..200 {
            let mut env = TrapEnvironment::generate(lp1(), 0, 200, s).unwrap();
            let deep = deep_log_threshold(env.tail(), n).unwrap();
            let opts = WalkOptions {
                shallow_log_threshold: Some(deep),
                ..WalkOptions::default()
            };
            let rec = run_to_level(&mut env, 3.0, n, &opts, &mut rng).unwrap();
            let flags = diagnostics(&mut env, &rec, n, 1.0, 0.5, 0.5).unwrap();
            let width = (n as f64).ln().powf(1.5).floor() as i64;
            let scan = (-width..=0).all(|x| env.log_tau(x) <= deep);
            assert_eq!(flags.clear_left, scan);
        }
    }
}
