//! Experiment runner behind the `trapwalk` binary: flat key=value
//! configuration, replica-indexed seeding, a fixed worker pool, CSV data and
//! a JSON-lines manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extremal::{invert_path, marginal_cdf, sample_on_grid, sample_truncated_ppp};
use crate::kestentree::{realize_leaf, ExplicitTree, LeafMode, OffspringLaw, DEFAULT_SIZE_CAP, DEFAULT_TABLE_LEN};
use crate::limits::{
    check_epcond, check_grid, chi_square_test, j1_distance, ks_test, ks_two_sample, m1_distance, rescaled_sum_path,
    CadlagStep, TriangularArraySpec, DKW_LEVEL, MIN_KS_SAMPLES,
};
use crate::logmag::LogMagnitude;
use crate::seed::{derive_seed, stream, tag};
use crate::svt::{TailFunction, TailTable};
use crate::trapline::{
    aging_clock_values, deep_log_threshold, diagnostics, position_at_timescale, rescaled_hitting_path, run_to_level,
    separation_probability, TrapEnvironment, WalkOptions,
};
use crate::treewalk::{
    deep_time_sample, dense_hitting_mean, exact_exit_time, exact_hitting_times, exact_visited_set, quenched_mean_delta,
    quenched_mean_from_leaves, quenched_mean_rescaled_stat, quenched_mean_sigma, surrogate_hitting_path,
    toy_exact_aging, toy_surrogate_aging, tree_aging_indicator, visited_set_pmf, Sigma, SpineTree,
    DEFAULT_PROFILE_CAP,
};

/// Added to the DKW radius in every KS check.
pub const KS_SLACK: f64 = 0.05;
/// Allowed distance of an aging probability from `a/b`.
pub const AGING_TOLERANCE: f64 = 0.05;
/// Allowed gap between exact-walk and surrogate aging at toy scale.
pub const TOY_AGING_TOLERANCE: f64 = 0.1;
/// Leaf entrance depth used by the exact-walk oracles.
pub const ORACLE_ENTRANCE: u32 = 1;
/// Leaves at least this tall count toward the deep time.
pub const DEEP_TIME_BIG_HEIGHT: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subcommand {
    TrapHitting,
    TrapAging,
    TrapDiagnostics,
    TreeHitting,
    TreeAging,
    TreeQuenchedMean,
    TreeOracle,
    Kasahara,
    ExtremalReference,
    PathsDistance,
}

impl Subcommand {
    pub const ALL: [Subcommand; 10] = [
        Subcommand::TrapHitting,
        Subcommand::TrapAging,
        Subcommand::TrapDiagnostics,
        Subcommand::TreeHitting,
        Subcommand::TreeAging,
        Subcommand::TreeQuenchedMean,
        Subcommand::TreeOracle,
        Subcommand::Kasahara,
        Subcommand::ExtremalReference,
        Subcommand::PathsDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::TrapHitting => "trap-hitting",
            Subcommand::TrapAging => "trap-aging",
            Subcommand::TrapDiagnostics => "trap-diagnostics",
            Subcommand::TreeHitting => "tree-hitting",
            Subcommand::TreeAging => "tree-aging",
            Subcommand::TreeQuenchedMean => "tree-quenched-mean",
            Subcommand::TreeOracle => "tree-oracle",
            Subcommand::Kasahara => "kasahara",
            Subcommand::ExtremalReference => "extremal-reference",
            Subcommand::PathsDistance => "paths-distance",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TailFamily {
    LogPower,
    IterLog,
    Table(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffspringFamily {
    Geometric,
    Zipf,
}

/// Which exact-walk cross-check `tree-oracle` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleCheck {
    /// Backbone hitting mean, visited-set law, exit times, dense solve.
    Basic,
    /// Exact-walk against surrogate aging on small trees.
    ToyAging,
    /// Tail of the time spent deep in the leaves of one backbone vertex.
    DeepTime,
}

impl OracleCheck {
    fn name(self) -> &'static str {
        match self {
            OracleCheck::Basic => "basic",
            OracleCheck::ToyAging => "toy-aging",
            OracleCheck::DeepTime => "deep-time",
        }
    }
}

/// Every option of every subcommand; unused fields are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Subcommand,
    pub n: u64,
    pub beta: f64,
    pub tail_family: TailFamily,
    pub gamma: f64,
    pub offspring: OffspringFamily,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    /// `T` for diagnostics; the Poisson horizon for the extremal reference.
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub reps: u64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub kappa: f64,
    pub gamma_prime: f64,
    pub eps: f64,
    pub resolution: usize,
    pub step_budget: u64,
    pub size_cap: u64,
    pub profile_cap: u64,
    pub height_cap: Option<u64>,
    pub table_len: usize,
    pub alpha_normalized: bool,
    pub check: OracleCheck,
    pub out: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub timing: bool,
}

/// Keys accepted in config files and as overrides.
pub const CONFIG_KEYS: &[&str] = &[
    "n",
    "beta",
    "tail.family",
    "tail.gamma",
    "tail.table",
    "offspring.family",
    "offspring.alpha",
    "a",
    "b",
    "horizon",
    "grid",
    "reps",
    "seed",
    "workers",
    "kappa",
    "gamma_prime",
    "eps",
    "resolution",
    "step_budget",
    "tree.size_cap",
    "tree.profile_cap",
    "tree.height_cap",
    "tree.table_len",
    "tree.alpha_normalized",
    "check",
    "out",
    "manifest",
    "timing",
];

fn canonical_key(key: &str) -> &str {
    match key {
        "gamma" => "tail.gamma",
        "alpha" => "offspring.alpha",
        "family" => "offspring.family",
        "T" | "t" => "horizon",
        k => k,
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_count(key: &str, value: &str) -> Result<u64> {
    // accepts 1e4 as well as 10000
    if let Ok(v) = value.trim().parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = parse(key, value)?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(Error::Config(format!("{key}: `{value}` is not a non-negative integer")))
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), k + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Defaults for `command`; `check` matters only for `tree-oracle`.
    pub fn defaults(command: Subcommand, check: OracleCheck) -> Self {
        let mut c = ExperimentConfig {
            command,
            n: 10_000,
            beta: 3.0,
            tail_family: TailFamily::LogPower,
            gamma: 1.0,
            offspring: OffspringFamily::Geometric,
            alpha: 2.0,
            a: 1.0,
            b: 2.0,
            horizon: 1.0,
            grid: vec![1.0],
            reps: 2000,
            seed: 1,
            workers: None,
            kappa: 0.5,
            gamma_prime: 0.5,
            eps: 0.1,
            resolution: 200,
            step_budget: crate::trapline::DEFAULT_STEP_BUDGET,
            size_cap: DEFAULT_SIZE_CAP,
            profile_cap: DEFAULT_PROFILE_CAP,
            height_cap: None,
            table_len: DEFAULT_TABLE_LEN,
            alpha_normalized: false,
            check,
            out: None,
            manifest: None,
            timing: false,
        };
        match command {
            Subcommand::TrapHitting | Subcommand::Kasahara => c.grid = vec![0.5, 1.0, 2.0],
            Subcommand::TrapAging => c.reps = 10_000,
            Subcommand::TrapDiagnostics => c.reps = 1000,
            Subcommand::TreeHitting | Subcommand::TreeQuenchedMean => {
                c.n = 1000;
                c.beta = 2.0;
            }
            Subcommand::TreeAging => {
                c.n = 1000;
                c.beta = 2.0;
                c.reps = 10_000;
            }
            Subcommand::TreeOracle => match check {
                OracleCheck::Basic => c.reps = 100_000,
                OracleCheck::ToyAging => {
                    c.n = 6;
                    c.beta = 1.3;
                }
                OracleCheck::DeepTime => {
                    c.beta = 1.3;
                    c.reps = 20_000;
                    c.height_cap = Some(25);
                }
            },
            Subcommand::ExtremalReference => {
                c.grid = vec![0.5, 1.0, 2.0];
                c.reps = 100_000;
                c.horizon = 20.0;
                c.eps = 0.05;
            }
            Subcommand::PathsDistance => {
                c.grid = vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0];
                c.reps = 100;
            }
        }
        c
    }

    /// Defaults, then `pairs` in order (later entries win), then validation.
    pub fn from_pairs(command: Subcommand, pairs: &[(String, String)]) -> Result<Self> {
        let check = match pairs.iter().rev().find(|(k, _)| k == "check") {
            Some((_, v)) => match v.as_str() {
                "basic" => OracleCheck::Basic,
                "toy-aging" => OracleCheck::ToyAging,
                "deep-time" => OracleCheck::DeepTime,
                other => return Err(Error::Config(format!("check: unknown oracle check `{other}`"))),
            },
            None => OracleCheck::Basic,
        };
        let mut c = Self::defaults(command, check);
        let mut zipf_requested = false;
        let mut family_set = false;
        for (key, value) in pairs {
            let key = canonical_key(key);
            match key {
                "n" => c.n = parse_count(key, value)?,
                "beta" => c.beta = parse(key, value)?,
                "tail.family" => {
                    c.tail_family = match value.as_str() {
                        "log-power" => TailFamily::LogPower,
                        "iter-log" => TailFamily::IterLog,
                        "table" => match &c.tail_family {
                            TailFamily::Table(p) => TailFamily::Table(p.clone()),
                            _ => TailFamily::Table(PathBuf::new()),
                        },
                        other => return Err(Error::Config(format!("tail.family: unknown family `{other}`"))),
                    }
                }
                "tail.gamma" => c.gamma = parse(key, value)?,
                "tail.table" => c.tail_family = TailFamily::Table(PathBuf::from(value)),
                "offspring.family" => {
                    family_set = true;
                    c.offspring = match value.as_str() {
                        "geometric" => OffspringFamily::Geometric,
                        "zipf" => OffspringFamily::Zipf,
                        other => {
                            return Err(Error::Config(format!("offspring.family: unknown family `{other}`")))
                        }
                    }
                }
                "offspring.alpha" => {
                    c.alpha = parse(key, value)?;
                    zipf_requested = true;
                }
                "a" => c.a = parse(key, value)?,
                "b" => c.b = parse(key, value)?,
                "horizon" => c.horizon = parse(key, value)?,
                "grid" => {
                    c.grid = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| parse(key, s))
                        .collect::<Result<_>>()?
                }
                "reps" => c.reps = parse_count(key, value)?,
                "seed" => c.seed = parse_count(key, value)?,
                "workers" => c.workers = Some(parse_count(key, value)? as usize),
                "kappa" => c.kappa = parse(key, value)?,
                "gamma_prime" => c.gamma_prime = parse(key, value)?,
                "eps" => c.eps = parse(key, value)?,
                "resolution" => c.resolution = parse_count(key, value)? as usize,
                "step_budget" => c.step_budget = parse_count(key, value)?,
                "tree.size_cap" => c.size_cap = parse_count(key, value)?,
                "tree.profile_cap" => c.profile_cap = parse_count(key, value)?,
                "tree.height_cap" => c.height_cap = Some(parse_count(key, value)?),
                "tree.table_len" => c.table_len = parse_count(key, value)? as usize,
                "tree.alpha_normalized" => c.alpha_normalized = parse(key, value)?,
                "check" => {}
                "out" => c.out = Some(PathBuf::from(value)),
                "manifest" => c.manifest = Some(PathBuf::from(value)),
                "timing" => c.timing = parse(key, value)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if zipf_requested && !family_set {
            c.offspring = OffspringFamily::Zipf;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "beta > 1", self.beta));
        }
        if self.reps < 1 {
            return Err(Error::param("reps", "reps >= 1", self.reps));
        }
        check_grid(&self.grid)?;
        if self.n < 1 {
            return Err(Error::param("n", "n >= 1", self.n));
        }
        let aging = matches!(self.command, Subcommand::TrapAging | Subcommand::TreeAging)
            || (self.command == Subcommand::TreeOracle && self.check == OracleCheck::ToyAging);
        if aging && !(self.a > 0.0 && self.a < self.b && self.b.is_finite()) {
            return Err(Error::param("a, b", "0 < a < b", format!("{}, {}", self.a, self.b)));
        }
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::param("tail.gamma", "gamma > 0", self.gamma));
        }
        if let TailFamily::Table(p) = &self.tail_family {
            if p.as_os_str().is_empty() {
                return Err(Error::param("tail.table", "a path to a table file", "none"));
            }
        }
        match self.offspring {
            OffspringFamily::Geometric if self.alpha != 2.0 => {
                return Err(Error::param("offspring.alpha", "alpha = 2 for the geometric family", self.alpha))
            }
            OffspringFamily::Zipf if !(self.alpha > 1.0 && self.alpha < 2.0) => {
                return Err(Error::param("offspring.alpha", "1 < alpha < 2 for the zipf family", self.alpha))
            }
            _ => {}
        }
        if self.command == Subcommand::TreeHitting && self.n < 10 {
            return Err(Error::param("n", "n >= 10", self.n));
        }
        if self.command == Subcommand::TrapDiagnostics {
            if !(self.kappa > 0.0 && self.kappa < 1.0) {
                return Err(Error::param("kappa", "0 < kappa < 1", self.kappa));
            }
            if !(self.gamma_prime > 0.0 && self.gamma_prime < 1.0) {
                return Err(Error::param("gamma_prime", "0 < gamma_prime < 1", self.gamma_prime));
            }
            if !(self.horizon > 0.0) {
                return Err(Error::param("horizon", "T > 0", self.horizon));
            }
        }
        if self.command == Subcommand::TreeOracle && self.check == OracleCheck::ToyAging && self.n > 12 {
            return Err(Error::param("n", "n <= 12 for the toy exact walk", self.n));
        }
        if self.command == Subcommand::ExtremalReference {
            if !(self.eps > 0.0) {
                return Err(Error::param("eps", "eps > 0", self.eps));
            }
            if self.horizon < *self.grid.last().unwrap() {
                return Err(Error::param("horizon", "at least the last grid time", self.horizon));
            }
        }
        if self.command == Subcommand::Kasahara && !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::param("eps", "0 < eps < 1", self.eps));
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers", "workers >= 1", 0));
        }
        Ok(())
    }

    pub fn tail(&self) -> Result<TailFunction> {
        match &self.tail_family {
            TailFamily::LogPower => TailFunction::log_power(self.gamma),
            TailFamily::IterLog => TailFunction::iter_log(self.gamma),
            TailFamily::Table(p) => Ok(TailFunction::table(TailTable::from_csv(p)?)),
        }
    }

    pub fn law(&self) -> Result<OffspringLaw> {
        match self.offspring {
            OffspringFamily::Geometric => Ok(OffspringLaw::geometric()),
            OffspringFamily::Zipf => OffspringLaw::zipf(self.alpha, self.table_len),
        }
    }

    /// `workers` (or all cores), capped by `TRAPWALK_WORKERS`.
    pub fn worker_count(&self) -> usize {
        let mut w = self
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if let Some(cap) = std::env::var("TRAPWALK_WORKERS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
        {
            w = w.min(cap.max(1));
        }
        w.max(1)
    }

    /// The model parameters as printed in the manifest. Worker count and
    /// output paths are left out so that they cannot change the bytes.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("command", self.command.to_string());
        put("n", self.n.to_string());
        put("beta", self.beta.to_string());
        put(
            "tail.family",
            match &self.tail_family {
                TailFamily::LogPower => "log-power".into(),
                TailFamily::IterLog => "iter-log".into(),
                TailFamily::Table(p) => format!("table:{}", p.display()),
            },
        );
        put("tail.gamma", self.gamma.to_string());
        put(
            "offspring.family",
            match self.offspring {
                OffspringFamily::Geometric => "geometric".into(),
                OffspringFamily::Zipf => "zipf".into(),
            },
        );
        put("offspring.alpha", self.alpha.to_string());
        put("a", self.a.to_string());
        put("b", self.b.to_string());
        put("horizon", self.horizon.to_string());
        put(
            "grid",
            self.grid.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        );
        put("reps", self.reps.to_string());
        put("seed", self.seed.to_string());
        put("kappa", self.kappa.to_string());
        put("gamma_prime", self.gamma_prime.to_string());
        put("eps", self.eps.to_string());
        put("resolution", self.resolution.to_string());
        put("step_budget", self.step_budget.to_string());
        put("tree.size_cap", self.size_cap.to_string());
        put("tree.profile_cap", self.profile_cap.to_string());
        put(
            "tree.height_cap",
            self.height_cap.map_or("auto".into(), |h| h.to_string()),
        );
        put("tree.table_len", self.table_len.to_string());
        put("tree.alpha_normalized", self.alpha_normalized.to_string());
        put("check", self.check.name().to_string());
        m
    }
}

/// One checked quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub name: String,
    /// The estimate being checked, when it differs from the statistic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

impl TestResult {
    fn at_most(name: impl Into<String>, value: Option<f64>, statistic: f64, bound: f64) -> Self {
        TestResult {
            name: name.into(),
            value,
            statistic,
            bound,
            pass: statistic <= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub tests: Vec<TestResult>,
    /// Seconds; recorded only on request since it breaks byte equality.
    pub wall_time: Option<f64>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ManifestLine<'a> {
    Config {
        command: &'a str,
        version: &'a str,
        config: &'a BTreeMap<String, String>,
    },
    Test(&'a TestResult),
    Summary {
        pass: bool,
        tests: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        wall_time_s: Option<f64>,
    },
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }

    pub fn to_json_lines(&self) -> String {
        let mut lines = vec![ManifestLine::Config {
            command: &self.command,
            version: &self.version,
            config: &self.config,
        }];
        lines.extend(self.tests.iter().map(ManifestLine::Test));
        lines.push(ManifestLine::Summary {
            pass: self.passed(),
            tests: self.tests.len(),
            wall_time_s: self.wall_time,
        });
        let mut out = String::new();
        for l in lines {
            out.push_str(&serde_json::to_string(&l).expect("manifest serializes"));
            out.push('\n');
        }
        out
    }
}

/// Manifest plus the CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RunOutput {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Tests, CSV header, CSV rows.
type Outcome = (Vec<TestResult>, Vec<String>, Vec<Vec<String>>);

fn replicas<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    // indexed collect keeps replica order whatever the scheduling
    pool.install(|| (0..cfg.reps).into_par_iter().map(&f).collect())
}

fn ks_result(name: String, samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if samples.len() < MIN_KS_SAMPLES {
        return Ok(TestResult {
            name,
            value: None,
            statistic: f64::INFINITY,
            bound: 0.0,
            pass: false,
        });
    }
    let r = ks_test(samples, cdf)?;
    Ok(TestResult {
        name,
        value: None,
        statistic: r.statistic,
        bound: r.bound + KS_SLACK,
        pass: r.passes(KS_SLACK),
    })
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut k, mut n) = (0u64, 0u64);
    for f in flags {
        k += f as u64;
        n += 1;
    }
    k as f64 / n.max(1) as f64
}

fn grid_rows(values: &[Vec<f64>], grid: &[f64]) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(values.len() * grid.len());
    for (r, v) in values.iter().enumerate() {
        for (t, x) in grid.iter().zip(v) {
            rows.push(vec![r.to_string(), t.to_string(), x.to_string()]);
        }
    }
    rows
}

fn marginal_tests(label: &str, values: &[Vec<f64>], grid: &[f64]) -> Result<Vec<TestResult>> {
    grid.iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = values.iter().map(|v| v[k]).collect();
            ks_result(format!("{label} marginal t={t}"), &xs, |x| marginal_cdf(t, x))
        })
        .collect()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn walk_options(cfg: &ExperimentConfig) -> WalkOptions {
    WalkOptions {
        step_budget: cfg.step_budget,
        ..WalkOptions::default()
    }
}

fn trap_hitting(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tail = cfg.tail()?;
    let levels = ((cfg.n as f64) * cfg.grid.last().unwrap()).floor().max(1.0) as u64;
    let opts = walk_options(cfg);
    let values = replicas(cfg, |r| {
        let mut env = TrapEnvironment::generate(tail.clone(), 64, levels, derive_seed(cfg.seed, r, tag::ENVIRONMENT))?;
        let mut rng = stream(cfg.seed, r, tag::WALK);
        let rec = run_to_level(&mut env, cfg.beta, levels, &opts, &mut rng)?;
        let path = rescaled_hitting_path(&rec, &tail, cfg.n, &cfg.grid)?;
        Ok(cfg.grid.iter().map(|&t| path.eval(t)).collect::<Vec<f64>>())
    })?;
    let tests = marginal_tests("hitting", &values, &cfg.grid)?;
    Ok((tests, header(&["replica", "t", "value"]), grid_rows(&values, &cfg.grid)))
}

fn trap_aging(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tail = cfg.tail()?;
    let targets = aging_clock_values(&tail, cfg.n, &[cfg.a, cfg.b])?;
    let flags = replicas(cfg, |r| {
        let mut env = TrapEnvironment::generate(tail.clone(), 64, 64, derive_seed(cfg.seed, r, tag::ENVIRONMENT))?;
        let mut rng = stream(cfg.seed, r, tag::WALK);
        let sites = position_at_timescale(&mut env, cfg.beta, &targets, cfg.step_budget, &mut rng)?;
        Ok((sites[0], sites[1]))
    })?;
    let p = fraction(flags.iter().map(|s| s.0 == s.1));
    let target = cfg.a / cfg.b;
    let tests = vec![TestResult::at_most(
        format!("aging a={} b={}", cfg.a, cfg.b),
        Some(p),
        (p - target).abs(),
        AGING_TOLERANCE,
    )];
    let rows = flags
        .iter()
        .enumerate()
        .map(|(r, s)| vec![r.to_string(), s.0.to_string(), s.1.to_string(), ((s.0 == s.1) as u8).to_string()])
        .collect();
    Ok((tests, header(&["replica", "site_a", "site_b", "equal"]), rows))
}

fn trap_diagnostics(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tail = cfg.tail()?;
    let deep = deep_log_threshold(&tail, cfg.n)?;
    let reach = ((cfg.n as f64) * cfg.horizon).floor().max(1.0) as u64;
    let opts = WalkOptions {
        shallow_log_threshold: Some(deep),
        ..walk_options(cfg)
    };
    let flags = replicas(cfg, |r| {
        let mut env = TrapEnvironment::generate(tail.clone(), 64, reach, derive_seed(cfg.seed, r, tag::ENVIRONMENT))?;
        let mut rng = stream(cfg.seed, r, tag::WALK);
        let rec = run_to_level(&mut env, cfg.beta, reach, &opts, &mut rng)?;
        diagnostics(&mut env, &rec, cfg.n, cfg.horizon, cfg.kappa, cfg.gamma_prime)
    })?;
    let p_deep = tail.eval_log(deep);
    let gap = (cfg.n as f64).powf(cfg.kappa).floor() as u64;
    let exact = separation_probability(p_deep, reach, gap);
    let sep = fraction(flags.iter().map(|f| f.separated));
    let se = (exact * (1.0 - exact) / cfg.reps as f64).sqrt();
    let good = fraction(flags.iter().map(|f| f.clear_left && f.shallow_backtrack && f.shallow_time));
    let tests = vec![
        TestResult::at_most("separation vs exact", Some(sep), (sep - exact).abs(), 3.0 * se + 1e-12),
        TestResult {
            name: "clear left, short backtrack, shallow time".into(),
            value: None,
            statistic: good,
            bound: 0.9,
            pass: good > 0.9,
        },
    ];
    let rows = flags
        .iter()
        .enumerate()
        .map(|(r, f)| {
            vec![
                r.to_string(),
                (f.separated as u8).to_string(),
                (f.clear_left as u8).to_string(),
                (f.shallow_backtrack as u8).to_string(),
                (f.shallow_time as u8).to_string(),
            ]
        })
        .collect();
    Ok((
        tests,
        header(&["replica", "separated", "clear_left", "shallow_backtrack", "shallow_time"]),
        rows,
    ))
}

fn cap_test(name: &str, capped: f64) -> TestResult {
    TestResult::at_most(format!("{name} capped fraction"), None, capped, 0.05)
}

fn tree_hitting(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let out = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::SPINE);
        let (rec, path) = surrogate_hitting_path(&law, cfg.beta, cfg.n, &cfg.grid, &mut rng)?;
        Ok((cfg.grid.iter().map(|&t| path.eval(t)).collect::<Vec<f64>>(), rec.capped))
    })?;
    let values: Vec<Vec<f64>> = out.iter().map(|o| o.0.clone()).collect();
    let mut tests = marginal_tests("surrogate hitting", &values, &cfg.grid)?;
    tests.push(cap_test("height", fraction(out.iter().map(|o| o.1))));
    Ok((tests, header(&["replica", "t", "value"]), grid_rows(&values, &cfg.grid)))
}

fn localization_limit(cfg: &ExperimentConfig) -> usize {
    let mut thr = cfg.b * cfg.n as f64 / cfg.beta.ln();
    if cfg.alpha_normalized {
        thr /= cfg.alpha - 1.0;
    }
    (100.0 * thr.max(1.0)) as usize + 10_000
}

fn tree_aging(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let limit = localization_limit(cfg);
    let flags = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::SPINE);
        tree_aging_indicator(&law, cfg.beta, cfg.n, cfg.a, cfg.b, cfg.alpha_normalized, limit, &mut rng)
    })?;
    let p = fraction(flags.iter().copied());
    let tests = vec![TestResult::at_most(
        format!("localization aging a={} b={}", cfg.a, cfg.b),
        Some(p),
        (p - cfg.a / cfg.b).abs(),
        AGING_TOLERANCE,
    )];
    let rows = flags
        .iter()
        .enumerate()
        .map(|(r, &f)| vec![r.to_string(), (f as u8).to_string()])
        .collect();
    Ok((tests, header(&["replica", "equal"]), rows))
}

fn tree_quenched_mean(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let out = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::SPINE);
        quenched_mean_rescaled_stat(&law, cfg.beta, cfg.n, cfg.profile_cap, &mut rng)
    })?;
    let stats: Vec<f64> = out.iter().map(|q| q.stat).collect();
    let tests = vec![
        ks_result("quenched mean marginal t=1".into(), &stats, |x| marginal_cdf(1.0, x))?,
        cap_test("profile", fraction(out.iter().map(|q| q.capped))),
    ];
    let rows = out
        .iter()
        .enumerate()
        .map(|(r, q)| {
            vec![
                r.to_string(),
                q.stat.to_string(),
                q.mean.estimate.log().to_string(),
                q.mean.lower.log().to_string(),
                (q.capped as u8).to_string(),
            ]
        })
        .collect();
    Ok((
        tests,
        header(&["replica", "stat", "log_mean", "log_lower", "capped"]),
        rows,
    ))
}

fn path_leaf(depth: usize) -> ExplicitTree {
    let mut counts = vec![1u32; depth];
    counts.push(0);
    ExplicitTree::from_child_counts(&counts).expect("a path is a valid tree")
}

fn star(i: usize, leaves: Vec<ExplicitTree>) -> SpineTree {
    let mut all = vec![Vec::new(); i];
    all.push(leaves);
    SpineTree::from_leaves(all)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}

fn summary_rows(tests: &[TestResult]) -> Vec<Vec<String>> {
    tests
        .iter()
        .map(|t| {
            vec![
                t.name.clone(),
                t.value.map_or(String::new(), |v| v.to_string()),
                t.statistic.to_string(),
                t.bound.to_string(),
                (t.pass as u8).to_string(),
            ]
        })
        .collect()
}

fn oracle_basic(cfg: &ExperimentConfig) -> Result<Outcome> {
    let beta = cfg.beta;
    let budget = cfg.step_budget;
    let mut tests = Vec::new();

    let ones = vec![
        Sigma {
            value: LogMagnitude::ONE,
            exact: true
        };
        3
    ];
    let exact = quenched_mean_delta(&ones, beta)?.exact.expect("no caps").value();
    let times = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::WALK);
        let h = exact_hitting_times(&mut SpineTree::bare(), beta, 3, budget, &mut rng)?;
        Ok(h[2] as f64)
    })?;
    let (m, _) = mean_and_se(&times);
    tests.push(TestResult::at_most("bare backbone mean hitting time of level 3", Some(m), (m - exact).abs(), 0.05));

    for b in 1..=3usize {
        let leaves: Vec<ExplicitTree> = (0..b).map(|j| path_leaf(1 + j)).collect();
        let big: Vec<usize> = (0..b).collect();
        let subsets = replicas(cfg, |r| {
            let mut rng = stream(cfg.seed, r, tag::ORACLE + 16 * b as u64);
            let mut tree = star(1, leaves.clone());
            let v = exact_visited_set(&mut tree, 1, &big, ORACLE_ENTRANCE, beta, budget, &mut rng)?;
            Ok(v.iter().map(|&j| 1usize << j).sum::<usize>())
        })?;
        let mut counts = vec![0u64; 1 << b];
        for s in subsets {
            counts[s] += 1;
        }
        let probs: Vec<f64> = (0..1u32 << b)
            .map(|m| visited_set_pmf(b as u64, m.count_ones() as u64))
            .collect();
        let chi = chi_square_test(&counts, &probs, 0.01)?;
        tests.push(TestResult {
            name: format!("visited-set law #B={b}"),
            value: None,
            statistic: chi.statistic,
            bound: chi.critical,
            pass: chi.passes(),
        });
    }

    let leaves = vec![
        path_leaf(2),
        ExplicitTree::from_child_counts(&[2, 1, 0, 0])?,
        ExplicitTree::root_only(),
    ];
    let sigma = quenched_mean_sigma(&leaves, 2, beta)?.value();
    let exits = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::ORACLE);
        let mut tree = star(2, leaves.clone());
        Ok(exact_exit_time(&mut tree, 2, beta, budget, &mut rng)? as f64)
    })?;
    let (m, se) = mean_and_se(&exits);
    tests.push(TestResult::at_most("exit time mean vs conductance sum", Some(m), (m - sigma).abs(), 3.0 * se));

    let law = OffspringLaw::geometric();
    let mut rng = stream(cfg.seed, 0, tag::ORACLE + 1);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 10 {
        let n = 2 + (done % 5);
        let leaves: Result<Vec<Vec<ExplicitTree>>> = (0..n)
            .map(|_| {
                let buds = law.sample_size_biased(&mut rng) - 1;
                (0..buds)
                    .map(|_| realize_leaf(&law, LeafMode::Unconditioned, 40, &mut rng))
                    .collect()
            })
            .collect();
        let Ok(leaves) = leaves else { continue };
        let size = n + 1 + leaves.iter().flatten().map(|t| t.size()).sum::<usize>();
        if size > 50 {
            continue;
        }
        let rec = quenched_mean_from_leaves(&leaves, beta)?.exact.expect("no caps").value();
        let dense = dense_hitting_mean(&leaves, beta)?;
        worst = worst.max(((rec - dense) / dense).abs());
        done += 1;
    }
    tests.push(TestResult::at_most("dense solve vs recursion (relative)", None, worst, 1e-9));
    let rows = summary_rows(&tests);
    Ok((tests, header(&["check", "value", "statistic", "bound", "pass"]), rows))
}

fn toy_height_cap(cfg: &ExperimentConfig) -> u64 {
    cfg.height_cap
        .unwrap_or_else(|| (cfg.b * cfg.n as f64 / cfg.beta.ln()).ceil() as u64 + 5)
}

fn oracle_toy_aging(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let clamp = toy_height_cap(cfg);
    let pairs = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::WALK);
        let exact = toy_exact_aging(
            &law,
            cfg.beta,
            cfg.n,
            cfg.a,
            cfg.b,
            clamp,
            derive_seed(cfg.seed, r, tag::LEAVES),
            &mut rng,
        )?;
        let mut rng = stream(cfg.seed, r, tag::SPINE);
        let surrogate = toy_surrogate_aging(&law, cfg.beta, cfg.n, cfg.a, cfg.b, clamp, ORACLE_ENTRANCE as u64, &mut rng)?;
        Ok((exact, surrogate))
    })?;
    let pe = fraction(pairs.iter().map(|p| p.0));
    let ps = fraction(pairs.iter().map(|p| p.1));
    let tests = vec![TestResult::at_most(
        format!("toy aging a={} b={} n={}: exact {pe} vs surrogate {ps}", cfg.a, cfg.b, cfg.n),
        Some(pe),
        (pe - ps).abs(),
        TOY_AGING_TOLERANCE,
    )];
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(r, p)| vec![r.to_string(), (p.0 as u8).to_string(), (p.1 as u8).to_string()])
        .collect();
    Ok((tests, header(&["replica", "exact_equal", "surrogate_equal"]), rows))
}

/// Points `ln x` spread over the upper half of the reachable height range.
pub fn deep_time_window(beta: f64, height_cap: u64) -> Vec<f64> {
    let lb = beta.ln();
    let (lo, hi) = (0.5 * height_cap as f64 * lb, height_cap as f64 * lb);
    (0..8).map(|k| lo + (hi - lo) * k as f64 / 7.0).collect()
}

fn oracle_deep_time(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.law()?;
    let clamp = cfg.height_cap.unwrap_or(25);
    let times = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::WALK);
        deep_time_sample(
            &law,
            cfg.beta,
            clamp,
            DEEP_TIME_BIG_HEIGHT,
            ORACLE_ENTRANCE,
            derive_seed(cfg.seed, r, tag::LEAVES),
            cfg.step_budget,
            &mut rng,
        )
    })?;
    let lb = cfg.beta.ln();
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for lx in deep_time_window(cfg.beta, clamp) {
        let p = fraction(times.iter().map(|&t| t > 0 && (t as f64).ln() >= lx));
        let ratio = p * (law.alpha() - 1.0) * lx / lb;
        worst = worst.max((ratio - 1.0).abs());
        rows.push(vec![lx.to_string(), p.to_string(), ratio.to_string()]);
    }
    let tests = vec![TestResult::at_most("deep-time tail ratio", None, worst, 0.3)];
    Ok((tests, header(&["log_x", "tail", "ratio"]), rows))
}

fn kasahara(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = TriangularArraySpec::iid(cfg.tail()?, cfg.eps);
    let values = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::ARRAY);
        let path = rescaled_sum_path(&spec, cfg.n, &cfg.grid, &mut rng)?;
        Ok(cfg.grid.iter().map(|&t| path.eval(t)).collect::<Vec<f64>>())
    })?;
    let mut tests = marginal_tests("sum", &values, &cfg.grid)?;
    let ep = check_epcond(&spec, cfg.n, 50)?;
    tests.push(TestResult::at_most("window condition", None, ep.worst_deviation, cfg.eps));
    Ok((tests, header(&["replica", "t", "value"]), grid_rows(&values, &cfg.grid)))
}

fn extremal_reference(cfg: &ExperimentConfig) -> Result<Outcome> {
    let out = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::EXTREMAL);
        let direct = sample_on_grid(&cfg.grid, &mut rng)?;
        let ppp = sample_truncated_ppp(cfg.horizon, cfg.eps, &mut rng)?;
        let a: Vec<f64> = cfg.grid.iter().map(|&t| direct.eval(t)).collect();
        let b: Vec<f64> = cfg.grid.iter().map(|&t| ppp.eval(t)).collect();
        Ok((a, b, invert_path(&ppp).eval(1.0)))
    })?;
    let mut tests = Vec::new();
    for (k, &t) in cfg.grid.iter().enumerate() {
        let a: Vec<f64> = out.iter().map(|o| o.0[k]).collect();
        let b: Vec<f64> = out.iter().map(|o| o.1[k]).collect();
        tests.push(ks_result(format!("direct marginal t={t}"), &a, |x| marginal_cdf(t, x))?);
        if a.len() >= MIN_KS_SAMPLES {
            let r = ks_two_sample(&a, &b, DKW_LEVEL)?;
            tests.push(TestResult {
                name: format!("two-route t={t}"),
                value: None,
                statistic: r.statistic,
                bound: r.bound + KS_SLACK,
                pass: r.passes(KS_SLACK),
            });
        }
    }
    let inv: Vec<f64> = out.iter().map(|o| o.2).collect();
    let (m, _) = mean_and_se(&inv);
    tests.push(TestResult::at_most("mean first passage above 1", Some(m), (m - 1.0).abs(), 0.02));
    let rows = out
        .iter()
        .enumerate()
        .flat_map(|(r, o)| {
            cfg.grid.iter().enumerate().map(move |(k, t)| {
                vec![r.to_string(), t.to_string(), o.0[k].to_string(), o.1[k].to_string(), o.2.to_string()]
            })
        })
        .collect();
    Ok((
        tests,
        header(&["replica", "t", "direct", "poisson", "inverse_at_1"]),
        rows,
    ))
}

fn paths_distance(cfg: &ExperimentConfig) -> Result<Outcome> {
    let horizon = *cfg.grid.last().unwrap();
    let pairs = replicas(cfg, |r| {
        let mut rng = stream(cfg.seed, r, tag::EXTREMAL);
        let f = sample_on_grid(&cfg.grid, &mut rng)?.to_step();
        let g = sample_on_grid(&cfg.grid, &mut rng)?.to_step();
        let j1 = j1_distance(&f, &g)?;
        let m1 = m1_distance(&f, &g, cfg.resolution)?;
        let self_j1 = j1_distance(&f, &f)?;
        Ok((j1, m1, self_j1))
    })?;
    let ind_a = CadlagStep::new(0.0, &[(1.0, 1.0), (2.0, 0.0)], horizon.max(3.0))?;
    let ind_b = CadlagStep::new(0.0, &[(1.1, 1.0), (2.0, 0.0)], horizon.max(3.0))?;
    let shifted = j1_distance(&ind_a, &ind_b)?;
    let identical = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    let excess = pairs.iter().map(|p| p.1 - p.0).fold(f64::NEG_INFINITY, f64::max);
    let tests = vec![
        TestResult::at_most("J1 of a path with itself", None, identical, 1e-12),
        TestResult::at_most("J1 of shifted indicator", Some(shifted), (shifted - 0.1).abs(), 1e-9),
        TestResult::at_most("M1 minus J1 over pairs", None, excess, 1e-12),
    ];
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(r, p)| vec![r.to_string(), p.0.to_string(), p.1.to_string()])
        .collect();
    Ok((tests, header(&["pair", "j1", "m1"]), rows))
}

/// Runs the configured experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let (tests, header, rows) = match cfg.command {
        Subcommand::TrapHitting => trap_hitting(cfg)?,
        Subcommand::TrapAging => trap_aging(cfg)?,
        Subcommand::TrapDiagnostics => trap_diagnostics(cfg)?,
        Subcommand::TreeHitting => tree_hitting(cfg)?,
        Subcommand::TreeAging => tree_aging(cfg)?,
        Subcommand::TreeQuenchedMean => tree_quenched_mean(cfg)?,
        Subcommand::TreeOracle => match cfg.check {
            OracleCheck::Basic => oracle_basic(cfg)?,
            OracleCheck::ToyAging => oracle_toy_aging(cfg)?,
            OracleCheck::DeepTime => oracle_deep_time(cfg)?,
        },
        Subcommand::Kasahara => kasahara(cfg)?,
        Subcommand::ExtremalReference => extremal_reference(cfg)?,
        Subcommand::PathsDistance => paths_distance(cfg)?,
    };
    Ok(RunOutput {
        manifest: RunManifest {
            command: cfg.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.echo(),
            tests,
            wall_time: cfg.timing.then(|| start.elapsed().as_secs_f64()),
        },
        header,
        rows,
    })
}

/// Where the manifest goes: `--manifest`, else next to `--out`.
pub fn manifest_path(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.manifest.clone().or_else(|| {
        cfg.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.jsonl");
            PathBuf::from(s)
        })
    })
}

/// Runs and writes the outputs; on error nothing is left behind.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let targets: Vec<PathBuf> = cfg.out.iter().cloned().chain(manifest_path(cfg)).collect();
    let result = run_experiment(cfg).and_then(|out| {
        if let Some(p) = &cfg.out {
            fs::write(p, out.to_csv()?)?;
        }
        if let Some(p) = manifest_path(cfg) {
            fs::write(p, out.manifest.to_json_lines())?;
        }
        Ok(out)
    });
    if result.is_err() {
        for p in &targets {
            let _ = fs::remove_file(p);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn beta_one_is_rejected_by_name() {
        let err = ExperimentConfig::from_pairs(Subcommand::TrapAging, &pairs(&[("beta", "1")])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta") && msg.contains("beta > 1"), "{msg}");
    }

    #[test]
    fn field_validation() {
        let bad = [
            (Subcommand::TrapAging, ("a", "2")),
            (Subcommand::TreeAging, ("b", "0.5")),
            (Subcommand::TrapHitting, ("grid", "1,0.5")),
            (Subcommand::TrapHitting, ("reps", "0")),
            (Subcommand::TreeHitting, ("alpha", "2.5")),
            (Subcommand::TreeHitting, ("family", "poisson")),
            (Subcommand::Kasahara, ("nonsense", "1")),
        ];
        for (cmd, kv) in bad {
            assert!(ExperimentConfig::from_pairs(cmd, &pairs(&[kv])).is_err(), "{kv:?}");
        }
        let c = ExperimentConfig::from_pairs(Subcommand::TreeHitting, &pairs(&[("alpha", "1.5")])).unwrap();
        assert_eq!(c.offspring, OffspringFamily::Zipf);
        let c = ExperimentConfig::from_pairs(Subcommand::TrapHitting, &pairs(&[("reps", "1e3"), ("gamma", "2")])).unwrap();
        assert_eq!(c.reps, 1000);
        assert_eq!(c.gamma, 2.0);
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "# trap run\nn = 500\ntail.gamma = 2 # heavier\n\nbeta=4\n").unwrap();
        let kv = read_config_file(&p).unwrap();
        let c = ExperimentConfig::from_pairs(Subcommand::TrapHitting, &kv).unwrap();
        assert_eq!((c.n, c.gamma, c.beta), (500, 2.0, 4.0));
        fs::write(&p, "n 500\n").unwrap();
        assert!(read_config_file(&p).is_err());
    }

    #[test]
    fn failed_runs_leave_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("data.csv");
        let kv = pairs(&[
            ("n", "50"),
            ("reps", "3"),
            ("step_budget", "5"),
            ("out", out.to_str().unwrap()),
        ]);
        let cfg = ExperimentConfig::from_pairs(Subcommand::TrapHitting, &kv).unwrap();
        assert!(execute(&cfg).is_err());
        assert!(!out.exists());
        assert!(!manifest_path(&cfg).unwrap().exists());
    }

    #[test]
    fn worker_count_does_not_change_output() {
        for cmd in [Subcommand::TrapHitting, Subcommand::TreeHitting, Subcommand::PathsDistance] {
            let mut outs = Vec::new();
            for w in ["1", "3"] {
                let kv = pairs(&[("n", "100"), ("reps", "60"), ("workers", w)]);
                let cfg = ExperimentConfig::from_pairs(cmd, &kv).unwrap();
                let o = run_experiment(&cfg).unwrap();
                outs.push((o.to_csv().unwrap(), o.manifest.to_json_lines()));
            }
            assert_eq!(outs[0], outs[1], "{cmd}");
        }
    }
}
