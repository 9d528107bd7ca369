//! The extremal process `m(t)`: running maximum of a Poisson point process
//! with intensity `x⁻² dx dt`, and its right-continuous inverse.

use rand::Rng;

use crate::error::{Error, Result};
use crate::limits::CadlagStep;

/// `P(m(t) ≤ x) = exp(−t/x)`.
pub fn marginal_cdf(t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (-t / x).exp()
}

/// Fréchet draw with CDF `exp(−scale/x)`.
#[inline]
pub fn sample_frechet<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -scale / u.ln();
        }
    }
}

/// Non-decreasing pure-jump path stored by its records.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalPath {
    times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl ExtremalPath {
    /// Records must have increasing times in `[0, horizon]` and strictly
    /// increasing positive values.
    pub fn from_records(records: &[(f64, f64)], horizon: f64) -> Result<Self> {
        let mut prev = (f64::NEG_INFINITY, 0.0);
        for &(t, v) in records {
            if !(t >= 0.0 && t <= horizon) || t <= prev.0 || v <= prev.1 {
                return Err(Error::param(
                    "records",
                    "increasing times within the horizon and increasing positive values",
                    format!("({t}, {v})"),
                ));
            }
            prev = (t, v);
        }
        Ok(ExtremalPath {
            times: records.iter().map(|r| r.0).collect(),
            values: records.iter().map(|r| r.1).collect(),
            horizon,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn records(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest record value with time `≤ t`; 0 before the first record.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn to_step(&self) -> CadlagStep {
        let jumps: Vec<(f64, f64)> = self.records().collect();
        CadlagStep::new(0.0, &jumps, self.horizon).expect("records are valid jumps")
    }

    /// Inserts the times `extra` by sampling `m` there conditionally on the
    /// values already at the path's own record grid `grid` (which must contain
    /// every record time). Values at existing grid times are unchanged.
    pub fn refine<R: Rng + ?Sized>(&self, grid: &[f64], extra: &[f64], rng: &mut R) -> Result<ExtremalPath> {
        check_times(grid)?;
        let mut all: Vec<f64> = grid.iter().chain(extra).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        check_times(&all)?;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        let mut prev_t = 0.0;
        let mut prev_v = 0.0;
        let mut gi = 0usize;
        let mut pending: Vec<f64> = Vec::new();
        for &t in &all {
            if gi < grid.len() && grid[gi] == t {
                let v = self.eval(t);
                fill_bridge(prev_t, prev_v, t, v, &pending, rng, &mut out);
                out.push((t, v));
                pending.clear();
                prev_t = t;
                prev_v = v;
                gi += 1;
            } else {
                pending.push(t);
            }
        }
        // beyond the last coarse time the path continues freely
        let mut cur_t = prev_t;
        let mut cur_v = prev_v;
        for &t in &pending {
            let v = cur_v.max(sample_frechet(t - cur_t, rng));
            out.push((t, v));
            cur_t = t;
            cur_v = v;
        }
        let mut recs: Vec<(f64, f64)> = Vec::new();
        for (t, v) in out {
            if v > recs.last().map_or(0.0, |r| r.1) {
                recs.push((t, v));
            }
        }
        ExtremalPath::from_records(&recs, self.horizon.max(*all.last().unwrap()))
    }
}

/// Samples `m` at the times `mids` in `(s, t)` given `m(s) = a`, `m(t) = b`.
fn fill_bridge<R: Rng + ?Sized>(
    s: f64,
    a: f64,
    t: f64,
    b: f64,
    mids: &[f64],
    rng: &mut R,
    out: &mut Vec<(f64, f64)>,
) {
    if mids.is_empty() {
        return;
    }
    if b <= a {
        out.extend(mids.iter().map(|&u| (u, a)));
        return;
    }
    // the point carrying b sits uniformly in (s, t]; the other points of the
    // window form a Poisson process restricted below b
    let loc = s + (t - s) * (1.0 - rng.random::<f64>());
    let mut cur_t = s;
    let mut cur = a;
    for &u in mids {
        if u >= loc {
            out.push((u, b));
            continue;
        }
        // P(max below b on (cur_t, u] ≤ x) = exp(−(u − cur_t)(1/x − 1/b))
        let e: f64 = -(1.0 - rng.random::<f64>()).ln();
        let x = 1.0 / (e / (u - cur_t) + 1.0 / b);
        cur = cur.max(x);
        cur_t = u;
        out.push((u, cur));
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty()
        || times[0] <= 0.0
        || times.windows(2).any(|w| w[1] <= w[0])
        || times.iter().any(|t| !t.is_finite())
    {
        return Err(Error::param("grid", "strictly increasing positive times", format!("{times:?}")));
    }
    Ok(())
}

/// Exact joint sample of `m` on an increasing grid via max-stability.
pub fn sample_on_grid<R: Rng + ?Sized>(times: &[f64], rng: &mut R) -> Result<ExtremalPath> {
    check_times(times)?;
    let mut recs = Vec::new();
    let mut prev_t = 0.0;
    let mut cur = 0.0f64;
    for &t in times {
        let m = sample_frechet(t - prev_t, rng);
        if m > cur {
            cur = m;
            recs.push((t, m));
        }
        prev_t = t;
    }
    Ok(ExtremalPath {
        times: recs.iter().map(|r| r.0).collect(),
        values: recs.iter().map(|r| r.1).collect(),
        horizon: *times.last().unwrap(),
    })
}

/// Cross-check sampler: the Poisson points above `eps` only. The path reads 0
/// wherever the true maximum is below `eps`, an event of probability
/// `exp(−t/eps)` at time `t`.
pub fn sample_truncated_ppp<R: Rng + ?Sized>(horizon: f64, eps: f64, rng: &mut R) -> Result<ExtremalPath> {
    if !(horizon > 0.0) || !(eps > 0.0) {
        return Err(Error::param("horizon, eps", "both positive", format!("{horizon}, {eps}")));
    }
    let rate = 1.0 / eps;
    let mut t = 0.0;
    let mut cur = 0.0f64;
    let mut recs = Vec::new();
    loop {
        t += -(1.0 - rng.random::<f64>()).ln() / rate;
        if t > horizon {
            break;
        }
        let x = eps / (1.0 - rng.random::<f64>());
        if x > cur {
            cur = x;
            recs.push((t, x));
        }
    }
    ExtremalPath::from_records(&recs, horizon)
}

/// `m⁻¹(t) = inf{s : m(s) > t}`, with `cap` standing in for "not within the
/// horizon".
#[derive(Clone, Debug, PartialEq)]
pub struct InversePath {
    initial: f64,
    at: Vec<f64>,
    values: Vec<f64>,
    cap: f64,
}

impl InversePath {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.at.partition_point(|&v| v <= t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn is_capped(&self, t: f64) -> bool {
        self.at.last().is_none_or(|&v| t >= v)
    }

    /// As a step function of `t` on `[0, horizon]`.
    pub fn to_step(&self, horizon: f64) -> Result<CadlagStep> {
        let jumps: Vec<(f64, f64)> = self
            .at
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .filter(|j| j.0 <= horizon)
            .collect();
        CadlagStep::new(self.initial, &jumps, horizon)
    }
}

/// Exact inverse of a record path; the sentinel is the path horizon.
pub fn invert_path(p: &ExtremalPath) -> InversePath {
    let cap = p.horizon;
    if p.times.is_empty() {
        return InversePath {
            initial: cap,
            at: Vec::new(),
            values: Vec::new(),
            cap,
        };
    }
    let mut values: Vec<f64> = p.times[1..].to_vec();
    values.push(cap);
    InversePath {
        initial: p.times[0],
        at: p.values.clone(),
        values,
        cap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::{ks_test, ks_two_sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn marginal_values() {
        assert!((marginal_cdf(1.0, 1.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((marginal_cdf(2.0, 4.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((marginal_cdf(1.0, 1e300) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_on_grid(&[1.0, 0.5], &mut rng).is_err());
        assert!(sample_on_grid(&[0.0, 0.5], &mut rng).is_err());
        assert!(sample_on_grid(&[], &mut rng).is_err());
    }

    #[test]
    fn seeds_differ() {
        let a = sample_on_grid(&[1.0], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_on_grid(&[1.0], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a.eval(1.0), b.eval(1.0));
    }

    #[test]
    fn reciprocal_is_unit_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 100_000;
        let mean: f64 = (0..reps)
            .map(|_| 1.0 / sample_on_grid(&[1.0], &mut rng).unwrap().eval(1.0))
            .sum::<f64>()
            / reps as f64;
        assert!((mean - 1.0).abs() < 0.02);
    }

    #[test]
    fn second_grid_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_on_grid(&[1.0, 2.0], &mut rng).unwrap().eval(2.0))
            .collect();
        assert!(ks_test(&xs, |x| marginal_cdf(2.0, x)).unwrap().passes(0.0));
    }

    #[test]
    fn inversion_examples() {
        let p = ExtremalPath::from_records(&[(2.0, 5.0)], 10.0).unwrap();
        let inv = invert_path(&p);
        assert_eq!(inv.eval(0.0), 2.0);
        assert_eq!(inv.eval(4.999), 2.0);
        assert_eq!(inv.eval(5.0), 10.0);
        assert!(inv.is_capped(5.0));
        let empty = ExtremalPath::from_records(&[], 7.0).unwrap();
        assert_eq!(invert_path(&empty).eval(0.3), 7.0);
    }

    #[test]
    fn galois_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid: Vec<f64> = (1..=50).map(|k| k as f64 * 0.2).collect();
        for _ in 0..200 {
            let p = sample_on_grid(&grid, &mut rng).unwrap();
            let inv = invert_path(&p);
            for &s in &grid[..grid.len() - 1] {
                for t in [0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
                    assert_eq!(p.eval(s) > t, inv.eval(t) <= s);
                }
                assert!(inv.eval(p.eval(s)) > s || p.eval(s) == 0.0);
            }
            for &s in &grid {
                if p.eval(s) > 0.0 {
                    // m⁻¹(m(s)) ≤ s is the left-limit form; m⁻¹(m(s)−) ≤ s
                    assert!(inv.eval(p.eval(s) * (1.0 - 1e-12)) <= s);
                }
            }
        }
    }

    #[test]
    fn refinement_keeps_coarse_values_and_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let coarse = [1.0, 2.0];
        let mut mids = Vec::new();
        for _ in 0..20_000 {
            let p = sample_on_grid(&coarse, &mut rng).unwrap();
            let fine = p.refine(&coarse, &[0.5, 1.5, 2.5], &mut rng).unwrap();
            for &t in &coarse {
                assert_eq!(fine.eval(t), p.eval(t));
            }
            for t in [0.5, 1.2, 1.5, 1.99] {
                assert!(fine.eval(t) >= p.eval(t));
            }
            mids.push(fine.eval(1.5));
        }
        assert!(ks_test(&mids, |x| marginal_cdf(1.5, x)).unwrap().passes(0.0));
    }

    #[test]
    fn truncated_ppp_agrees_above_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 0.05;
        let a: Vec<f64> = (0..20_000)
            .map(|_| sample_truncated_ppp(1.0, eps, &mut rng).unwrap().eval(1.0))
            .collect();
        let b: Vec<f64> = (0..20_000)
            .map(|_| sample_on_grid(&[1.0], &mut rng).unwrap().eval(1.0))
            .collect();
        // bias exp(−1/eps) is negligible here
        assert!(ks_two_sample(&a, &b, 0.01).unwrap().passes(0.0));
        let zeros = a.iter().filter(|&&x| x == 0.0).count();
        assert!(zeros <= 2);
    }
}
