//! Riemann zeta and polylogarithm on the real line, enough for the Zipf
//! offspring family near `s = 1`.

use statrs::function::gamma::gamma;

// B_2, B_4, .., B_16
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Number of directly summed terms for `s > 1`.
pub const ZETA_TERMS: usize = 1_000_000;

/// `Σ_{k≥N} k^{-s}` by Euler–Maclaurin with `terms` Bernoulli corrections.
fn em_tail(s: f64, n: f64, terms: usize) -> f64 {
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut rising = s; // s(s+1)..(s+2j-2)
    let mut fact = 2.0; // (2j)!
    let mut npow = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate().take(terms) {
        tail += b / fact * rising * npow;
        let j = j as f64 + 1.0;
        rising *= (s + 2.0 * j - 1.0) * (s + 2.0 * j);
        fact *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
        npow /= n * n;
    }
    tail
}

fn partial_sum(s: f64, n: usize) -> f64 {
    // smallest terms first, compensated
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for k in (1..n).rev() {
        let y = (k as f64).powf(-s) - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Riemann zeta for real `s ≠ 1`. For `1 < s < 3` sums `10⁶` terms and closes
/// with the Euler–Maclaurin tail; `s ≥ 3` and `0 ≤ s < 1` use a short sum with
/// the same tail (analytic continuation); `s < 0` uses the reflection formula.
pub fn zeta(s: f64) -> f64 {
    if s == 1.0 {
        return f64::INFINITY;
    }
    if s >= 3.0 {
        // terms decay fast enough for the short sum
        const N: usize = 64;
        return partial_sum(s, N) + em_tail(s, N as f64, 8);
    }
    if s > 1.0 {
        return partial_sum(s, ZETA_TERMS) + em_tail(s, ZETA_TERMS as f64, 3);
    }
    if s >= 0.0 {
        const N: usize = 64;
        return partial_sum(s, N) + em_tail(s, N as f64, 8);
    }
    let pi = std::f64::consts::PI;
    2f64.powf(s) * pi.powf(s - 1.0) * (pi * s / 2.0).sin() * gamma(1.0 - s) * zeta(1.0 - s)
}

/// Zeta values `ζ(σ), ζ(σ−1), ..` cached for the expansion around `z = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polylog {
    order: f64,
    gamma_term: f64,
    zetas: Vec<f64>,
}

const NEAR_ONE: f64 = 0.1;

impl Polylog {
    /// `Li_σ` for non-integer `σ > 1`.
    pub fn new(order: f64) -> Self {
        assert!(order > 1.0 && order.fract() != 0.0, "polylog order {order}");
        let zetas = (0..40).map(|k| zeta(order - k as f64)).collect();
        Polylog {
            order,
            gamma_term: gamma(1.0 - order),
            zetas,
        }
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn zeta_at_order(&self) -> f64 {
        self.zetas[0]
    }

    /// `Li_σ(z)` for `z` in `[0, 1]`.
    pub fn eval(&self, z: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&z));
        if z == 1.0 {
            return self.zetas[0];
        }
        if z == 0.0 {
            return 0.0;
        }
        if z > 1.0 - NEAR_ONE {
            let mu = -z.ln();
            return self.zetas[0] + self.singular_excess(mu);
        }
        let mut sum = 0.0;
        let mut zk = z;
        let mut k = 1.0f64;
        loop {
            let term = zk * k.powf(-self.order);
            sum += term;
            if term <= 1e-18 * sum {
                return sum;
            }
            zk *= z;
            k += 1.0;
        }
    }

    /// `Li_σ(e^{−μ}) − ζ(σ) = Γ(1−σ)μ^{σ−1} + Σ_{k≥1} ζ(σ−k)(−μ)^k/k!`,
    /// accurate for small `μ` with no cancellation against `ζ(σ)`.
    pub fn singular_excess(&self, mu: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&mu));
        let mut sum = self.gamma_term * mu.powf(self.order - 1.0);
        let mut pw = 1.0;
        for (k, z) in self.zetas.iter().enumerate().skip(1) {
            pw *= -mu / k as f64;
            let term = z * pw;
            sum += term;
            if term.abs() < 1e-19 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    }

    /// As `singular_excess` but dropping the linear term: the part of
    /// `Li_σ(e^{−μ}) − ζ(σ) + ζ(σ−1)μ`.
    pub fn singular_excess_beyond_linear(&self, mu: f64) -> f64 {
        self.singular_excess(mu) + self.zetas[1] * mu
    }
}

/// `ln(1 − q) + q` without cancellation for small `q`.
pub fn log1m_plus(q: f64) -> f64 {
    if q < 0.01 {
        let mut sum = 0.0;
        let mut pw = q;
        for j in 2..40 {
            pw *= q;
            let term = pw / j as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        -sum
    } else {
        (-q).ln_1p() + q
    }
}
