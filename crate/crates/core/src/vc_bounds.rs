//! Closed-form Vapnik–Chervonenkis calculators: growth function bounds, VC
//! dimension bounds for the families of sets a pivot index can discard, the
//! uniform convergence probability bound and the matching sample size.
//!
//! Probability bounds are returned raw; anything `>= 1` is vacuous and can be
//! flagged with [`is_vacuous`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metric families with a VC bound for pivot discard sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceFamily {
    /// `(ℝ^d, L²)`
    L2,
    /// `(ℝ^d, L^∞)`
    Linf,
    /// Hamming cube `Σ^d`.
    Hamming,
}

impl SpaceFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceFamily::L2 => "l2",
            SpaceFamily::Linf => "linf",
            SpaceFamily::Hamming => "hamming",
        }
    }
}

impl fmt::Display for SpaceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(SpaceFamily::L2),
            "linf" => Ok(SpaceFamily::Linf),
            "hamming" => Ok(SpaceFamily::Hamming),
            other => Err(Error::invalid(format!("unknown space family {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VcBoundInput {
    pub family: SpaceFamily,
    pub d: u64,
    pub k: u64,
}

impl VcBoundInput {
    pub fn new(family: SpaceFamily, d: u64, k: u64) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::invalid(format!(
                "VC bound needs d >= 1 and k >= 1, got d={d}, k={k}"
            )));
        }
        Ok(VcBoundInput { family, d, k })
    }
}

/// Accuracy/confidence parameters of a uniform convergence statement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub eps: f64,
    pub eta: f64,
    pub n: u64,
    pub delta: f64,
}

impl BoundParams {
    pub fn new(eps: f64, eta: f64, n: u64, delta: f64) -> Result<Self> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(eps) || !unit(eta) {
            return Err(Error::invalid(format!(
                "eps and eta must lie in (0, 1), got eps={eps}, eta={eta}"
            )));
        }
        if n == 0 || delta.is_nan() || delta <= 0.0 || delta.is_infinite() {
            return Err(Error::invalid("n and delta must be positive"));
        }
        Ok(BoundParams { eps, eta, n, delta })
    }

    pub fn convergence_bound(&self) -> f64 {
        vc_convergence_bound(self.n, self.delta, self.eps)
    }

    pub fn sample_size(&self) -> u64 {
        sample_size_bound(self.delta, self.eps, self.eta)
    }
}

/// Log base used when evaluating the sample size formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    fn log(&self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

pub fn is_vacuous(probability_bound: f64) -> bool {
    probability_bound.is_nan() || probability_bound >= 1.0
}

/// Upper bound on the growth function `G(n)` of a family of VC dimension `Δ`:
/// `n·ln 2` while `n ≤ Δ`, then `Δ·(1 + ln(n/Δ))`.
pub fn growth_bound(n: u64, delta: f64) -> f64 {
    let n = n as f64;
    if n <= delta {
        n * std::f64::consts::LN_2
    } else {
        delta * (1.0 + (n / delta).ln())
    }
}

/// VC dimension bound `Δ_a + Δ_b + 1` for unions `{A ∪ B}` of two families.
pub fn union_vc_bound(delta_a: f64, delta_b: f64) -> f64 {
    delta_a + delta_b + 1.0
}

/// VC dimension bound `2·Δ·k·ln(3k)` for `k`-fold intersections.
pub fn intersection_vc_bound(delta: f64, k: u64) -> f64 {
    let k = k as f64;
    2.0 * delta * k * (3.0 * k).ln()
}

/// VC dimension bound for the family of discard sets of `k` pivots.
///
/// * L²: `k(8d + 12)·ln(6k)`
/// * L^∞: `k(16d + 4)·ln(6k)`
/// * Hamming: `k(8d + 8·log₂d + 4)·ln(6k)`
pub fn pivot_family_vc_bound(input: VcBoundInput) -> f64 {
    let d = input.d as f64;
    let k = input.k as f64;
    let per_pivot = match input.family {
        SpaceFamily::L2 => 8.0 * d + 12.0,
        SpaceFamily::Linf => 16.0 * d + 4.0,
        SpaceFamily::Hamming => 8.0 * d + 8.0 * d.log2() + 4.0,
    };
    k * per_pivot * (6.0 * k).ln()
}

/// Exponent of [`vc_convergence_bound`]:
/// `(Δ(1 + ln(2n/Δ))/n − (ε − 1/n)²)·n`.
pub fn vc_convergence_exponent(n: u64, delta: f64, eps: f64) -> f64 {
    let nf = n as f64;
    let capacity = delta * (1.0 + (2.0 * nf / delta).ln()) / nf;
    let gap = eps - 1.0 / nf;
    (capacity - gap * gap) * nf
}

/// `P[sup_A |μ_n(A) − μ(A)| > ε] < 4·exp(exponent)`, returned raw.
pub fn vc_convergence_bound(n: u64, delta: f64, eps: f64) -> f64 {
    4.0 * vc_convergence_exponent(n, delta, eps).exp()
}

/// Smallest integer `n ≥ (128/ε²)(Δ·ln(2e²/ε) + ln(8/η))`.
pub fn sample_size_bound(delta: f64, eps: f64, eta: f64) -> u64 {
    sample_size_bound_with_base(delta, eps, eta, LogBase::Natural)
}

/// [`sample_size_bound`] with a selectable logarithm base.
pub fn sample_size_bound_with_base(delta: f64, eps: f64, eta: f64, base: LogBase) -> u64 {
    let e2 = std::f64::consts::E * std::f64::consts::E;
    let rhs = 128.0 / (eps * eps) * (delta * base.log(2.0 * e2 / eps) + base.log(8.0 / eta));
    rhs.ceil() as u64
}
