//! Closed-form bias expressions for the scale-up estimators, used as
//! independent checks on the estimators and the adjustment.

mod checks;

use serde::{Deserialize, Serialize};

pub use checks::{run_checks, CheckConfig, CheckOutcome};

use crate::error::{NsumError, Result};
use crate::simulate::BiasProfile;

/// Population-level degree summaries for one hidden group and the known groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTruth {
    pub total_population: f64,
    pub hidden_size: f64,
    /// Mean degree of members of the hidden group.
    pub hidden_mean_degree: f64,
    /// Mean degree over the whole sampling frame.
    pub frame_mean_degree: f64,
    pub known_sizes: Vec<f64>,
    pub known_mean_degrees: Vec<f64>,
}

impl PopulationTruth {
    /// Summarises a fully observed population where `membership[i]` is the
    /// group of node `i`. Group `hidden` plays the hidden population and every
    /// other group is known.
    pub fn from_groups(degrees: &[f64], membership: &[usize], hidden: usize) -> Result<Self> {
        if degrees.len() != membership.len() {
            return Err(NsumError::LengthMismatch(degrees.len(), membership.len()));
        }
        let groups = membership.iter().max().map_or(0, |m| m + 1);
        if hidden >= groups {
            return Err(NsumError::IndexOutOfRange(hidden));
        }
        let mut size = vec![0.0; groups];
        let mut total = vec![0.0; groups];
        for (&d, &g) in degrees.iter().zip(membership) {
            size[g] += 1.0;
            total[g] += d;
        }
        if size.contains(&0.0) {
            return Err(NsumError::Degenerate("every group needs at least one member".into()));
        }
        let mean = |g: usize| total[g] / size[g];
        let known: Vec<usize> = (0..groups).filter(|&g| g != hidden).collect();
        Ok(PopulationTruth {
            total_population: degrees.len() as f64,
            hidden_size: size[hidden],
            hidden_mean_degree: mean(hidden),
            frame_mean_degree: degrees.iter().sum::<f64>() / degrees.len() as f64,
            known_sizes: known.iter().map(|&g| size[g]).collect(),
            known_mean_degrees: known.iter().map(|&g| mean(g)).collect(),
        })
    }
}

/// Approximate bias of the known-degree estimator:
/// `N_H (d̄_H / d̄_F - 1)`.
pub fn bias_known_degrees(truth: &PopulationTruth) -> Result<f64> {
    if !(truth.frame_mean_degree > 0.0) {
        return Err(NsumError::Degenerate(format!("frame mean degree is {}", truth.frame_mean_degree)));
    }
    Ok(truth.hidden_size * (truth.hidden_mean_degree / truth.frame_mean_degree - 1.0))
}

/// Approximate bias of the estimated-degree estimator:
/// `N_H (d̄_H Σ N_k / Σ d̄_k N_k - 1)`.
pub fn bias_estimated_degrees(truth: &PopulationTruth) -> Result<f64> {
    if truth.known_sizes.len() != truth.known_mean_degrees.len() {
        return Err(NsumError::LengthMismatch(truth.known_sizes.len(), truth.known_mean_degrees.len()));
    }
    let sizes: f64 = truth.known_sizes.iter().sum();
    let weighted: f64 = truth.known_sizes.iter().zip(&truth.known_mean_degrees).map(|(n, d)| n * d).sum();
    if !(weighted > 0.0) {
        return Err(NsumError::Degenerate("known subpopulations have no ties (Σ d̄_k N_k = 0)".into()));
    }
    Ok(truth.hidden_size * (truth.hidden_mean_degree * sizes / weighted - 1.0))
}

/// Bias of `N̂_k` under the degree-biased binomial model with known degrees:
/// `N_k (Σ d_i f_k(d_i) / Σ d_i - 1)`.
pub fn bias_fk(degrees: &[f64], profile: &BiasProfile, k: usize, size: f64) -> Result<f64> {
    if k >= profile.c.len() || k >= profile.exponents.len() {
        return Err(NsumError::IndexOutOfRange(k));
    }
    let f = profile.f(k, degrees);
    let sum_d: f64 = degrees.iter().sum();
    if sum_d == 0.0 {
        return Err(NsumError::ZeroDegreeSum);
    }
    let sum_df: f64 = degrees.iter().zip(&f).map(|(d, f)| d * f).sum();
    Ok(size * (sum_df / sum_d - 1.0))
}

/// `E(N_k / N̂_k) ≈ Σ d_i / Σ d_i f(d_i)`.
pub fn expected_inverse_ratio(degrees: &[f64], f: &[f64]) -> f64 {
    let sum_d: f64 = degrees.iter().sum();
    sum_d / degrees.iter().zip(f).map(|(d, f)| d * f).sum::<f64>()
}

/// The slope statistic whose expectation is linear in the inverse ratio:
/// `Σ d_i² f(d_i) / Σ d_i f(d_i)`.
pub fn expected_slope_statistic(degrees: &[f64], f: &[f64]) -> f64 {
    let (num, den) = degrees.iter().zip(f).fold((0.0, 0.0), |(n, m), (d, f)| (n + d * d * f, m + d * f));
    num / den
}

/// `γ₁` for `f(d) = a + g(d) c`, in closed form:
/// `(Σd)(Σdg) / (a [(Σd²)(Σdg) - (Σd)(Σd²g)])`.
///
/// This is the value the two-point solve [`gamma1_two_point`] returns for any
/// `c₁ ≠ c₂`. It is negative when larger `c` means larger `g` bias, since the
/// inverse ratio falls as the slope statistic rises.
pub fn gamma1_closed_form(degrees: &[f64], g: &[f64], a: f64) -> Result<f64> {
    if degrees.len() != g.len() {
        return Err(NsumError::LengthMismatch(degrees.len(), g.len()));
    }
    if a == 0.0 {
        return Err(NsumError::Degenerate("a must be nonzero".into()));
    }
    let (mut s, mut q, mut t, mut r) = (0.0, 0.0, 0.0, 0.0);
    for (&d, &gi) in degrees.iter().zip(g) {
        s += d;
        q += d * d;
        t += d * gi;
        r += d * d * gi;
    }
    let bracket = q * t - s * r;
    if bracket == 0.0 || bracket.abs() <= 1e-14 * (q * t).abs().max((s * r).abs()) {
        return Err(NsumError::Degenerate("γ₁ denominator vanishes (g constant?)".into()));
    }
    Ok(s * t / (a * bracket))
}

/// Slope of the line through the two points
/// `(slope statistic, inverse ratio)` at `c₁` and `c₂`.
pub fn gamma1_two_point(degrees: &[f64], g: &[f64], a: f64, c1: f64, c2: f64) -> Result<f64> {
    if degrees.len() != g.len() {
        return Err(NsumError::LengthMismatch(degrees.len(), g.len()));
    }
    let f = |c: f64| -> Vec<f64> { g.iter().map(|gi| a + gi * c).collect() };
    let (f1, f2) = (f(c1), f(c2));
    let rise = expected_inverse_ratio(degrees, &f2) - expected_inverse_ratio(degrees, &f1);
    let run = expected_slope_statistic(degrees, &f2) - expected_slope_statistic(degrees, &f1);
    if run == 0.0 || !run.is_finite() {
        return Err(NsumError::Degenerate(format!("two-point solve at c = {c1}, {c2} has no run")));
    }
    Ok(rise / run)
}
