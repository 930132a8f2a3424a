//! Degree-ratio adjustment of basic scale-up estimates.
//!
//! Two regressions. The first stage regresses each subpopulation's
//! column-mean-scaled responses on respondent degrees; its slope measures how
//! strongly well-connected respondents over-report that group. The second
//! stage regresses `N_k / N̂_k` on those slopes across the known
//! subpopulations. Evaluating the fitted line at a hidden subpopulation's slope
//! predicts its inverse degree ratio `1 / δ̂`, and the adjusted size is
//! `N̂ / δ̂`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::estimators::{column_total, estimate_degrees, scaleup_ratio, DegreeEstimates, DegreeSource};
use crate::survey::ArdSurvey;

/// Closed-form simple least-squares fit `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub slope: f64,
    /// `SSE / (n - 2)`, or 0 for two points.
    pub residual_variance: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl OlsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(NsumError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(NsumError::TooFewPoints { needed: 2, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let (dx, dy) = (xi - mx, yi - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // rounding noise in the mean of a constant vector must still count as zero
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sxx > n as f64 * (1e-12 * scale).powi(2)) {
        return Err(NsumError::ZeroVariance);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let residual_variance = if n > 2 { sse / (n - 2) as f64 } else { 0.0 };
    Ok(OlsFit { intercept, slope, residual_variance, r_squared, n })
}

/// `z_i = y_i / mean(y)`. An all-zero column cannot be scaled.
pub fn scale_responses(column: &[u32]) -> Result<Vec<f64>> {
    let total: u64 = column.iter().map(|&y| u64::from(y)).sum();
    if total == 0 {
        return Err(NsumError::Degenerate("response column mean is zero".into()));
    }
    let inv_mean = column.len() as f64 / total as f64;
    Ok(column.iter().map(|&y| f64::from(y) * inv_mean).collect())
}

/// First-stage fit for every subpopulation. Known subpopulations regress on
/// their leave-one-out degrees, hidden ones on the full degrees. Failures are
/// kept per subpopulation rather than aborting.
pub fn first_stage_slopes(survey: &ArdSurvey, degrees: &DegreeEstimates) -> BTreeMap<usize, Result<OlsFit>> {
    (0..survey.n_subpopulations())
        .map(|k| {
            let fit = scale_responses(survey.column(k))
                .map_err(|_| NsumError::ZeroColumn(k))
                .and_then(|z| ols(degrees.for_subpopulation(survey, k), &z));
            (k, fit)
        })
        .collect()
}

/// Second-stage regression of `N_k / N̂_k^LOO` on first-stage slopes.
pub fn fit_second_stage(ratios: &[f64], slopes: &[f64]) -> Result<OlsFit> {
    if ratios.len() != slopes.len() {
        return Err(NsumError::LengthMismatch(ratios.len(), slopes.len()));
    }
    if ratios.len() < 2 {
        return Err(NsumError::TooFewPoints { needed: 2, got: ratios.len() });
    }
    ols(slopes, ratios)
}

/// One known subpopulation's contribution to the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondStagePoint {
    pub index: usize,
    pub slope: f64,
    pub ratio: f64,
}

fn basic_estimate(survey: &ArdSurvey, degrees: &DegreeEstimates, k: usize) -> Result<f64> {
    let d = degrees.for_subpopulation(survey, k);
    scaleup_ratio(survey.total_population() as f64, column_total(survey, k), d.iter().sum())
}

/// Collects `(β̂₁,k, N_k / N̂_k^LOO)` for every known subpopulation with a
/// usable first stage; the rest come back as `(index, reason)`.
pub fn second_stage_points(
    survey: &ArdSurvey,
    degrees: &DegreeEstimates,
    slopes: &BTreeMap<usize, Result<OlsFit>>,
) -> (Vec<SecondStagePoint>, Vec<(usize, NsumError)>) {
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for k in survey.known_indices() {
        let slope = match slopes.get(&k) {
            Some(Ok(fit)) => fit.slope,
            Some(Err(e)) => {
                dropped.push((k, e.clone()));
                continue;
            }
            None => continue,
        };
        match basic_estimate(survey, degrees, k) {
            Ok(est) if est > 0.0 => {
                let ratio = survey.known_size(k).unwrap() as f64 / est;
                points.push(SecondStagePoint { index: k, slope, ratio });
            }
            Ok(_) => dropped.push((k, NsumError::ZeroColumn(k))),
            Err(e) => dropped.push((k, e)),
        }
    }
    (points, dropped)
}

/// Fits the second stage over all known subpopulations of `survey`.
pub fn second_stage(survey: &ArdSurvey, degrees: &DegreeEstimates) -> Result<(OlsFit, Vec<SecondStagePoint>)> {
    let slopes = first_stage_slopes(survey, degrees);
    let (points, _) = second_stage_points(survey, degrees, &slopes);
    let ratios: Vec<f64> = points.iter().map(|p| p.ratio).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.slope).collect();
    Ok((fit_second_stage(&ratios, &xs)?, points))
}

/// What to do when the predicted inverse degree ratio `γ̂₀ + γ̂₁ β̂` is not
/// positive, or (for `Clamp`) when `δ̂` falls outside the bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DeltaGuard {
    /// Keep the unadjusted estimate and report a diagnostic.
    #[default]
    Fail,
    /// Force `δ̂` into `[min, max]`.
    Clamp { min: f64, max: f64 },
}

impl FromStr for DeltaGuard {
    type Err = NsumError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "fail" {
            return Ok(DeltaGuard::Fail);
        }
        let bad = || NsumError::Config(format!("guard `{s}`: expected `fail` or `clamp:<min>,<max>`"));
        let bounds = s.strip_prefix("clamp:").ok_or_else(bad)?;
        let (lo, hi) = bounds.split_once(',').ok_or_else(bad)?;
        let min: f64 = lo.trim().parse().map_err(|_| bad())?;
        let max: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(min > 0.0 && min <= max && max.is_finite()) {
            return Err(NsumError::Config(format!("guard bounds must satisfy 0 < min <= max, got {min}, {max}")));
        }
        Ok(DeltaGuard::Clamp { min, max })
    }
}

impl fmt::Display for DeltaGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaGuard::Fail => f.write_str("fail"),
            DeltaGuard::Clamp { min, max } => write!(f, "clamp:{min},{max}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjustStatus {
    Adjusted,
    Clamped,
    /// Nonpositive predicted inverse ratio; the estimate was left unadjusted.
    Guarded,
}

/// Applies the guard to a predicted inverse degree ratio.
pub fn degree_ratio(inverse_ratio: f64, guard: DeltaGuard) -> (Option<f64>, AdjustStatus) {
    let raw = if inverse_ratio > 0.0 && inverse_ratio.is_finite() { Some(1.0 / inverse_ratio) } else { None };
    match (guard, raw) {
        (DeltaGuard::Fail, Some(d)) => (Some(d), AdjustStatus::Adjusted),
        (DeltaGuard::Fail, None) => (None, AdjustStatus::Guarded),
        (DeltaGuard::Clamp { min, max }, Some(d)) if (min..=max).contains(&d) => (Some(d), AdjustStatus::Adjusted),
        (DeltaGuard::Clamp { min, max }, Some(d)) => (Some(d.clamp(min, max)), AdjustStatus::Clamped),
        // the inverse ratio crossed zero from above, where δ̂ diverges
        (DeltaGuard::Clamp { max, .. }, None) => (Some(max), AdjustStatus::Clamped),
    }
}

/// Per-subpopulation view of a fitted adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopulationFit {
    pub index: usize,
    pub label: String,
    pub known_size: Option<u64>,
    /// `N̂_k^LOO` for known subpopulations, `N̂_k` with full degrees otherwise.
    pub basic_estimate: Option<f64>,
    pub first_stage: Option<OlsFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_stage_error: Option<String>,
    pub in_second_stage: bool,
    pub delta_hat: Option<f64>,
    pub adjusted_estimate: Option<f64>,
}

/// Result of adjusting one target subpopulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentFit {
    pub target: usize,
    pub target_label: String,
    pub degree_source: DegreeSource,
    pub second_stage: OlsFit,
    pub second_stage_points: Vec<SecondStagePoint>,
    pub subpopulations: Vec<SubpopulationFit>,
    pub basic_estimate: f64,
    pub target_slope: f64,
    /// `γ̂₀ + γ̂₁ β̂₁,target`.
    pub inverse_ratio: f64,
    pub delta_hat: Option<f64>,
    /// `N̂ / δ̂`, or the unadjusted estimate when guarded.
    pub adjusted_estimate: f64,
    pub status: AdjustStatus,
    pub diagnostics: Vec<String>,
}

/// Runs the adjustment for `target`.
///
/// A hidden target is handled directly. A known target is first treated as
/// hidden: its size is masked and, for estimated degrees, every degree vector
/// is rebuilt without it, so the result never reads the target's own size.
/// (`degrees` is then only consulted for its source.)
pub fn adjust(
    survey: &ArdSurvey,
    degrees: &DegreeEstimates,
    target: usize,
    guard: DeltaGuard,
) -> Result<AdjustmentFit> {
    survey.check_index(target)?;
    if !survey.is_known(target) {
        return adjust_hidden(survey, degrees, target, guard);
    }
    let masked = survey.with_hidden(target)?;
    match degrees.source() {
        DegreeSource::True => adjust_hidden(&masked, degrees, target, guard),
        DegreeSource::Estimated => adjust_hidden(&masked, &estimate_degrees(&masked)?, target, guard),
    }
}

fn adjust_hidden(
    survey: &ArdSurvey,
    degrees: &DegreeEstimates,
    target: usize,
    guard: DeltaGuard,
) -> Result<AdjustmentFit> {
    let slopes = first_stage_slopes(survey, degrees);
    let target_slope = slopes[&target].clone()?.slope;
    let basic = basic_estimate(survey, degrees, target)?;

    let (points, dropped) = second_stage_points(survey, degrees, &slopes);
    let mut diagnostics = Vec::new();
    for (k, reason) in &dropped {
        let msg = format!("`{}` left out of the second stage: {reason}", survey.label(*k));
        log::warn!("{msg}");
        diagnostics.push(msg);
    }
    let ratios: Vec<f64> = points.iter().map(|p| p.ratio).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.slope).collect();
    let second = fit_second_stage(&ratios, &xs)?;

    let inverse_ratio = second.predict(target_slope);
    let (delta_hat, status) = degree_ratio(inverse_ratio, guard);
    let adjusted_estimate = delta_hat.map_or(basic, |d| basic / d);
    match status {
        AdjustStatus::Guarded => diagnostics.push(format!(
            "predicted inverse degree ratio {inverse_ratio:.6} for `{}` is not positive; estimate left unadjusted",
            survey.label(target)
        )),
        AdjustStatus::Clamped => diagnostics.push(format!(
            "degree ratio for `{}` clamped to {:.6} (inverse ratio {inverse_ratio:.6})",
            survey.label(target),
            delta_hat.unwrap()
        )),
        AdjustStatus::Adjusted => {}
    }

    let subpopulations = (0..survey.n_subpopulations())
        .map(|k| {
            let fit = &slopes[&k];
            let basic_k = basic_estimate(survey, degrees, k).ok();
            let delta = fit.as_ref().ok().and_then(|f| {
                let inv = second.predict(f.slope);
                (inv > 0.0).then(|| 1.0 / inv)
            });
            SubpopulationFit {
                index: k,
                label: survey.label(k).to_string(),
                known_size: survey.known_size(k),
                basic_estimate: basic_k,
                first_stage: fit.as_ref().ok().copied(),
                first_stage_error: fit.as_ref().err().map(ToString::to_string),
                in_second_stage: points.iter().any(|p| p.index == k),
                delta_hat: delta,
                adjusted_estimate: basic_k.zip(delta).map(|(b, d)| b / d),
            }
        })
        .collect();

    Ok(AdjustmentFit {
        target,
        target_label: survey.label(target).to_string(),
        degree_source: degrees.source(),
        second_stage: second,
        second_stage_points: points,
        subpopulations,
        basic_estimate: basic,
        target_slope,
        inverse_ratio,
        delta_hat,
        adjusted_estimate,
        status,
        diagnostics,
    })
}
