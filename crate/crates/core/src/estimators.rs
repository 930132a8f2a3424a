//! Respondent degree estimation and the basic scale-up estimator.
//!
//! Respondents are a simple random sample, so the inclusion probability
//! `n / N` cancels out of every ratio below and is never an input.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::survey::ArdSurvey;

/// Where a degree vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeSource {
    /// Ratio-of-sums estimates from the known subpopulations.
    Estimated,
    /// Supplied directly (e.g. network degrees in a simulation).
    True,
}

/// Per-respondent network sizes: the full estimate plus one leave-one-out
/// vector per known subpopulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeEstimates {
    full: Vec<f64>,
    leave_one_out: BTreeMap<usize, Vec<f64>>,
    source: DegreeSource,
}

impl DegreeEstimates {
    /// Wraps a supplied degree vector. Every leave-one-out view is the vector itself.
    pub fn from_true(degrees: Vec<f64>, survey: &ArdSurvey) -> Result<Self> {
        if degrees.len() != survey.n_respondents() {
            return Err(NsumError::LengthMismatch(degrees.len(), survey.n_respondents()));
        }
        if let Some(i) = degrees.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(NsumError::InvalidSurvey(format!(
                "degree of respondent {i} is {}, expected a finite nonnegative value",
                degrees[i]
            )));
        }
        Ok(DegreeEstimates { full: degrees, leave_one_out: BTreeMap::new(), source: DegreeSource::True })
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    pub fn source(&self) -> DegreeSource {
        self.source
    }

    /// Degrees estimated without subpopulation `k`. `None` if `k` has no
    /// leave-one-out vector (hidden subpopulations).
    pub fn leave_one_out(&self, k: usize) -> Option<&[f64]> {
        match self.source {
            DegreeSource::True => Some(&self.full),
            DegreeSource::Estimated => self.leave_one_out.get(&k).map(Vec::as_slice),
        }
    }

    /// The regressor Algorithm-style adjustment uses for `k`: leave-one-out
    /// for a known subpopulation, the full vector otherwise.
    pub(crate) fn for_subpopulation(&self, survey: &ArdSurvey, k: usize) -> &[f64] {
        if survey.is_known(k) {
            self.leave_one_out(k).unwrap_or(&self.full)
        } else {
            &self.full
        }
    }
}

fn known_row_sums(survey: &ArdSurvey) -> (Vec<u64>, u64) {
    let known = survey.known_indices();
    let mut sums = vec![0u64; survey.n_respondents()];
    for &k in &known {
        for (s, &y) in sums.iter_mut().zip(survey.column(k)) {
            *s += u64::from(y);
        }
    }
    let size_total = known.iter().map(|&k| survey.known_size(k).unwrap()).sum();
    (sums, size_total)
}

/// `d̂_i = N · Σ_known y_ik / Σ_known N_k`, using every known subpopulation.
pub fn full_degrees(survey: &ArdSurvey) -> Vec<f64> {
    let (sums, size_total) = known_row_sums(survey);
    let scale = survey.total_population() as f64 / size_total as f64;
    sums.iter().map(|&s| s as f64 * scale).collect()
}

/// Full and leave-one-out degree estimates.
///
/// Fails when removing some known subpopulation leaves nothing to estimate
/// from, which always happens with a single known subpopulation.
pub fn estimate_degrees(survey: &ArdSurvey) -> Result<DegreeEstimates> {
    let (sums, size_total) = known_row_sums(survey);
    let total = survey.total_population() as f64;
    let full = sums.iter().map(|&s| total * s as f64 / size_total as f64).collect();
    let leave_one_out = survey
        .known_indices()
        .into_par_iter()
        .map(|k| {
            let rest = size_total - survey.known_size(k).unwrap();
            if rest == 0 {
                return Err(NsumError::DegenerateLeaveOneOut(k));
            }
            let loo = sums
                .iter()
                .zip(survey.column(k))
                .map(|(&s, &y)| total * (s - u64::from(y)) as f64 / rest as f64)
                .collect();
            Ok((k, loo))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(DegreeEstimates { full, leave_one_out, source: DegreeSource::Estimated })
}

/// Which degree vector produced a size estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateVariant {
    KnownDegree,
    EstimatedDegree,
    LeaveOneOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub index: usize,
    pub estimate: f64,
    pub variant: EstimateVariant,
}

/// `N · response_total / degree_total`, the form every scale-up estimate reduces to.
pub fn scaleup_ratio(total_population: f64, response_total: f64, degree_total: f64) -> Result<f64> {
    if degree_total <= 0.0 || !degree_total.is_finite() {
        return Err(NsumError::ZeroDegreeSum);
    }
    Ok(total_population * response_total / degree_total)
}

pub(crate) fn column_total(survey: &ArdSurvey, k: usize) -> f64 {
    survey.column(k).iter().map(|&y| u64::from(y)).sum::<u64>() as f64
}

/// Basic scale-up estimate `N · Σ_i y_ik / Σ_i d_i` with the given degrees.
pub fn scaleup_known_degrees(survey: &ArdSurvey, degrees: &[f64], k: usize) -> Result<SizeEstimate> {
    survey.check_index(k)?;
    if degrees.len() != survey.n_respondents() {
        return Err(NsumError::LengthMismatch(degrees.len(), survey.n_respondents()));
    }
    let estimate = scaleup_ratio(survey.total_population() as f64, column_total(survey, k), degrees.iter().sum())?;
    Ok(SizeEstimate { index: k, estimate, variant: EstimateVariant::KnownDegree })
}

/// Basic scale-up estimate with estimated degrees. With `loo` set, `k` must be
/// known and its own responses are kept out of the degrees.
pub fn scaleup_estimated_degrees(
    survey: &ArdSurvey,
    degrees: &DegreeEstimates,
    k: usize,
    loo: bool,
) -> Result<SizeEstimate> {
    survey.check_index(k)?;
    let (vector, variant) = if loo {
        if !survey.is_known(k) {
            return Err(NsumError::HiddenLeaveOneOut(k));
        }
        let v = degrees.leave_one_out(k).ok_or(NsumError::HiddenLeaveOneOut(k))?;
        (v, EstimateVariant::LeaveOneOut)
    } else {
        (degrees.full(), EstimateVariant::EstimatedDegree)
    };
    let variant = if degrees.source() == DegreeSource::True { EstimateVariant::KnownDegree } else { variant };
    let estimate = scaleup_known_degrees(survey, vector, k)?.estimate;
    Ok(SizeEstimate { index: k, estimate, variant })
}
