//! Leave-one-out evaluation over the known subpopulations and the error
//! metrics used to compare the basic and adjusted estimators.

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::{adjust, AdjustStatus, DeltaGuard};
use crate::error::{NsumError, Result};
use crate::estimators::{estimate_degrees, DegreeEstimates, DegreeSource};
use crate::survey::{filter_subpopulations, ArdSurvey, SubpopulationFilter};

/// Where respondent degrees come from during evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum DegreesInput {
    Estimated,
    /// Known network sizes, one per respondent (e.g. from a simulation).
    True(Vec<f64>),
}

/// `100 (truth - estimate) / truth`.
pub fn relative_error(truth: f64, estimate: f64) -> f64 {
    100.0 * (truth - estimate) / truth
}

/// Mean absolute percent error.
pub fn mape(truths: &[f64], estimates: &[f64]) -> Result<f64> {
    if truths.len() != estimates.len() {
        return Err(NsumError::LengthMismatch(truths.len(), estimates.len()));
    }
    if truths.is_empty() {
        return Err(NsumError::TooFewPoints { needed: 1, got: 0 });
    }
    if let Some(t) = truths.iter().find(|t| !(**t > 0.0)) {
        return Err(NsumError::Degenerate(format!("MAPE needs positive truths, got {t}")));
    }
    let total: f64 = truths.iter().zip(estimates).map(|(&t, &e)| relative_error(t, e).abs()).sum();
    Ok(total / truths.len() as f64)
}

/// `100 (basic - adjusted) / basic`; negative when adjustment made things worse.
/// `None` when the basic MAPE is zero.
pub fn percent_reduction(mape_basic: f64, mape_adjusted: f64) -> Option<f64> {
    (mape_basic != 0.0).then(|| 100.0 * (mape_basic - mape_adjusted) / mape_basic)
}

fn rmse(truths: &[f64], estimates: &[f64]) -> f64 {
    let sum: f64 = truths.iter().zip(estimates).map(|(t, e)| (t - e).powi(2)).sum();
    (sum / truths.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldStatus {
    Adjusted,
    Clamped,
    /// The guard refused to adjust; excluded from the aggregates.
    Guarded,
    /// The fold raised an error; excluded from the aggregates.
    Failed,
}

impl FoldStatus {
    pub fn succeeded(self) -> bool {
        matches!(self, FoldStatus::Adjusted | FoldStatus::Clamped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopulationReport {
    pub label: String,
    pub truth: u64,
    /// Leave-one-out basic estimate (or the true-degree estimate).
    pub basic: Option<f64>,
    pub adjusted: Option<f64>,
    pub delta_hat: Option<f64>,
    /// First-stage slope of the held-out subpopulation.
    pub slope: Option<f64>,
    pub basic_relative_error: Option<f64>,
    pub adjusted_relative_error: Option<f64>,
    pub adjusted_better: Option<bool>,
    pub status: FoldStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mape_basic: Option<f64>,
    pub mape_adjusted: Option<f64>,
    pub percent_reduction: Option<f64>,
    pub evaluated: usize,
    pub failures: usize,
    pub adjusted_better: usize,
    pub rmse_basic: Option<f64>,
    pub rmse_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub filter: String,
    pub degrees: DegreeSource,
    pub guard: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subpopulations: Vec<SubpopulationReport>,
    pub aggregate: Aggregate,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct TidyRow<'a> {
    label: &'a str,
    truth: u64,
    estimator: &'static str,
    estimate: Option<f64>,
    relative_error: Option<f64>,
    status: FoldStatus,
}

impl EvaluationReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.provenance.seed = Some(seed);
        self
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| NsumError::Config(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| NsumError::io(path, e))
    }

    /// One row per subpopulation and estimator.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| NsumError::io(path, e))?;
        let mut out = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| NsumError::Io { path: path.display().to_string(), message: e.to_string() };
        for s in &self.subpopulations {
            for (estimator, estimate, relative_error) in
                [("basic", s.basic, s.basic_relative_error), ("adjusted", s.adjusted, s.adjusted_relative_error)]
            {
                out.serialize(TidyRow {
                    label: &s.label,
                    truth: s.truth,
                    estimator,
                    estimate,
                    relative_error,
                    status: s.status,
                })
                .map_err(csv_err)?;
            }
        }
        out.flush().map_err(|e| NsumError::io(path, e))
    }
}

/// Treats each known subpopulation in turn as hidden, estimates its size with
/// and without adjustment, and scores both against the withheld truth.
///
/// The filter is applied first; at least 3 known subpopulations must remain so
/// every fold has 2 second-stage points. Folds that fail or are guarded are
/// reported per subpopulation and left out of the aggregates.
pub fn evaluate_loo(
    survey: &ArdSurvey,
    degrees: &DegreesInput,
    filter: &SubpopulationFilter,
    guard: DeltaGuard,
) -> Result<EvaluationReport> {
    let survey = filter_subpopulations(survey, filter)?;
    let known = survey.known_indices();
    if known.len() < 3 {
        return Err(NsumError::Filter(format!(
            "leave-one-out evaluation needs at least 3 known subpopulations, {} remain",
            known.len()
        )));
    }
    let degrees = match degrees {
        DegreesInput::Estimated => estimate_degrees(&survey)?,
        DegreesInput::True(d) => DegreeEstimates::from_true(d.clone(), &survey)?,
    };

    let folds: Vec<_> = known.par_iter().map(|&k| adjust(&survey, &degrees, k, guard)).collect();

    let mut rows = Vec::with_capacity(known.len());
    for (&k, fold) in known.iter().zip(folds) {
        let truth = survey.known_size(k).expect("known subpopulation");
        let t = truth as f64;
        let mut row = SubpopulationReport {
            label: survey.label(k).to_string(),
            truth,
            basic: None,
            adjusted: None,
            delta_hat: None,
            slope: None,
            basic_relative_error: None,
            adjusted_relative_error: None,
            adjusted_better: None,
            status: FoldStatus::Failed,
            diagnostic: None,
        };
        match fold {
            Ok(fit) => {
                row.basic = Some(fit.basic_estimate);
                row.basic_relative_error = Some(relative_error(t, fit.basic_estimate));
                row.slope = Some(fit.target_slope);
                row.delta_hat = fit.delta_hat;
                row.status = match fit.status {
                    AdjustStatus::Adjusted => FoldStatus::Adjusted,
                    AdjustStatus::Clamped => FoldStatus::Clamped,
                    AdjustStatus::Guarded => FoldStatus::Guarded,
                };
                if row.status.succeeded() {
                    let adj = relative_error(t, fit.adjusted_estimate);
                    row.adjusted = Some(fit.adjusted_estimate);
                    row.adjusted_relative_error = Some(adj);
                    row.adjusted_better = Some(adj.abs() < row.basic_relative_error.unwrap().abs());
                } else {
                    row.diagnostic = Some(format!("inverse degree ratio {} is not positive", fit.inverse_ratio));
                }
            }
            Err(e) => row.diagnostic = Some(e.to_string()),
        }
        rows.push(row);
    }

    let ok: Vec<&SubpopulationReport> = rows.iter().filter(|r| r.status.succeeded()).collect();
    let truths: Vec<f64> = ok.iter().map(|r| r.truth as f64).collect();
    let basic: Vec<f64> = ok.iter().map(|r| r.basic.unwrap()).collect();
    let adjusted: Vec<f64> = ok.iter().map(|r| r.adjusted.unwrap()).collect();
    let (mape_basic, mape_adjusted) =
        if ok.is_empty() { (None, None) } else { (Some(mape(&truths, &basic)?), Some(mape(&truths, &adjusted)?)) };
    let aggregate = Aggregate {
        mape_basic,
        mape_adjusted,
        percent_reduction: mape_basic.zip(mape_adjusted).and_then(|(b, a)| percent_reduction(b, a)),
        evaluated: ok.len(),
        failures: rows.len() - ok.len(),
        adjusted_better: ok.iter().filter(|r| r.adjusted_better == Some(true)).count(),
        rmse_basic: (!ok.is_empty()).then(|| rmse(&truths, &basic)),
        rmse_adjusted: (!ok.is_empty()).then(|| rmse(&truths, &adjusted)),
    };
    Ok(EvaluationReport {
        subpopulations: rows,
        aggregate,
        provenance: Provenance {
            filter: filter.to_string(),
            degrees: degrees.source(),
            guard: guard.to_string(),
            seed: None,
        },
    })
}
