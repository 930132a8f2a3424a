//! Network scale-up estimation of subpopulation sizes from aggregated
//! relational data ("how many X's do you know?"), with a two-stage regression
//! adjustment for the degree-ratio bias of the basic estimator.
//!
//! The typical pipeline is [`load_survey`] → [`estimate_degrees`] →
//! [`adjust`], or [`evaluate_loo`] when every subpopulation size is known and
//! the aim is to measure how well the adjustment works.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjustment;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod oracles;
pub mod simulate;
pub mod survey;

pub use adjustment::{adjust, AdjustStatus, AdjustmentFit, DeltaGuard, OlsFit};
pub use error::{NsumError, Result};
pub use estimators::{
    estimate_degrees, scaleup_estimated_degrees, scaleup_known_degrees, DegreeEstimates, DegreeSource, SizeEstimate,
};
pub use evaluation::{evaluate_loo, mape, percent_reduction, DegreesInput, EvaluationReport};
pub use simulate::{simulate_binomial, simulate_sbm, BinomialSimConfig, SbmConfig, SimConfig, SimulatedWorld, Truth};
pub use survey::{
    filter_subpopulations, load_survey, write_survey, ArdSurvey, Metadata, MissingPolicy, SubpopulationFilter,
};
