//! Monte Carlo agreement checks between the estimators and the bias oracles.
//! Each check fixes a synthetic population and resamples only the survey
//! randomness.

use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use super::{
    bias_estimated_degrees, bias_fk, bias_known_degrees, gamma1_closed_form, gamma1_two_point, PopulationTruth,
};
use crate::error::{NsumError, Result};
use crate::estimators::{estimate_degrees, scaleup_estimated_degrees, scaleup_known_degrees, scaleup_ratio};
use crate::simulate::{
    admissible_c_range, centered_power, simulate_sbm, streams, substream, BinomialPopulation, BinomialSimConfig,
    SbmConfig, Truth,
};

/// Below this many sampled respondents the ratio-estimator approximation is
/// loose, so the known/estimated-degree checks allow 4 standard errors.
pub const SMALL_SAMPLE: usize = 100;

const CORRUPTION: f64 = 1.05;
const GAMMA1_PAIRS: usize = 20;
const GAMMA1_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckConfig {
    pub seed: u64,
    /// Simple random sample size for the known/estimated-degree checks.
    pub respondents: usize,
    pub replicates: usize,
    /// Scales every estimator output by 1.05. A negative control: checks that
    /// compare estimators with oracles must then fail.
    pub corrupt_estimator: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { seed: 1, respondents: 800, replicates: 2000, corrupt_estimator: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub standard_error: Option<f64>,
    /// Largest accepted `|observed - expected|`.
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, expected: f64, observed: f64, standard_error: Option<f64>, tolerance: f64) -> Self {
        let passed = (observed - expected).abs() <= tolerance;
        CheckOutcome { name: name.to_string(), expected, observed, standard_error, tolerance, passed }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: expected {:.6e}, observed {:.6e}, tolerance {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.expected,
            self.observed,
            self.tolerance
        )?;
        if let Some(se) = self.standard_error {
            write!(f, " (s.e. {se:.3e})")?;
        }
        Ok(())
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every oracle check: known- and estimated-degree bias under simple
/// random sampling, binomial-model bias (sampled and noiseless), and the `γ₁`
/// closed form against two-point solves.
pub fn run_checks(config: &CheckConfig) -> Result<Vec<CheckOutcome>> {
    if config.replicates < 2 {
        return Err(NsumError::Config("at least 2 replicates are needed".into()));
    }
    let mut out = sampling_checks(config)?;
    out.extend(binomial_checks(config)?);
    out.extend(gamma1_checks(config)?);
    Ok(out)
}

/// A network whose first group is much less connected than the rest.
fn sampling_population(seed: u64) -> SbmConfig {
    let mut sbm = SbmConfig::equal_groups(8, 1000, (0.01, 0.05), 0.002);
    sbm.seed = seed;
    sbm
}

fn sampling_checks(config: &CheckConfig) -> Result<Vec<CheckOutcome>> {
    let world = simulate_sbm(&sampling_population(config.seed))?;
    let Truth::Sbm { degrees, membership, .. } = &world.truth else { unreachable!() };
    let hidden = 0;
    let truth = PopulationTruth::from_groups(degrees, membership, hidden)?;
    let survey = world.survey.with_hidden(hidden)?;
    let population = survey.n_respondents();
    let n = config.respondents;
    if !(2..=population).contains(&n) {
        return Err(NsumError::Config(format!("sample size must be in 2..={population}, got {n}")));
    }
    let scale = if config.corrupt_estimator { CORRUPTION } else { 1.0 };

    let draws: Vec<(f64, f64)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, streams::ORACLE + r as u64);
            let rows = sample(&mut rng, population, n).into_vec();
            let srs = survey.select_rows(&rows)?;
            let d: Vec<f64> = rows.iter().map(|&i| degrees[i]).collect();
            let known = scaleup_known_degrees(&srs, &d, hidden)?.estimate;
            let estimated = scaleup_estimated_degrees(&srs, &estimate_degrees(&srs)?, hidden, false)?.estimate;
            Ok((known * scale - truth.hidden_size, estimated * scale - truth.hidden_size))
        })
        .collect::<Result<_>>()?;

    let z = if n < SMALL_SAMPLE { 4.0 } else { 2.0 };
    let (known_bias, known_se) = mean_and_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    let (est_bias, est_se) = mean_and_se(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    Ok(vec![
        CheckOutcome::new("known-degree bias", bias_known_degrees(&truth)?, known_bias, Some(known_se), z * known_se),
        CheckOutcome::new("estimated-degree bias", bias_estimated_degrees(&truth)?, est_bias, Some(est_se), z * est_se),
    ])
}

fn binomial_population(seed: u64) -> Result<BinomialPopulation> {
    BinomialPopulation::draw(&BinomialSimConfig {
        respondents: 2000,
        subpopulations: 5,
        total_population: 1_000_000,
        size_range: [1e4, 5e4],
        seed,
        ..Default::default()
    })
}

fn binomial_checks(config: &CheckConfig) -> Result<Vec<CheckOutcome>> {
    let pop = binomial_population(config.seed)?;
    let scale = if config.corrupt_estimator { CORRUPTION } else { 1.0 };
    let total = pop.total_population as f64;
    let degree_total: f64 = pop.degrees.iter().sum();
    let relative_bias = |k: usize| -> Result<f64> {
        Ok(bias_fk(&pop.degrees, &pop.profile, k, pop.sizes[k] as f64)?.abs() / pop.sizes[k] as f64)
    };
    let mut k = 0;
    for j in 1..pop.sizes.len() {
        if relative_bias(j)? > relative_bias(k)? {
            k = j;
        }
    }
    let size = pop.sizes[k] as f64;
    let expected = bias_fk(&pop.degrees, &pop.profile, k, size)?;
    let probs = pop.probabilities(k)?;

    let offset = streams::ORACLE + (1 << 24);
    let draws: Vec<f64> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, offset + r as u64);
            let responses: u64 = pop
                .degrees
                .iter()
                .zip(&probs)
                .map(|(&d, &p)| Binomial::new(d as u64, p).expect("validated probability").sample(&mut rng))
                .sum();
            Ok(scaleup_ratio(total, responses as f64, degree_total)? * scale - size)
        })
        .collect::<Result<_>>()?;
    let (bias, se) = mean_and_se(&draws);

    let expected_total: f64 = pop.expected_responses(k)?.iter().sum();
    let noiseless = scaleup_ratio(total, expected_total, degree_total)? * scale - size;
    Ok(vec![
        CheckOutcome::new("binomial-model bias", expected, bias, Some(se), 3.0 * se),
        CheckOutcome::new("binomial-model bias, expected responses", expected, noiseless, None, 1e-9 * size),
    ])
}

fn gamma1_checks(config: &CheckConfig) -> Result<Vec<CheckOutcome>> {
    let pop = binomial_population(config.seed)?;
    let a = pop.profile.a;
    let g = centered_power(&pop.degrees, 2.0);
    let largest = *pop.sizes.iter().max().unwrap() as f64;
    let (lo, hi) = admissible_c_range(&g, a, pop.total_population as f64 / largest)?;
    let closed = gamma1_closed_form(&pop.degrees, &g, a)?;

    let mut rng = substream(config.seed, streams::ORACLE + (2 << 24));
    let mut solves = Vec::with_capacity(GAMMA1_PAIRS);
    while solves.len() < GAMMA1_PAIRS {
        let (c1, c2) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
        if (c1 - c2).abs() < 0.1 * (hi - lo) {
            continue;
        }
        solves.push(gamma1_two_point(&pop.degrees, &g, a, c1, c2)?);
    }
    let worst = solves.iter().copied().max_by(|x, y| (x - closed).abs().total_cmp(&(y - closed).abs())).unwrap();
    let spread =
        solves.iter().copied().fold(f64::NEG_INFINITY, f64::max) - solves.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        CheckOutcome::new(
            "gamma1 closed form vs two-point solves",
            closed,
            worst,
            None,
            GAMMA1_TOLERANCE * closed.abs(),
        ),
        CheckOutcome::new("gamma1 spread across pairs", 0.0, spread / closed.abs(), None, GAMMA1_TOLERANCE),
    ])
}
