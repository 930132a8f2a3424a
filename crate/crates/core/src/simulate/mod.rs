//! Synthetic ARD generators: the degree-biased binomial model and a
//! stochastic block model network.
//!
//! All randomness comes from ChaCha8 substreams keyed by `(seed, stream)`, one
//! per subpopulation or block, so output is identical for any thread count.

mod binomial;
mod sbm;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use binomial::{
    admissible_c_range, centered_power, simulate_binomial, BiasProfile, BinomialPopulation, BinomialSimConfig, CRange,
    SizeOrder,
};
pub use sbm::{sbm_edges, simulate_sbm, SbmConfig};

use crate::error::{NsumError, Result};
use crate::survey::{write_survey, ArdSurvey};

pub(crate) mod streams {
    pub const SIZES: u64 = 1;
    pub const DEGREES: u64 = 2;
    pub const RESPONSES: u64 = 1 << 32;
    pub const SBM_BLOCKS: u64 = 2 << 32;
    pub const ORACLE: u64 = 3 << 32;
}

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth that produced a simulated survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Truth {
    Binomial { degrees: Vec<f64>, a: f64, exponents: Vec<f64>, c: Vec<f64> },
    Sbm { degrees: Vec<f64>, membership: Vec<usize>, within: Vec<f64>, between: f64 },
}

impl Truth {
    pub fn degrees(&self) -> &[f64] {
        match self {
            Truth::Binomial { degrees, .. } | Truth::Sbm { degrees, .. } => degrees,
        }
    }
}

/// A simulated survey (every subpopulation size known) and its truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedWorld {
    pub survey: ArdSurvey,
    pub truth: Truth,
}

impl SimulatedWorld {
    /// Writes `responses.csv`, `metadata.json` and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| NsumError::io(dir, e))?;
        write_survey(&self.survey, &dir.join("responses.csv"), &dir.join("metadata.json"))?;
        let truth_path = dir.join("truth.json");
        let json = serde_json::to_string(&self.truth).map_err(|e| NsumError::Config(e.to_string()))?;
        std::fs::write(&truth_path, json + "\n").map_err(|e| NsumError::io(&truth_path, e))
    }
}

/// Reads a truth sidecar written by [`SimulatedWorld::write`].
pub fn read_truth(path: &Path) -> Result<Truth> {
    let text = std::fs::read_to_string(path).map_err(|e| NsumError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| NsumError::Config(format!("{}: {e}", path.display())))
}

/// Simulation settings as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimConfig {
    Binomial(BinomialSimConfig),
    Sbm(SbmConfig),
}

impl SimConfig {
    pub fn seed(&self) -> u64 {
        match self {
            SimConfig::Binomial(c) => c.seed,
            SimConfig::Sbm(c) => c.seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            SimConfig::Binomial(c) => c.seed = seed,
            SimConfig::Sbm(c) => c.seed = seed,
        }
        self
    }

    pub fn simulate(&self) -> Result<SimulatedWorld> {
        match self {
            SimConfig::Binomial(c) => simulate_binomial(c),
            SimConfig::Sbm(c) => simulate_sbm(c),
        }
    }
}

pub(crate) fn labels(prefix: &str, count: usize) -> Vec<String> {
    let width = count.to_string().len().max(2);
    (1..=count).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
