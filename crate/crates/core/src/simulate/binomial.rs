use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{labels, linspace, streams, substream, SimulatedWorld, Truth};
use crate::error::{NsumError, Result};
use crate::survey::ArdSurvey;

/// How the simulated sizes are ordered before `c_k` values are assigned by index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeOrder {
    /// Largest subpopulation first, so `c_k` grows as size shrinks.
    #[default]
    Descending,
    Ascending,
    AsDrawn,
}

/// Which part of the admissible `c` interval the automatic `c_k` span.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CRange {
    /// `[-m, m]` with `m` the largest magnitude admissible in both directions.
    #[default]
    Symmetric,
    /// The whole admissible interval.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinomialSimConfig {
    pub respondents: usize,
    pub subpopulations: usize,
    pub total_population: u64,
    /// Closed bounds of the uniform size sampler.
    pub size_range: [f64; 2],
    /// Closed bounds of the uniform degree sampler; draws are rounded.
    pub degree_range: [f64; 2],
    pub a: f64,
    /// Exponents of the centered power `g`, recycled across subpopulations.
    pub exponents: Vec<f64>,
    /// Explicit `c_k`; when absent they are spaced evenly across the admissible
    /// range, separately for each distinct exponent.
    pub c: Option<Vec<f64>>,
    pub c_range: CRange,
    pub size_order: SizeOrder,
    pub seed: u64,
}

impl Default for BinomialSimConfig {
    fn default() -> Self {
        BinomialSimConfig {
            respondents: 10_000,
            subpopulations: 50,
            total_population: 10_000_000,
            size_range: [1e3, 1e6],
            degree_range: [10.0, 1000.0],
            a: 1.0,
            exponents: vec![2.0],
            c: None,
            c_range: CRange::Symmetric,
            size_order: SizeOrder::Descending,
            seed: 1,
        }
    }
}

impl BinomialSimConfig {
    /// Exponent cycling through `-2, -1, 1, 2` across subpopulations.
    pub fn varying_exponent() -> Self {
        BinomialSimConfig { exponents: vec![-2.0, -1.0, 1.0, 2.0], ..Default::default() }
    }

    /// No degree-related bias: every `c_k = 0`.
    pub fn unbiased() -> Self {
        let base = BinomialSimConfig::default();
        BinomialSimConfig { c: Some(vec![0.0; base.subpopulations]), ..base }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NsumError::Config(m));
        if self.respondents < 2 {
            return bad(format!("respondents must be at least 2, got {}", self.respondents));
        }
        if self.subpopulations < 2 {
            return bad(format!("subpopulations must be at least 2, got {}", self.subpopulations));
        }
        let [slo, shi] = self.size_range;
        if !(slo > 0.0 && slo <= shi && shi <= self.total_population as f64) {
            return bad(format!("size range [{slo}, {shi}] must be positive, ordered and within N"));
        }
        let [dlo, dhi] = self.degree_range;
        if !(dlo > 0.0 && dlo <= dhi && dhi.is_finite()) {
            return bad(format!("degree range [{dlo}, {dhi}] must be positive and ordered"));
        }
        if self.a == 0.0 || !self.a.is_finite() {
            return bad("a must be finite and nonzero".into());
        }
        if self.exponents.is_empty() || self.exponents.iter().any(|p| !p.is_finite()) {
            return bad("exponents must be a nonempty list of finite values".into());
        }
        if let Some(c) = &self.c {
            if c.len() != self.subpopulations {
                return bad(format!("{} c values for {} subpopulations", c.len(), self.subpopulations));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return bad("c values must be finite".into());
            }
        }
        Ok(())
    }
}

/// `g(d_i) = d_i^p - mean_j(d_j^p)`, so that `f = 1 + g c` averages to one.
pub fn centered_power(degrees: &[f64], p: f64) -> Vec<f64> {
    let powered: Vec<f64> = degrees.iter().map(|d| d.powf(p)).collect();
    let mean = powered.iter().sum::<f64>() / powered.len() as f64;
    powered.into_iter().map(|x| x - mean).collect()
}

/// The interval of `c` for which `0 <= a + g_i c <= max_f` holds for every
/// respondent (`max_f = N / N_k` keeps the binomial probability at most one).
pub fn admissible_c_range(g: &[f64], a: f64, max_f: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for &gi in g {
        if gi > 0.0 {
            lo = lo.max(-a / gi);
            hi = hi.min((max_f - a) / gi);
        } else if gi < 0.0 {
            hi = hi.min(-a / gi);
            lo = lo.max((max_f - a) / gi);
        } else if !(0.0..=max_f).contains(&a) {
            return Err(NsumError::Config(format!("f = a = {a} is not a valid probability scale")));
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(NsumError::Config("no admissible c range: g is identically zero (all degrees equal?)".into()));
    }
    if lo > hi {
        return Err(NsumError::Config(format!("no admissible c range: [{lo}, {hi}] is empty")));
    }
    Ok((lo, hi))
}

/// `f_k(d) = a + g_k(d) c_k` with `g_k` a centered power of degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProfile {
    pub a: f64,
    pub exponents: Vec<f64>,
    pub c: Vec<f64>,
}

impl BiasProfile {
    /// One exponent shared by all subpopulations.
    pub fn shared(a: f64, exponent: f64, c: Vec<f64>) -> Self {
        BiasProfile { a, exponents: vec![exponent; c.len()], c }
    }

    pub fn g(&self, k: usize, degrees: &[f64]) -> Vec<f64> {
        centered_power(degrees, self.exponents[k])
    }

    pub fn f(&self, k: usize, degrees: &[f64]) -> Vec<f64> {
        self.g(k, degrees).into_iter().map(|g| self.a + g * self.c[k]).collect()
    }
}

/// The fixed part of a binomial world: sizes, degrees and bias profile.
/// Responses are redrawn from it with [`BinomialPopulation::sample_responses`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialPopulation {
    pub total_population: u64,
    pub sizes: Vec<u64>,
    pub degrees: Vec<f64>,
    pub profile: BiasProfile,
}

impl BinomialPopulation {
    pub fn draw(config: &BinomialSimConfig) -> Result<Self> {
        config.validate()?;
        let total = config.total_population;

        let mut rng = substream(config.seed, streams::SIZES);
        let [slo, shi] = config.size_range;
        let mut sizes: Vec<u64> =
            (0..config.subpopulations).map(|_| (rng.random_range(slo..=shi).round() as u64).clamp(1, total)).collect();
        match config.size_order {
            SizeOrder::Descending => sizes.sort_unstable_by(|a, b| b.cmp(a)),
            SizeOrder::Ascending => sizes.sort_unstable(),
            SizeOrder::AsDrawn => {}
        }

        let mut rng = substream(config.seed, streams::DEGREES);
        let [dlo, dhi] = config.degree_range;
        let degrees: Vec<f64> = (0..config.respondents).map(|_| rng.random_range(dlo..=dhi).round().max(1.0)).collect();

        let exponents: Vec<f64> =
            (0..config.subpopulations).map(|k| config.exponents[k % config.exponents.len()]).collect();
        let c = match &config.c {
            Some(c) => c.clone(),
            None => auto_c(&degrees, &sizes, total, config.a, &exponents, config.c_range)?,
        };
        let population = BinomialPopulation {
            total_population: total,
            sizes,
            degrees,
            profile: BiasProfile { a: config.a, exponents, c },
        };
        for k in 0..config.subpopulations {
            population.probabilities(k)?;
        }
        Ok(population)
    }

    /// `(N_k / N) f_k(d_i)` for every respondent, validated to lie in `[0, 1]`.
    pub fn probabilities(&self, k: usize) -> Result<Vec<f64>> {
        const SLACK: f64 = 1e-12;
        let share = self.sizes[k] as f64 / self.total_population as f64;
        self.profile
            .f(k, &self.degrees)
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let p = share * f;
                if (-SLACK..=1.0 + SLACK).contains(&p) {
                    Ok(p.clamp(0.0, 1.0))
                } else {
                    Err(NsumError::ProbabilityOutOfRange { p, respondent: i, subpopulation: k })
                }
            })
            .collect()
    }

    /// `E[y_ik] = d_i (N_k / N) f_k(d_i)`.
    pub fn expected_responses(&self, k: usize) -> Result<Vec<f64>> {
        Ok(self.probabilities(k)?.iter().zip(&self.degrees).map(|(p, d)| p * d).collect())
    }

    /// Draws a response matrix; column `k` uses substream `stream_base + k`.
    pub fn sample_responses(&self, seed: u64, stream_base: u64) -> Result<Vec<Vec<u32>>> {
        (0..self.sizes.len())
            .into_par_iter()
            .map(|k| {
                let probs = self.probabilities(k)?;
                let mut rng = substream(seed, stream_base + k as u64);
                Ok(self
                    .degrees
                    .iter()
                    .zip(probs)
                    .map(|(&d, p)| {
                        let draw = Binomial::new(d as u64, p).expect("validated probability");
                        draw.sample(&mut rng) as u32
                    })
                    .collect())
            })
            .collect()
    }

    pub fn into_world(self, columns: Vec<Vec<u32>>) -> Result<SimulatedWorld> {
        let k = self.sizes.len();
        let survey = ArdSurvey::new(
            labels("s", k),
            columns,
            self.sizes.iter().map(|&s| Some(s)).collect(),
            self.total_population,
        )?;
        let BiasProfile { a, exponents, c } = self.profile;
        Ok(SimulatedWorld { survey, truth: Truth::Binomial { degrees: self.degrees, a, exponents, c } })
    }
}

/// Spaces `c_k` evenly over the admissible range, one range per distinct exponent.
fn auto_c(degrees: &[f64], sizes: &[u64], total: u64, a: f64, exponents: &[f64], range: CRange) -> Result<Vec<f64>> {
    let mut c = vec![0.0; sizes.len()];
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, &p) in exponents.iter().enumerate() {
        match groups.iter_mut().find(|(q, _)| q.to_bits() == p.to_bits()) {
            Some((_, members)) => members.push(k),
            None => groups.push((p, vec![k])),
        }
    }
    for (p, members) in groups {
        let g = centered_power(degrees, p);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for &k in &members {
            let (l, h) = admissible_c_range(&g, a, total as f64 / sizes[k] as f64)?;
            lo = lo.max(l);
            hi = hi.min(h);
        }
        let (lo, hi) = match range {
            CRange::Full => (lo, hi),
            CRange::Symmetric => {
                let m = (-lo).min(hi);
                if !(m > 0.0) {
                    return Err(NsumError::Config(format!(
                        "no admissible symmetric c range for exponent {p}: [{lo}, {hi}]"
                    )));
                }
                (-m, m)
            }
        };
        for (k, value) in members.iter().zip(linspace(lo, hi, members.len())) {
            c[*k] = value;
        }
    }
    Ok(c)
}

/// Draws a world from the degree-biased binomial model
/// `y_ik ~ Binomial(d_i, (N_k / N) f_k(d_i))`.
pub fn simulate_binomial(config: &BinomialSimConfig) -> Result<SimulatedWorld> {
    let population = BinomialPopulation::draw(config)?;
    let columns = population.sample_responses(config.seed, streams::RESPONSES)?;
    population.into_world(columns)
}
