//! The estimators and the two-stage adjustment recomputed from scratch with
//! plain loops, sharing no code with the library.

use nsum_core::adjustment::first_stage_slopes;
use nsum_core::simulate::{BinomialPopulation, BinomialSimConfig};
use nsum_core::{adjust, estimate_degrees, scaleup_estimated_degrees, ArdSurvey, DegreeEstimates, DeltaGuard};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

struct Naive {
    cols: Vec<Vec<f64>>,
    sizes: Vec<Option<f64>>,
    total: f64,
}

impl Naive {
    fn from(survey: &ArdSurvey) -> Self {
        Naive {
            cols: (0..survey.n_subpopulations())
                .map(|k| survey.column(k).iter().map(|&y| y as f64).collect())
                .collect(),
            sizes: (0..survey.n_subpopulations()).map(|k| survey.known_size(k).map(|s| s as f64)).collect(),
            total: survey.total_population() as f64,
        }
    }

    fn n(&self) -> usize {
        self.cols[0].len()
    }

    /// Degrees from the known groups other than `skip`.
    fn degrees_without(&self, skip: Option<usize>) -> Vec<f64> {
        let mut sizes = 0.0;
        for (k, s) in self.sizes.iter().enumerate() {
            if let Some(s) = s {
                if Some(k) != skip {
                    sizes += s;
                }
            }
        }
        (0..self.n())
            .map(|i| {
                let mut y = 0.0;
                for (k, s) in self.sizes.iter().enumerate() {
                    if s.is_some() && Some(k) != skip {
                        y += self.cols[k][i];
                    }
                }
                self.total * y / sizes
            })
            .collect()
    }

    fn scaleup(&self, k: usize, d: &[f64]) -> f64 {
        let y: f64 = self.cols[k].iter().sum();
        self.total * y / d.iter().sum::<f64>()
    }

    fn slope(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for i in 0..x.len() {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
        }
        let b = sxy / sxx;
        (my - b * mx, b)
    }

    fn first_stage(&self, k: usize, d: &[f64]) -> f64 {
        let mean = self.cols[k].iter().sum::<f64>() / self.n() as f64;
        let z: Vec<f64> = self.cols[k].iter().map(|y| y / mean).collect();
        Naive::slope(d, &z).1
    }

    /// (basic, adjusted) for a hidden target.
    fn adjust(&self, target: usize) -> (f64, f64) {
        assert!(self.sizes[target].is_none());
        let mut slopes = Vec::new();
        let mut ratios = Vec::new();
        for k in 0..self.cols.len() {
            if let Some(size) = self.sizes[k] {
                let d = self.degrees_without(Some(k));
                slopes.push(self.first_stage(k, &d));
                ratios.push(size / self.scaleup(k, &d));
            }
        }
        let (g0, g1) = Naive::slope(&slopes, &ratios);
        let d = self.degrees_without(None);
        let basic = self.scaleup(target, &d);
        let delta = 1.0 / (g0 + g1 * self.first_stage(target, &d));
        (basic, basic / delta)
    }
}

fn world(seed: u64, respondents: usize, subpopulations: usize) -> ArdSurvey {
    let config = BinomialSimConfig {
        respondents,
        subpopulations,
        total_population: 2_000_000,
        size_range: [2e3, 6e4],
        seed,
        ..Default::default()
    };
    nsum_core::simulate_binomial(&config).unwrap().survey
}

#[test]
fn leave_one_out_degrees_match_loops() {
    let survey = world(3, 300, 8);
    let naive = Naive::from(&survey);
    let est = estimate_degrees(&survey).unwrap();
    for (a, b) in est.full().iter().zip(naive.degrees_without(None)) {
        assert!(rel(*a, b) < 1e-12);
    }
    for k in 0..8 {
        let loo = est.leave_one_out(k).unwrap();
        for (a, b) in loo.iter().zip(naive.degrees_without(Some(k))) {
            assert!(rel(*a, b) < 1e-12, "k={k}");
        }
    }
}

#[test]
fn hidden_target_adjustment_matches_loops() {
    for seed in 1..=4 {
        let survey = world(seed, 400, 10).with_hidden(4).unwrap();
        let naive = Naive::from(&survey);
        let (basic, adjusted) = naive.adjust(4);
        let est = estimate_degrees(&survey).unwrap();
        let fit = adjust(&survey, &est, 4, DeltaGuard::Fail).unwrap();
        assert!(rel(fit.basic_estimate, basic) < 1e-10, "seed {seed}");
        assert!(rel(fit.adjusted_estimate, adjusted) < 1e-9, "seed {seed}: {} vs {adjusted}", fit.adjusted_estimate);
        let direct = scaleup_estimated_degrees(&survey, &est, 4, false).unwrap().estimate;
        assert!(rel(direct, basic) < 1e-12);
    }
}

#[test]
fn known_target_is_masked_before_adjusting() {
    let survey = world(7, 400, 9);
    let naive = Naive::from(&survey.with_hidden(2).unwrap());
    let (basic, adjusted) = naive.adjust(2);
    let fit = adjust(&survey, &estimate_degrees(&survey).unwrap(), 2, DeltaGuard::Fail).unwrap();
    assert!(rel(fit.basic_estimate, basic) < 1e-10);
    assert!(rel(fit.adjusted_estimate, adjusted) < 1e-9);
}

#[test]
fn first_stage_with_true_degrees_matches_loops() {
    let pop = BinomialPopulation::draw(&BinomialSimConfig {
        respondents: 300,
        subpopulations: 6,
        total_population: 1_000_000,
        size_range: [1e3, 3e4],
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let columns = pop.sample_responses(11, 99).unwrap();
    let degrees = pop.degrees.clone();
    let survey = pop.into_world(columns).unwrap().survey;
    let naive = Naive::from(&survey);
    let wrapped = DegreeEstimates::from_true(degrees.clone(), &survey).unwrap();
    let slopes = first_stage_slopes(&survey, &wrapped);
    for k in 0..6 {
        let expected = naive.first_stage(k, &degrees);
        assert!(rel(slopes[&k].as_ref().unwrap().slope, expected) < 1e-10);
    }
}
