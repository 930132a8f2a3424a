//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nsum_core::adjustment::{ols, scale_responses, second_stage};
use nsum_core::oracles::{run_checks, CheckConfig};
use nsum_core::{
    adjust, estimate_degrees, evaluate_loo, load_survey, simulate_binomial, simulate_sbm, BinomialSimConfig,
    DegreesInput, DeltaGuard, EvaluationReport, MissingPolicy, SbmConfig, SubpopulationFilter,
};

// Pinned thresholds.
const BINOMIAL_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SBM_SEEDS: [u64; 3] = [1, 2, 3];
const BINOMIAL_MIN_REDUCTION: f64 = 90.0;
const BINOMIAL_SPAN: (f64, f64) = (0.82, 1.37);
const BINOMIAL_SPAN_SLACK: f64 = 0.10;
const BINOMIAL_TIME_LIMIT: Duration = Duration::from_secs(60);
const VARP_MIN_REDUCTION: f64 = 75.0;
const VARP_SPAN: (f64, f64) = (0.78, 1.46);
const VARP_SPAN_SLACK: f64 = 0.12;
const SBM_MIN_REDUCTION: f64 = 60.0;
const SBM_MIN_BETTER: usize = 16;
const SBM_TIME_LIMIT: Duration = Duration::from_secs(300);
const SBM_CI_MIN_BETTER: usize = 7;
const SBM_CI_TIME_LIMIT: Duration = Duration::from_secs(30);
const MIN_R_SQUARED: f64 = 0.95;
const ORACLE_REPLICATES: usize = 2000;
const MEAN_ONE_TOLERANCE: f64 = 1e-12;
const OLS_TOLERANCE: f64 = 1e-10;
const PERMUTATION_TOLERANCE: f64 = 1e-9;
const UNBIASED_MAX_MAPE: f64 = 3.0;
const FIXTURE_ROWS_KEPT: usize = 521;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn identity() -> SubpopulationFilter {
    SubpopulationFilter::default()
}

fn ratio_span(report: &EvaluationReport) -> (f64, f64) {
    report
        .subpopulations
        .iter()
        .filter_map(|s| s.basic.map(|b| b / s.truth as f64))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

fn binomial_study(
    base: BinomialSimConfig,
    min_reduction: f64,
    span: (f64, f64),
    slack: f64,
    time_limit: Option<Duration>,
) -> Outcome {
    let mut reductions = Vec::new();
    let mut problems = Vec::new();
    let mut spans = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in BINOMIAL_SEEDS {
        let start = Instant::now();
        let world = simulate_binomial(&BinomialSimConfig { seed, ..base.clone() }).map_err(|e| e.to_string())?;
        let report = evaluate_loo(&world.survey, &DegreesInput::Estimated, &identity(), DeltaGuard::Fail)
            .map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        reductions.push(report.aggregate.percent_reduction.unwrap_or(f64::NAN));
        let (lo, hi) = ratio_span(&report);
        spans.push(format!("[{lo:.3}, {hi:.3}]"));
        if (lo - span.0).abs() > slack || (hi - span.1).abs() > slack {
            problems.push(format!("seed {seed} span [{lo:.3}, {hi:.3}]"));
        }
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len() as f64;
    if !(mean >= min_reduction) {
        problems.push(format!("mean reduction {mean:.2}% < {min_reduction}%"));
    }
    if let Some(limit) = time_limit {
        if slowest > limit {
            problems.push(format!("slowest seed took {slowest:?}"));
        }
    }
    let detail = format!(
        "mean reduction {mean:.2}% (per seed {:?}), ratio spans {}, slowest seed {:.2?}",
        reductions.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>(),
        spans.join(" "),
        slowest
    );
    check(problems.is_empty(), if problems.is_empty() { detail } else { format!("{detail}; {}", problems.join("; ")) })
}

fn criterion_1() -> Outcome {
    binomial_study(
        BinomialSimConfig::default(),
        BINOMIAL_MIN_REDUCTION,
        BINOMIAL_SPAN,
        BINOMIAL_SPAN_SLACK,
        Some(BINOMIAL_TIME_LIMIT),
    )
}

fn criterion_2() -> Outcome {
    binomial_study(BinomialSimConfig::varying_exponent(), VARP_MIN_REDUCTION, VARP_SPAN, VARP_SPAN_SLACK, None)
}

fn sbm_run(config: SbmConfig) -> Result<(EvaluationReport, Duration), String> {
    let start = Instant::now();
    let world = simulate_sbm(&config).map_err(|e| e.to_string())?;
    let degrees = DegreesInput::True(world.truth.degrees().to_vec());
    let report = evaluate_loo(&world.survey, &degrees, &identity(), DeltaGuard::Fail).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

fn criterion_3() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for seed in SBM_SEEDS {
        let (report, took) = sbm_run(SbmConfig { seed, ..SbmConfig::full() })?;
        let a = &report.aggregate;
        let reduction = a.percent_reduction.unwrap_or(f64::NAN);
        ok &= reduction >= SBM_MIN_REDUCTION && a.adjusted_better >= SBM_MIN_BETTER && took < SBM_TIME_LIMIT;
        details.push(format!("seed {seed}: {reduction:.2}%, better {}/20, {took:.2?}", a.adjusted_better));
    }
    let (ci, took) = sbm_run(SbmConfig::ci())?;
    ok &= ci.aggregate.adjusted_better >= SBM_CI_MIN_BETTER && took < SBM_CI_TIME_LIMIT;
    details.push(format!("ci: better {}/10 in {took:.2?}", ci.aggregate.adjusted_better));
    check(ok, details.join("; "))
}

fn criterion_4() -> Outcome {
    let mut values = Vec::new();
    for seed in BINOMIAL_SEEDS {
        let world = simulate_binomial(&BinomialSimConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let degrees = estimate_degrees(&world.survey).map_err(|e| e.to_string())?;
        let (fit, points) = second_stage(&world.survey, &degrees).map_err(|e| e.to_string())?;
        if points.len() != 50 {
            return Err(format!("seed {seed}: only {} second-stage points", points.len()));
        }
        values.push(fit.r_squared);
    }
    let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
    check(worst >= MIN_R_SQUARED, format!("R² per seed {values:.4?}, minimum {worst:.4}"))
}

fn oracle_outcomes() -> Result<Vec<nsum_core::oracles::CheckOutcome>, String> {
    run_checks(&CheckConfig { replicates: ORACLE_REPLICATES, ..Default::default() }).map_err(|e| e.to_string())
}

fn criterion_5() -> Outcome {
    let outcomes = oracle_outcomes()?;
    let relevant: Vec<_> = outcomes.iter().filter(|o| !o.name.starts_with("gamma1")).collect();
    let ok = relevant.len() == 4 && relevant.iter().all(|o| o.passed);
    check(ok, relevant.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(" | "))
}

fn criterion_6() -> Outcome {
    let outcomes = oracle_outcomes()?;
    let relevant: Vec<_> = outcomes.iter().filter(|o| o.name.starts_with("gamma1")).collect();
    let ok = relevant.len() == 2 && relevant.iter().all(|o| o.passed);
    check(ok, relevant.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(" | "))
}

fn criterion_7() -> Outcome {
    let mut problems = Vec::new();
    let world =
        simulate_binomial(&BinomialSimConfig { respondents: 3000, ..Default::default() }).map_err(|e| e.to_string())?;
    let survey = &world.survey;

    let worst_mean = (0..survey.n_subpopulations())
        .map(|k| {
            let z = scale_responses(survey.column(k)).unwrap();
            (z.iter().sum::<f64>() / z.len() as f64 - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if worst_mean > MEAN_ONE_TOLERANCE {
        problems.push(format!("scaled mean off by {worst_mean:e}"));
    }

    let xs: Vec<f64> = (0..200).map(|i| (i as f64).sin() * 300.0 + i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 12.5 - 0.75 * x).collect();
    let fit = ols(&xs, &ys).map_err(|e| e.to_string())?;
    let ols_err = ((fit.slope + 0.75).abs() / 0.75).max((fit.intercept - 12.5).abs() / 12.5);
    if ols_err > OLS_TOLERANCE {
        problems.push(format!("OLS relative error {ols_err:e}"));
    }

    let n = survey.n_respondents();
    let order: Vec<usize> = (0..n).map(|i| (i * 7919) % n).collect();
    let permuted = survey.permute_rows(&order).map_err(|e| e.to_string())?;
    let hidden = survey.with_hidden(10).map_err(|e| e.to_string())?;
    let hidden_perm = permuted.with_hidden(10).map_err(|e| e.to_string())?;
    let a = adjust(&hidden, &estimate_degrees(&hidden).unwrap(), 10, DeltaGuard::Fail).map_err(|e| e.to_string())?;
    let b = adjust(&hidden_perm, &estimate_degrees(&hidden_perm).unwrap(), 10, DeltaGuard::Fail)
        .map_err(|e| e.to_string())?;
    let perm_err = [
        (a.basic_estimate, b.basic_estimate),
        (a.adjusted_estimate, b.adjusted_estimate),
        (a.target_slope, b.target_slope),
        (a.second_stage.slope, b.second_stage.slope),
        (a.second_stage.intercept, b.second_stage.intercept),
    ]
    .iter()
    .map(|(x, y)| (x - y).abs() / x.abs().max(1e-300))
    .fold(0.0, f64::max);
    if perm_err > PERMUTATION_TOLERANCE {
        problems.push(format!("row permutation changed outputs by {perm_err:e}"));
    }

    let in_pool = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| {
            let world = simulate_binomial(&BinomialSimConfig { seed: 77, ..Default::default() }).unwrap();
            let report = evaluate_loo(&world.survey, &DegreesInput::Estimated, &identity(), DeltaGuard::Fail).unwrap();
            serde_json::to_string(&report).map_err(|e| e.to_string())
        })
    };
    let deterministic = in_pool(1)? == in_pool(4)?;
    if !deterministic {
        problems.push("reports differ between 1 and 4 threads".into());
    }

    let unbiased = simulate_binomial(&BinomialSimConfig::unbiased()).map_err(|e| e.to_string())?;
    let report = evaluate_loo(&unbiased.survey, &DegreesInput::Estimated, &identity(), DeltaGuard::Fail)
        .map_err(|e| e.to_string())?;
    let null_mape = report.aggregate.mape_basic.unwrap_or(f64::NAN);
    if !(null_mape < UNBIASED_MAX_MAPE) {
        problems.push(format!("c = 0 basic MAPE {null_mape:.3}%"));
    }

    let detail = format!(
        "mean-one err {worst_mean:.1e}, OLS err {ols_err:.1e}, permutation err {perm_err:.1e}, \
         thread-count identical {deterministic}, c = 0 basic MAPE {null_mape:.3}%"
    );
    check(problems.is_empty(), if problems.is_empty() { detail } else { format!("{detail}; {}", problems.join("; ")) })
}

fn criterion_8() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mccarty_like");
    let survey = load_survey(&dir.join("responses.csv"), &dir.join("metadata.json"), MissingPolicy::DropRespondent)
        .map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    if survey.n_respondents() != FIXTURE_ROWS_KEPT || survey.n_subpopulations() != 32 {
        problems.push(format!("ingested {} x {}", survey.n_respondents(), survey.n_subpopulations()));
    }
    let mut details = vec![format!("n = {} after dropping {}", survey.n_respondents(), survey.dropped_rows())];
    let mut saw_negative = false;
    for (name, spec) in [
        ("all", ""),
        ("names", "tag:name"),
        ("non-names", "not-tag:name"),
        ("drop twin/diabetic", "exclude:twin,diabetic"),
    ] {
        let filter: SubpopulationFilter = spec.parse().map_err(|e: nsum_core::NsumError| e.to_string())?;
        let report = evaluate_loo(&survey, &DegreesInput::Estimated, &filter, DeltaGuard::Fail)
            .map_err(|e| format!("{name}: {e}"))?;
        let a = &report.aggregate;
        let (mb, ma, r) = (a.mape_basic.unwrap(), a.mape_adjusted.unwrap(), a.percent_reduction.unwrap());
        if (r < 0.0) != (ma > mb) || (r - 100.0 * (mb - ma) / mb).abs() > 1e-9 {
            problems.push(format!("{name}: reduction {r} inconsistent with MAPEs {mb}, {ma}"));
        }
        saw_negative |= r < 0.0;
        details.push(format!("{name} {r:.1}%"));
    }
    if !saw_negative {
        problems.push("no subset produced a negative reduction to check".into());
    }
    let detail = details.join(", ");
    check(problems.is_empty(), if problems.is_empty() { detail } else { format!("{detail}; {}", problems.join("; ")) })
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("binomial simulation reproduction", criterion_1),
        ("varying-exponent reproduction", criterion_2),
        ("block-model reproduction", criterion_3),
        ("first-stage/ratio linearity", criterion_4),
        ("bias oracles", criterion_5),
        ("gamma1 identity", criterion_6),
        ("property suite", criterion_7),
        ("survey fixture pipeline", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", criteria.len());
}
