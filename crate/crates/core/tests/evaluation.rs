use nsum_core::evaluation::FoldStatus;
use nsum_core::{
    evaluate_loo, simulate_binomial, simulate_sbm, ArdSurvey, BinomialSimConfig, DegreesInput, DeltaGuard, NsumError,
    SbmConfig, SubpopulationFilter,
};

fn small_world(seed: u64) -> ArdSurvey {
    let config = BinomialSimConfig { respondents: 2000, subpopulations: 12, seed, ..Default::default() };
    simulate_binomial(&config).unwrap().survey
}

#[test]
fn report_is_internally_consistent() {
    let survey = small_world(2);
    let report =
        evaluate_loo(&survey, &DegreesInput::Estimated, &SubpopulationFilter::default(), DeltaGuard::Fail).unwrap();
    assert_eq!(report.subpopulations.len(), 12);
    for (k, row) in report.subpopulations.iter().enumerate() {
        assert_eq!(row.label, survey.label(k));
        assert_eq!(row.truth, survey.known_size(k).unwrap());
        let (b, a) = (row.basic.unwrap(), row.adjusted.unwrap());
        let t = row.truth as f64;
        assert!((row.basic_relative_error.unwrap() - 100.0 * (t - b) / t).abs() < 1e-9);
        assert!((row.adjusted_relative_error.unwrap() - 100.0 * (t - a) / t).abs() < 1e-9);
        assert_eq!(
            row.adjusted_better.unwrap(),
            row.adjusted_relative_error.unwrap().abs() < row.basic_relative_error.unwrap().abs()
        );
        assert!((a - b / row.delta_hat.unwrap()).abs() < 1e-6 * a);
    }
    let agg = &report.aggregate;
    let (mb, ma) = (agg.mape_basic.unwrap(), agg.mape_adjusted.unwrap());
    let mean_abs = |f: fn(&nsum_core::evaluation::SubpopulationReport) -> Option<f64>| {
        report.subpopulations.iter().map(|r| f(r).unwrap().abs()).sum::<f64>() / 12.0
    };
    assert!((mb - mean_abs(|r| r.basic_relative_error)).abs() < 1e-9);
    assert!((ma - mean_abs(|r| r.adjusted_relative_error)).abs() < 1e-9);
    assert!((agg.percent_reduction.unwrap() - 100.0 * (mb - ma) / mb).abs() < 1e-9);
    assert_eq!(agg.evaluated + agg.failures, 12);
}

#[test]
fn fold_never_reads_the_held_out_size() {
    let survey = small_world(5);
    let filter = SubpopulationFilter::default();
    let base = evaluate_loo(&survey, &DegreesInput::Estimated, &filter, DeltaGuard::Fail).unwrap();
    let k = 3;
    let altered = survey.with_known_size(k, survey.known_size(k).unwrap() * 3).unwrap();
    let other = evaluate_loo(&altered, &DegreesInput::Estimated, &filter, DeltaGuard::Fail).unwrap();
    assert_eq!(base.subpopulations[k].basic, other.subpopulations[k].basic);
    assert_eq!(base.subpopulations[k].adjusted, other.subpopulations[k].adjusted);
    assert_ne!(base.subpopulations[k].truth, other.subpopulations[k].truth);
    // other folds do use it
    assert_ne!(base.subpopulations[0].adjusted, other.subpopulations[0].adjusted);
}

#[test]
fn true_degrees_are_used_directly() {
    let world = simulate_sbm(&SbmConfig::ci()).unwrap();
    let report = evaluate_loo(
        &world.survey,
        &DegreesInput::True(world.truth.degrees().to_vec()),
        &SubpopulationFilter::default(),
        DeltaGuard::Fail,
    )
    .unwrap();
    let n = world.survey.total_population() as f64;
    let dsum: f64 = world.truth.degrees().iter().sum();
    for (k, row) in report.subpopulations.iter().enumerate() {
        let y: f64 = world.survey.column(k).iter().map(|&y| y as f64).sum();
        assert!((row.basic.unwrap() - n * y / dsum).abs() < 1e-9 * n);
    }
    assert!(matches!(
        evaluate_loo(
            &world.survey,
            &DegreesInput::True(vec![1.0; 3]),
            &SubpopulationFilter::default(),
            DeltaGuard::Fail
        ),
        Err(NsumError::LengthMismatch(3, 5000))
    ));
}

#[test]
fn needs_three_known_after_filtering() {
    let survey = small_world(1);
    let filter = SubpopulationFilter::include(["s01", "s02"]);
    let err = evaluate_loo(&survey, &DegreesInput::Estimated, &filter, DeltaGuard::Fail).unwrap_err();
    assert!(matches!(err, NsumError::Filter(_)));
    assert!(!err.is_numerical());
    let three = SubpopulationFilter::include(["s01", "s02", "s03"]);
    assert_eq!(
        evaluate_loo(&survey, &DegreesInput::Estimated, &three, DeltaGuard::Fail).unwrap().subpopulations.len(),
        3
    );
}

#[test]
fn failed_folds_are_counted_not_imputed() {
    // s03 is never reported by anyone, so its own first stage cannot be fit.
    let world = small_world(4);
    let mut columns: Vec<Vec<u32>> = (0..12).map(|k| world.column(k).to_vec()).collect();
    columns[2] = vec![0; 2000];
    let sizes = (0..12).map(|k| world.known_size(k)).collect();
    let survey = ArdSurvey::new(world.labels().to_vec(), columns, sizes, world.total_population()).unwrap();
    let report =
        evaluate_loo(&survey, &DegreesInput::Estimated, &SubpopulationFilter::default(), DeltaGuard::Fail).unwrap();
    let row = &report.subpopulations[2];
    assert_eq!(row.status, FoldStatus::Failed);
    assert!(row.adjusted.is_none() && row.diagnostic.is_some());
    assert_eq!(report.aggregate.failures, 1);
    assert_eq!(report.aggregate.evaluated, 11);
}

#[test]
fn tidy_csv_has_two_rows_per_subpopulation() {
    let survey = small_world(3);
    let report = evaluate_loo(&survey, &DegreesInput::Estimated, &SubpopulationFilter::default(), DeltaGuard::Fail)
        .unwrap()
        .with_seed(3);
    let dir = tempfile::tempdir().unwrap();
    report.write_csv(&dir.path().join("r.csv")).unwrap();
    report.write_json(&dir.path().join("r.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "label,truth,estimator,estimate,relative_error,status");
    assert_eq!(lines.len(), 1 + 2 * 12);
    assert!(lines[1].starts_with("s01,") && lines[1].contains(",basic,"));
    assert!(lines[2].contains(",adjusted,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["seed"], 3);
    assert_eq!(json["provenance"]["degrees"], "estimated");
}
