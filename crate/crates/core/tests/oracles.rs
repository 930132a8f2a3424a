use nsum_core::estimators::scaleup_known_degrees;
use nsum_core::oracles::{
    bias_fk, bias_known_degrees, expected_inverse_ratio, expected_slope_statistic, gamma1_closed_form,
    gamma1_two_point, run_checks, CheckConfig, PopulationTruth,
};
use nsum_core::simulate::{centered_power, BiasProfile, BinomialPopulation};
use nsum_core::{ArdSurvey, BinomialSimConfig};

#[test]
fn constant_bias_reduces_to_known_degree_bias() {
    // three groups with constant degrees 10, 20, 40; group 0 is hidden
    let membership: Vec<usize> = [vec![0; 30], vec![1; 50], vec![2; 20]].concat();
    let degrees: Vec<f64> = membership.iter().map(|&g| [10.0, 20.0, 40.0][g]).collect();
    let truth = PopulationTruth::from_groups(&degrees, &membership, 0).unwrap();
    let ratio = truth.hidden_mean_degree / truth.frame_mean_degree;
    let flat = BiasProfile { a: ratio, exponents: vec![1.0], c: vec![0.0] };
    let via_fk = bias_fk(&degrees, &flat, 0, truth.hidden_size).unwrap();
    assert!((via_fk - bias_known_degrees(&truth).unwrap()).abs() < 1e-9);
}

#[test]
fn noiseless_responses_give_exactly_the_oracle_bias() {
    let pop = BinomialPopulation::draw(&BinomialSimConfig {
        respondents: 500,
        subpopulations: 6,
        total_population: 1_000_000,
        size_range: [1e3, 4e4],
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    for k in 0..6 {
        let expected = pop.expected_responses(k).unwrap();
        let total: f64 = expected.iter().sum();
        let est = pop.total_population as f64 * total / pop.degrees.iter().sum::<f64>();
        let bias = bias_fk(&pop.degrees, &pop.profile, k, pop.sizes[k] as f64).unwrap();
        assert!((est - pop.sizes[k] as f64 - bias).abs() < 1e-9 * pop.sizes[k] as f64, "k={k}");
    }
}

#[test]
fn integer_responses_agree_with_the_estimator() {
    // d = [10, 30], f = [0.9, 1.1], N_k / N = 1/2 → E y = [4.5, 16.5]. Two
    // respondents of each degree answering [4, 5] and [16, 17] hit the mean.
    let profile = BiasProfile { a: 1.0, exponents: vec![1.0], c: vec![0.01] };
    let survey = ArdSurvey::new(vec!["k".into()], vec![vec![4, 5, 16, 17]], vec![Some(500)], 1000).unwrap();
    let est = scaleup_known_degrees(&survey, &[10.0, 10.0, 30.0, 30.0], 0).unwrap().estimate;
    let bias = bias_fk(&[10.0, 30.0], &profile, 0, 500.0).unwrap();
    assert!((bias - 25.0).abs() < 1e-12);
    assert!((est - 500.0 - bias).abs() < 1e-9);
}

#[test]
fn gamma1_is_the_same_for_every_pair_of_lines() {
    let d: Vec<f64> = (1..=200).map(|i| 10.0 + 4.95 * i as f64).collect();
    for p in [-2.0, -1.0, 1.0, 2.0] {
        let g = centered_power(&d, p);
        let closed = gamma1_closed_form(&d, &g, 1.0).unwrap();
        for (c1, c2) in [(-1e-3, 2e-3), (0.0, 1e-4), (5e-4, -5e-4)] {
            let scale = 1.0 / g.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let tp = gamma1_two_point(&d, &g, 1.0, c1 * scale * 1e3, c2 * scale * 1e3).unwrap();
            assert!((tp - closed).abs() <= 1e-10 * closed.abs(), "p={p}: {tp} vs {closed}");
        }
    }
}

#[test]
fn expectations_lie_on_the_gamma_line() {
    let d: Vec<f64> = (0..50).map(|i| 20.0 + 7.0 * i as f64).collect();
    let g = centered_power(&d, 2.0);
    let g1 = gamma1_closed_form(&d, &g, 1.0).unwrap();
    let point = |c: f64| {
        let f: Vec<f64> = g.iter().map(|x| 1.0 + x * c).collect();
        (expected_slope_statistic(&d, &f), expected_inverse_ratio(&d, &f))
    };
    let (x0, y0) = point(0.0);
    let g0 = y0 - g1 * x0;
    for c in [-5e-6, 1e-6, 4e-6] {
        let (x, y) = point(c);
        assert!((g0 + g1 * x - y).abs() < 1e-10, "c={c}");
    }
}

#[test]
fn checks_pass_and_negative_control_fails() {
    let config = CheckConfig { replicates: 400, ..Default::default() };
    let outcomes = run_checks(&config).unwrap();
    assert!(outcomes.iter().all(|o| o.passed), "{outcomes:#?}");

    let corrupted = run_checks(&CheckConfig { corrupt_estimator: true, ..config }).unwrap();
    let failed: Vec<&str> = corrupted.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    assert!(failed.contains(&"binomial-model bias"));
    assert!(failed.contains(&"binomial-model bias, expected responses"));
}

#[test]
fn tiny_samples_get_wider_tolerance() {
    let outcomes = run_checks(&CheckConfig { respondents: 40, replicates: 400, ..Default::default() }).unwrap();
    let known = outcomes.iter().find(|o| o.name == "known-degree bias").unwrap();
    assert_eq!(known.tolerance, 4.0 * known.standard_error.unwrap());
    let large = run_checks(&CheckConfig { replicates: 400, ..Default::default() }).unwrap();
    let known = large.iter().find(|o| o.name == "known-degree bias").unwrap();
    assert_eq!(known.tolerance, 2.0 * known.standard_error.unwrap());
}
