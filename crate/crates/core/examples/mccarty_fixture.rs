//! Regenerates the synthetic survey in `tests/fixtures/mccarty_like`.
//!
//! 574 respondents, 32 subpopulations (12 first names, 17 other known groups,
//! 3 hidden), U.S.-scale sizes, and 53 rows with missing answers. Entirely
//! synthetic; it only mimics the shape of a classic telephone ARD survey.
//!
//! `cargo run -p nsum-core --example mccarty_fixture [out-dir]`

use std::collections::BTreeMap;
use std::path::PathBuf;

use nsum_core::Metadata;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal};

const TOTAL: u64 = 250_000_000;
const RESPONDENTS: usize = 574;
const SEED: u64 = 574;

const NAMES: [(&str, u64); 12] = [
    ("michael", 4_880_000),
    ("christina", 640_000),
    ("christopher", 2_070_000),
    ("jacqueline", 540_000),
    ("james", 5_010_000),
    ("jennifer", 1_930_000),
    ("anthony", 1_340_000),
    ("kimberly", 900_000),
    ("robert", 4_990_000),
    ("stephanie", 870_000),
    ("david", 4_230_000),
    ("nicole", 620_000),
];

// (label, size, degree-bias coefficient)
const GROUPS: [(&str, u64, f64); 17] = [
    ("twin", 4_265_000, 0.9),
    ("diabetic", 9_500_000, 0.8),
    ("postal_worker", 787_000, -0.3),
    ("gun_dealer", 80_000, 0.5),
    ("gave_birth", 3_900_000, -0.5),
    ("adopted", 500_000, 0.2),
    ("widow_under_65", 2_900_000, -0.4),
    ("dialysis", 200_000, 0.1),
    ("pilot", 110_000, 0.6),
    ("jaycees", 200_000, 0.7),
    ("native_american", 1_960_000, -0.2),
    ("opened_business", 1_100_000, 0.4),
    ("suicide", 30_000, -0.1),
    ("auto_accident", 40_000, 0.0),
    ("prisoner", 1_300_000, -0.6),
    ("homicide", 20_000, -0.3),
    ("aids", 700_000, 0.3),
];

const HIDDEN: [(&str, u64, f64); 3] =
    [("homeless", 600_000, -0.5), ("raped", 1_100_000, -0.3), ("hiv_positive", 800_000, 0.2)];

fn main() {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mccarty_like"));
    std::fs::create_dir_all(&out).expect("create output directory");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let degrees: Vec<f64> = {
        let dist = LogNormal::new(600f64.ln(), 0.6).unwrap();
        (0..RESPONDENTS).map(|_| dist.sample(&mut rng).round().max(10.0)).collect()
    };
    let mean_degree = degrees.iter().sum::<f64>() / RESPONDENTS as f64;

    let mut columns: Vec<(String, Vec<u32>)> = Vec::new();
    let mut respond = |label: &str, size: u64, c: f64, rng: &mut ChaCha8Rng| {
        let share = size as f64 / TOTAL as f64;
        let ys = degrees
            .iter()
            .map(|&d| {
                let f = (1.0 + c * (d / mean_degree - 1.0)).max(0.0);
                let p = (share * f).min(1.0);
                Binomial::new(d as u64, p).unwrap().sample(rng) as u32
            })
            .collect();
        columns.push((label.to_string(), ys));
    };
    for (label, size) in NAMES {
        respond(label, size, 0.0, &mut rng);
    }
    for (label, size, c) in GROUPS.iter().chain(&HIDDEN) {
        respond(label, *size, *c, &mut rng);
    }

    let mut cells: Vec<Vec<String>> =
        (0..RESPONDENTS).map(|i| columns.iter().map(|(_, ys)| ys[i].to_string()).collect()).collect();
    let rows = sample(&mut rng, RESPONDENTS, 53).into_vec();
    for (n, &row) in rows.iter().enumerate() {
        let blanks = if n < 47 { 1 } else { 2 };
        for col in sample(&mut rng, columns.len(), blanks) {
            cells[row][col] = "NA".into();
        }
    }

    let mut writer = csv::Writer::from_path(out.join("responses.csv")).expect("create responses.csv");
    let header = std::iter::once("id".to_string()).chain(columns.iter().map(|(l, _)| l.clone()));
    writer.write_record(header).unwrap();
    for (i, row) in cells.iter().enumerate() {
        let id = format!("r{:04}", i + 1);
        writer.write_record(std::iter::once(id).chain(row.iter().cloned())).unwrap();
    }
    writer.flush().unwrap();

    let known_sizes: BTreeMap<String, u64> = NAMES
        .iter()
        .map(|(l, s)| (l.to_string(), *s))
        .chain(GROUPS.iter().map(|(l, s, _)| (l.to_string(), *s)))
        .collect();
    let tags = NAMES.iter().map(|(l, _)| (l.to_string(), vec!["name".to_string()])).collect();
    let metadata = Metadata {
        total_population: TOTAL,
        known_sizes,
        hidden: HIDDEN.iter().map(|(l, _, _)| l.to_string()).collect(),
        tags,
    };
    let json = serde_json::to_string_pretty(&metadata).unwrap();
    std::fs::write(out.join("metadata.json"), json + "\n").expect("write metadata.json");
    println!("wrote {}", out.display());
}
