use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nsum_core::adjustment::AdjustStatus;
use nsum_core::estimators::{scaleup_estimated_degrees, EstimateVariant};
use nsum_core::oracles::{run_checks, CheckConfig};
use nsum_core::simulate::read_truth;
use nsum_core::{
    adjust, estimate_degrees, evaluate_loo, load_survey, AdjustmentFit, ArdSurvey, BinomialSimConfig, DegreeEstimates,
    DegreesInput, DeltaGuard, MissingPolicy, NsumError, SbmConfig, SimConfig, SubpopulationFilter,
};

/// Network scale-up size estimation with degree-ratio adjustment.
#[derive(Parser)]
#[command(name = "nsum", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a survey and write responses, metadata and truth files.
    Simulate(SimulateArgs),
    /// Estimate hidden subpopulation sizes from a survey.
    Estimate(EstimateArgs),
    /// Leave-one-out evaluation over the known subpopulations.
    Evaluate(EvaluateArgs),
    /// Check the estimators against the closed-form bias oracles.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Binomial,
    BinomialVarp,
    Sbm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    /// Full-size worlds.
    Full,
    /// Smaller worlds for quick runs.
    Ci,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Binomial,
    BinomialVarp,
    Sbm,
    SbmCi,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "binomial")]
    kind: SimKind,
    #[arg(long, value_enum, default_value = "full")]
    scale: Scale,
    /// JSON simulation config; overrides --kind and --scale.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to the config file's seed, or 1.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SurveyArgs {
    #[arg(long, requires = "metadata")]
    responses: Option<PathBuf>,
    #[arg(long, requires = "responses")]
    metadata: Option<PathBuf>,
    /// `drop-respondent` or `reject`.
    #[arg(long, default_value = "drop-respondent")]
    missing: MissingPolicy,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    survey: SurveyArgs,
    /// Hidden subpopulation to estimate (repeatable). Defaults to all hidden ones.
    #[arg(long)]
    hidden: Vec<String>,
    /// Report only the basic estimate.
    #[arg(long)]
    no_adjust: bool,
    /// `estimated` or `true:<path>`.
    #[arg(long, default_value = "estimated")]
    degrees: DegreesSpec,
    /// `fail` or `clamp:<min>,<max>`.
    #[arg(long, default_value = "fail")]
    guard: DeltaGuard,
    /// e.g. `exclude:twin,diabetic` or `tag:name`.
    #[arg(long, default_value = "")]
    filter: SubpopulationFilter,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    survey: SurveyArgs,
    /// JSON simulation config to simulate and evaluate.
    #[arg(long, conflicts_with_all = ["responses", "preset"])]
    config: Option<PathBuf>,
    /// A built-in simulation study.
    #[arg(long, value_enum, conflicts_with = "responses")]
    preset: Option<Preset>,
    #[arg(long, default_value = "")]
    filter: SubpopulationFilter,
    /// `estimated`, `true` (simulated inputs only) or `true:<path>`.
    /// Defaults to `true` for block-model worlds and `estimated` otherwise.
    #[arg(long)]
    degrees: Option<DegreesSpec>,
    #[arg(long, default_value = "fail")]
    guard: DeltaGuard,
    /// Seed for simulated inputs.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simple random sample size for the sampling checks.
    #[arg(long, default_value_t = 800)]
    respondents: usize,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    /// Negative control: perturb every estimator output.
    #[arg(long, hide = true)]
    corrupt_estimator: bool,
}

#[derive(Clone, Debug)]
enum DegreesSpec {
    Estimated,
    True,
    TruePath(PathBuf),
}

impl std::str::FromStr for DegreesSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "estimated" => Ok(DegreesSpec::Estimated),
            "true" => Ok(DegreesSpec::True),
            _ => match s.strip_prefix("true:") {
                Some(path) if !path.is_empty() => Ok(DegreesSpec::TruePath(path.into())),
                _ => Err(format!("expected `estimated`, `true` or `true:<path>`, got `{s}`")),
            },
        }
    }
}

impl fmt::Display for DegreesSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegreesSpec::Estimated => f.write_str("estimated"),
            DegreesSpec::True => f.write_str("true"),
            DegreesSpec::TruePath(p) => write!(f, "true:{}", p.display()),
        }
    }
}

/// A run that completed but whose numbers must not be trusted.
#[derive(Debug)]
struct NumericalFailure(String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err.chain().any(|e| {
                e.downcast_ref::<NumericalFailure>().is_some()
                    || e.downcast_ref::<NsumError>().is_some_and(NsumError::is_numerical)
            });
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Verify(args) => verify(args),
    }
}

fn prepare_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn read_sim_config(path: &Path) -> anyhow::Result<SimConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid simulation config {}", path.display()))
}

fn preset_config(kind: SimKind, scale: Scale) -> SimConfig {
    match (kind, scale) {
        (SimKind::Binomial, Scale::Full) => SimConfig::Binomial(BinomialSimConfig::default()),
        (SimKind::BinomialVarp, Scale::Full) => SimConfig::Binomial(BinomialSimConfig::varying_exponent()),
        (SimKind::Binomial, Scale::Ci) => {
            SimConfig::Binomial(BinomialSimConfig { respondents: 2000, subpopulations: 20, ..Default::default() })
        }
        (SimKind::BinomialVarp, Scale::Ci) => SimConfig::Binomial(BinomialSimConfig {
            respondents: 2000,
            subpopulations: 20,
            ..BinomialSimConfig::varying_exponent()
        }),
        (SimKind::Sbm, Scale::Full) => SimConfig::Sbm(SbmConfig::full()),
        (SimKind::Sbm, Scale::Ci) => SimConfig::Sbm(SbmConfig::ci()),
    }
}

fn compact(config: &SimConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let base = match &args.config {
        Some(path) => {
            require_file(path)?;
            read_sim_config(path)?
        }
        None => preset_config(args.kind, args.scale),
    };
    let seed = args.seed.unwrap_or(if args.config.is_some() { base.seed() } else { 1 });
    let config = base.with_seed(seed);
    prepare_out_dir(&args.out)?;

    let world = config.simulate()?;
    world.write(&args.out)?;
    println!("nsum simulate seed={seed} config={}", compact(&config));
    println!(
        "wrote {} respondents x {} subpopulations to {}",
        world.survey.n_respondents(),
        world.survey.n_subpopulations(),
        args.out.display()
    );
    Ok(())
}

fn load(args: &SurveyArgs) -> anyhow::Result<ArdSurvey> {
    let (Some(responses), Some(metadata)) = (&args.responses, &args.metadata) else {
        bail!("--responses and --metadata are required");
    };
    require_file(responses)?;
    require_file(metadata)?;
    Ok(load_survey(responses, metadata, args.missing)?)
}

/// Reads true degrees from a truth sidecar (`.json`) or one number per line.
fn read_degrees(path: &Path) -> anyhow::Result<Vec<f64>> {
    require_file(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(read_truth(path)?.degrees().to_vec());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>().with_context(|| format!("{}: line {}: `{l}` is not a number", path.display(), i + 1))
        })
        .collect()
}

#[derive(Serialize)]
struct TargetReport {
    label: String,
    basic_estimate: f64,
    variant: EstimateVariant,
    #[serde(skip_serializing_if = "Option::is_none")]
    adjustment: Option<AdjustmentFit>,
}

#[derive(Serialize)]
struct EstimateReport {
    respondents: usize,
    dropped_rows: usize,
    degrees: String,
    filter: String,
    guard: String,
    targets: Vec<TargetReport>,
}

fn estimate(args: EstimateArgs) -> anyhow::Result<()> {
    if matches!(args.degrees, DegreesSpec::True) {
        bail!("--degrees true needs a path here: use true:<path>");
    }
    let survey = load(&args.survey)?;
    let true_degrees = match &args.degrees {
        DegreesSpec::TruePath(p) => Some(read_degrees(p)?),
        _ => None,
    };
    prepare_out_dir(&args.out)?;
    println!(
        "nsum estimate responses={} metadata={} degrees={} filter={:?} guard={}{}",
        args.survey.responses.as_ref().unwrap().display(),
        args.survey.metadata.as_ref().unwrap().display(),
        args.degrees,
        args.filter.to_string(),
        args.guard,
        if args.no_adjust { " no-adjust" } else { "" }
    );

    let survey = nsum_core::filter_subpopulations(&survey, &args.filter)?;
    let targets: Vec<usize> = if args.hidden.is_empty() {
        survey.hidden_indices()
    } else {
        args.hidden
            .iter()
            .map(|label| {
                let k = survey.index_of(label).ok_or_else(|| NsumError::UnknownLabel(label.clone()))?;
                if survey.is_known(k) {
                    bail!("`{label}` has a known size; list it as hidden in the metadata to estimate it");
                }
                Ok(k)
            })
            .collect::<anyhow::Result<_>>()?
    };
    if targets.is_empty() {
        bail!("the survey has no hidden subpopulation to estimate");
    }
    let degrees = match true_degrees {
        Some(d) => DegreeEstimates::from_true(d, &survey)?,
        None => estimate_degrees(&survey)?,
    };

    let mut reports = Vec::new();
    let mut guarded = Vec::new();
    for &k in &targets {
        let label = survey.label(k).to_string();
        let basic = scaleup_estimated_degrees(&survey, &degrees, k, false)?;
        let adjustment = if args.no_adjust {
            None
        } else {
            let fit = adjust(&survey, &degrees, k, args.guard).with_context(|| format!("adjusting `{label}`"))?;
            if fit.status == AdjustStatus::Guarded {
                guarded.push(label.clone());
            }
            Some(fit)
        };
        match &adjustment {
            Some(fit) => println!(
                "{label}: basic {:.1}, adjusted {:.1} (delta {}, {:?})",
                basic.estimate,
                fit.adjusted_estimate,
                fit.delta_hat.map_or("n/a".to_string(), |d| format!("{d:.4}")),
                fit.status
            ),
            None => println!("{label}: basic {:.1}", basic.estimate),
        }
        reports.push(TargetReport { label, basic_estimate: basic.estimate, variant: basic.variant, adjustment });
    }

    let report = EstimateReport {
        respondents: survey.n_respondents(),
        dropped_rows: survey.dropped_rows(),
        degrees: args.degrees.to_string(),
        filter: args.filter.to_string(),
        guard: args.guard.to_string(),
        targets: reports,
    };
    let path = args.out.join("estimate.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    if !guarded.is_empty() {
        return Err(NumericalFailure(format!(
            "predicted inverse degree ratio is not positive for {}; estimates left unadjusted (see {})",
            guarded.join(", "),
            path.display()
        ))
        .into());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let sim = match (&args.config, args.preset) {
        (Some(path), _) => {
            require_file(path)?;
            Some(read_sim_config(path)?.with_seed(args.seed))
        }
        (None, Some(preset)) => Some(
            match preset {
                Preset::Binomial => preset_config(SimKind::Binomial, Scale::Full),
                Preset::BinomialVarp => preset_config(SimKind::BinomialVarp, Scale::Full),
                Preset::Sbm => preset_config(SimKind::Sbm, Scale::Full),
                Preset::SbmCi => preset_config(SimKind::Sbm, Scale::Ci),
            }
            .with_seed(args.seed),
        ),
        (None, None) => None,
    };
    let spec = args.degrees.clone().unwrap_or(match &sim {
        Some(SimConfig::Sbm(_)) => DegreesSpec::True,
        _ => DegreesSpec::Estimated,
    });
    if sim.is_none() && matches!(spec, DegreesSpec::True) {
        bail!("--degrees true is only available for simulated inputs; use true:<path>");
    }
    let (survey, truth) = match &sim {
        Some(config) => {
            let world = config.simulate()?;
            (world.survey, Some(world.truth))
        }
        None => (load(&args.survey)?, None),
    };
    let degrees = match &spec {
        DegreesSpec::Estimated => DegreesInput::Estimated,
        DegreesSpec::True => DegreesInput::True(truth.expect("simulated").degrees().to_vec()),
        DegreesSpec::TruePath(p) => DegreesInput::True(read_degrees(p)?),
    };
    prepare_out_dir(&args.out)?;
    let source = match &sim {
        Some(config) => format!("config={} seed={}", compact(config), args.seed),
        None => format!(
            "responses={} metadata={}",
            args.survey.responses.as_ref().unwrap().display(),
            args.survey.metadata.as_ref().unwrap().display()
        ),
    };
    println!("nsum evaluate {source} degrees={spec} filter={:?} guard={}", args.filter.to_string(), args.guard);

    let mut report = evaluate_loo(&survey, &degrees, &args.filter, args.guard)?;
    if sim.is_some() {
        report = report.with_seed(args.seed);
    }
    report.write_json(&args.out.join("evaluation.json"))?;
    report.write_csv(&args.out.join("evaluation.csv"))?;

    let a = &report.aggregate;
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    println!(
        "MAPE basic {} adjusted {} reduction {}% | adjusted better on {}/{} | {} failed or guarded",
        pct(a.mape_basic),
        pct(a.mape_adjusted),
        pct(a.percent_reduction),
        a.adjusted_better,
        a.evaluated,
        a.failures
    );
    Ok(())
}

fn verify(args: VerifyArgs) -> anyhow::Result<()> {
    let config = CheckConfig {
        seed: args.seed,
        respondents: args.respondents,
        replicates: args.replicates,
        corrupt_estimator: args.corrupt_estimator,
    };
    println!(
        "nsum verify seed={} respondents={} replicates={}{}",
        args.seed,
        args.respondents,
        args.replicates,
        if args.corrupt_estimator { " corrupt-estimator" } else { "" }
    );
    let outcomes = run_checks(&config)?;
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(NumericalFailure(format!("{failed} of {} oracle checks failed", outcomes.len())).into());
    }
    println!("all {} oracle checks passed", outcomes.len());
    Ok(())
}
