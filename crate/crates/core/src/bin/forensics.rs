//! `forensics` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use forensics_core::association::{
    cross_election_correlation, residual_correlation_test, signature_share_correlation, Grouping,
};
use forensics_core::audit::{parse_audited_ids, plan_audit, read_ballots, sample_randomness_check, Covariate};
use forensics_core::dataset::write_dataset;
use forensics_core::digits::{digit_test, DigitReference, GenerativeModel, TallySource};
use forensics_core::metadata::{bytes_vs_votes_test, traffic_class_compare, TrafficMeasure};
use forensics_core::permutation::{permutation_test, DispersionKind, DEFAULT_THRESHOLDS};
use forensics_core::polling::{exit_poll_test, ExitPollOptions, PollReference, TailDirection, DEFAULT_TAU};
use forensics_core::report::{render_report, run_battery, BatteryConfig, ReportFormat};
use forensics_core::stats::Alternative;
use forensics_core::synth::{generate, inject_fraud, FraudScheme, SynthConfig};
use forensics_core::{load_dataset, validate, DatasetPaths, ElectionDataset, ForensicsError};

#[derive(Parser)]
#[command(name = "forensics", version, about = "Statistical forensics for election data")]
struct Cli {
    /// Dataset directory (four CSVs, optional dataset.toml) or a dataset.toml file.
    #[arg(long, short = 'd', global = true, default_value = ".")]
    data: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset, print its summary and optionally rewrite it canonically.
    Ingest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report every integrity violation; exits 2 if there are any.
    Validate,
    /// Run a single detector.
    #[command(subcommand)]
    Test(TestCommand),
    /// Audit planning and audited-sample checks.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Generate a synthetic election, optionally with injected fraud.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        fraud: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured test battery.
    Battery {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "json")]
        format: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Stochastic {
    #[arg(long, default_value_t = 999)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Uniform,
    Binomial,
}

#[derive(Clone, Copy, ValueEnum)]
enum AutoClassify {
    Terciles,
}

#[derive(Subcommand)]
enum TestCommand {
    Digits {
        #[arg(long, default_value_t = 2)]
        position: u8,
        #[arg(long, default_value = "machine-yes", value_parser = parse_source)]
        source: TallySource,
        /// Use a Monte-Carlo reference for counts capped at this value instead of Benford.
        #[arg(long, alias = "cap")]
        bounded_cap: Option<u64>,
        #[arg(long, value_enum, default_value = "uniform")]
        model: ModelKind,
        #[arg(long)]
        nu: Option<u64>,
        #[arg(long)]
        p: Option<f64>,
        /// Monte-Carlo draws for the bounded reference.
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Permutation {
        #[arg(long = "stat", alias = "statistic", default_value = "yes-var", value_parser = parse_dispersion)]
        statistic: DispersionKind,
        #[arg(long = "alpha-thresholds", alias = "thresholds", value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[command(flatten)]
        run: Stochastic,
    },
    Exitpoll {
        #[arg(long, default_value = "ge", value_parser = parse_direction)]
        direction: TailDirection,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        pollster: Option<String>,
        #[arg(long, default_value = "center", value_parser = parse_reference)]
        reference: PollReference,
    },
    Association {
        #[arg(long, default_value = "sig-split", value_parser = parse_grouping)]
        grouping: Grouping,
        #[command(flatten)]
        run: Stochastic,
    },
    Residuals {
        #[arg(long, default_value = "greater", value_parser = parse_alternative)]
        alternative: Alternative,
        #[command(flatten)]
        run: Stochastic,
    },
    CrossElection {
        /// Dataset manifests or directories, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "sig-split", value_parser = parse_grouping)]
        grouping: Grouping,
        #[command(flatten)]
        run: Stochastic,
    },
    Metadata {
        #[arg(long, default_value = "bytes-out", value_parser = parse_measure)]
        measure: TrafficMeasure,
        #[arg(long, value_enum)]
        auto_classify: Option<AutoClassify>,
        #[command(flatten)]
        run: Stochastic,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    Plan {
        #[arg(long)]
        margin: u64,
        /// CSV with a `ballots` column, one row per precinct.
        #[arg(long)]
        ballots_file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.9)]
        confidence: f64,
    },
    Randomness {
        /// Text file with one audited center id per line.
        #[arg(long)]
        audited: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_covariate)]
        covariates: Option<Vec<Covariate>>,
        #[command(flatten)]
        run: Stochastic,
    },
}

fn kebab<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_source(s: &str) -> Result<TallySource, String> {
    kebab(s)
}
fn parse_dispersion(s: &str) -> Result<DispersionKind, String> {
    kebab(s)
}
fn parse_direction(s: &str) -> Result<TailDirection, String> {
    kebab(s)
}
fn parse_reference(s: &str) -> Result<PollReference, String> {
    kebab(s)
}
fn parse_alternative(s: &str) -> Result<Alternative, String> {
    kebab(s)
}
fn parse_grouping(s: &str) -> Result<Grouping, String> {
    s.parse().map_err(|e: ForensicsError| e.to_string())
}
fn parse_measure(s: &str) -> Result<TrafficMeasure, String> {
    s.parse().map_err(|e: ForensicsError| e.to_string())
}
fn parse_covariate(s: &str) -> Result<Covariate, String> {
    s.parse().map_err(|e: ForensicsError| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<ForensicsError> for Failure {
    fn from(e: ForensicsError) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn load(path: &Path) -> CliResult<ElectionDataset> {
    Ok(load_dataset(&DatasetPaths::resolve(path)?)?)
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    label: &'a str,
    official_yes_share: f64,
    centers: usize,
    machines: usize,
    exit_polls: usize,
    transmissions: usize,
    violations: usize,
    fingerprint: String,
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Ingest { out } => {
            let dataset = load(&cli.data)?;
            let report = validate(&dataset);
            print_json(&IngestSummary {
                label: &dataset.label,
                official_yes_share: dataset.official_yes_share,
                centers: dataset.centers.len(),
                machines: dataset.machines.len(),
                exit_polls: dataset.exit_polls.len(),
                transmissions: dataset.transmissions.len(),
                violations: report.violations.len(),
                fingerprint: dataset.fingerprint(),
            })?;
            if let Some(dir) = out {
                write_dataset(&dataset, &dir)?;
            }
            Ok(())
        }
        Command::Validate => {
            let dataset = load(&cli.data)?;
            let report = validate(&dataset);
            for v in &report.violations {
                println!("{v}");
            }
            if report.is_clean() {
                println!("ok: no violations");
                Ok(())
            } else {
                Err(Failure::Data(format!("{} violation(s)", report.violations.len())))
            }
        }
        Command::Test(test) => run_test(&cli.data, test),
        Command::Audit(AuditCommand::Plan {
            margin,
            ballots_file,
            lambda,
            confidence,
        }) => {
            let ballots = read_ballots(&ballots_file)?;
            print_json(&plan_audit(margin, &ballots, lambda, confidence)?)
        }
        Command::Audit(AuditCommand::Randomness { audited, covariates, run }) => {
            let dataset = load(&cli.data)?;
            let text = std::fs::read_to_string(&audited)
                .map_err(|e| Failure::Data(format!("{}: {e}", audited.display())))?;
            let ids: BTreeSet<String> = parse_audited_ids(&text);
            let covariates = covariates.unwrap_or_else(|| Covariate::ALL.to_vec());
            print_json(&sample_randomness_check(&dataset, &ids, &covariates, run.reps, run.seed)?)
        }
        Command::Simulate { config, fraud, seed, out } => {
            let config = match config {
                Some(p) => SynthConfig::from_path(&p)?,
                None => SynthConfig::default(),
            };
            let scheme = match fraud {
                Some(p) => FraudScheme::from_path(&p)?,
                None => FraudScheme::none(),
            };
            let clean = generate(&config, seed)?;
            let (dataset, manifest) = inject_fraud(&clean, &scheme, seed)?;
            write_dataset(&dataset, &out)?;
            let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Usage(e.to_string()))?;
            write_file(&out.join("manifest.json"), &(text + "\n"))?;
            eprintln!(
                "wrote {} centers, {} machines to {}",
                dataset.centers.len(),
                dataset.machines.len(),
                out.display()
            );
            Ok(())
        }
        Command::Battery {
            config,
            seed,
            format,
            output,
        } => {
            let format: ReportFormat = format.parse()?;
            let config = BatteryConfig::from_path(&config)?;
            let dataset = load(&cli.data)?;
            let report = run_battery(&dataset, &config, seed)?;
            let text = render_report(&report, format)?;
            match output {
                Some(path) => write_file(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn run_test(data: &Path, test: TestCommand) -> CliResult {
    match test {
        TestCommand::Digits {
            position,
            source,
            bounded_cap,
            model,
            nu,
            p,
            reps,
            seed,
        } => {
            let dataset = load(data)?;
            let reference = match bounded_cap {
                None => DigitReference::Benford,
                Some(cap) => {
                    let model = match model {
                        ModelKind::Uniform => GenerativeModel::UniformZeroCap,
                        ModelKind::Binomial => GenerativeModel::Binomial {
                            nu: nu.ok_or_else(|| Failure::Usage("--model binomial needs --nu".into()))?,
                            p: p.ok_or_else(|| Failure::Usage("--model binomial needs --p".into()))?,
                        },
                    };
                    DigitReference::Bounded { cap, model, reps }
                }
            };
            print_json(&digit_test(&dataset, position, source, reference, seed)?)
        }
        TestCommand::Permutation {
            statistic,
            thresholds,
            run,
        } => {
            let dataset = load(data)?;
            let thresholds = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
            print_json(&permutation_test(&dataset, statistic, run.reps, run.seed, &thresholds)?)
        }
        TestCommand::Exitpoll {
            direction,
            tau,
            pollster,
            reference,
        } => {
            let dataset = load(data)?;
            let options = ExitPollOptions {
                direction,
                tau,
                pollster,
                reference,
            };
            print_json(&exit_poll_test(&dataset, &options)?)
        }
        TestCommand::Association { grouping, run } => {
            let dataset = load(data)?;
            print_json(&signature_share_correlation(&dataset, grouping, run.reps, run.seed)?)
        }
        TestCommand::Residuals { alternative, run } => {
            let dataset = load(data)?;
            print_json(&residual_correlation_test(&dataset, run.reps, run.seed, alternative)?)
        }
        TestCommand::CrossElection { inputs, grouping, run } => {
            let datasets = inputs.iter().map(|p| load(p)).collect::<CliResult<Vec<_>>>()?;
            let refs: Vec<&ElectionDataset> = datasets.iter().collect();
            print_json(&cross_election_correlation(&refs, grouping, run.reps, run.seed)?)
        }
        TestCommand::Metadata {
            measure,
            auto_classify,
            run,
        } => {
            let dataset = load(data)?;
            let classes = traffic_class_compare(&dataset, measure, auto_classify.is_some());
            let regression = bytes_vs_votes_test(&dataset, measure, run.reps, run.seed);
            let (classes, regression) = match (classes, regression) {
                (Err(a), Err(_)) => return Err(a.into()),
                (c, r) => (c, r),
            };
            let as_value = |r: Result<serde_json::Value, ForensicsError>| match r {
                Ok(v) => v,
                Err(e) => serde_json::json!({ "status": "skipped", "reason": e.to_string() }),
            };
            print_json(&serde_json::json!({
                "class_comparison": as_value(classes.map(|c| serde_json::to_value(c).expect("serializable"))),
                "bytes_vs_votes": as_value(regression.map(|r| serde_json::to_value(r).expect("serializable"))),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
