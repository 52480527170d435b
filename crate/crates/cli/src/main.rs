//! `hrsim`: simulate cohorts, compute marginal oracles, run the scenario
//! grid and summarize a finished bundle.
//!
//! Exit codes: 0 success, 2 invalid input, 3 missing or unreadable bundle,
//! 4 numerical failure, 1 anything else (I/O).

use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hrsim::cox::FitOptions;
use hrsim::oracle::{true_marginal_hr, OracleCache};
use hrsim::sim::{generate_cohort, Scenario};
use hrsim::study::{self, OutputFormat, Profile, StudyConfig};
use hrsim::Error;

#[derive(Parser)]
#[command(name = "hrsim", version, about = "Hazard-ratio decomposition simulation study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one simulated cohort as CSV (`id,z,l,time,event`) to stdout.
    Simulate(ScenarioArgs),
    /// Estimate the true marginal log hazard ratio of one scenario.
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Duplicate-cohort replications.
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Reuse and update an oracle cache file.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run the scenario grid and write the result bundle.
    RunStudy(StudyArgs),
    /// Print the decomposition table of a finished bundle.
    Report {
        /// Bundle directory.
        #[arg(default_value = "results")]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Log hazard ratio of treatment.
    #[arg(long, allow_negative_numbers = true)]
    log_hr_e: f64,
    /// Log hazard ratio per unit of the baseline covariate.
    #[arg(long, allow_negative_numbers = true)]
    log_hr_l: f64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ScenarioArgs {
    fn scenario(&self) -> Scenario {
        Scenario::preset(self.log_hr_e, self.log_hr_l)
            .with_n_subjects(self.n)
            .with_seed(self.seed)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Full,
    Quick,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Raw,
    Report,
}

#[derive(Args)]
struct StudyArgs {
    /// TOML config; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets n, reps and oracle reps before any explicit flag is applied.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Restrict to `E:L` pairs, e.g. `0.9:0.4,-0.9:0.4`.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair, allow_hyphen_values = true)]
    scenarios: Option<Vec<[f64; 2]>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    oracle_reps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected E:L, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok([num(a)?, num(b)?])
}

impl StudyArgs {
    fn config(&self) -> hrsim::Result<StudyConfig> {
        let mut c = match &self.config {
            Some(path) => StudyConfig::load(path)?,
            None => StudyConfig::default(),
        };
        if let Some(p) = self.profile {
            c.apply_profile(match p {
                ProfileArg::Full => Profile::Full,
                ProfileArg::Quick => Profile::Quick,
            });
        }
        if let Some(s) = &self.scenarios {
            c.scenarios = Some(s.clone());
        }
        if let Some(v) = self.reps {
            c.replications = v;
        }
        if let Some(v) = self.oracle_reps {
            c.oracle_replications = v;
        }
        if let Some(v) = self.n {
            c.n_subjects = v;
        }
        if let Some(v) = self.seed {
            c.master_seed = v;
        }
        if let Some(v) = self.workers {
            c.worker_count = v;
        }
        if let Some(v) = &self.out {
            c.output_directory = v.clone();
        }
        if let Some(f) = self.format {
            c.format = match f {
                FormatArg::Raw => OutputFormat::Raw,
                FormatArg::Report => OutputFormat::Report,
            };
        }
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_validation() => 2,
        Error::MissingArtifact(_) | Error::MalformedArtifact { .. } => 3,
        Error::PropensityNotConverged | Error::ExtremePropensity { .. } | Error::Aggregation(_) => 4,
        _ => 1,
    }
}

fn simulate(args: &ScenarioArgs) -> hrsim::Result<()> {
    let cohort = generate_cohort(&args.scenario())?;
    let mut out = BufWriter::new(std::io::stdout().lock());
    cohort.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn oracle(args: &ScenarioArgs, reps: usize, cache: Option<&PathBuf>) -> hrsim::Result<()> {
    let scenario = args.scenario();
    let opts = FitOptions::default();
    let estimate = match cache {
        Some(path) => {
            let mut c = OracleCache::load(path)?;
            let (est, hit) = c.get_or_compute(&scenario, reps, &opts)?;
            if !hit {
                c.save(path)?;
            }
            est
        }
        None => true_marginal_hr(&scenario, reps, &opts)?,
    };
    println!("{}", serde_json::to_string_pretty(&estimate)?);
    Ok(())
}

/// Returns false when some scenario failed.
fn run_study(args: &StudyArgs) -> hrsim::Result<bool> {
    let config = args.config()?;
    let results = study::run_study(&config)?;
    let failures = results.failures();
    println!(
        "{} scenarios written to {} (config {})",
        results.runs.len(),
        config.output_directory.display(),
        &results.config_hash[..12]
    );
    for f in &failures {
        eprintln!(
            "scenario {}:{} failed: {}",
            f.log_hr_treatment(),
            f.log_hr_covariate(),
            f.error.as_deref().unwrap_or("unknown error")
        );
    }
    Ok(failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Oracle { scenario, reps, cache } => oracle(scenario, *reps, cache.as_ref()).map(|_| true),
        Command::RunStudy(a) => run_study(a),
        Command::Report { dir } => study::report(dir).map(|r| {
            print!("{}", r.render());
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
