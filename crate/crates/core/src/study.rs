//! Scenario-grid studies: configuration, seeded parallel execution and the
//! persisted report bundle.
//!
//! A bundle directory holds
//!
//! | file | contents |
//! |------|----------|
//! | `table1.csv` | one decomposition row per scenario |
//! | `table2.csv` | period-specific crude estimates, harmful covariate |
//! | `table3.csv` | period-specific crude estimates, protective covariate |
//! | `figure1.csv` | survivor covariate means, strongest harmful covariate |
//! | `figure2.csv` | survivor covariate means, strongest protective covariate |
//! | `manifest.json` | config, config hash, per-scenario convergence and status |
//! | `oracle_cache.json` | marginal oracle results reused across runs |
//!
//! Raw output is a pure function of the result-affecting config fields; the
//! worker count only changes how fast it arrives.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    aggregate_periods, aggregate_trajectory, analyze_replication, decompose, period_plan,
    period_specific_hr, survivor_means, trajectory_times, DecompositionRow, PeriodEstimate,
    PeriodSummary, ReplicationResult, SurvivorMean, TrajectoryPoint,
};
use crate::cox::FitOptions;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::oracle::{OracleCache, OracleEstimate};
use crate::rng::{mix_seed, scenario_key};
use crate::sim::{generate_cohort, Scenario};
use crate::stats::McSummary;

pub const DEFAULT_LOG_HR_TREATMENT: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];
pub const DEFAULT_LOG_HR_COVARIATE: [f64; 5] = [-0.4, -0.2, 0.0, 0.2, 0.4];
pub const DEFAULT_MASTER_SEED: u64 = 20_240_917;

pub const TABLE1: &str = "table1.csv";
pub const TABLE2: &str = "table2.csv";
pub const TABLE3: &str = "table3.csv";
pub const FIGURE1: &str = "figure1.csv";
pub const FIGURE2: &str = "figure2.csv";
pub const MANIFEST: &str = "manifest.json";
pub const ORACLE_CACHE: &str = "oracle_cache.json";

const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Shortest round-trip representation of every value.
    #[default]
    Raw,
    /// Three decimals.
    Report,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Full,
    /// N = 2,000, 100 replications, 25 oracle replications.
    Quick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub log_hr_treatment: Vec<f64>,
    pub log_hr_covariate: Vec<f64>,
    /// Explicit `[β₁, β₂]` pairs. When present the grid is ignored.
    pub scenarios: Option<Vec<[f64; 2]>>,
    pub replications: usize,
    pub oracle_replications: usize,
    pub n_subjects: usize,
    pub master_seed: u64,
    pub worker_count: usize,
    pub output_directory: PathBuf,
    pub format: OutputFormat,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            log_hr_treatment: DEFAULT_LOG_HR_TREATMENT.to_vec(),
            log_hr_covariate: DEFAULT_LOG_HR_COVARIATE.to_vec(),
            scenarios: None,
            replications: 500,
            oracle_replications: 100,
            n_subjects: 10_000,
            master_seed: DEFAULT_MASTER_SEED,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            output_directory: PathBuf::from("results"),
            format: OutputFormat::Raw,
        }
    }
}

/// Fields that determine the raw output bytes.
#[derive(Serialize)]
struct HashedFields<'a> {
    scenarios: &'a [(f64, f64)],
    replications: usize,
    oracle_replications: usize,
    n_subjects: usize,
    master_seed: u64,
    format: OutputFormat,
}

impl StudyConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut c = Self::default();
        c.apply_profile(profile);
        c
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Full => {
                self.n_subjects = 10_000;
                self.replications = 500;
                self.oracle_replications = 100;
            }
            Profile::Quick => {
                self.n_subjects = 2_000;
                self.replications = 100;
                self.oracle_replications = 25;
            }
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.scenarios.is_none() {
            if self.log_hr_treatment.is_empty() {
                bad.push("log_hr_treatment grid is empty".to_string());
            }
            if self.log_hr_covariate.is_empty() {
                bad.push("log_hr_covariate grid is empty".to_string());
            }
        }
        if self.scenarios.as_ref().is_some_and(|s| s.is_empty()) {
            bad.push("scenario list is empty".to_string());
        }
        if self.scenario_pairs().iter().any(|(a, b)| !(a.is_finite() && b.is_finite())) {
            bad.push("effect sizes must be finite".to_string());
        }
        if self.replications < 2 {
            bad.push(format!("replications must be >= 2 (got {})", self.replications));
        }
        if self.oracle_replications == 0 {
            bad.push("oracle_replications must be >= 1 (got 0)".to_string());
        }
        if self.n_subjects < 2 {
            bad.push(format!("n_subjects must be >= 2 (got {})", self.n_subjects));
        }
        if self.worker_count == 0 {
            bad.push("worker_count must be >= 1 (got 0)".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Scenarios in run order: the explicit list, or the grid with the
    /// treatment effect varying slowest.
    pub fn scenario_pairs(&self) -> Vec<(f64, f64)> {
        match &self.scenarios {
            Some(list) => list.iter().map(|[a, b]| (*a, *b)).collect(),
            None => self
                .log_hr_treatment
                .iter()
                .flat_map(|&a| self.log_hr_covariate.iter().map(move |&b| (a, b)))
                .collect(),
        }
    }

    pub fn config_hash(&self) -> String {
        let fields = HashedFields {
            scenarios: &self.scenario_pairs(),
            replications: self.replications,
            oracle_replications: self.oracle_replications,
            n_subjects: self.n_subjects,
            master_seed: self.master_seed,
            format: self.format,
        };
        let json = serde_json::to_string(&fields).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Reference-trial scenario with this study's sample size; its seed
    /// drives the oracle.
    pub fn scenario(&self, log_hr_treatment: f64, log_hr_covariate: f64) -> Scenario {
        Scenario::preset(log_hr_treatment, log_hr_covariate)
            .with_n_subjects(self.n_subjects)
            .with_seed(scenario_seed(self.master_seed, log_hr_treatment, log_hr_covariate))
    }
}

pub fn scenario_seed(master_seed: u64, log_hr_treatment: f64, log_hr_covariate: f64) -> u64 {
    mix_seed(master_seed, &[scenario_key(log_hr_treatment, log_hr_covariate)])
}

pub fn replication_seed(
    master_seed: u64,
    log_hr_treatment: f64,
    log_hr_covariate: f64,
    replication: usize,
) -> u64 {
    mix_seed(
        master_seed,
        &[scenario_key(log_hr_treatment, log_hr_covariate), replication as u64],
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConvergenceCounts {
    pub replications: usize,
    pub adjusted: usize,
    pub crude: usize,
    pub iptw: usize,
    pub all: usize,
}

impl ConvergenceCounts {
    fn tally(results: &[ReplicationResult]) -> Self {
        let count = |f: fn(&ReplicationResult) -> bool| results.iter().filter(|r| f(r)).count();
        Self {
            replications: results.len(),
            adjusted: count(|r| r.adjusted.converged),
            crude: count(|r| r.crude.converged),
            iptw: count(|r| r.iptw.converged),
            all: count(ReplicationResult::all_converged),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub convergence: ConvergenceCounts,
    pub oracle: Option<OracleEstimate>,
    pub oracle_cache_hit: bool,
    pub decomposition: Option<DecompositionRow>,
    pub periods: Vec<PeriodSummary>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub error: Option<String>,
}

impl ScenarioRun {
    pub fn log_hr_treatment(&self) -> f64 {
        self.scenario.log_hr_treatment
    }

    pub fn log_hr_covariate(&self) -> f64 {
        self.scenario.log_hr_covariate
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResults {
    pub config: StudyConfig,
    pub config_hash: String,
    /// An existing bundle with the same config hash was found.
    pub resumed: bool,
    pub runs: Vec<ScenarioRun>,
}

impl StudyResults {
    pub fn failures(&self) -> Vec<&ScenarioRun> {
        self.runs.iter().filter(|r| !r.succeeded()).collect()
    }
}

struct ReplicationOutput {
    result: ReplicationResult,
    periods: Option<Vec<PeriodEstimate>>,
    survivors: Option<Vec<[SurvivorMean; 2]>>,
}

/// What the scenario contributes beyond its decomposition row.
#[derive(Clone, Copy)]
struct Extras {
    periods: Option<(f64, f64)>,
    trajectory: Option<(f64, f64)>,
}

fn replicate(
    config: &StudyConfig,
    scenario: &Scenario,
    r: usize,
    extras: Extras,
    opts: &FitOptions,
) -> Result<ReplicationOutput> {
    let seed = replication_seed(
        config.master_seed,
        scenario.log_hr_treatment,
        scenario.log_hr_covariate,
        r,
    );
    let cohort = generate_cohort(&scenario.clone().with_seed(seed))?;
    let result = analyze_replication(r, &cohort, opts);
    let periods = extras
        .periods
        .map(|(w, max)| period_specific_hr(&cohort, w, max, opts))
        .transpose()?;
    let survivors = extras
        .trajectory
        .map(|(w, max)| trajectory_times(w, max).map(|ts| survivor_means(&cohort, &ts)))
        .transpose()?;
    Ok(ReplicationOutput { result, periods, survivors })
}

fn run_scenario(
    config: &StudyConfig,
    scenario: Scenario,
    extras: Extras,
    cache: &mut OracleCache,
    opts: &FitOptions,
) -> ScenarioRun {
    let mut run = ScenarioRun {
        scenario,
        convergence: ConvergenceCounts::default(),
        oracle: None,
        oracle_cache_hit: false,
        decomposition: None,
        periods: Vec::new(),
        trajectory: Vec::new(),
        error: None,
    };
    if let Err(e) = fill_scenario(config, &mut run, extras, cache, opts) {
        run.error = Some(e.to_string());
    }
    run
}

fn fill_scenario(
    config: &StudyConfig,
    run: &mut ScenarioRun,
    extras: Extras,
    cache: &mut OracleCache,
    opts: &FitOptions,
) -> Result<()> {
    let scenario = run.scenario.clone();
    let (oracle, hit) = cache.get_or_compute(&scenario, config.oracle_replications, opts)?;
    run.oracle = Some(oracle.clone());
    run.oracle_cache_hit = hit;

    let outputs: Vec<ReplicationOutput> = (0..config.replications)
        .into_par_iter()
        .map(|r| replicate(config, &scenario, r, extras, opts))
        .collect::<Result<_>>()?;
    let results: Vec<ReplicationResult> = outputs.iter().map(|o| o.result.clone()).collect();
    run.convergence = ConvergenceCounts::tally(&results);
    run.decomposition = Some(decompose(&scenario, &results, &oracle)?);

    if extras.periods.is_some() {
        let per: Vec<Vec<PeriodEstimate>> = outputs.iter().filter_map(|o| o.periods.clone()).collect();
        run.periods = aggregate_periods(&per)?;
    }
    if let Some((w, max)) = extras.trajectory {
        let times = trajectory_times(w, max)?;
        let per: Vec<_> = outputs.iter().filter_map(|o| o.survivors.clone()).collect();
        run.trajectory = aggregate_trajectory(&times, &per);
    }
    Ok(())
}

/// β₂ values whose scenarios feed the two trajectory figures: the largest
/// positive and the most negative covariate effect in the run.
fn trajectory_covariates(pairs: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let harmful = pairs.iter().map(|p| p.1).filter(|b| *b > 0.0).reduce(f64::max);
    let protective = pairs.iter().map(|p| p.1).filter(|b| *b < 0.0).reduce(f64::min);
    (harmful, protective)
}

fn read_manifest_hash(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join(MANIFEST)).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    value.get("config_hash")?.as_str().map(str::to_string)
}

/// Run every scenario and write the bundle into `config.output_directory`.
/// A failing scenario is recorded and the rest continue.
pub fn run_study(config: &StudyConfig) -> Result<StudyResults> {
    config.validate()?;
    let dir = config.output_directory.clone();
    std::fs::create_dir_all(&dir)?;
    let config_hash = config.config_hash();
    let resumed = read_manifest_hash(&dir).as_deref() == Some(config_hash.as_str());
    let cache_path = dir.join(ORACLE_CACHE);
    let mut cache = OracleCache::load(&cache_path)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.worker_count)))?;
    let opts = FitOptions::default();
    let pairs = config.scenario_pairs();
    let (harmful, protective) = trajectory_covariates(&pairs);

    let mut runs = Vec::with_capacity(pairs.len());
    for &(b1, b2) in &pairs {
        let plan = period_plan(b2);
        let extras = Extras {
            periods: plan,
            trajectory: plan.filter(|_| Some(b2) == harmful || Some(b2) == protective),
        };
        let scenario = config.scenario(b1, b2);
        let run = pool.install(|| run_scenario(config, scenario, extras, &mut cache, &opts));
        if run.oracle.is_some() && !run.oracle_cache_hit {
            cache.save(&cache_path)?;
        }
        runs.push(run);
    }

    let results = StudyResults {
        config: config.clone(),
        config_hash,
        resumed,
        runs,
    };
    write_bundle(&results, harmful, protective)?;
    Ok(results)
}

fn num(x: f64, format: OutputFormat) -> String {
    match format {
        OutputFormat::Raw => format!("{x}"),
        OutputFormat::Report => format!("{x:.3}"),
    }
}

fn opt_num(x: Option<f64>, format: OutputFormat) -> String {
    x.map_or_else(String::new, |v| num(v, format))
}

fn summary_cells(s: &McSummary, format: OutputFormat) -> [String; 4] {
    [s.mean, s.sd, s.lower, s.upper].map(|v| num(v, format))
}

const SUMMARY_COLUMNS: [&str; 6] = [
    "marginal",
    "adjusted",
    "crude",
    "iptw",
    "noncollapsibility",
    "selection_bias",
];

fn table1_header() -> Vec<String> {
    let mut h = vec!["log_hr_e".to_string(), "log_hr_l".to_string()];
    for c in SUMMARY_COLUMNS {
        h.extend([c.to_string(), format!("{c}_sd"), format!("{c}_lower"), format!("{c}_upper")]);
    }
    h.extend(["n_used".to_string(), "n_excluded".to_string()]);
    h
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn table1_rows(runs: &[ScenarioRun], format: OutputFormat) -> Vec<Vec<String>> {
    runs.iter()
        .filter_map(|run| {
            let d = run.decomposition.as_ref()?;
            let mut row = vec![num(d.log_hr_treatment, format), num(d.log_hr_covariate, format)];
            for s in [&d.marginal, &d.adjusted, &d.crude, &d.iptw, &d.noncollapsibility, &d.selection_bias] {
                row.extend(summary_cells(s, format));
            }
            row.extend([d.n_used.to_string(), d.n_excluded.to_string()]);
            Some(row)
        })
        .collect()
}

const PERIOD_HEADER: [&str; 15] = [
    "log_hr_e",
    "log_hr_l",
    "log_hr_m",
    "start_day",
    "end_day",
    "log_hr",
    "sd",
    "lower",
    "upper",
    "n_valid",
    "n_excluded",
    "events_treated",
    "events_control",
    "at_risk_treated",
    "at_risk_control",
];

fn period_rows(runs: &[ScenarioRun], keep: fn(f64) -> bool, format: OutputFormat) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for run in runs.iter().filter(|r| keep(r.log_hr_covariate()) && r.succeeded()) {
        let m = run.oracle.as_ref().map(|o| o.log_hr_marginal);
        for p in &run.periods {
            let est = p.estimate.as_ref();
            rows.push(vec![
                num(run.log_hr_treatment(), format),
                num(run.log_hr_covariate(), format),
                opt_num(m, format),
                format!("{}", p.start_day),
                format!("{}", p.end_day),
                opt_num(est.map(|s| s.mean), format),
                opt_num(est.map(|s| s.sd), format),
                opt_num(est.map(|s| s.lower), format),
                opt_num(est.map(|s| s.upper), format),
                p.n_valid.to_string(),
                p.n_excluded.to_string(),
                num(p.mean_events_treated, format),
                num(p.mean_events_control, format),
                num(p.mean_at_risk_treated, format),
                num(p.mean_at_risk_control, format),
            ]);
        }
    }
    rows
}

const FIGURE_HEADER: [&str; 8] = [
    "log_hr_e",
    "log_hr_l",
    "arm",
    "t_days",
    "mean_l",
    "mc_se",
    "n_valid",
    "mean_survivors",
];

fn figure_rows(runs: &[ScenarioRun], log_hr_covariate: Option<f64>, format: OutputFormat) -> Vec<Vec<String>> {
    let Some(b2) = log_hr_covariate else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for run in runs.iter().filter(|r| r.log_hr_covariate() == b2 && r.succeeded()) {
        for p in &run.trajectory {
            rows.push(vec![
                num(run.log_hr_treatment(), format),
                num(b2, format),
                p.arm.as_str().to_string(),
                format!("{}", p.t_days),
                opt_num(p.mean_l, format),
                opt_num(p.mc_se, format),
                p.n_valid.to_string(),
                num(p.mean_survivors, format),
            ]);
        }
    }
    rows
}

#[derive(Serialize)]
struct ManifestOracle {
    log_hr_marginal: f64,
    mc_sd: f64,
    replications_used: usize,
    dropped: usize,
    cache_hit: bool,
}

#[derive(Serialize)]
struct ManifestScenario {
    log_hr_e: f64,
    log_hr_l: f64,
    seed: u64,
    status: &'static str,
    error: Option<String>,
    converged: ConvergenceCounts,
    oracle: Option<ManifestOracle>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format_version: u32,
    config_hash: &'a str,
    master_seed: u64,
    resumed: bool,
    config: &'a StudyConfig,
    n_scenarios: usize,
    n_failed: usize,
    files: [&'static str; 6],
    scenarios: Vec<ManifestScenario>,
}

fn write_bundle(results: &StudyResults, harmful: Option<f64>, protective: Option<f64>) -> Result<()> {
    let dir = &results.config.output_directory;
    let format = results.config.format;
    let runs = &results.runs;
    let strings = |h: &[&str]| h.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    write_atomic(&dir.join(TABLE1), &csv_bytes(&table1_header(), &table1_rows(runs, format))?)?;
    write_atomic(
        &dir.join(TABLE2),
        &csv_bytes(&strings(&PERIOD_HEADER), &period_rows(runs, |b| b > 0.0, format))?,
    )?;
    write_atomic(
        &dir.join(TABLE3),
        &csv_bytes(&strings(&PERIOD_HEADER), &period_rows(runs, |b| b < 0.0, format))?,
    )?;
    write_atomic(
        &dir.join(FIGURE1),
        &csv_bytes(&strings(&FIGURE_HEADER), &figure_rows(runs, harmful, format))?,
    )?;
    write_atomic(
        &dir.join(FIGURE2),
        &csv_bytes(&strings(&FIGURE_HEADER), &figure_rows(runs, protective, format))?,
    )?;

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        config_hash: &results.config_hash,
        master_seed: results.config.master_seed,
        resumed: results.resumed,
        config: &results.config,
        n_scenarios: runs.len(),
        n_failed: results.failures().len(),
        files: [TABLE1, TABLE2, TABLE3, FIGURE1, FIGURE2, ORACLE_CACHE],
        scenarios: runs
            .iter()
            .map(|r| ManifestScenario {
                log_hr_e: r.log_hr_treatment(),
                log_hr_l: r.log_hr_covariate(),
                seed: r.scenario.seed,
                status: if r.succeeded() { "ok" } else { "failed" },
                error: r.error.clone(),
                converged: r.convergence,
                oracle: r.oracle.as_ref().map(|o| ManifestOracle {
                    log_hr_marginal: o.log_hr_marginal,
                    mc_sd: o.mc_sd,
                    replications_used: o.n_replications,
                    dropped: o.n_dropped,
                    cache_hit: r.oracle_cache_hit,
                }),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&dir.join(MANIFEST), text.as_bytes())
}

/// One `table1.csv` row as read back from disk.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Table1Record {
    pub log_hr_e: f64,
    pub log_hr_l: f64,
    pub marginal: f64,
    pub marginal_sd: f64,
    pub marginal_lower: f64,
    pub marginal_upper: f64,
    pub adjusted: f64,
    pub adjusted_sd: f64,
    pub adjusted_lower: f64,
    pub adjusted_upper: f64,
    pub crude: f64,
    pub crude_sd: f64,
    pub crude_lower: f64,
    pub crude_upper: f64,
    pub iptw: f64,
    pub iptw_sd: f64,
    pub iptw_lower: f64,
    pub iptw_upper: f64,
    pub noncollapsibility: f64,
    pub noncollapsibility_sd: f64,
    pub noncollapsibility_lower: f64,
    pub noncollapsibility_upper: f64,
    pub selection_bias: f64,
    pub selection_bias_sd: f64,
    pub selection_bias_lower: f64,
    pub selection_bias_upper: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

impl Table1Record {
    pub fn selection_bias_excludes_zero(&self) -> bool {
        !(self.selection_bias_lower <= 0.0 && 0.0 <= self.selection_bias_upper)
    }
}

pub fn read_table1(dir: &Path) -> Result<Vec<Table1Record>> {
    let path = dir.join(TABLE1);
    if !path.is_file() {
        return Err(Error::MissingArtifact(path));
    }
    let malformed = |reason: String| Error::MalformedArtifact {
        path: path.clone(),
        reason,
    };
    let mut reader = csv::Reader::from_path(&path).map_err(|e| malformed(e.to_string()))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<Table1Record>, _>>()
        .map_err(|e| malformed(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<Table1Record>,
}

impl StudyReport {
    /// Scenarios whose selection-bias interval misses zero.
    pub fn flagged(&self) -> Vec<&Table1Record> {
        self.rows.iter().filter(|r| r.selection_bias_excludes_zero()).collect()
    }

    pub fn render(&self) -> String {
        let ci = |m: f64, lo: f64, hi: f64| format!("{m:.3} ({lo:.3}, {hi:.3})");
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>9} {:>24} {:>24} {:>24} {:>24} {:>24}",
            "logHR_E", "logHR_L", "marginal", "adjusted", "crude", "IPTW", "non-collapsibility", "selection bias"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>8.3} {:>8.3} {:>9.3} {:>24} {:>24} {:>24} {:>24} {:>24}{}",
                r.log_hr_e,
                r.log_hr_l,
                r.marginal,
                ci(r.adjusted, r.adjusted_lower, r.adjusted_upper),
                ci(r.crude, r.crude_lower, r.crude_upper),
                ci(r.iptw, r.iptw_lower, r.iptw_upper),
                ci(r.noncollapsibility, r.noncollapsibility_lower, r.noncollapsibility_upper),
                ci(r.selection_bias, r.selection_bias_lower, r.selection_bias_upper),
                if r.selection_bias_excludes_zero() { " *" } else { "" },
            );
        }
        let flagged = self.flagged().len();
        if flagged == 0 {
            let _ = writeln!(out, "\n{} scenarios; every selection-bias interval contains 0", self.rows.len());
        } else {
            let _ = writeln!(
                out,
                "\n{} scenarios; * selection-bias interval excludes 0 in {flagged}",
                self.rows.len()
            );
        }
        out
    }
}

pub fn report(dir: &Path) -> Result<StudyReport> {
    Ok(StudyReport {
        rows: read_table1(dir)?,
    })
}
