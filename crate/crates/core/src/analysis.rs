//! Per-replication estimators, the adjusted-versus-crude decomposition,
//! period-specific hazard ratios and survivor covariate trajectories.
//!
//! For a scenario with true marginal effect `m`:
//!
//! ```text
//! mean(adjusted) − mean(crude) = [mean(adjusted) − m] + [m − mean(crude)]
//!                                 non-collapsibility     built-in selection bias
//! ```

use serde::Serialize;

use crate::cox::{self, CoxDesign, CoxFit, FitFlags, FitOptions};
use crate::error::{Error, Result};
use crate::iptw;
use crate::oracle::OracleEstimate;
use crate::sim::{Cohort, Scenario};
use crate::stats::{McSummary, Z_95};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitOutcome {
    /// Treatment log hazard ratio; NaN unless converged.
    pub log_hr: f64,
    pub se: f64,
    pub converged: bool,
    pub flags: FitFlags,
}

impl FitOutcome {
    fn from_fit(f: &CoxFit) -> Self {
        if f.converged {
            Self {
                log_hr: f.beta[0],
                se: f.se[0],
                converged: true,
                flags: f.flags,
            }
        } else {
            Self {
                flags: f.flags,
                ..Self::failed()
            }
        }
    }

    fn failed() -> Self {
        Self {
            log_hr: f64::NAN,
            se: f64::NAN,
            converged: false,
            flags: FitFlags::default(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.converged.then_some(self.log_hr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub replication_index: usize,
    pub adjusted: FitOutcome,
    pub crude: FitOutcome,
    pub iptw: FitOutcome,
}

impl ReplicationResult {
    pub fn all_converged(&self) -> bool {
        self.adjusted.converged && self.crude.converged && self.iptw.converged
    }
}

/// Adjusted (Z and L), crude (Z only) and IPTW-weighted (Z only) fits. A
/// failing fit is recorded as non-converged rather than returned as an
/// error.
pub fn analyze_replication(replication_index: usize, cohort: &Cohort, opts: &FitOptions) -> ReplicationResult {
    let outcome = |r: Result<CoxFit>| r.map_or_else(|_| FitOutcome::failed(), |f| FitOutcome::from_fit(&f));
    ReplicationResult {
        replication_index,
        adjusted: outcome(cohort.adjusted_design().map(|d| cox::fit(&d, opts))),
        crude: outcome(cohort.crude_design().map(|d| cox::fit(&d, opts))),
        iptw: outcome(iptw::iptw_hazard_ratio(cohort, opts)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub log_hr_treatment: f64,
    pub log_hr_covariate: f64,
    /// Oracle mean with `± 1.96·sd` over oracle replications.
    pub marginal: McSummary,
    pub adjusted: McSummary,
    pub crude: McSummary,
    pub iptw: McSummary,
    /// `mean(adjusted) − marginal`
    pub noncollapsibility: McSummary,
    /// `marginal − mean(crude)`
    pub selection_bias: McSummary,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Aggregate replications in which all three fits converged.
pub fn decompose(
    scenario: &Scenario,
    replications: &[ReplicationResult],
    oracle: &OracleEstimate,
) -> Result<DecompositionRow> {
    let used: Vec<&ReplicationResult> = replications.iter().filter(|r| r.all_converged()).collect();
    if used.len() < 2 {
        return Err(Error::Aggregation(format!(
            "need at least 2 converged replications, got {} of {}",
            used.len(),
            replications.len()
        )));
    }
    let m = oracle.log_hr_marginal;
    let column = |f: fn(&ReplicationResult) -> f64| used.iter().map(|r| f(r)).collect::<Vec<_>>();
    let adjusted = McSummary::from_values(&column(|r| r.adjusted.log_hr)).expect("non-empty");
    let crude = McSummary::from_values(&column(|r| r.crude.log_hr)).expect("non-empty");
    let iptw = McSummary::from_values(&column(|r| r.iptw.log_hr)).expect("non-empty");

    let nc_values: Vec<f64> = used.iter().map(|r| r.adjusted.log_hr - m).collect();
    let sb_values: Vec<f64> = used.iter().map(|r| m - r.crude.log_hr).collect();
    let nc_sd = McSummary::from_values(&nc_values).expect("non-empty").sd;
    let sb_sd = McSummary::from_values(&sb_values).expect("non-empty").sd;

    Ok(DecompositionRow {
        log_hr_treatment: scenario.log_hr_treatment,
        log_hr_covariate: scenario.log_hr_covariate,
        marginal: McSummary::from_mean_sd(m, oracle.mc_sd, oracle.n_replications),
        noncollapsibility: McSummary::from_mean_sd(adjusted.mean - m, nc_sd, used.len()),
        selection_bias: McSummary::from_mean_sd(m - crude.mean, sb_sd, used.len()),
        adjusted,
        crude,
        iptw,
        n_used: used.len(),
        n_excluded: replications.len() - used.len(),
    })
}

/// Interval width and last day for period-specific fits: 50-day intervals
/// to day 400 for a harmful covariate, 100-day intervals to day 800 for a
/// protective one, none when the covariate has no effect.
pub fn period_plan(log_hr_covariate: f64) -> Option<(f64, f64)> {
    if log_hr_covariate > 0.0 {
        Some((50.0, 400.0))
    } else if log_hr_covariate < 0.0 {
        Some((100.0, 800.0))
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodGap {
    NoEventsInArm,
    NotConverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub start_day: f64,
    pub end_day: f64,
    pub log_hr: Option<f64>,
    pub se: Option<f64>,
    pub gap: Option<PeriodGap>,
    pub flags: FitFlags,
    pub events_treated: usize,
    pub events_control: usize,
    pub at_risk_treated: usize,
    pub at_risk_control: usize,
    /// Mean covariate among subjects still under observation at `end_day`.
    pub mean_covariate_treated: Option<f64>,
    pub mean_covariate_control: Option<f64>,
}

impl PeriodEstimate {
    pub fn wald_interval(&self) -> Option<(f64, f64)> {
        Some((self.log_hr? - Z_95 * self.se?, self.log_hr? + Z_95 * self.se?))
    }
}

fn check_grid(interval_days: f64, max_day: f64) -> Result<()> {
    if !(interval_days.is_finite() && interval_days > 0.0) {
        return Err(Error::Domain(format!("interval must be > 0 days, got {interval_days}")));
    }
    if !(max_day.is_finite() && max_day > 0.0) {
        return Err(Error::Domain(format!("max_day must be > 0, got {max_day}")));
    }
    Ok(())
}

/// `(a, b]` intervals covering `(0, max_day]`.
pub fn intervals(interval_days: f64, max_day: f64) -> Result<Vec<(f64, f64)>> {
    check_grid(interval_days, max_day)?;
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let a = f64::from(k) * interval_days;
        if a >= max_day {
            break;
        }
        out.push((a, (a + interval_days).min(max_day)));
        k += 1;
    }
    Ok(out)
}

fn arm_mean(cohort: &Cohort, treated: bool, after: f64) -> (Option<f64>, usize) {
    let (sum, n) = cohort
        .subjects()
        .iter()
        .filter(|s| s.treated == treated && s.observed_time > after)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.covariate, n + 1));
    ((n > 0).then(|| sum / n as f64), n)
}

/// Crude Cox fit within each interval `(a, b]` among subjects still under
/// observation at `a`; events after `b` are censored at `b`.
pub fn period_specific_hr(
    cohort: &Cohort,
    interval_days: f64,
    max_day: f64,
    opts: &FitOptions,
) -> Result<Vec<PeriodEstimate>> {
    let mut out = Vec::new();
    for (a, b) in intervals(interval_days, max_day)? {
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut z = Vec::new();
        let (mut at_risk, mut dead) = ([0usize; 2], [0usize; 2]);
        for s in cohort.subjects().iter().filter(|s| s.observed_time > a) {
            let arm = usize::from(s.treated);
            let event = s.event && s.observed_time <= b;
            at_risk[arm] += 1;
            dead[arm] += usize::from(event);
            times.push(s.observed_time.min(b));
            events.push(event);
            z.push(s.z());
        }

        let mut est = PeriodEstimate {
            start_day: a,
            end_day: b,
            log_hr: None,
            se: None,
            gap: None,
            flags: FitFlags::default(),
            events_treated: dead[1],
            events_control: dead[0],
            at_risk_treated: at_risk[1],
            at_risk_control: at_risk[0],
            mean_covariate_treated: arm_mean(cohort, true, b).0,
            mean_covariate_control: arm_mean(cohort, false, b).0,
        };
        if dead[0] == 0 || dead[1] == 0 {
            est.gap = Some(PeriodGap::NoEventsInArm);
        } else {
            let design = CoxDesign::new(times, events, vec![z])?.with_entry_time(a)?;
            let f = cox::fit(&design, opts);
            est.flags = f.flags;
            if f.converged {
                est.log_hr = Some(f.beta[0]);
                est.se = Some(f.se[0]);
            } else {
                est.gap = Some(PeriodGap::NotConverged);
            }
        }
        out.push(est);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodSummary {
    pub start_day: f64,
    pub end_day: f64,
    /// Across replications with an estimate; `None` if fewer than two.
    pub estimate: Option<McSummary>,
    pub n_valid: usize,
    pub n_excluded: usize,
    pub mean_events_treated: f64,
    pub mean_events_control: f64,
    pub mean_at_risk_treated: f64,
    pub mean_at_risk_control: f64,
}

/// Combine per-replication period estimates interval by interval. Every
/// replication must use the same interval grid.
pub fn aggregate_periods(per_replication: &[Vec<PeriodEstimate>]) -> Result<Vec<PeriodSummary>> {
    let Some(first) = per_replication.first() else {
        return Ok(Vec::new());
    };
    if per_replication.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Aggregation("period grids differ between replications".to_string()));
    }
    let reps = per_replication.len() as f64;
    Ok((0..first.len())
        .map(|k| {
            let cells: Vec<&PeriodEstimate> = per_replication.iter().map(|r| &r[k]).collect();
            let values: Vec<f64> = cells.iter().filter_map(|c| c.log_hr).collect();
            let avg = |f: fn(&PeriodEstimate) -> usize| cells.iter().map(|c| f(c) as f64).sum::<f64>() / reps;
            PeriodSummary {
                start_day: first[k].start_day,
                end_day: first[k].end_day,
                estimate: (values.len() >= 2).then(|| McSummary::from_values(&values).expect("non-empty")),
                n_valid: values.len(),
                n_excluded: cells.len() - values.len(),
                mean_events_treated: avg(|c| c.events_treated),
                mean_events_control: avg(|c| c.events_control),
                mean_at_risk_treated: avg(|c| c.at_risk_treated),
                mean_at_risk_control: avg(|c| c.at_risk_control),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treated => "treated",
        }
    }
}

/// `0, w, 2w, …` up to and including `max_day`.
pub fn trajectory_times(interval_days: f64, max_day: f64) -> Result<Vec<f64>> {
    let mut ts = vec![0.0];
    ts.extend(intervals(interval_days, max_day)?.into_iter().map(|(_, b)| b));
    Ok(ts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivorMean {
    pub mean: Option<f64>,
    pub count: usize,
}

/// Survivor covariate means of one cohort at each time; `[control, treated]`.
pub fn survivor_means(cohort: &Cohort, times: &[f64]) -> Vec<[SurvivorMean; 2]> {
    let at = |treated: bool, t: f64| {
        let (mean, count) = arm_mean(cohort, treated, t);
        SurvivorMean { mean, count }
    };
    times.iter().map(|&t| [at(false, t), at(true, t)]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub arm: Arm,
    pub t_days: f64,
    /// Mean across replications with at least one survivor in the arm.
    pub mean_l: Option<f64>,
    /// Standard error of `mean_l` across replications.
    pub mc_se: Option<f64>,
    pub n_valid: usize,
    /// Survivors in the arm, averaged over all replications.
    pub mean_survivors: f64,
}

/// Average per-replication survivor means. Output is ordered arm-major
/// (control first), then by time.
pub fn aggregate_trajectory(times: &[f64], per_replication: &[Vec<[SurvivorMean; 2]>]) -> Vec<TrajectoryPoint> {
    let reps = per_replication.len().max(1) as f64;
    let mut out = Vec::with_capacity(2 * times.len());
    for (a, arm) in [Arm::Control, Arm::Treated].into_iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let values: Vec<f64> = per_replication.iter().filter_map(|r| r[k][a].mean).collect();
            let summary = McSummary::from_values(&values);
            out.push(TrajectoryPoint {
                arm,
                t_days: t,
                mean_l: summary.map(|s| s.mean),
                mc_se: summary.filter(|s| s.n >= 2).map(|s| s.se()),
                n_valid: values.len(),
                mean_survivors: per_replication.iter().map(|r| r[k][a].count as f64).sum::<f64>() / reps,
            });
        }
    }
    out
}

/// Mean covariate among survivors (`observed_time > t`) per arm at `t = 0`
/// and at every interval end, averaged across cohorts.
pub fn covariate_trajectory(cohorts: &[Cohort], interval_days: f64, max_day: f64) -> Result<Vec<TrajectoryPoint>> {
    let times = trajectory_times(interval_days, max_day)?;
    let per: Vec<_> = cohorts.iter().map(|c| survivor_means(c, &times)).collect();
    Ok(aggregate_trajectory(&times, &per))
}
