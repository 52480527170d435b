//! Randomized-trial cohorts with Weibull proportional-hazards event times.
//!
//! Subject `i` gets `Z ~ Bernoulli(p)`, `L ~ N(mean, sd²)` and a latent event
//! time obtained by inverting the Weibull cumulative hazard
//! `H(t | z, l) = λ tᵛ exp(β₁z + β₂l)` at `-log U`. Random censoring is
//! exponential and every subject still at risk at the administrative horizon
//! is censored there.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cox::CoxDesign;
use crate::error::{Error, Result};
use crate::rng::{SimRng, Stream};

/// Three years of follow-up, in days.
pub const DEFAULT_HORIZON_DAYS: f64 = 3.0 * 365.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// β₁, log hazard ratio of treatment conditional on the covariate.
    pub log_hr_treatment: f64,
    /// β₂, log hazard ratio per unit of covariate.
    pub log_hr_covariate: f64,
    pub n_subjects: usize,
    pub treat_prob: f64,
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    /// λ, in day⁻ᵛ.
    pub weibull_scale: f64,
    /// v
    pub weibull_shape: f64,
    /// Exponential censoring rate, per day.
    pub censor_rate: f64,
    pub admin_horizon_days: f64,
    pub seed: u64,
}

impl Scenario {
    /// The reference trial: N = 10,000, 1:1 allocation, L ~ N(5, 2²),
    /// λ = 1e-4, v = 2, censoring rate 0.005/day, three-year horizon.
    pub fn preset(log_hr_treatment: f64, log_hr_covariate: f64) -> Self {
        Self {
            log_hr_treatment,
            log_hr_covariate,
            n_subjects: 10_000,
            treat_prob: 0.5,
            covariate_mean: 5.0,
            covariate_sd: 2.0,
            weibull_scale: 1e-4,
            weibull_shape: 2.0,
            censor_rate: 0.005,
            admin_horizon_days: DEFAULT_HORIZON_DAYS,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_subjects(mut self, n: usize) -> Self {
        self.n_subjects = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                bad.push(format!("{name} must be finite and > 0 (got {v})"));
            }
        };
        positive("covariate_sd", self.covariate_sd);
        positive("weibull_scale", self.weibull_scale);
        positive("weibull_shape", self.weibull_shape);
        positive("censor_rate", self.censor_rate);
        positive("admin_horizon_days", self.admin_horizon_days);
        if self.n_subjects == 0 {
            bad.push("n_subjects must be >= 1 (got 0)".to_string());
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            bad.push(format!(
                "treat_prob must lie in (0, 1) (got {})",
                self.treat_prob
            ));
        }
        for (name, v) in [
            ("log_hr_treatment", self.log_hr_treatment),
            ("log_hr_covariate", self.log_hr_covariate),
            ("covariate_mean", self.covariate_mean),
        ] {
            if !v.is_finite() {
                bad.push(format!("{name} must be finite (got {v})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(bad))
        }
    }

    pub fn linear_predictor(&self, treated: bool, covariate: f64) -> f64 {
        self.log_hr_treatment * f64::from(u8::from(treated)) + self.log_hr_covariate * covariate
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subject {
    pub id: usize,
    pub treated: bool,
    pub covariate: f64,
    pub latent_event_time: f64,
    pub censor_time: f64,
    /// `min(latent_event_time, censor_time, horizon)`
    pub observed_time: f64,
    pub event: bool,
    pub weight: f64,
}

impl Subject {
    pub fn new(
        id: usize,
        treated: bool,
        covariate: f64,
        latent_event_time: f64,
        censor_time: f64,
        horizon: f64,
    ) -> Self {
        let observed_time = latent_event_time.min(censor_time).min(horizon);
        Self {
            id,
            treated,
            covariate,
            latent_event_time,
            censor_time,
            observed_time,
            event: latent_event_time <= censor_time.min(horizon),
            weight: 1.0,
        }
    }

    pub fn z(&self) -> f64 {
        f64::from(u8::from(self.treated))
    }
}

/// An immutable cohort. Subject ids are dense `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    scenario: Scenario,
    subjects: Vec<Subject>,
}

impl Cohort {
    /// Assemble a cohort from existing records, checking the subject
    /// invariants.
    pub fn from_subjects(scenario: Scenario, subjects: Vec<Subject>) -> Result<Self> {
        for (i, s) in subjects.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidCohort(format!(
                    "subject at position {i} has id {}",
                    s.id
                )));
            }
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(Error::InvalidCohort(format!(
                    "subject {i} has non-positive weight {}",
                    s.weight
                )));
            }
            if !(s.observed_time.is_finite() && s.observed_time > 0.0) {
                return Err(Error::InvalidCohort(format!(
                    "subject {i} has observed time {}",
                    s.observed_time
                )));
            }
        }
        Ok(Self { scenario, subjects })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.subjects.iter().filter(|s| s.treated).count()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.subjects.iter().map(|s| s.treated).collect()
    }

    pub fn covariates(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.covariate).collect()
    }

    /// Treatment as the only regressor.
    pub fn crude_design(&self) -> Result<CoxDesign> {
        CoxDesign::new(
            self.subjects.iter().map(|s| s.observed_time).collect(),
            self.subjects.iter().map(|s| s.event).collect(),
            vec![self.subjects.iter().map(Subject::z).collect()],
        )
    }

    /// Treatment and covariate.
    pub fn adjusted_design(&self) -> Result<CoxDesign> {
        CoxDesign::new(
            self.subjects.iter().map(|s| s.observed_time).collect(),
            self.subjects.iter().map(|s| s.event).collect(),
            vec![
                self.subjects.iter().map(Subject::z).collect(),
                self.covariates(),
            ],
        )
    }

    /// `id,z,l,time,event`, times in days with six decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "id,z,l,time,event")?;
        for s in &self.subjects {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                s.id,
                u8::from(s.treated),
                s.covariate,
                s.observed_time,
                u8::from(s.event)
            )?;
        }
        Ok(())
    }
}

pub fn draw_treatment(rng: &mut SimRng, treat_prob: f64) -> bool {
    rng.bernoulli(treat_prob)
}

pub fn draw_covariate(rng: &mut SimRng, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.standard_normal()
}

pub fn draw_censor_time(rng: &mut SimRng, rate: f64) -> f64 {
    rng.standard_exponential() / rate
}

/// `T = [-log(u) / (λ exp(β₁z + β₂l))]^(1/v)`.
pub fn invert_survival_time(u: f64, treated: bool, covariate: f64, scenario: &Scenario) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("uniform draw must lie in (0, 1), got {u}")));
    }
    let rate = scenario.weibull_scale * scenario.linear_predictor(treated, covariate).exp();
    Ok((-u.ln() / rate).powf(1.0 / scenario.weibull_shape))
}

/// Draw one subject's latent event and censoring times given its arm and
/// covariate. Consumes exactly one uniform and one exponential variate.
pub(crate) fn draw_outcome(
    rng: &mut SimRng,
    id: usize,
    treated: bool,
    covariate: f64,
    scenario: &Scenario,
) -> Subject {
    let u = rng.uniform_open();
    let latent = invert_survival_time(u, treated, covariate, scenario)
        .expect("uniform_open draws lie strictly inside (0, 1)");
    let censor = draw_censor_time(rng, scenario.censor_rate);
    Subject::new(id, treated, covariate, latent, censor, scenario.admin_horizon_days)
}

/// Generate a cohort. The result depends only on the scenario, including its
/// seed.
pub fn generate_cohort(scenario: &Scenario) -> Result<Cohort> {
    scenario.validate()?;
    let mut rng = SimRng::new(scenario.seed, Stream::Cohort);
    let subjects = (0..scenario.n_subjects)
        .map(|id| {
            let treated = draw_treatment(&mut rng, scenario.treat_prob);
            let covariate = draw_covariate(&mut rng, scenario.covariate_mean, scenario.covariate_sd);
            draw_outcome(&mut rng, id, treated, covariate, scenario)
        })
        .collect();
    Ok(Cohort {
        scenario: scenario.clone(),
        subjects,
    })
}
