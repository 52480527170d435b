//! Propensity scores by logistic regression and inverse-probability weights.

use std::io::Write;

use serde::Serialize;

use crate::cox::{self, CoxFit, FitOptions};
use crate::error::{Error, Result};
use crate::sim::Cohort;

const SCORE_TOL: f64 = 1e-10;
const MAX_ITER: usize = 25;
const PS_FLOOR: f64 = 1e-12;

/// `PS(l) = 1 / (1 + exp(-(alpha0 + alpha1 l)))`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PropensityModel {
    pub alpha0: f64,
    pub alpha1: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The covariate perfectly separates the arms.
    pub separated: bool,
}

impl PropensityModel {
    pub fn score(&self, covariate: f64) -> f64 {
        sigmoid(self.alpha0 + self.alpha1 * covariate)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(Σ (z − p), Σ l (z − p))` and the 2×2 Fisher information.
fn score_information(alpha: [f64; 2], treated: &[bool], covariate: &[f64]) -> ([f64; 2], [f64; 3]) {
    let mut u = [0.0; 2];
    let mut info = [0.0; 3];
    for (&z, &l) in treated.iter().zip(covariate) {
        let p = sigmoid(alpha[0] + alpha[1] * l);
        let r = f64::from(u8::from(z)) - p;
        let v = p * (1.0 - p);
        u[0] += r;
        u[1] += l * r;
        info[0] += v;
        info[1] += v * l;
        info[2] += v * l * l;
    }
    (u, info)
}

fn completely_separated(treated: &[bool], covariate: &[f64]) -> bool {
    let range = |arm: bool| {
        treated
            .iter()
            .zip(covariate)
            .filter(|(z, _)| **z == arm)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &l)| (lo.min(l), hi.max(l)))
    };
    let (lo1, hi1) = range(true);
    let (lo0, hi0) = range(false);
    hi0 < lo1 || hi1 < lo0
}

/// Logistic regression of treatment on `(1, L)` by iteratively reweighted
/// least squares, starting from the log odds of the arm sizes.
pub fn fit_propensity_arrays(treated: &[bool], covariate: &[f64]) -> Result<PropensityModel> {
    if treated.len() != covariate.len() {
        return Err(Error::InvalidCohort(format!(
            "{} treatment values for {} covariates",
            treated.len(),
            covariate.len()
        )));
    }
    let n1 = treated.iter().filter(|&&z| z).count();
    let n0 = treated.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidCohort(
            "propensity model needs both arms non-empty".to_string(),
        ));
    }

    let mut alpha = [(n1 as f64 / n0 as f64).ln(), 0.0];
    if completely_separated(treated, covariate) {
        return Ok(PropensityModel {
            alpha0: alpha[0],
            alpha1: alpha[1],
            converged: false,
            iterations: 0,
            separated: true,
        });
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (u, info) = score_information(alpha, treated, covariate);
        if u[0].hypot(u[1]) < SCORE_TOL {
            converged = true;
            break;
        }
        if iterations == MAX_ITER {
            break;
        }
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        alpha[0] += (info[2] * u[0] - info[1] * u[1]) / det;
        alpha[1] += (info[0] * u[1] - info[1] * u[0]) / det;
        iterations += 1;
    }
    Ok(PropensityModel {
        alpha0: alpha[0],
        alpha1: alpha[1],
        converged,
        iterations,
        separated: false,
    })
}

pub fn fit_propensity(cohort: &Cohort) -> Result<PropensityModel> {
    fit_propensity_arrays(&cohort.treatments(), &cohort.covariates())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    pub propensity: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightVector {
    /// `id,ps,weight`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "id,ps,weight")?;
        for (i, (ps, w)) in self.propensity.iter().zip(&self.weights).enumerate() {
            writeln!(out, "{i},{ps},{w}")?;
        }
        Ok(())
    }
}

/// Treated subjects get `1/PS`, controls `1/(1 − PS)`. No truncation: a
/// score within 1e-12 of 0 or 1 is an error.
pub fn compute_weights_arrays(
    model: &PropensityModel,
    treated: &[bool],
    covariate: &[f64],
) -> Result<WeightVector> {
    if !model.converged {
        return Err(Error::PropensityNotConverged);
    }
    let mut propensity = Vec::with_capacity(treated.len());
    let mut weights = Vec::with_capacity(treated.len());
    for (subject, (&z, &l)) in treated.iter().zip(covariate).enumerate() {
        let ps = model.score(l);
        if !(PS_FLOOR..=1.0 - PS_FLOOR).contains(&ps) {
            return Err(Error::ExtremePropensity { subject, ps });
        }
        propensity.push(ps);
        weights.push(if z { 1.0 / ps } else { 1.0 / (1.0 - ps) });
    }
    Ok(WeightVector { propensity, weights })
}

pub fn compute_weights(model: &PropensityModel, cohort: &Cohort) -> Result<WeightVector> {
    compute_weights_arrays(model, &cohort.treatments(), &cohort.covariates())
}

/// Propensity model, weights, then a weighted treatment-only Cox fit.
pub fn iptw_hazard_ratio(cohort: &Cohort, opts: &FitOptions) -> Result<CoxFit> {
    let model = fit_propensity(cohort)?;
    let weights = compute_weights(&model, cohort)?;
    cox::fit_weighted(&cohort.crude_design()?, &weights.weights, opts)
}
