//! True marginal log hazard ratio by duplicate cohorts.
//!
//! Each original subject is paired with a duplicate carrying the same
//! covariate value and the opposite treatment. The duplicate's event and
//! censoring times are drawn afresh from its own stream. A crude Cox fit on
//! the combined 2N records estimates the population-level effect of moving
//! everyone from control to treatment; the oracle averages that estimate
//! over independent replications.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cox::{self, FitOptions};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::{mix_seed, SimRng, Stream, ORACLE_TAG};
use crate::sim::{draw_outcome, generate_cohort, Cohort, Scenario};

pub const DEFAULT_ORACLE_REPLICATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub scenario: Scenario,
    pub log_hr_marginal: f64,
    /// Standard deviation of the per-replication estimates.
    pub mc_sd: f64,
    /// Replications that entered the mean.
    pub n_replications: usize,
    /// Replications dropped because the fit did not converge.
    pub n_dropped: usize,
    /// Originals per replication; each replication fits twice this many.
    pub n_per_replication: usize,
}

impl OracleEstimate {
    pub fn mc_standard_error(&self) -> f64 {
        self.mc_sd / (self.n_replications as f64).sqrt()
    }
}

/// Originals followed by their duplicates; duplicate `i` has id `n + i`.
pub fn duplicate_cohort(cohort: &Cohort, rng: &mut SimRng) -> Result<Cohort> {
    let n = cohort.len();
    let scenario = cohort.scenario();
    let mut subjects = cohort.subjects().to_vec();
    subjects.reserve(n);
    for s in cohort.subjects() {
        subjects.push(draw_outcome(rng, n + s.id, !s.treated, s.covariate, scenario));
    }
    Cohort::from_subjects(scenario.clone(), subjects)
}

/// One replication: generate with `seed`, duplicate, fit crude.
fn replicate(scenario: &Scenario, seed: u64, opts: &FitOptions) -> Result<Option<f64>> {
    let sc = scenario.clone().with_seed(seed);
    let cohort = generate_cohort(&sc)?;
    let mut rng = SimRng::new(seed, Stream::Duplicate);
    let combined = duplicate_cohort(&cohort, &mut rng)?;
    let f = cox::fit(&combined.crude_design()?, opts);
    Ok(f.converged.then_some(f.beta[0]))
}

/// Mean crude log hazard ratio over `n_replications` duplicate cohorts.
/// Replication `r` uses seed `mix_seed(scenario.seed, [ORACLE_TAG, r])`.
pub fn true_marginal_hr(
    scenario: &Scenario,
    n_replications: usize,
    opts: &FitOptions,
) -> Result<OracleEstimate> {
    scenario.validate()?;
    if n_replications == 0 {
        return Err(Error::Config("oracle needs at least one replication".to_string()));
    }
    let estimates: Vec<Option<f64>> = (0..n_replications)
        .into_par_iter()
        .map(|r| replicate(scenario, mix_seed(scenario.seed, &[ORACLE_TAG, r as u64]), opts))
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = estimates.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::Aggregation(
            "every oracle replication failed to converge".to_string(),
        ));
    }
    let (mean, sd) = crate::stats::mean_sd(&kept);
    Ok(OracleEstimate {
        scenario: scenario.clone(),
        log_hr_marginal: mean,
        mc_sd: sd,
        n_replications: kept.len(),
        n_dropped: n_replications - kept.len(),
        n_per_replication: scenario.n_subjects,
    })
}

/// On-disk oracle results keyed by a hash of the scenario and replication
/// count. Stored as a JSON array of [`OracleEstimate`]-shaped records with an
/// extra `key` field.
#[derive(Clone, Debug, Default)]
pub struct OracleCache {
    records: BTreeMap<String, OracleEstimate>,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    requested_replications: usize,
    #[serde(flatten)]
    estimate: OracleEstimate,
}

impl OracleCache {
    pub fn key(scenario: &Scenario, n_replications: usize) -> String {
        let canonical = serde_json::to_string(&(scenario, n_replications))
            .expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)?;
        let records: Vec<CacheRecord> =
            serde_json::from_str(&text).map_err(|e| Error::MalformedArtifact {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            records: records.into_iter().map(|r| (r.key, r.estimate)).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<CacheRecord> = self
            .records
            .iter()
            .map(|(k, e)| CacheRecord {
                key: k.clone(),
                requested_replications: e.n_replications + e.n_dropped,
                estimate: e.clone(),
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&records)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn get(&self, scenario: &Scenario, n_replications: usize) -> Option<&OracleEstimate> {
        self.records.get(&Self::key(scenario, n_replications))
    }

    pub fn insert(&mut self, n_replications: usize, estimate: OracleEstimate) {
        self.records
            .insert(Self::key(&estimate.scenario, n_replications), estimate);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cached estimate, or compute and remember it.
    pub fn get_or_compute(
        &mut self,
        scenario: &Scenario,
        n_replications: usize,
        opts: &FitOptions,
    ) -> Result<(OracleEstimate, bool)> {
        if let Some(hit) = self.get(scenario, n_replications) {
            return Ok((hit.clone(), true));
        }
        let est = true_marginal_hr(scenario, n_replications, opts)?;
        self.insert(n_replications, est.clone());
        Ok((est, false))
    }
}
