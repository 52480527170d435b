//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hrsim::cox::{CoxDesign, TieMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain design data: times, events, one row of regressors per subject.
#[derive(Clone, Debug)]
pub struct RawDesign {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub rows: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl RawDesign {
    pub fn columns(&self) -> Vec<Vec<f64>> {
        let p = self.rows[0].len();
        (0..p).map(|k| self.rows.iter().map(|r| r[k]).collect()).collect()
    }

    pub fn design(&self) -> CoxDesign {
        CoxDesign::new(self.times.clone(), self.events.clone(), self.columns()).unwrap()
    }

    pub fn weighted_design(&self) -> CoxDesign {
        self.design().with_weights(self.weights.clone()).unwrap()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log partial likelihood by direct double loop over subjects. Tied deaths
/// use the Efron or Breslow denominator, each death weighted by the mean
/// weight of its tied group.
pub fn naive_log_pl(d: &RawDesign, beta: &[f64], ties: TieMethod) -> f64 {
    let n = d.times.len();
    let mut total = 0.0;
    let mut seen = vec![false; n];
    for i in 0..n {
        if !d.events[i] || seen[i] {
            continue;
        }
        let t = d.times[i];
        let group: Vec<usize> = (0..n).filter(|&j| d.events[j] && d.times[j] == t).collect();
        for &j in &group {
            seen[j] = true;
        }
        let risk: f64 = (0..n)
            .filter(|&j| d.times[j] >= t)
            .map(|j| d.weights[j] * dot(&d.rows[j], beta).exp())
            .sum();
        let dead: f64 = group.iter().map(|&j| d.weights[j] * dot(&d.rows[j], beta).exp()).sum();
        let m = group.len() as f64;
        let mean_w = group.iter().map(|&j| d.weights[j]).sum::<f64>() / m;
        for &j in &group {
            total += d.weights[j] * dot(&d.rows[j], beta);
        }
        match ties {
            TieMethod::Breslow => total -= m * mean_w * risk.ln(),
            TieMethod::Efron => {
                for k in 0..group.len() {
                    total -= mean_w * (risk - k as f64 / m * dead).ln();
                }
            }
        }
    }
    total
}

/// Maximizer of the one-regressor naive log-PL over a grid on [lo, hi].
pub fn grid_argmax(d: &RawDesign, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (f64::NEG_INFINITY, lo);
    for k in 0..=n {
        let b = lo + k as f64 * step;
        let v = naive_log_pl(d, &[b], TieMethod::Efron);
        if v > best.0 {
            best = (v, b);
        }
    }
    best.1
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` subjects with distinct times, a binary first regressor with both
/// arms present, optionally a continuous second regressor, and at least
/// one event.
pub fn random_design(r: &mut ChaCha8Rng, n: usize, with_covariate: bool) -> RawDesign {
    let mut times: Vec<f64> = (1..=n).map(|k| k as f64 + r.random::<f64>() * 0.5).collect();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        times.swap(i, j);
    }
    let mut events: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.7).collect();
    events[r.random_range(0..n)] = true;
    let mut z: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
    z[0] = 0.0;
    z[1] = 1.0;
    let rows = z
        .iter()
        .map(|&zi| {
            if with_covariate {
                vec![zi, r.random::<f64>() * 4.0 - 2.0]
            } else {
                vec![zi]
            }
        })
        .collect();
    let weights = (0..n).map(|_| 0.5 + r.random::<f64>() * 2.0).collect();
    RawDesign { times, events, rows, weights }
}

/// Like [`random_design`] but with integer times so deaths tie.
pub fn tied_design(r: &mut ChaCha8Rng, n: usize) -> RawDesign {
    let mut d = random_design(r, n, true);
    for t in &mut d.times {
        *t = (*t / 3.0).ceil();
    }
    d
}
