//! Per-subject level assignment, level correlations, prediction errors and
//! risk-parameter calibration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::BidDataset;
use super::model::{SigmaProblem, TypeSet};
use crate::error::{Error, Result};
use crate::spec::AuctionSpec;

#[derive(Clone, Debug, Serialize)]
pub struct LevelAssignment {
    pub subject_id: String,
    /// Index into the type set.
    pub type_index: usize,
    pub type_name: String,
    pub sigma: f64,
    pub log_likelihood: f64,
    /// Another type reached the same likelihood; the first one is reported.
    pub tie: bool,
}

/// For every subject, the type and noise parameter maximising the
/// likelihood of that subject's bids.
pub fn assign_levels(dataset: &BidDataset, spec: &AuctionSpec, types: &TypeSet) -> Result<Vec<LevelAssignment>> {
    dataset.validate(spec)?;
    let grid: Vec<f64> = spec.bid_grid().iter().map(|&b| f64::from(b)).collect();
    let mut by_subject: BTreeMap<&str, Vec<(u32, u32)>> = BTreeMap::new();
    for r in dataset.records() {
        by_subject.entry(&r.subject_id).or_default().push((r.value, r.bid));
    }
    if by_subject.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    by_subject
        .into_iter()
        .map(|(subject, bids)| {
            let fits: Vec<(f64, f64)> = types
                .types()
                .iter()
                .map(|t| {
                    let mut weights = vec![0.0; spec.num_values()];
                    let mut prob = SigmaProblem::default();
                    for &(v, b) in &bids {
                        weights[v as usize] += 1.0;
                        prob.s2 += (f64::from(b) - t.prediction[v as usize]).powi(2);
                    }
                    prob.terms = weights
                        .into_iter()
                        .enumerate()
                        .filter(|(_, w)| *w > 0.0)
                        .map(|(v, w)| (t.prediction[v], w))
                        .collect();
                    let sigma = prob.solve(&grid, 10.0);
                    (sigma, prob.objective(1.0 / (sigma * sigma), &grid))
                })
                .collect();
            let best = fits.iter().map(|f| f.1).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * best.abs().max(1.0);
            let winners: Vec<usize> = (0..fits.len()).filter(|&k| fits[k].1 >= best - tol).collect();
            let k = winners[0];
            Ok(LevelAssignment {
                subject_id: subject.to_string(),
                type_index: k,
                type_name: types.types()[k].name.clone(),
                sigma: fits[k].0,
                log_likelihood: fits[k].1,
                tie: winners.len() > 1,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Degenerate("correlation needs at least three paired observations".into()));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("a variable is constant".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation with a 95% percentile bootstrap interval.
pub fn correlate(xs: &[f64], ys: &[f64], n_boot: usize, seed: u64) -> Result<Correlation> {
    let r = pearson(xs, ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut draws = Vec::with_capacity(n_boot);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..n_boot {
        for i in 0..n {
            let j = rng.gen_range(0..n);
            bx[i] = xs[j];
            by[i] = ys[j];
        }
        if let Ok(rb) = pearson(&bx, &by) {
            draws.push(rb);
        }
    }
    if draws.is_empty() {
        return Err(Error::Degenerate("every bootstrap resample was constant".into()));
    }
    draws.sort_by(f64::total_cmp);
    let q = |p: f64| draws[((p * (draws.len() - 1) as f64).round() as usize).min(draws.len() - 1)];
    Ok(Correlation { r, ci_low: q(0.025), ci_high: q(0.975), n })
}

/// Externally supplied map from choices in the 11-20 game to levels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChoiceLevelMap(pub BTreeMap<u32, u32>);

impl ChoiceLevelMap {
    /// JSON object such as `{"20": 0, "19": 1, "18": 2}`.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: BTreeMap<String, u32> = serde_json::from_str(s)?;
        let map = raw
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<u32>()
                    .map(|c| (c, v))
                    .map_err(|_| Error::Parameter(format!("choice {k:?} is not an integer")))
            })
            .collect::<Result<_>>()?;
        Ok(ChoiceLevelMap(map))
    }

    pub fn level(&self, choice: u32) -> Result<u32> {
        self.0
            .get(&choice)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("choice {choice} has no level in the map")))
    }
}

/// Predictions to compare bids against.
#[derive(Clone, Debug)]
pub enum Predictor {
    /// One predicted bid per value.
    Single(Vec<f64>),
    /// Several rules; each observation is scored against whichever is
    /// closest to it.
    BestOf(Vec<Vec<f64>>),
}

/// Root-mean-square prediction error over every record.
pub fn prediction_rmse(dataset: &BidDataset, predictor: &Predictor) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    let lookup = |pred: &[f64], v: u32| -> Result<f64> {
        pred.get(v as usize).copied().ok_or(Error::InvalidValue(v))
    };
    let mut sse = 0.0;
    for r in dataset.records() {
        let b = f64::from(r.bid);
        let err = match predictor {
            Predictor::Single(p) => (b - lookup(p, r.value)?).powi(2),
            Predictor::BestOf(ps) => {
                let mut best = f64::INFINITY;
                for p in ps {
                    best = best.min((b - lookup(p, r.value)?).powi(2));
                }
                best
            }
        };
        sse += err;
    }
    Ok((sse / dataset.len() as f64).sqrt())
}

/// CRRA exponent implied by collecting `k_boxes` of `n_boxes` in the
/// one-bomb risk task: `u(k) (n - k) / n` peaks at `k = alpha n / (1 + alpha)`,
/// so `alpha = k / (n - k)`.
pub fn crra_from_bret(k_boxes: u32, n_boxes: u32) -> Result<f64> {
    if k_boxes == 0 || k_boxes >= n_boxes {
        return Err(Error::Parameter(format!(
            "{k_boxes} of {n_boxes} boxes is outside the calibrated range (0 < k < n)"
        )));
    }
    Ok(f64::from(k_boxes) / f64::from(n_boxes - k_boxes))
}
