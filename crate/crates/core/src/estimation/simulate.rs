//! Synthetic bid data drawn from the mixture model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{BidDataset, BidRecord, Grouping};
use super::model::{log_choice_probs, TypeSet};
use crate::error::{Error, Result};
use crate::rational;
use crate::spec::AuctionSpec;

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    pub rounds: u32,
    pub values_per_round: usize,
    /// A type is drawn per subject, or per subject and round.
    pub grouping: Grouping,
    pub treatment: String,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_subjects: 84,
            rounds: 2,
            values_per_round: 10,
            grouping: Grouping::Subject,
            treatment: "T1".into(),
            seed: 0,
        }
    }
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws a dataset. `sigmas[k] == 0` makes type `k` bid the grid point
/// closest to its prediction (lowest on a tie).
pub fn simulate_dataset(
    spec: &AuctionSpec,
    types: &TypeSet,
    shares: &[f64],
    sigmas: &[f64],
    config: &SimulationConfig,
) -> Result<BidDataset> {
    if shares.len() != types.len() || sigmas.len() != types.len() {
        return Err(Error::Parameter("one share and one sigma per type are required".into()));
    }
    if shares.iter().any(|s| *s < 0.0) || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter("shares must be non-negative and sum to 1".into()));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Parameter("sigmas must be non-negative".into()));
    }
    if types.num_values() != spec.num_values() {
        return Err(Error::Parameter("type predictions do not cover the value set".into()));
    }
    let grid: Vec<f64> = spec.bid_grid().iter().map(|&b| f64::from(b)).collect();
    let value_probs: Vec<f64> = spec.value_pmf().iter().map(rational::to_f64).collect();
    // kernel pmfs per (type, value), built lazily
    let mut kernels: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; spec.num_values()]; types.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config.n_subjects.to_string().len().max(3);
    let mut records = Vec::with_capacity(config.n_subjects * config.rounds as usize * config.values_per_round);
    for s in 0..config.n_subjects {
        let subject_id = format!("s{:0width$}", s + 1);
        let mut k = draw_index(&mut rng, shares);
        for round in 1..=config.rounds {
            if config.grouping == Grouping::SubjectRound && round > 1 {
                k = draw_index(&mut rng, shares);
            }
            for _ in 0..config.values_per_round {
                let v = draw_index(&mut rng, &value_probs);
                let pred = types.types()[k].prediction[v];
                let i = if sigmas[k] == 0.0 {
                    grid.iter()
                        .enumerate()
                        .min_by(|a, b| (a.1 - pred).abs().total_cmp(&(b.1 - pred).abs()))
                        .map(|(i, _)| i)
                        .expect("non-empty grid")
                } else {
                    let probs = kernels[k][v].get_or_insert_with(|| {
                        log_choice_probs(pred, 1.0 / (sigmas[k] * sigmas[k]), &grid).into_iter().map(f64::exp).collect()
                    });
                    draw_index(&mut rng, probs)
                };
                records.push(BidRecord {
                    subject_id: subject_id.clone(),
                    round,
                    treatment: config.treatment.clone(),
                    format: spec.format(),
                    value: v as u32,
                    bid: spec.bid_grid()[i],
                });
            }
        }
    }
    Ok(BidDataset::new(records))
}
