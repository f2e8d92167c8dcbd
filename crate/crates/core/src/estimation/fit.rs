//! Finite-mixture likelihood and its maximisation by EM.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::data::{BidDataset, Grouping};
use super::model::{log_normaliser, log_sum_exp, SigmaProblem, TypeSet, SIGMA_MAX, SIGMA_MIN};
use crate::error::{Error, Result};
use crate::spec::AuctionSpec;

/// Shares below this are reported as unidentified noise parameters.
pub const SHARE_FLOOR: f64 = 1e-6;

/// Mixture parameters: type shares and noise parameters (one per type; all
/// equal when the noise is shared).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureParams {
    pub shares: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl MixtureParams {
    pub fn new(shares: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if shares.len() != sigmas.len() || shares.is_empty() {
            return Err(Error::Parameter("shares and sigmas must be non-empty and of equal length".into()));
        }
        if shares.iter().any(|s| !(*s >= 0.0)) || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter("shares must be non-negative and sum to 1".into()));
        }
        if sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Parameter("sigmas must be positive".into()));
        }
        Ok(MixtureParams { shares, sigmas })
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the relative change in log-likelihood falls below this.
    pub tol: f64,
    pub shared_sigma: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { starts: 10, seed: 0, max_iter: 5000, tol: 1e-8, shared_sigma: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StandardErrors {
    pub shares: Vec<f64>,
    pub sigmas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureFit {
    pub types: Vec<String>,
    pub shares: Vec<f64>,
    /// `None` where the share is (numerically) zero and the noise parameter
    /// is therefore unidentified.
    pub sigmas: Vec<Option<f64>>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub grouping: Grouping,
    pub shared_sigma: bool,
    pub iterations: usize,
    pub standard_errors: Option<StandardErrors>,
    /// Log-likelihood after every EM iteration of the winning start.
    #[serde(skip)]
    pub trace: Vec<f64>,
    #[serde(skip)]
    pub params: MixtureParams,
}

/// Dataset reduced to what the likelihood needs.
struct Prepared {
    grid: Vec<f64>,
    /// `pred[k][v]`.
    pred: Vec<Vec<f64>>,
    /// Per group: `(value, count)` pairs and, per type, the sum of squared
    /// deviations from the prediction.
    groups: Vec<(Vec<(usize, f64)>, Vec<f64>)>,
    n_obs: usize,
    num_values: usize,
}

impl Prepared {
    fn new(dataset: &BidDataset, spec: &AuctionSpec, types: &TypeSet, grouping: Grouping) -> Result<Self> {
        dataset.validate(spec)?;
        if types.num_values() != spec.num_values() {
            return Err(Error::Parameter("type predictions do not cover the value set".into()));
        }
        let groups_idx = dataset.groups(grouping);
        if groups_idx.is_empty() {
            return Err(Error::Parameter("dataset is empty".into()));
        }
        let pred: Vec<Vec<f64>> = types.types().iter().map(|t| t.prediction.clone()).collect();
        let recs = dataset.records();
        let groups = groups_idx
            .iter()
            .map(|idx| {
                let mut counts = vec![0.0; spec.num_values()];
                let mut d2 = vec![0.0; pred.len()];
                for &i in idx {
                    let r = &recs[i];
                    counts[r.value as usize] += 1.0;
                    for (k, p) in pred.iter().enumerate() {
                        d2[k] += (f64::from(r.bid) - p[r.value as usize]).powi(2);
                    }
                }
                let counts = counts.into_iter().enumerate().filter(|(_, c)| *c > 0.0).collect();
                (counts, d2)
            })
            .collect();
        Ok(Prepared {
            grid: spec.bid_grid().iter().map(|&b| f64::from(b)).collect(),
            pred,
            groups,
            n_obs: dataset.len(),
            num_values: spec.num_values(),
        })
    }

    fn k(&self) -> usize {
        self.pred.len()
    }

    /// `log P(group | type)` for every group and type.
    fn group_loglik(&self, sigmas: &[f64]) -> Vec<Vec<f64>> {
        let thetas: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
        let log_z: Vec<Vec<f64>> = (0..self.k())
            .map(|k| {
                let mut row = vec![f64::NAN; self.num_values];
                for (counts, _) in &self.groups {
                    for &(v, _) in counts {
                        if row[v].is_nan() {
                            row[v] = log_normaliser(self.pred[k][v], thetas[k], &self.grid);
                        }
                    }
                }
                row
            })
            .collect();
        self.groups
            .iter()
            .map(|(counts, d2)| {
                (0..self.k())
                    .map(|k| {
                        -0.5 * thetas[k] * d2[k] - counts.iter().map(|&(v, c)| c * log_z[k][v]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    /// Log-likelihood and type posteriors per group.
    fn e_step(&self, params: &MixtureParams) -> (f64, Vec<Vec<f64>>) {
        let gl = self.group_loglik(&params.sigmas);
        let log_shares: Vec<f64> = params.shares.iter().map(|s| s.ln()).collect();
        let mut ll = 0.0;
        let post = gl
            .into_iter()
            .map(|row| {
                let joint: Vec<f64> = row.iter().zip(&log_shares).map(|(a, b)| a + b).collect();
                let total = log_sum_exp(&joint);
                ll += total;
                joint.into_iter().map(|j| (j - total).exp()).collect()
            })
            .collect();
        (ll, post)
    }

    fn sigma_problem(&self, post: &[Vec<f64>], types: &[usize]) -> SigmaProblem {
        let mut prob = SigmaProblem::default();
        for &k in types {
            let mut weights = vec![0.0; self.num_values];
            for ((counts, d2), tau) in self.groups.iter().zip(post) {
                prob.s2 += tau[k] * d2[k];
                for &(v, c) in counts {
                    weights[v] += tau[k] * c;
                }
            }
            prob.terms.extend(
                weights.into_iter().enumerate().filter(|(_, w)| *w > 0.0).map(|(v, w)| (self.pred[k][v], w)),
            );
        }
        prob
    }

    /// Shares are averaged posteriors; each noise parameter solves its
    /// weighted one-dimensional problem and is kept only if it improves the
    /// expected complete-data objective.
    fn m_step(&self, params: &MixtureParams, post: &[Vec<f64>], shared: bool) -> MixtureParams {
        let g = post.len() as f64;
        let shares: Vec<f64> = (0..self.k()).map(|k| post.iter().map(|t| t[k]).sum::<f64>() / g).collect();
        let blocks: Vec<Vec<usize>> = if shared { vec![(0..self.k()).collect()] } else { (0..self.k()).map(|k| vec![k]).collect() };
        let mut sigmas = params.sigmas.clone();
        for block in blocks {
            let prob = self.sigma_problem(post, &block);
            let old = params.sigmas[block[0]];
            let new = prob.solve(&self.grid, old);
            let better = prob.objective(1.0 / (new * new), &self.grid) >= prob.objective(1.0 / (old * old), &self.grid);
            for &k in &block {
                sigmas[k] = if better { new } else { old };
            }
        }
        MixtureParams { shares, sigmas }
    }

    fn run_em(&self, start: MixtureParams, config: &FitConfig) -> (MixtureParams, f64, Vec<f64>, bool) {
        let mut params = start;
        let (mut ll, mut post) = self.e_step(&params);
        let mut trace = vec![ll];
        for _ in 0..config.max_iter {
            params = self.m_step(&params, &post, config.shared_sigma);
            let (new_ll, new_post) = self.e_step(&params);
            trace.push(new_ll);
            let done = (new_ll - ll).abs() <= config.tol * new_ll.abs().max(1.0);
            ll = new_ll;
            post = new_post;
            if done {
                return (params, ll, trace, true);
            }
        }
        (params, ll, trace, false)
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, shared: bool) -> MixtureParams {
        let raw: Vec<f64> = (0..self.k()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let top = self.grid.last().copied().unwrap_or(1.0).max(1.0);
        let mut draw = || (rng.gen::<f64>() * top.ln()).exp().clamp(SIGMA_MIN, SIGMA_MAX);
        let sigmas = if shared { vec![draw(); self.k()] } else { (0..self.k()).map(|_| draw()).collect() };
        MixtureParams { shares: raw.into_iter().map(|r| r / total).collect(), sigmas }
    }

    fn default_start(&self) -> MixtureParams {
        let top = self.grid.last().copied().unwrap_or(1.0).max(1.0);
        MixtureParams {
            shares: vec![1.0 / self.k() as f64; self.k()],
            sigmas: vec![(top / 4.0).clamp(SIGMA_MIN, SIGMA_MAX); self.k()],
        }
    }
}

pub fn n_params(num_types: usize, shared_sigma: bool) -> usize {
    (num_types - 1) + if shared_sigma { 1 } else { num_types }
}

/// `q ln(n_obs) - 2 LL`.
pub fn bic(log_likelihood: f64, n_params: usize, n_obs: usize) -> Result<f64> {
    if n_obs <= n_params {
        return Err(Error::Degenerate(format!("{n_obs} observations for {n_params} parameters")));
    }
    Ok(n_params as f64 * (n_obs as f64).ln() - 2.0 * log_likelihood)
}

/// Mixture log-likelihood of the dataset.
pub fn likelihood(
    dataset: &BidDataset,
    spec: &AuctionSpec,
    types: &TypeSet,
    params: &MixtureParams,
    grouping: Grouping,
) -> Result<f64> {
    if params.shares.len() != types.len() {
        return Err(Error::Parameter("one share and one sigma per type are required".into()));
    }
    let prep = Prepared::new(dataset, spec, types, grouping)?;
    Ok(prep.e_step(params).0)
}

/// Maximum-likelihood mixture fit by multi-start EM.
pub fn fit_mixture(
    dataset: &BidDataset,
    spec: &AuctionSpec,
    types: &TypeSet,
    grouping: Grouping,
    config: &FitConfig,
) -> Result<MixtureFit> {
    let prep = Prepared::new(dataset, spec, types, grouping)?;
    let mut starts = vec![prep.default_start()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    while starts.len() < config.starts.max(1) {
        starts.push(prep.random_start(&mut rng, config.shared_sigma));
    }
    fit_from_starts(&prep, types, grouping, config, starts)
}

/// EM from a given starting point only (used for warm-started refits).
pub fn fit_mixture_from(
    dataset: &BidDataset,
    spec: &AuctionSpec,
    types: &TypeSet,
    grouping: Grouping,
    config: &FitConfig,
    start: &MixtureParams,
) -> Result<MixtureFit> {
    let prep = Prepared::new(dataset, spec, types, grouping)?;
    fit_from_starts(&prep, types, grouping, config, vec![start.clone()])
}

fn fit_from_starts(
    prep: &Prepared,
    types: &TypeSet,
    grouping: Grouping,
    config: &FitConfig,
    starts: Vec<MixtureParams>,
) -> Result<MixtureFit> {
    let runs: Vec<_> = starts.into_par_iter().map(|s| prep.run_em(s, config)).collect();
    let converged_any = runs.iter().any(|r| r.3);
    let (params, ll, trace, _) = runs
        .into_iter()
        .fold(None::<(MixtureParams, f64, Vec<f64>, bool)>, |best, run| match best {
            Some(b) if b.1 >= run.1 => Some(b),
            _ => Some(run),
        })
        .expect("at least one start");
    if !converged_any {
        return Err(Error::NonConvergence {
            iterations: config.max_iter,
            best_log_likelihood: ll,
            detail: format!("shares {:?}, sigmas {:?}", params.shares, params.sigmas),
        });
    }
    let q = n_params(types.len(), config.shared_sigma);
    let sigmas = params
        .shares
        .iter()
        .zip(&params.sigmas)
        .map(|(&s, &sig)| (s > SHARE_FLOOR).then_some(sig))
        .collect();
    Ok(MixtureFit {
        types: types.names(),
        shares: params.shares.clone(),
        sigmas,
        log_likelihood: ll,
        bic: bic(ll, q, prep.n_obs)?,
        n_obs: prep.n_obs,
        n_params: q,
        grouping,
        shared_sigma: config.shared_sigma,
        iterations: trace.len() - 1,
        standard_errors: None,
        trace,
        params,
    })
}

/// Leave-one-subject-out jack-knife standard errors of shares and sigmas,
/// each refit warm-started from the full-sample estimate.
pub fn jackknife_se(
    dataset: &BidDataset,
    spec: &AuctionSpec,
    types: &TypeSet,
    grouping: Grouping,
    config: &FitConfig,
    full: &MixtureFit,
) -> Result<StandardErrors> {
    let subjects = dataset.subjects();
    let g = subjects.len();
    if g < 2 {
        return Err(Error::Degenerate("the jack-knife needs at least two subjects".into()));
    }
    let estimates: Vec<MixtureParams> = subjects
        .par_iter()
        .map(|s| {
            fit_mixture_from(&dataset.without_subject(s), spec, types, grouping, config, &full.params)
                .map(|f| f.params)
        })
        .collect::<Result<_>>()?;
    let se = |get: &dyn Fn(&MixtureParams) -> f64| {
        let vals: Vec<f64> = estimates.iter().map(get).collect();
        let mean = vals.iter().sum::<f64>() / g as f64;
        ((g as f64 - 1.0) / g as f64 * vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
    };
    let k = types.len();
    Ok(StandardErrors {
        shares: (0..k).map(|i| se(&|p: &MixtureParams| p.shares[i])).collect(),
        sigmas: (0..k).map(|i| se(&|p: &MixtureParams| p.sigmas[i])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::data::BidRecord;
    use crate::estimation::model::BehaviouralType;
    use crate::spec::Format;

    fn spec() -> AuctionSpec {
        AuctionSpec::first_price(2, 20, crate::rational::ratio(1, 2)).unwrap()
    }

    fn types() -> TypeSet {
        TypeSet::new(vec![
            BehaviouralType { name: "half".into(), prediction: (0..=20).map(|v| f64::from(v) / 2.0).collect() },
            BehaviouralType { name: "zero".into(), prediction: vec![0.0; 21] },
        ])
        .unwrap()
    }

    fn record(s: &str, v: u32, b: u32) -> BidRecord {
        BidRecord { subject_id: s.into(), round: 1, treatment: "T".into(), format: Format::FirstPrice, value: v, bid: b }
    }

    #[test]
    fn exact_single_type_data_has_zero_loglik_in_the_limit() {
        let ts = TypeSet::new(vec![types().types()[1].clone()]).unwrap();
        let d = BidDataset::new((0..10).map(|v| record("a", v, 0)).collect());
        let p = MixtureParams::new(vec![1.0], vec![0.01]).unwrap();
        let ll = likelihood(&d, &spec(), &ts, &p, Grouping::Subject).unwrap();
        assert!(ll.abs() < 1e-12);
    }

    #[test]
    fn bic_penalty() {
        assert!((bic(-10.0, 1, 100).unwrap() - (100f64.ln() + 20.0)).abs() < 1e-12);
        assert!(bic(-1.0, 3, 3).is_err());
        assert_eq!(n_params(4, true), 4);
        assert_eq!(n_params(4, false), 7);
    }

    #[test]
    fn em_is_monotone_and_separates_types() {
        let mut recs = Vec::new();
        for s in 0..6 {
            for v in (0..=20).step_by(2) {
                let bid = if s < 4 { v / 2 } else { u32::from(v % 3 == 0) };
                recs.push(record(&format!("s{s}"), v, bid));
            }
        }
        let d = BidDataset::new(recs);
        let fit = fit_mixture(&d, &spec(), &types(), Grouping::Subject, &FitConfig::default()).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
        assert!((fit.shares[0] - 4.0 / 6.0).abs() < 1e-3, "{:?}", fit.shares);
    }
}
