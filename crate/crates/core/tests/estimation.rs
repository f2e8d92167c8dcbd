//! Mixture model behaviour on simulated data.

use auction_levelk::estimation::{
    assign_levels, bic, choice_prob, correlate, fit_mixture, jackknife_se, likelihood, simulate_dataset, BehaviouralType,
    BidDataset, BidRecord, FitConfig, Grouping, MixtureParams, SimulationConfig, TypeSet,
};
use auction_levelk::levelk::{Level0Spec, Tiebreak};
use auction_levelk::rational::ratio;
use auction_levelk::{AuctionSpec, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> AuctionSpec {
    AuctionSpec::first_price(2, 100, ratio(1, 2)).unwrap()
}

fn types(names: &[&str]) -> TypeSet {
    TypeSet::from_names(&spec(), names, &Level0Spec::RandomUniform, Tiebreak::Lowest).unwrap()
}

fn sim(ts: &TypeSet, shares: &[f64], sigmas: &[f64], subjects: usize, seed: u64) -> BidDataset {
    let cfg = SimulationConfig { n_subjects: subjects, seed, ..Default::default() };
    simulate_dataset(&spec(), ts, shares, sigmas, &cfg).unwrap()
}

#[test]
fn pure_equilibrium_data_is_attributed_to_equilibrium() {
    let ts = types(&["eq", "l1", "l2", "l3"]);
    let data = sim(&ts, &[1.0, 0.0, 0.0, 0.0], &[5.0, 1.0, 1.0, 1.0], 84, 3);
    let fit = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &FitConfig { seed: 3, ..Default::default() }).unwrap();
    assert!(fit.shares[0] >= 0.95, "{:?}", fit.shares);
    assert!((fit.params.sigmas[0] - 5.0).abs() <= 1.0, "{:?}", fit.params.sigmas);
    assert!((fit.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn two_type_shares_are_recovered() {
    let ts = types(&["eq", "l3"]);
    let data = sim(&ts, &[0.75, 0.25], &[20.0, 8.0], 84, 17);
    let fit = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &FitConfig { seed: 17, ..Default::default() }).unwrap();
    assert!((fit.shares[0] - 0.75).abs() <= 0.10, "{:?}", fit.shares);
}

#[test]
fn mle_dominates_true_parameters() {
    let ts = types(&["eq", "l2"]);
    for seed in 0..3 {
        let data = sim(&ts, &[0.5, 0.5], &[10.0, 3.0], 40, seed);
        let truth = MixtureParams::new(vec![0.5, 0.5], vec![10.0, 3.0]).unwrap();
        let ll_true = likelihood(&data, &spec(), &ts, &truth, Grouping::Subject).unwrap();
        let fit = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &FitConfig { seed, ..Default::default() }).unwrap();
        assert!(fit.log_likelihood >= ll_true - 1e-9);
    }
}

#[test]
fn likelihood_ignores_record_order() {
    let ts = types(&["eq", "l2"]);
    let data = sim(&ts, &[0.5, 0.5], &[10.0, 3.0], 30, 4);
    let mut records = data.records().to_vec();
    records.reverse();
    let params = MixtureParams::new(vec![0.3, 0.7], vec![7.0, 4.0]).unwrap();
    let a = likelihood(&data, &spec(), &ts, &params, Grouping::Subject).unwrap();
    let b = likelihood(&BidDataset::new(records), &spec(), &ts, &params, Grouping::Subject).unwrap();
    assert!((a - b).abs() <= 1e-9 * a.abs());
}

#[test]
fn single_type_fit_equals_direct_sigma_mle() {
    let ts = types(&["l2"]);
    let data = sim(&ts, &[1.0], &[6.0], 30, 8);
    let fit = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &FitConfig::default()).unwrap();
    // direct maximisation over a fine sigma grid using choice probabilities
    let grid = spec().bid_grid().to_vec();
    let ty = &ts.types()[0];
    let ll = |sigma: f64| -> f64 {
        data.records().iter().map(|r| choice_prob(r.bid, r.value, ty, sigma, &grid).unwrap().ln()).sum()
    };
    let best = (0..4000).map(|i| 3.0 + f64::from(i) * 0.002).max_by(|a, b| ll(*a).total_cmp(&ll(*b))).unwrap();
    assert!((fit.params.sigmas[0] - best).abs() < 3e-3, "{} vs {best}", fit.params.sigmas[0]);
    assert!((fit.log_likelihood - ll(fit.params.sigmas[0])).abs() < 1e-6);
}

#[test]
fn duplicated_type_changes_nothing_but_identification() {
    let one = types(&["l2"]);
    let two = types(&["l2", "l2"]);
    let data = sim(&one, &[1.0], &[6.0], 30, 9);
    let a = fit_mixture(&data, &spec(), &one, Grouping::Subject, &FitConfig::default()).unwrap();
    let b = fit_mixture(&data, &spec(), &two, Grouping::Subject, &FitConfig { shared_sigma: true, ..Default::default() }).unwrap();
    assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-6);
    assert!((b.shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn bic_penalises_a_useless_type() {
    let ts = types(&["eq"]);
    let data = sim(&ts, &[1.0], &[5.0], 30, 10);
    let one = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &FitConfig::default()).unwrap();
    assert!((one.bic - (-2.0 * one.log_likelihood) - (data.len() as f64).ln()).abs() < 1e-9);
    let padded = TypeSet::new(vec![
        ts.types()[0].clone(),
        BehaviouralType { name: "far".into(), prediction: vec![100.0; 101] },
    ])
    .unwrap();
    let two = fit_mixture(&data, &spec(), &padded, Grouping::Subject, &FitConfig::default()).unwrap();
    assert!(two.shares[1] < 1e-6);
    assert!(two.sigmas[1].is_none());
    assert!((two.log_likelihood - one.log_likelihood).abs() < 1e-6);
    assert!(two.bic > one.bic);
    assert!(matches!(bic(-10.0, 5, 5), Err(Error::Degenerate(_))));
}

#[test]
fn round_grouping_and_shared_sigma() {
    let ts = types(&["eq", "l3"]);
    let cfg = SimulationConfig { grouping: Grouping::SubjectRound, seed: 12, ..Default::default() };
    let data = simulate_dataset(&spec(), &ts, &[0.6, 0.4], &[6.0, 6.0], &cfg).unwrap();
    let fit = fit_mixture(&data, &spec(), &ts, Grouping::SubjectRound, &FitConfig { shared_sigma: true, ..Default::default() })
        .unwrap();
    assert_eq!(fit.n_params, 2);
    assert!((fit.shares[0] - 0.6).abs() < 0.12);
    let s = fit.params.sigmas[0];
    assert_eq!(fit.params.sigmas[1], s);
    assert!((s / 6.0 - 1.0).abs() < 0.2);
}

#[test]
fn non_convergence_reports_best_so_far() {
    let ts = types(&["eq", "l3"]);
    let data = sim(&ts, &[0.5, 0.5], &[20.0, 8.0], 20, 13);
    match fit_mixture(&data, &spec(), &ts, Grouping::Subject, &FitConfig { max_iter: 1, starts: 2, ..Default::default() }) {
        Err(Error::NonConvergence { iterations, best_log_likelihood, .. }) => {
            assert_eq!(iterations, 1);
            assert!(best_log_likelihood.is_finite() && best_log_likelihood < 0.0);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn fits_are_deterministic() {
    let ts = types(&["eq", "l1", "l2"]);
    let data = sim(&ts, &[0.4, 0.3, 0.3], &[10.0, 5.0, 5.0], 30, 14);
    let cfg = FitConfig { seed: 99, ..Default::default() };
    let a = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &cfg).unwrap();
    let b = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn jackknife_shrinks_with_more_subjects() {
    let ts = types(&["eq", "l3"]);
    let cfg = FitConfig { starts: 3, ..Default::default() };
    let mut se = Vec::new();
    for subjects in [42, 84] {
        // average over a few datasets to steady the comparison
        let mut total = 0.0;
        for seed in 0..3 {
            let data = sim(&ts, &[0.6, 0.4], &[15.0, 6.0], subjects, 100 + seed);
            let fit = fit_mixture(&data, &spec(), &ts, Grouping::Subject, &cfg).unwrap();
            total += jackknife_se(&data, &spec(), &ts, Grouping::Subject, &cfg, &fit).unwrap().shares[0];
        }
        se.push(total / 3.0);
    }
    let ratio = se[0] / se[1];
    // 1/sqrt(subjects) predicts sqrt(2)
    assert!(ratio > 1.1 && ratio < 1.9, "{se:?}");
}

#[test]
fn simulated_bids_follow_the_kernel() {
    let ts = types(&["eq"]);
    let data = sim(&ts, &[1.0], &[7.0], 400, 15);
    let grid = spec().bid_grid().to_vec();
    let mut observed = vec![0.0; grid.len()];
    let mut expected = vec![0.0; grid.len()];
    for r in data.records() {
        observed[r.bid as usize] += 1.0;
        for &b in &grid {
            expected[b as usize] += choice_prob(b, r.value, &ts.types()[0], 7.0, &grid).unwrap();
        }
    }
    // merge sparse cells so every bin expects at least 5
    let (mut chi2, mut df, mut o, mut e) = (0.0, 0usize, 0.0, 0.0);
    for i in 0..grid.len() {
        o += observed[i];
        e += expected[i];
        if e >= 5.0 {
            chi2 += (o - e) * (o - e) / e;
            df += 1;
            o = 0.0;
            e = 0.0;
        }
    }
    let df = (df - 1) as f64;
    // roughly the 0.999 quantile
    assert!(chi2 < df + 4.5 * (2.0 * df).sqrt(), "chi2 {chi2} on {df} df");
}

fn rec(s: &str, v: u32, b: u32) -> BidRecord {
    BidRecord { subject_id: s.into(), round: 1, treatment: "T1".into(), format: auction_levelk::Format::FirstPrice, value: v, bid: b }
}

#[test]
fn level_assignment_is_invariant_to_duplicated_records() {
    let ts = types(&["l1", "l2", "l3", "l4"]);
    let data = sim(&TypeSet::new(vec![ts.types()[2].clone()]).unwrap(), &[1.0], &[2.0], 12, 16);
    let once = assign_levels(&data, &spec(), &ts).unwrap();
    let mut doubled = data.records().to_vec();
    doubled.extend(data.records().iter().cloned());
    let twice = assign_levels(&BidDataset::new(doubled), &spec(), &ts).unwrap();
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(a.type_index, b.type_index);
        assert!((a.sigma - b.sigma).abs() < 1e-6 * a.sigma);
    }
}

#[test]
fn exact_level_two_bidder_is_assigned_level_two() {
    let ts = types(&["l1", "l2", "l3"]);
    let l2 = ts.types()[1].prediction.clone();
    let data = BidDataset::new((0..20).map(|i| rec("a", i * 5, l2[(i * 5) as usize] as u32)).collect());
    let a = &assign_levels(&data, &spec(), &ts).unwrap()[0];
    assert_eq!(a.type_name, "l2");
    assert_eq!(a.sigma, 0.1);
}

#[test]
fn independent_levels_are_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..84).map(|_| f64::from(rng.gen_range(1..=3))).collect();
    let ys: Vec<f64> = (0..84).map(|_| f64::from(rng.gen_range(1..=3))).collect();
    let c = correlate(&xs, &ys, 2000, 6).unwrap();
    assert!(c.ci_low < 0.0 && c.ci_high > 0.0, "{c:?}");
    assert!(c.r.abs() < 0.3);
}

#[test]
fn off_grid_bid_is_an_ingest_error_with_line() {
    let csv = "subject_id,round,treatment,format,value,bid\ns1,1,T2,first_price,40,10\ns1,1,T2,first_price,41,12\n";
    let data = BidDataset::read_csv(csv.as_bytes(), "t2.csv").unwrap();
    let coarse = spec().with_bid_step(5).unwrap();
    let ts = TypeSet::from_names(&coarse, &["l1"], &Level0Spec::RandomUniform, Tiebreak::Lowest).unwrap();
    match fit_mixture(&data, &coarse, &ts, Grouping::Subject, &FitConfig::default()) {
        Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected ingest error, got {other:?}"),
    }
}
