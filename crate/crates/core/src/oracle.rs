//! Brute-force ground truth for small games.
//!
//! Payoffs are computed by walking every combination of opponent values,
//! opponent bids, opponent survival draws and the player's own survival
//! draw, and adding up realised payoffs. Nothing here uses win-probability
//! formulas, so it can check the closed-form code paths.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Q};
use crate::spec::{AuctionSpec, Format};
use crate::strategy::BehaviouralStrategy;

/// Upper limit on enumerated outcomes per payoff evaluation.
pub const MAX_OUTCOMES: u64 = 10_000_000;

fn outcome_count(spec: &AuctionSpec) -> u64 {
    let per_opponent = (spec.num_values() * spec.bid_grid().len() * 2) as u64;
    per_opponent.saturating_pow(spec.n() - 1).saturating_mul(2)
}

fn check_size(spec: &AuctionSpec) -> Result<()> {
    let count = outcome_count(spec);
    if count > MAX_OUTCOMES {
        return Err(Error::TooLarge(format!("{count} outcomes exceed the cap of {MAX_OUTCOMES}")));
    }
    Ok(())
}

/// One opponent's realised bid: the bid if it survived, otherwise `None`.
fn opponent_outcomes(spec: &AuctionSpec, strategy: &BehaviouralStrategy) -> Vec<(Option<u32>, Q)> {
    let p = spec.p().clone();
    let miss = Q::one() - &p;
    let mut out = Vec::new();
    for (v, pv) in spec.value_pmf().iter().enumerate() {
        for (i, &b) in spec.bid_grid().iter().enumerate() {
            let pb = strategy.prob(v, i);
            if pv.is_zero() || pb.is_zero() {
                continue;
            }
            let base = pv * pb;
            out.push((Some(b), &base * &p));
            if !miss.is_zero() {
                out.push((None, base * &miss));
            }
        }
    }
    out
}

/// Expected payoff of value `v` bidding `b` by full enumeration. Includes
/// the player's own survival draw, so first-price results carry the extra
/// factor `p` relative to the core payoff.
pub fn oracle_expected_payoff(spec: &AuctionSpec, opponents: &BehaviouralStrategy, v: u32, b: u32) -> Result<Q> {
    check_size(spec)?;
    opponents.check_shape(spec)?;
    if v > spec.x() {
        return Err(Error::InvalidValue(v));
    }
    if spec.grid_index(b).is_none() {
        return Err(Error::InvalidBid(b));
    }
    let outcomes = opponent_outcomes(spec, opponents);
    let mut total = Q::zero();
    let mut mass = Q::zero();
    let mut stack: Vec<usize> = vec![0; spec.n() as usize - 1];
    loop {
        let mut prob = Q::one();
        let mut top: Option<u32> = None;
        for &k in &stack {
            let (bid, q) = &outcomes[k];
            prob *= q;
            top = top.max(*bid);
        }
        for own_survives in [true, false] {
            let own_p = if own_survives { spec.p().clone() } else { Q::one() - spec.p() };
            if own_p.is_zero() {
                continue;
            }
            let wins = own_survives && top.is_none_or(|t| b > t);
            let realised = match spec.format() {
                Format::AllPay => rational::int(if wins { v as i64 } else { 0 }) - rational::int(b as i64),
                Format::FirstPrice => rational::int(if wins { v as i64 - b as i64 } else { 0 }),
            };
            let p_all = &prob * own_p;
            mass += &p_all;
            total += realised * p_all;
        }
        // advance the odometer over opponents
        let mut pos = 0;
        loop {
            if pos == stack.len() {
                debug_assert!(mass.is_one());
                return Ok(total);
            }
            stack[pos] += 1;
            if stack[pos] < outcomes.len() {
                break;
            }
            stack[pos] = 0;
            pos += 1;
        }
    }
}

/// Every weakly increasing map from values to grid bids.
pub fn monotone_pure_strategies(spec: &AuctionSpec) -> Vec<Vec<u32>> {
    fn rec(grid: &[u32], start: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..grid.len() {
            cur.push(grid[i]);
            rec(grid, i, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(spec.bid_grid(), 0, spec.num_values(), &mut Vec::new(), &mut out);
    out
}

/// True when no monotone pure bidding function is a symmetric equilibrium.
pub fn oracle_no_pure_symmetric_eq(spec: &AuctionSpec) -> Result<bool> {
    check_size(spec)?;
    let candidates = monotone_pure_strategies(spec);
    if candidates.len() > 100_000 {
        return Err(Error::TooLarge(format!("{} monotone strategies", candidates.len())));
    }
    for bids in candidates {
        let strategy = crate::strategy::PureBidding::new(spec, bids.clone())?.to_strategy(spec);
        if is_pure_equilibrium(spec, &strategy, &bids)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn is_pure_equilibrium(spec: &AuctionSpec, strategy: &BehaviouralStrategy, bids: &[u32]) -> Result<bool> {
    for (v, &own) in bids.iter().enumerate() {
        let current = oracle_expected_payoff(spec, strategy, v as u32, own)?;
        for &b in spec.bid_grid() {
            if b != own && oracle_expected_payoff(spec, strategy, v as u32, b)? > current {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
