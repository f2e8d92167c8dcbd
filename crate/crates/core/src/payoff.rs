//! Win probabilities and expected payoffs against symmetric opponents.
//!
//! A bid wins when it is strictly above every surviving opponent bid. With
//! survival probability `p` each opponent is beaten with probability
//! `1 - p + p F(b-)`, where `F(b-)` is the chance their bid is below `b`.
//! The player's own survival factor is a positive constant and is left out.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Q};
use crate::spec::{AuctionSpec, Format};
use crate::strategy::BehaviouralStrategy;

/// Expected payoff, exact in the risk-neutral case.
#[derive(Clone, Debug, PartialEq)]
pub enum Payoff {
    Exact(Q),
    Approx(f64),
}

impl Payoff {
    pub fn to_f64(&self) -> f64 {
        match self {
            Payoff::Exact(q) => rational::to_f64(q),
            Payoff::Approx(f) => *f,
        }
    }

    pub fn exact(&self) -> Option<&Q> {
        match self {
            Payoff::Exact(q) => Some(q),
            Payoff::Approx(_) => None,
        }
    }
}

/// `(1 - p + p F)^(n-1)` for a single-opponent "below" probability `F`.
pub fn beat_all(spec: &AuctionSpec, below: &Q) -> Q {
    let beat_one = Q::one() - spec.p() + spec.p() * below;
    rational::pow(&beat_one, spec.n() - 1)
}

/// Win probability at every grid position for one opponent bid distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct WinTable {
    win: Vec<Q>,
}

impl WinTable {
    /// `pmf[i]` is the probability that one opponent bids grid position `i`.
    pub fn from_bid_pmf(spec: &AuctionSpec, pmf: &[Q]) -> Result<Self> {
        if pmf.len() != spec.bid_grid().len() {
            return Err(Error::InvalidStrategy(format!(
                "bid pmf has {} entries, grid has {}",
                pmf.len(),
                spec.bid_grid().len()
            )));
        }
        let mut below = Q::zero();
        let mut win = Vec::with_capacity(pmf.len());
        for q in pmf {
            win.push(beat_all(spec, &below));
            below += q;
        }
        Ok(WinTable { win })
    }

    pub fn from_strategy(spec: &AuctionSpec, opponents: &BehaviouralStrategy) -> Result<Self> {
        opponents.check_shape(spec)?;
        Self::from_bid_pmf(spec, &opponents.bid_distribution(spec))
    }

    pub fn get(&self, bid_index: usize) -> &Q {
        &self.win[bid_index]
    }

    pub fn len(&self) -> usize {
        self.win.len()
    }

    pub fn is_empty(&self) -> bool {
        self.win.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.win.iter().map(rational::to_f64).collect()
    }

    /// Integer numerators over one common denominator, for fast exact
    /// comparisons of payoffs.
    pub fn scaled(&self) -> (Vec<BigInt>, BigInt) {
        let d = rational::common_denominator(&self.win);
        let nums = self.win.iter().map(|w| (w * Q::from_integer(d.clone())).to_integer()).collect();
        (nums, d)
    }
}

/// Payoff of value `v` bidding `b` given the probability `win` of winning.
pub fn payoff_given_win(spec: &AuctionSpec, v: u32, b: u32, win: &Q) -> Result<Payoff> {
    let (vq, bq) = (rational::int(v as i64), rational::int(b as i64));
    match spec.format() {
        Format::AllPay => {
            if !spec.is_risk_neutral() {
                return Err(Error::UnsupportedUtility("all-pay auctions require alpha = 1".into()));
            }
            Ok(Payoff::Exact(vq * win - bq))
        }
        Format::FirstPrice if spec.is_risk_neutral() => Ok(Payoff::Exact((vq - bq) * win)),
        Format::FirstPrice => {
            if b > v {
                return Err(Error::Domain(format!(
                    "bid {b} above value {v} has no CRRA utility"
                )));
            }
            Ok(Payoff::Approx(crra((v - b) as f64, spec.alpha()) * rational::to_f64(win)))
        }
    }
}

/// `z^alpha`.
pub fn crra(z: f64, alpha: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.powf(alpha)
    }
}

pub fn win_probability(spec: &AuctionSpec, opponents: &BehaviouralStrategy, b: u32) -> Result<Q> {
    let i = spec.grid_index(b).ok_or(Error::InvalidBid(b))?;
    opponents.check_shape(spec)?;
    let below: Q = opponents.bid_distribution(spec)[..i].iter().sum();
    Ok(beat_all(spec, &below))
}

pub fn expected_payoff(spec: &AuctionSpec, opponents: &BehaviouralStrategy, v: u32, b: u32) -> Result<Payoff> {
    if v > spec.x() {
        return Err(Error::InvalidValue(v));
    }
    let w = win_probability(spec, opponents, b)?;
    payoff_given_win(spec, v, b, &w)
}

/// Bids that no value would want: above the value (all-pay), or at or
/// above a positive value (first-price).
pub fn is_dominated(format: Format, v: u32, b: u32) -> bool {
    match format {
        Format::AllPay => b > v,
        Format::FirstPrice => b > v || (v > 0 && b == v),
    }
}
