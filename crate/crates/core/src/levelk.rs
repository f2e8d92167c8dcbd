//! Level-k and cognitive-hierarchy bidding.
//!
//! Every level is an exact best response computed by scanning the whole bid
//! grid; closed forms are offered only where they are provably equal and are
//! cross-checked against the scan.

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::payoff::{crra, WinTable};
use crate::rational::{self, Q};
use crate::spec::{AuctionSpec, Format};
use crate::strategy::PureBidding;

/// Naive anchor of the hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub enum Level0Spec {
    /// Uniform over the bid grid.
    RandomUniform,
    /// Bids the highest grid point not above the value.
    Truthful,
    /// `cdf[i] = P(bid <= grid[i])`.
    CustomCdf(Vec<Q>),
}

impl Level0Spec {
    /// Distribution of a level-0 bid over grid positions.
    pub fn bid_pmf(&self, spec: &AuctionSpec) -> Result<Vec<Q>> {
        let grid = spec.bid_grid();
        match self {
            Level0Spec::RandomUniform => Ok(vec![rational::ratio(1, grid.len() as i64); grid.len()]),
            Level0Spec::Truthful => {
                let mut pmf = vec![Q::zero(); grid.len()];
                for (v, w) in spec.value_pmf().iter().enumerate() {
                    let i = grid.partition_point(|&b| b as usize <= v) - 1;
                    pmf[i] += w;
                }
                Ok(pmf)
            }
            Level0Spec::CustomCdf(cdf) => {
                validate_cdf(spec, cdf)?;
                let mut prev = Q::zero();
                Ok(cdf
                    .iter()
                    .map(|c| {
                        let q = c - &prev;
                        prev = c.clone();
                        q
                    })
                    .collect())
            }
        }
    }
}

impl FromStr for Level0Spec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "random" => Ok(Level0Spec::RandomUniform),
            "truthful" => Ok(Level0Spec::Truthful),
            other => Err(Error::Parameter(format!("unknown level-0 specification {other:?}"))),
        }
    }
}

fn validate_cdf(spec: &AuctionSpec, cdf: &[Q]) -> Result<()> {
    if cdf.len() != spec.bid_grid().len() {
        return Err(Error::Parameter(format!(
            "cdf has {} entries, grid has {}",
            cdf.len(),
            spec.bid_grid().len()
        )));
    }
    if cdf.iter().any(|c| c.is_negative()) || cdf.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("cdf must be non-negative and weakly increasing".into()));
    }
    if !cdf.last().is_some_and(|c| c.is_one()) {
        return Err(Error::Parameter("cdf must reach 1 at the top of the grid".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tiebreak {
    Lowest,
    Highest,
}

impl FromStr for Tiebreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "lowest" => Ok(Tiebreak::Lowest),
            "high" | "highest" => Ok(Tiebreak::Highest),
            other => Err(Error::Parameter(format!("unknown tie-break {other:?}"))),
        }
    }
}

/// `level(start_level) == level(start_level + period)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Cycle {
    pub start_level: u32,
    pub period: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelPrediction {
    levels: Vec<PureBidding>,
    pub tiebreak: Tiebreak,
    pub cycle: Option<Cycle>,
}

impl LevelPrediction {
    /// Bidding function of level `k >= 1`.
    pub fn level(&self, k: u32) -> &PureBidding {
        &self.levels[k as usize - 1]
    }

    pub fn levels(&self) -> &[PureBidding] {
        &self.levels
    }

    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Highest bid made by each level, in level order.
    pub fn max_bids(&self) -> Vec<u32> {
        self.levels.iter().map(PureBidding::max_bid).collect()
    }

    /// `level,value,bid` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,value,bid")?;
        for (k, level) in self.levels.iter().enumerate() {
            for (v, b) in level.bids().iter().enumerate() {
                writeln!(out, "{},{v},{b}", k + 1)?;
            }
        }
        Ok(())
    }
}

fn improves(cmp: std::cmp::Ordering, tiebreak: Tiebreak) -> bool {
    match cmp {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => tiebreak == Tiebreak::Highest,
        std::cmp::Ordering::Less => false,
    }
}

/// Pure best response of every value to opponents whose bids follow
/// `opponent_pmf` (by grid position).
pub fn best_response(spec: &AuctionSpec, opponent_pmf: &[Q], tiebreak: Tiebreak) -> Result<PureBidding> {
    let grid = spec.bid_grid();
    if grid.is_empty() {
        return Err(Error::InvalidSpec("empty bid grid".into()));
    }
    let table = WinTable::from_bid_pmf(spec, opponent_pmf)?;
    if !spec.is_risk_neutral() {
        return Ok(best_response_float(spec, &table.to_f64(), tiebreak));
    }
    let (w, d) = table.scaled();
    let bids = (0..spec.num_values())
        .map(|v| {
            let vb = BigInt::from(v as u64);
            let mut best: Option<usize> = None;
            let mut best_pay = BigInt::zero();
            for (i, (&b, wi)) in grid.iter().zip(&w).enumerate() {
                let pay = match spec.format() {
                    Format::AllPay => &vb * wi - BigInt::from(b) * &d,
                    Format::FirstPrice => (&vb - BigInt::from(b)) * wi,
                };
                if best.is_none() || improves(pay.cmp(&best_pay), tiebreak) {
                    best = Some(i);
                    best_pay = pay;
                }
            }
            grid[best.expect("non-empty grid")]
        })
        .collect();
    Ok(PureBidding::from_bids_unchecked(bids))
}

/// CRRA first-price best response in floating point. Bids above the value
/// are never considered.
fn best_response_float(spec: &AuctionSpec, win: &[f64], tiebreak: Tiebreak) -> PureBidding {
    let grid = spec.bid_grid();
    let bids = (0..spec.num_values())
        .map(|v| {
            let mut best: Option<usize> = None;
            let mut best_pay = f64::MIN;
            for (i, &b) in grid.iter().enumerate().take_while(|(_, &b)| b as usize <= v) {
                let pay = crra((v - b as usize) as f64, spec.alpha()) * win[i];
                let cmp = pay.partial_cmp(&best_pay).unwrap_or(std::cmp::Ordering::Less);
                if best.is_none() || improves(cmp, tiebreak) {
                    best = Some(i);
                    best_pay = pay;
                }
            }
            grid[best.unwrap_or(0)]
        })
        .collect();
    PureBidding::from_bids_unchecked(bids)
}

/// Levels `1..=k_max`, each best responding to the level below. Once a
/// bidding function repeats, the rest of the sequence is periodic and is
/// filled in without further computation.
pub fn iterate_levels(spec: &AuctionSpec, l0: &Level0Spec, k_max: u32, tiebreak: Tiebreak) -> Result<LevelPrediction> {
    if k_max == 0 {
        return Err(Error::Parameter("need at least one level".into()));
    }
    let mut levels: Vec<PureBidding> = Vec::with_capacity(k_max as usize);
    let mut seen: HashMap<PureBidding, u32> = HashMap::new();
    let mut cycle = None;
    let mut opponents = l0.bid_pmf(spec)?;
    for k in 1..=k_max {
        if let Some(c) = cycle {
            let Cycle { period, .. } = c;
            levels.push(levels[(k - period - 1) as usize].clone());
            continue;
        }
        let level = best_response(spec, &opponents, tiebreak)?;
        if let Some(&earlier) = seen.get(&level) {
            cycle = Some(Cycle { start_level: earlier, period: k - earlier });
        } else {
            seen.insert(level.clone(), k);
        }
        opponents = level.bid_distribution(spec);
        levels.push(level);
    }
    Ok(LevelPrediction { levels, tiebreak, cycle })
}

/// Integer-grid all-pay level `k`: bid `k - 1` when `v >= k`, else 0.
/// Holds while `(k - 1)^n <= (x + 1)^(n - 1)`.
pub fn closed_form_allpay(spec: &AuctionSpec, k: u32) -> Result<PureBidding> {
    let oob = |reason: &str| Error::OutOfCharacterization { level: k, reason: reason.into() };
    if spec.format() != Format::AllPay {
        return Err(oob("not an all-pay auction"));
    }
    if !spec.is_unit_grid() || !spec.is_uniform() {
        return Err(oob("needs uniform values and an integer bid grid"));
    }
    if k == 0 {
        return Err(Error::Parameter("levels start at 1".into()));
    }
    let lhs = num_traits::pow(BigInt::from(k - 1), spec.n() as usize);
    let rhs = num_traits::pow(BigInt::from(spec.x() + 1), spec.n() as usize - 1);
    if lhs > rhs {
        return Err(oob("level exceeds the bound (k-1)^n <= (x+1)^(n-1)"));
    }
    let bids = (0..=spec.x()).map(|v| if v >= k { k - 1 } else { 0 }).collect();
    PureBidding::new(spec, bids)
}

/// First-price level `k` at `p = 1/n`: bid `k - 1` above
/// `v*(k) = (k-1) / (1 - (1-p)^(n-1))`, else 0. Checked against the exact
/// iteration with a uniform level 0 and lowest tie-break.
pub fn closed_form_firstprice(spec: &AuctionSpec, k: u32) -> Result<PureBidding> {
    let oob = |reason: &str| Error::OutOfCharacterization { level: k, reason: reason.into() };
    if spec.format() != Format::FirstPrice || !spec.is_risk_neutral() {
        return Err(oob("needs a risk-neutral first-price auction"));
    }
    if *spec.p() != rational::ratio(1, spec.n() as i64) {
        return Err(oob("needs p = 1/n"));
    }
    if !spec.is_unit_grid() || !spec.is_uniform() {
        return Err(oob("needs uniform values and an integer bid grid"));
    }
    if k == 0 {
        return Err(Error::Parameter("levels start at 1".into()));
    }
    let threshold = v_star(spec, k);
    let bids: Vec<u32> = (0..=spec.x())
        .map(|v| if rational::int(v as i64) > threshold { k - 1 } else { 0 })
        .collect();
    let closed = PureBidding::new(spec, bids)?;
    let exact = iterate_levels(spec, &Level0Spec::RandomUniform, k, Tiebreak::Lowest)?;
    if *exact.level(k) != closed {
        return Err(oob("x is not large enough for the threshold form"));
    }
    Ok(closed)
}

/// `(k-1) / (1 - (1-p)^(n-1))`.
pub fn v_star(spec: &AuctionSpec, k: u32) -> Q {
    let miss = rational::pow(&(Q::one() - spec.p()), spec.n() - 1);
    rational::int(k as i64 - 1) / (Q::one() - miss)
}

/// Truncated Poisson weights `tau^h / h!` for `h = 0..k-1`, normalised.
pub fn ch_weights(tau: &Q, k: u32) -> Result<Vec<Q>> {
    if !tau.is_positive() {
        return Err(Error::Parameter("tau must be positive".into()));
    }
    let mut w = Vec::with_capacity(k as usize);
    let mut term = Q::one();
    for h in 0..k {
        if h > 0 {
            term = term * tau / rational::int(h as i64);
        }
        w.push(term.clone());
    }
    let total: Q = w.iter().sum();
    Ok(w.into_iter().map(|q| q / &total).collect())
}

/// Cognitive-hierarchy levels `1..=k_max`: level `k` best responds to the
/// mix of levels `0..k-1` with truncated Poisson(`tau`) weights.
pub fn ch_levels(
    spec: &AuctionSpec,
    l0: &Level0Spec,
    tau: &Q,
    k_max: u32,
    tiebreak: Tiebreak,
) -> Result<Vec<PureBidding>> {
    let mut pmfs = vec![l0.bid_pmf(spec)?];
    let mut levels = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let weights = ch_weights(tau, k)?;
        let mut mix = vec![Q::zero(); spec.bid_grid().len()];
        for (w, pmf) in weights.iter().zip(&pmfs) {
            for (m, q) in mix.iter_mut().zip(pmf) {
                if !q.is_zero() {
                    *m += w * q;
                }
            }
        }
        let level = best_response(spec, &mix, tiebreak)?;
        pmfs.push(level.bid_distribution(spec));
        levels.push(level);
    }
    Ok(levels)
}

pub fn ch_bidding(spec: &AuctionSpec, l0: &Level0Spec, tau: &Q, k: u32, tiebreak: Tiebreak) -> Result<PureBidding> {
    if k == 0 {
        return Err(Error::Parameter("levels start at 1".into()));
    }
    Ok(ch_levels(spec, l0, tau, k, tiebreak)?.pop().expect("k >= 1"))
}

/// Sufficient condition on a level-0 cdf (`cdf[i] = P(bid <= grid[i])`) for
/// the zero-bidding level-1 characterisation. Uses `F(b-) = P(bid < b)`:
/// all-pay needs `F(b-)^(n-1) <= b/(x+1)`, first-price needs
/// `F(b-) <= ((n-1)/n) ((x/(x-b))^(n-1) - 1)` for `b < x`.
pub fn check_l0_bound(spec: &AuctionSpec, cdf: &[Q]) -> Result<bool> {
    validate_cdf(spec, cdf)?;
    let grid = spec.bid_grid();
    let n = spec.n();
    let x = spec.x();
    for i in 1..grid.len() {
        let f = &cdf[i - 1];
        let b = grid[i];
        let ok = match spec.format() {
            Format::AllPay => rational::pow(f, n - 1) <= rational::ratio(b as i64, x as i64 + 1),
            Format::FirstPrice => {
                if b >= x {
                    continue;
                }
                let r = rational::ratio(x as i64, (x - b) as i64);
                let bound = rational::ratio(n as i64 - 1, n as i64) * (rational::pow(&r, n - 1) - Q::one());
                *f <= bound
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Level-k under CRRA utility `z^alpha`; first-price only.
pub fn crra_levelk(
    spec: &AuctionSpec,
    alpha: f64,
    l0: &Level0Spec,
    k_max: u32,
    tiebreak: Tiebreak,
) -> Result<LevelPrediction> {
    if spec.format() == Format::AllPay {
        return Err(Error::UnsupportedUtility("risk aversion is modelled for first-price only".into()));
    }
    let spec = spec.clone().with_alpha(alpha)?;
    iterate_levels(&spec, l0, k_max, tiebreak)
}
