//! Symmetric strategies: behavioural (mixed), pure, and the jump-vector
//! encoding of monotone gapless behavioural strategies.

use std::io::{Read, Write};

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{self, Q};
use crate::spec::AuctionSpec;

/// For each value, a probability mass function over bid-grid positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviouralStrategy {
    probs: Vec<Vec<Q>>,
}

impl BehaviouralStrategy {
    /// `probs[v][i]` is the probability that value `v` bids grid position `i`.
    pub fn new(probs: Vec<Vec<Q>>) -> Result<Self> {
        let width = probs.first().map_or(0, Vec::len);
        if probs.is_empty() || width == 0 {
            return Err(Error::InvalidStrategy("empty strategy".into()));
        }
        for (v, row) in probs.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidStrategy(format!("row for value {v} has the wrong length")));
            }
            if row.iter().any(|q| q.is_negative()) {
                return Err(Error::InvalidStrategy(format!("negative probability at value {v}")));
            }
            if row.iter().sum::<Q>() != Q::one() {
                return Err(Error::InvalidStrategy(format!("probabilities at value {v} do not sum to 1")));
            }
        }
        Ok(BehaviouralStrategy { probs })
    }

    /// Checks that the strategy has one row per value and one column per bid.
    pub fn check_shape(&self, spec: &AuctionSpec) -> Result<()> {
        if self.probs.len() != spec.num_values() || self.probs[0].len() != spec.bid_grid().len() {
            return Err(Error::InvalidStrategy(format!(
                "strategy is {}x{}, spec needs {}x{}",
                self.probs.len(),
                self.probs[0].len(),
                spec.num_values(),
                spec.bid_grid().len()
            )));
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.probs.len()
    }

    pub fn num_bids(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, value: usize, bid_index: usize) -> &Q {
        &self.probs[value][bid_index]
    }

    pub fn row(&self, value: usize) -> &[Q] {
        &self.probs[value]
    }

    /// Grid positions played with positive probability at `value`.
    pub fn support(&self, value: usize) -> impl Iterator<Item = usize> + '_ {
        self.probs[value].iter().enumerate().filter(|(_, q)| q.is_positive()).map(|(i, _)| i)
    }

    pub fn is_pure(&self) -> bool {
        (0..self.num_values()).all(|v| self.support(v).count() == 1)
    }

    /// Unconditional distribution of one opponent's bid (by grid position).
    pub fn bid_distribution(&self, spec: &AuctionSpec) -> Vec<Q> {
        let mut dist = vec![Q::zero(); self.num_bids()];
        for (row, w) in self.probs.iter().zip(spec.value_pmf()) {
            if w.is_zero() {
                continue;
            }
            for (d, q) in dist.iter_mut().zip(row) {
                if !q.is_zero() {
                    *d += w * q;
                }
            }
        }
        dist
    }

    pub fn expected_bid(&self, spec: &AuctionSpec, value: usize) -> Q {
        self.probs[value]
            .iter()
            .zip(spec.bid_grid())
            .map(|(q, &b)| q * rational::int(b as i64))
            .sum()
    }

    /// Verifies the three structural properties every symmetric equilibrium
    /// has: value 0 bids only 0, supports are ordered by value, and the bids
    /// in use form a consecutive run of grid positions.
    pub fn check_equilibrium_structure(&self) -> Result<()> {
        if self.support(0).any(|i| i != 0) {
            return Err(Error::NonRepresentable("value 0 bids above 0".into()));
        }
        let mut prev_max = 0;
        for v in 0..self.num_values() {
            let lo = self.support(v).next().unwrap();
            let hi = self.support(v).last().unwrap();
            if lo < prev_max {
                return Err(Error::NonRepresentable(format!("not monotone at value {v}")));
            }
            prev_max = prev_max.max(hi);
        }
        let mut used = vec![false; self.num_bids()];
        for v in 0..self.num_values() {
            for i in self.support(v) {
                used[i] = true;
            }
        }
        let top = used.iter().rposition(|&u| u).unwrap();
        if used[..=top].iter().any(|&u| !u) {
            return Err(Error::NonRepresentable("bids in use have a gap".into()));
        }
        Ok(())
    }

    /// Writes `value,bid,probability` rows for every positive probability.
    pub fn write_csv<W: Write>(&self, spec: &AuctionSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "bid", "probability"]).map_err(csv_err)?;
        for v in 0..self.num_values() {
            for i in self.support(v) {
                w.write_record([
                    v.to_string(),
                    spec.bid_grid()[i].to_string(),
                    rational::display(&self.probs[v][i]),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv); omitted
    /// (value, bid) pairs have probability zero.
    pub fn read_csv<R: Read>(spec: &AuctionSpec, input: R, source_name: &str) -> Result<Self> {
        let mut probs = vec![vec![Q::zero(); spec.bid_grid().len()]; spec.num_values()];
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["value", "bid", "probability"] {
            return Err(Error::Ingest {
                source_name: source_name.into(),
                line: 1,
                message: "expected header value,bid,probability".into(),
            });
        }
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let ingest = |message: String| Error::Ingest { source_name: source_name.into(), line, message };
            let value: usize = rec[0].trim().parse().map_err(|_| ingest(format!("bad value {:?}", &rec[0])))?;
            let bid: u32 = rec[1].trim().parse().map_err(|_| ingest(format!("bad bid {:?}", &rec[1])))?;
            let prob = rational::parse(&rec[2]).map_err(|e| ingest(e.to_string()))?;
            if value >= spec.num_values() {
                return Err(ingest(format!("value {value} outside 0..={}", spec.x())));
            }
            let i = spec.grid_index(bid).ok_or_else(|| ingest(format!("bid {bid} is not on the bid grid")))?;
            probs[value][i] += prob;
        }
        BehaviouralStrategy::new(probs)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// One bid per value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PureBidding {
    bids: Vec<u32>,
}

impl PureBidding {
    pub fn new(spec: &AuctionSpec, bids: Vec<u32>) -> Result<Self> {
        if bids.len() != spec.num_values() {
            return Err(Error::InvalidStrategy(format!(
                "pure bidding function has {} entries, expected {}",
                bids.len(),
                spec.num_values()
            )));
        }
        if let Some(&b) = bids.iter().find(|&&b| spec.grid_index(b).is_none()) {
            return Err(Error::InvalidBid(b));
        }
        Ok(PureBidding { bids })
    }

    pub(crate) fn from_bids_unchecked(bids: Vec<u32>) -> Self {
        PureBidding { bids }
    }

    pub fn bid(&self, value: usize) -> u32 {
        self.bids[value]
    }

    pub fn bids(&self) -> &[u32] {
        &self.bids
    }

    pub fn max_bid(&self) -> u32 {
        self.bids.iter().copied().max().unwrap_or(0)
    }

    pub fn to_strategy(&self, spec: &AuctionSpec) -> BehaviouralStrategy {
        let width = spec.bid_grid().len();
        let probs = self
            .bids
            .iter()
            .map(|&b| {
                let mut row = vec![Q::zero(); width];
                row[spec.grid_index(b).expect("bid on grid")] = Q::one();
                row
            })
            .collect();
        BehaviouralStrategy { probs }
    }

    /// Distribution of one opponent's bid under the spec's value distribution.
    pub fn bid_distribution(&self, spec: &AuctionSpec) -> Vec<Q> {
        let mut dist = vec![Q::zero(); spec.bid_grid().len()];
        for (&b, w) in self.bids.iter().zip(spec.value_pmf()) {
            dist[spec.grid_index(b).expect("bid on grid")] += w;
        }
        dist
    }
}

/// Increasing jumps `j_1 < j_2 < ... < j_m` (with implicit `j_0 = 0`).
///
/// `j_i = v_i + P(b < i | v_i)` where `v_i = floor(j_i)` is the lowest value
/// that bids grid position `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JumpVector {
    jumps: Vec<Q>,
}

impl JumpVector {
    /// Validates strict increase and `0 < j_i <= num_values`.
    pub fn new(jumps: Vec<Q>, num_values: usize) -> Result<Self> {
        let s = rational::int(num_values as i64);
        let mut prev = Q::zero();
        for (k, j) in jumps.iter().enumerate() {
            if *j <= prev {
                return Err(Error::InvalidJump(format!("jump {} is not above its predecessor", k + 1)));
            }
            if *j > s {
                return Err(Error::InvalidJump(format!("jump {} exceeds {}", k + 1, num_values)));
            }
            prev = j.clone();
        }
        Ok(JumpVector { jumps })
    }

    pub fn jumps(&self) -> &[Q] {
        &self.jumps
    }

    /// Highest grid position in use.
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }
}

fn clamp01(q: Q) -> Q {
    if q.is_negative() {
        Q::zero()
    } else if q > Q::one() {
        Q::one()
    } else {
        q
    }
}

/// Rebuilds the unique monotone, gapless strategy with `s(0) = {0}` that has
/// the given jumps. For every value, `P(b < i | v) = clamp(j_i - v, 0, 1)`.
pub fn jump_to_strategy(spec: &AuctionSpec, jumps: &JumpVector) -> Result<BehaviouralStrategy> {
    let width = spec.bid_grid().len();
    if jumps.len() >= width {
        return Err(Error::InvalidJump(format!(
            "{} jumps but the grid has only {} positive bids",
            jumps.len(),
            width - 1
        )));
    }
    if jumps.jumps.iter().any(|j| *j > rational::int(spec.num_values() as i64)) {
        return Err(Error::InvalidJump("jump beyond the number of values".into()));
    }
    if let Some(j1) = jumps.jumps.first() {
        if *j1 < Q::one() {
            return Err(Error::InvalidJump("first jump below 1 would make value 0 bid above 0".into()));
        }
    }
    let mut probs = Vec::with_capacity(spec.num_values());
    for v in 0..spec.num_values() {
        let v_q = rational::int(v as i64);
        let mut row = vec![Q::zero(); width];
        let mut below = Q::zero();
        for (i, slot) in row.iter_mut().enumerate().take(jumps.len() + 1) {
            let below_next = match jumps.jumps.get(i) {
                Some(j) => clamp01(j - &v_q),
                None => Q::one(),
            };
            *slot = &below_next - &below;
            below = below_next;
        }
        probs.push(row);
    }
    Ok(BehaviouralStrategy { probs })
}

/// Inverse of [`jump_to_strategy`].
pub fn strategy_to_jump(spec: &AuctionSpec, strategy: &BehaviouralStrategy) -> Result<JumpVector> {
    strategy.check_shape(spec)?;
    strategy.check_equilibrium_structure()?;
    let top = (0..strategy.num_values())
        .filter_map(|v| strategy.support(v).last())
        .max()
        .unwrap_or(0);
    let mut jumps = Vec::with_capacity(top);
    for i in 1..=top {
        let v_i = (0..strategy.num_values())
            .find(|&v| strategy.prob(v, i).is_positive())
            .expect("gapless support");
        let below: Q = strategy.row(v_i)[..i].iter().sum();
        jumps.push(rational::int(v_i as i64) + below);
    }
    let jumps = JumpVector::new(jumps, spec.num_values()).map_err(|e| Error::NonRepresentable(e.to_string()))?;
    if jump_to_strategy(spec, &jumps)? != *strategy {
        return Err(Error::NonRepresentable(
            "strategy mixes in a way no jump vector reproduces".into(),
        ));
    }
    Ok(jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, parse, ratio};

    fn example_one_spec() -> AuctionSpec {
        AuctionSpec::all_pay(2, 100).unwrap()
    }

    #[test]
    fn example_one_jumps_give_expected_mixing() {
        let spec = example_one_spec();
        let j = JumpVector::new(vec![parse("10.1").unwrap(), parse("16.4125").unwrap()], 101).unwrap();
        let s = jump_to_strategy(&spec, &j).unwrap();
        for v in 0..10 {
            assert_eq!(s.row(v)[0], Q::one());
        }
        assert_eq!(s.row(10)[0], ratio(1, 10));
        assert_eq!(s.row(10)[1], ratio(9, 10));
        for v in 11..=15 {
            assert_eq!(s.row(v)[1], Q::one());
        }
        assert_eq!(s.row(16)[1], parse("0.4125").unwrap());
        assert_eq!(s.row(16)[2], parse("0.5875").unwrap());
        assert_eq!(strategy_to_jump(&spec, &s).unwrap(), j);
    }

    #[test]
    fn integer_jumps_give_pure_strategy() {
        let spec = AuctionSpec::all_pay(2, 15).unwrap();
        let j = JumpVector::new(vec![int(5), int(9)], 16).unwrap();
        let s = jump_to_strategy(&spec, &j).unwrap();
        assert!(s.is_pure());
        assert_eq!(s.row(4)[0], Q::one());
        assert_eq!(s.row(5)[1], Q::one());
        assert_eq!(s.row(9)[2], Q::one());
    }

    #[test]
    fn everyone_bids_zero_has_no_jumps() {
        let spec = AuctionSpec::all_pay(2, 6).unwrap();
        let s = PureBidding::new(&spec, vec![0; 7]).unwrap().to_strategy(&spec);
        assert!(strategy_to_jump(&spec, &s).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_jumps_and_strategies() {
        assert!(JumpVector::new(vec![int(3), int(3)], 10).is_err());
        assert!(JumpVector::new(vec![int(11)], 10).is_err());
        let spec = AuctionSpec::all_pay(2, 5).unwrap();
        let low = JumpVector::new(vec![ratio(1, 2)], 6).unwrap();
        assert!(jump_to_strategy(&spec, &low).is_err());

        // non-monotone: value 1 bids 2, value 2 bids 1
        let s = PureBidding::new(&spec, vec![0, 2, 1, 2, 2, 2]).unwrap().to_strategy(&spec);
        assert!(matches!(strategy_to_jump(&spec, &s), Err(Error::NonRepresentable(_))));
        // gap: bids 0 and 2 only
        let s = PureBidding::new(&spec, vec![0, 0, 2, 2, 2, 2]).unwrap().to_strategy(&spec);
        assert!(matches!(strategy_to_jump(&spec, &s), Err(Error::NonRepresentable(_))));
        // value 0 bids 1
        let s = PureBidding::new(&spec, vec![1, 1, 1, 1, 1, 1]).unwrap().to_strategy(&spec);
        assert!(matches!(strategy_to_jump(&spec, &s), Err(Error::NonRepresentable(_))));
    }

    #[test]
    fn csv_round_trip() {
        let spec = example_one_spec();
        let j = JumpVector::new(vec![parse("10.1").unwrap(), parse("16.4125").unwrap()], 101).unwrap();
        let s = jump_to_strategy(&spec, &j).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&spec, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("value,bid,probability\n"));
        assert!(text.contains("10,1,9/10\n"));
        let back = BehaviouralStrategy::read_csv(&spec, buf.as_slice(), "mem").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let spec = AuctionSpec::all_pay(2, 3).unwrap();
        let data = "value,bid,probability\n0,0,1\n1,9,1\n";
        match BehaviouralStrategy::read_csv(&spec, data.as_bytes(), "s.csv") {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
