//! Auction game description and its JSON form.

use std::fmt;
use std::path::Path;

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    AllPay,
    FirstPrice,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::AllPay => "all_pay",
            Format::FirstPrice => "first_price",
        })
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_pay" | "all-pay" | "ap" => Ok(Format::AllPay),
            "first_price" | "first-price" | "fp" => Ok(Format::FirstPrice),
            other => Err(Error::InvalidSpec(format!("unknown auction format {other:?}"))),
        }
    }
}

/// One symmetric independent-private-values auction.
///
/// Values range over `0..=x` with probabilities `value_pmf`; bids are
/// restricted to `bid_grid`, which always contains 0. Each submitted bid
/// survives with probability `p` (first-price only; all-pay uses `p = 1`),
/// and a bid wins only if it is strictly above every surviving opponent bid.
#[derive(Clone, Debug, PartialEq)]
pub struct AuctionSpec {
    format: Format,
    n: u32,
    x: u32,
    value_pmf: Vec<Q>,
    bid_grid: Vec<u32>,
    p: Q,
    alpha: f64,
}

impl AuctionSpec {
    /// Uniform values, integer bids, no cancellation, risk neutral.
    pub fn new(format: Format, n: u32, x: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 bidders, got {n}")));
        }
        let s = x as i64 + 1;
        let spec = AuctionSpec {
            format,
            n,
            x,
            value_pmf: vec![rational::ratio(1, s); s as usize],
            bid_grid: (0..=x).collect(),
            p: Q::one(),
            alpha: 1.0,
        };
        Ok(spec)
    }

    pub fn all_pay(n: u32, x: u32) -> Result<Self> {
        Self::new(Format::AllPay, n, x)
    }

    pub fn first_price(n: u32, x: u32, p: Q) -> Result<Self> {
        Self::new(Format::FirstPrice, n, x)?.with_p(p)
    }

    pub fn with_p(mut self, p: Q) -> Result<Self> {
        if !p.is_positive() || p > Q::one() {
            return Err(Error::InvalidSpec(format!(
                "pass-through probability must lie in (0, 1], got {}",
                rational::display(&p)
            )));
        }
        if self.format == Format::AllPay && !p.is_one() {
            return Err(Error::InvalidSpec("all-pay auctions have no bid cancellation (p = 1)".into()));
        }
        self.p = p;
        Ok(self)
    }

    /// Multiples of `step` from 0 up to `x`.
    pub fn with_bid_step(self, step: u32) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidSpec("bid step must be positive".into()));
        }
        let grid = (0..=self.x).step_by(step as usize).collect();
        self.with_grid(grid)
    }

    pub fn with_grid(mut self, grid: Vec<u32>) -> Result<Self> {
        if grid.first() != Some(&0) {
            return Err(Error::InvalidSpec("bid grid must start at 0".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("bid grid must be strictly increasing".into()));
        }
        if *grid.last().unwrap() > self.x {
            return Err(Error::InvalidSpec(format!("bid grid exceeds the maximum value {}", self.x)));
        }
        self.bid_grid = grid;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidSpec(format!("CRRA exponent must be positive, got {alpha}")));
        }
        if self.format == Format::AllPay && alpha != 1.0 {
            return Err(Error::UnsupportedUtility(
                "all-pay auctions are modelled with risk-neutral bidders only".into(),
            ));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_value_pmf(mut self, pmf: Vec<Q>) -> Result<Self> {
        if pmf.len() != self.x as usize + 1 {
            return Err(Error::InvalidSpec(format!(
                "value pmf has {} entries, expected {}",
                pmf.len(),
                self.x + 1
            )));
        }
        if pmf.iter().any(|q| q.is_negative()) {
            return Err(Error::InvalidSpec("value pmf has a negative entry".into()));
        }
        if pmf.iter().sum::<Q>() != Q::one() {
            return Err(Error::InvalidSpec("value pmf does not sum to 1".into()));
        }
        self.value_pmf = pmf;
        Ok(self)
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn x(&self) -> u32 {
        self.x
    }

    /// Number of possible valuations, `x + 1`.
    pub fn num_values(&self) -> usize {
        self.x as usize + 1
    }

    pub fn value_pmf(&self) -> &[Q] {
        &self.value_pmf
    }

    pub fn bid_grid(&self) -> &[u32] {
        &self.bid_grid
    }

    pub fn p(&self) -> &Q {
        &self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_risk_neutral(&self) -> bool {
        self.alpha == 1.0
    }

    pub fn grid_index(&self, bid: u32) -> Option<usize> {
        self.bid_grid.binary_search(&bid).ok()
    }

    pub fn is_uniform(&self) -> bool {
        self.value_pmf.windows(2).all(|w| w[0] == w[1])
    }

    pub fn is_unit_grid(&self) -> bool {
        self.bid_grid.len() == self.num_values()
    }

    /// `P(v < u)` under the value distribution.
    pub fn value_mass_below(&self, u: usize) -> Q {
        self.value_pmf[..u.min(self.value_pmf.len())].iter().sum()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(s)?;
        file.into_spec()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Fully resolved JSON form: explicit grid and pmf, rationals as strings.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": self.format,
            "n": self.n,
            "x": self.x,
            "p": rational::display(&self.p),
            "grid": self.bid_grid,
            "alpha": self.alpha,
            "value_pmf": self.value_pmf.iter().map(rational::display).collect::<Vec<_>>(),
        })
    }
}

/// A number written either as a JSON number or as a string such as `"1/2"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    pub fn to_rational(&self) -> Result<Q> {
        match self {
            Number::Float(f) => rational::from_f64_decimal(*f),
            Number::Text(s) => rational::parse(s),
        }
    }
}

/// On-disk spec schema.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub format: Format,
    pub n: u32,
    pub x: u32,
    #[serde(default)]
    pub p: Option<Number>,
    #[serde(default)]
    pub bid_step: Option<u32>,
    #[serde(default)]
    pub grid: Option<Vec<u32>>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub value_pmf: Option<Vec<Number>>,
}

impl SpecFile {
    pub fn into_spec(self) -> Result<AuctionSpec> {
        let mut spec = AuctionSpec::new(self.format, self.n, self.x)?;
        if let Some(p) = self.p {
            spec = spec.with_p(p.to_rational()?)?;
        }
        match (self.bid_step, self.grid) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidSpec("give either bid_step or grid, not both".into()))
            }
            (Some(step), None) => spec = spec.with_bid_step(step)?,
            (None, Some(grid)) => spec = spec.with_grid(grid)?,
            (None, None) => {}
        }
        if let Some(alpha) = self.alpha {
            spec = spec.with_alpha(alpha)?;
        }
        if let Some(pmf) = self.value_pmf {
            let pmf = pmf.iter().map(Number::to_rational).collect::<Result<Vec<_>>>()?;
            spec = spec.with_value_pmf(pmf)?;
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use num_traits::Zero;

    #[test]
    fn json_round_trip_of_experiment_spec() {
        let spec = AuctionSpec::from_json_str(
            r#"{"format":"first_price","n":2,"x":100,"p":"1/2","bid_step":5}"#,
        )
        .unwrap();
        assert_eq!(spec.p(), &ratio(1, 2));
        assert_eq!(spec.bid_grid().len(), 21);
        let again = AuctionSpec::from_json_str(&spec.to_json().to_string()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn float_probability_is_read_as_decimal() {
        let spec = AuctionSpec::from_json_str(r#"{"format":"first_price","n":3,"x":10,"p":0.343}"#).unwrap();
        assert_eq!(spec.p(), &ratio(343, 1000));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(AuctionSpec::new(Format::AllPay, 1, 10).is_err());
        assert!(AuctionSpec::all_pay(2, 10).unwrap().with_p(ratio(1, 2)).is_err());
        assert!(matches!(
            AuctionSpec::all_pay(2, 10).unwrap().with_alpha(0.5),
            Err(Error::UnsupportedUtility(_))
        ));
        assert!(AuctionSpec::all_pay(2, 10).unwrap().with_grid(vec![1, 2]).is_err());
        assert!(AuctionSpec::all_pay(2, 10).unwrap().with_grid(vec![0, 3, 3]).is_err());
        assert!(AuctionSpec::all_pay(2, 10).unwrap().with_grid(vec![0, 11]).is_err());
        assert!(AuctionSpec::first_price(2, 10, Q::zero()).is_err());
        assert!(AuctionSpec::all_pay(2, 2)
            .unwrap()
            .with_value_pmf(vec![ratio(1, 2), ratio(1, 2), ratio(1, 2)])
            .is_err());
        assert!(AuctionSpec::from_json_str(r#"{"format":"all_pay","n":2,"x":5,"bid_step":1,"grid":[0,1]}"#).is_err());
        assert!(AuctionSpec::from_json_str(r#"{"format":"all_pay","n":2,"x":5,"extra":1}"#).is_err());
    }
}
