//! Behavioural types and the Gaussian-kernel choice model.
//!
//! A type with predicted bid `b_p` chooses grid bid `b` with probability
//! proportional to `exp(-(b - b_p)^2 / (2 sigma^2))`, normalised over the
//! whole grid. Everything is computed in the log domain so very small
//! `sigma` degenerates cleanly to a point mass.

use serde::Serialize;

use crate::equilibrium::solve_equilibrium;
use crate::error::{Error, Result};
use crate::levelk::{iterate_levels, Level0Spec, Tiebreak};
use crate::rational;
use crate::spec::AuctionSpec;

/// Noise parameters are kept inside `[SIGMA_MIN, SIGMA_MAX]` when fitted.
pub const SIGMA_MIN: f64 = 0.1;
pub const SIGMA_MAX: f64 = 1e4;

/// A named bidding rule: predicted bid for every value `0..=x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BehaviouralType {
    pub name: String,
    pub prediction: Vec<f64>,
}

/// Ordered list of candidate types.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeSet {
    types: Vec<BehaviouralType>,
}

impl TypeSet {
    pub fn new(types: Vec<BehaviouralType>) -> Result<Self> {
        if types.is_empty() {
            return Err(Error::Parameter("a type set needs at least one type".into()));
        }
        let width = types[0].prediction.len();
        if types.iter().any(|t| t.prediction.len() != width) {
            return Err(Error::Parameter("types predict different value ranges".into()));
        }
        Ok(TypeSet { types })
    }

    /// Builds types from names: `eq` is the expected equilibrium bid, `lK`
    /// is level `K` under the given anchor and tie-break.
    pub fn from_names<S: AsRef<str>>(spec: &AuctionSpec, names: &[S], l0: &Level0Spec, tiebreak: Tiebreak) -> Result<Self> {
        let mut max_level = 0;
        let mut parsed = Vec::new();
        for name in names {
            let name = name.as_ref().trim().to_ascii_lowercase();
            let kind = if name == "eq" || name == "equilibrium" {
                None
            } else {
                let digits = name.strip_prefix("level").or_else(|| name.strip_prefix('l'));
                let k: u32 = digits
                    .and_then(|d| d.parse().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Parameter(format!("unknown type {name:?}; use eq or l1, l2, ...")))?;
                max_level = max_level.max(k);
                Some(k)
            };
            parsed.push((name, kind));
        }
        let levels = if max_level > 0 { Some(iterate_levels(spec, l0, max_level, tiebreak)?) } else { None };
        let eq = if parsed.iter().any(|(_, k)| k.is_none()) {
            let eq = solve_equilibrium(spec)?;
            Some((0..spec.num_values()).map(|v| rational::to_f64(&eq.strategy.expected_bid(spec, v))).collect::<Vec<_>>())
        } else {
            None
        };
        let types = parsed
            .into_iter()
            .map(|(name, kind)| {
                let prediction = match kind {
                    None => eq.clone().expect("solved"),
                    Some(k) => levels.as_ref().expect("iterated").level(k).bids().iter().map(|&b| f64::from(b)).collect(),
                };
                BehaviouralType { name, prediction }
            })
            .collect();
        TypeSet::new(types)
    }

    pub fn types(&self) -> &[BehaviouralType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.types.iter().map(|t| t.name.clone()).collect()
    }

    pub fn num_values(&self) -> usize {
        self.types[0].prediction.len()
    }
}

/// `log sum exp`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log choice probabilities over the grid for predicted bid `pred`, with
/// precision `theta = 1 / sigma^2`.
pub fn log_choice_probs(pred: f64, theta: f64, grid: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = grid.iter().map(|b| -0.5 * theta * (b - pred).powi(2)).collect();
    let z = log_sum_exp(&logits);
    logits.into_iter().map(|l| l - z).collect()
}

/// `log Z(theta)` for the kernel around `pred`.
pub fn log_normaliser(pred: f64, theta: f64, grid: &[f64]) -> f64 {
    let dmin = grid.iter().map(|b| (b - pred).powi(2)).fold(f64::INFINITY, f64::min);
    let s: f64 = grid.iter().map(|b| (-0.5 * theta * ((b - pred).powi(2) - dmin)).exp()).sum();
    -0.5 * theta * dmin + s.ln()
}

/// Mean and variance of `(B - pred)^2` when `B` follows the kernel.
fn sq_dev_moments(pred: f64, theta: f64, grid: &[f64]) -> (f64, f64) {
    let dmin = grid.iter().map(|b| (b - pred).powi(2)).fold(f64::INFINITY, f64::min);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for b in grid {
        let d2 = (b - pred).powi(2);
        let w = (-0.5 * theta * (d2 - dmin)).exp();
        s0 += w;
        s1 += w * d2;
        s2 += w * d2 * d2;
    }
    let mean = s1 / s0;
    (mean, (s2 / s0 - mean * mean).max(0.0))
}

/// Probability that a type predicting `pred` bids `b` at noise `sigma`.
pub fn choice_prob(b: u32, v: u32, ty: &BehaviouralType, sigma: f64, grid: &[u32]) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let i = grid.iter().position(|&g| g == b).ok_or(Error::InvalidBid(b))?;
    let pred = *ty.prediction.get(v as usize).ok_or(Error::InvalidValue(v))?;
    let grid_f: Vec<f64> = grid.iter().map(|&g| f64::from(g)).collect();
    Ok(log_choice_probs(pred, 1.0 / (sigma * sigma), &grid_f)[i].exp())
}

/// Weighted one-dimensional noise problem: maximise over `theta`
/// `sum_r w_r log P(b_r | pred_r, theta)`, summarised as the total weighted
/// squared deviation `s2` and the weight on each predicted bid.
#[derive(Clone, Debug, Default)]
pub(crate) struct SigmaProblem {
    pub terms: Vec<(f64, f64)>,
    pub s2: f64,
}

impl SigmaProblem {
    pub fn objective(&self, theta: f64, grid: &[f64]) -> f64 {
        -0.5 * theta * self.s2 - self.terms.iter().map(|&(p, w)| w * log_normaliser(p, theta, grid)).sum::<f64>()
    }

    /// Derivative of the objective in `ln theta`, and its own derivative.
    fn slope(&self, theta: f64, grid: &[f64]) -> (f64, f64) {
        let (mut m, mut v) = (0.0, 0.0);
        for &(p, w) in &self.terms {
            if w == 0.0 {
                continue;
            }
            let (mean, var) = sq_dev_moments(p, theta, grid);
            m += w * mean;
            v += w * var;
        }
        // d/dtheta = (m - s2)/2 ; d2/dtheta2 = -v/4
        let g = 0.5 * theta * (m - self.s2);
        let dg = g - 0.25 * theta * theta * v;
        (g, dg)
    }

    /// Maximising `sigma` within the allowed range (the objective is concave
    /// in `theta`), starting the safeguarded Newton search at `start`.
    pub fn solve(&self, grid: &[f64], start: f64) -> f64 {
        let total: f64 = self.terms.iter().map(|t| t.1).sum();
        if total <= 0.0 {
            return start.clamp(SIGMA_MIN, SIGMA_MAX);
        }
        let mut lo = (1.0 / (SIGMA_MAX * SIGMA_MAX)).ln();
        let mut hi = (1.0 / (SIGMA_MIN * SIGMA_MIN)).ln();
        // concave in ln theta: a non-negative slope at the top end pins sigma
        // to its floor, a non-positive one at the bottom end to its ceiling
        if self.slope(hi.exp(), grid).0 >= 0.0 {
            return SIGMA_MIN;
        }
        if self.slope(lo.exp(), grid).0 <= 0.0 {
            return SIGMA_MAX;
        }
        let mut t = (1.0 / (start * start)).ln().clamp(lo, hi);
        for _ in 0..200 {
            let (g, dg) = self.slope(t.exp(), grid);
            if g > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if g.abs() <= 1e-12 * total.max(1.0) || hi - lo < 1e-12 {
                break;
            }
            let newton = if dg < 0.0 { t - g / dg } else { f64::NAN };
            let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - t).abs() < 1e-13 {
                t = next;
                break;
            }
            t = next;
        }
        (-0.5 * t).exp().clamp(SIGMA_MIN, SIGMA_MAX)
    }
}
