//! Symmetric equilibrium via the jump construction, an independent regret
//! check, and the continuous-value approximations.
//!
//! For each successive grid bid `b_i` the solver looks for the smallest jump
//! `j_i > j_{i-1}` at which the type `u = floor(j_i)` weakly prefers `b_i`
//! to `b_{i-1}`, given that opponents bid below `b_i` with probability
//! `G(j_i) = P(v < u) + pmf(u) (j_i - u)`. Within a unit interval the
//! condition reads `A W(j) >= B` with `W` increasing, so it is solved in
//! closed form when the root is rational and by exact bisection otherwise.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{FromPrimitive, One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::payoff::{beat_all, crra, WinTable};
use crate::rational::{self, Q};
use crate::spec::{AuctionSpec, Format};
use crate::strategy::{jump_to_strategy, BehaviouralStrategy, JumpVector};

const BISECTION_STEPS: u32 = 64;
const APPROX_REGRET_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EquilibriumResult {
    pub jumps: JumpVector,
    pub strategy: BehaviouralStrategy,
    pub verified: bool,
    pub max_regret: Q,
    /// False when some jump came from bisection or floating point (CRRA).
    pub exact: bool,
    /// False for first-price with `p = 1` and for coarse grids, where the
    /// uniqueness argument does not apply.
    pub uniqueness_guaranteed: bool,
}

impl EquilibriumResult {
    /// `P(b = i | v)` rows and jumps as JSON.
    pub fn summary(&self) -> EquilibriumSummary {
        EquilibriumSummary {
            jumps: self.jumps.jumps().iter().map(rational::display).collect(),
            jumps_decimal: self.jumps.jumps().iter().map(rational::to_f64).collect(),
            verified: self.verified,
            max_regret: rational::display(&self.max_regret),
            exact: self.exact,
            uniqueness_guaranteed: self.uniqueness_guaranteed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumSummary {
    pub jumps: Vec<String>,
    pub jumps_decimal: Vec<f64>,
    pub verified: bool,
    pub max_regret: String,
    pub exact: bool,
    pub uniqueness_guaranteed: bool,
}

/// Indifference condition `A W(j) - B` for one candidate type `u`.
enum Condition {
    Exact { a: Q, b: Q },
    Approx { a: f64, b: f64 },
}

impl Condition {
    fn sign(&self, w: &Q) -> Ordering {
        match self {
            Condition::Exact { a, b } => (a * w).cmp(b),
            Condition::Approx { a, b } => {
                let lhs = a * rational::to_f64(w);
                lhs.partial_cmp(b).unwrap_or(Ordering::Less)
            }
        }
    }

    fn a_positive(&self) -> bool {
        match self {
            Condition::Exact { a, .. } => a.is_positive(),
            Condition::Approx { a, .. } => *a > 0.0,
        }
    }
}

struct Solver<'a> {
    spec: &'a AuctionSpec,
    mass_below: Vec<Q>,
}

impl<'a> Solver<'a> {
    fn new(spec: &'a AuctionSpec) -> Self {
        let mut mass_below = Vec::with_capacity(spec.num_values() + 1);
        let mut acc = Q::zero();
        mass_below.push(acc.clone());
        for q in spec.value_pmf() {
            acc += q;
            mass_below.push(acc.clone());
        }
        Solver { spec, mass_below }
    }

    /// Probability an opponent bids below `b_i` when the i-th jump is `j`.
    fn below(&self, j: &Q) -> Q {
        let u = rational::floor_i64(j) as usize;
        if u >= self.spec.num_values() {
            return Q::one();
        }
        &self.mass_below[u] + &self.spec.value_pmf()[u] * (j - rational::int(u as i64))
    }

    fn win(&self, j: &Q) -> Q {
        beat_all(self.spec, &self.below(j))
    }

    fn condition(&self, u: u32, bid: u32, prev_bid: u32, w_prev: &Q) -> Option<Condition> {
        let uq = rational::int(u as i64);
        match self.spec.format() {
            Format::AllPay => Some(Condition::Exact {
                a: uq.clone(),
                b: uq * w_prev + rational::int((bid - prev_bid) as i64),
            }),
            Format::FirstPrice if self.spec.is_risk_neutral() => Some(Condition::Exact {
                a: &uq - rational::int(bid as i64),
                b: (uq - rational::int(prev_bid as i64)) * w_prev,
            }),
            Format::FirstPrice => {
                if u < bid {
                    return None;
                }
                let alpha = self.spec.alpha();
                Some(Condition::Approx {
                    a: crra((u - bid) as f64, alpha),
                    b: crra((u - prev_bid) as f64, alpha) * rational::to_f64(w_prev),
                })
            }
        }
    }

    /// Smallest admissible jump for grid position `i`, with a flag telling
    /// whether it is exact.
    fn next_jump(&self, i: usize, prev_j: &Q, w_prev: &Q) -> Result<Option<(Q, bool)>> {
        let grid = self.spec.bid_grid();
        let (bid, prev_bid) = (grid[i], grid[i - 1]);
        let u0 = rational::floor_i64(prev_j) as u32;
        for u in u0..=self.spec.x() {
            let Some(cond) = self.condition(u, bid, prev_bid, w_prev) else {
                continue;
            };
            let uq = rational::int(u as i64);
            let (left, left_open) = if u == u0 { (prev_j.clone(), true) } else { (uq.clone(), false) };
            let left_sign = cond.sign(&self.win(&left));
            if left_sign != Ordering::Less {
                if !left_open {
                    return Ok(Some((left, true)));
                }
                if left_sign == Ordering::Greater || cond.a_positive() {
                    return Err(Error::Numerical(format!(
                        "no smallest jump for bid {bid}: the condition already holds at the previous jump"
                    )));
                }
                continue;
            }
            if !cond.a_positive() {
                continue;
            }
            let right = &uq + Q::one();
            if cond.sign(&self.win(&right)) != Ordering::Greater {
                continue;
            }
            if let Condition::Exact { a, b } = &cond {
                if let Some(j) = self.exact_root(u, &(b / a)) {
                    return Ok(Some((j, true)));
                }
            }
            return Ok(Some((self.bisect(&cond, left, right), false)));
        }
        Ok(None)
    }

    /// Solves `W(j) = target` inside `[u, u + 1)` when the root is rational.
    fn exact_root(&self, u: u32, target: &Q) -> Option<Q> {
        let p = self.spec.p();
        let y = rational::exact_root(target, self.spec.n() - 1)?;
        let below = (y - (Q::one() - p)) / p;
        let pmf_u = &self.spec.value_pmf()[u as usize];
        Some(rational::int(u as i64) + (below - &self.mass_below[u as usize]) / pmf_u)
    }

    /// Exact-sign bisection; returns a point where the condition holds,
    /// snapped to a dyadic grid so denominators stay small.
    fn bisect(&self, cond: &Condition, mut lo: Q, mut hi: Q) -> Q {
        let two = rational::int(2);
        for _ in 0..BISECTION_STEPS {
            let mid = (&lo + &hi) / &two;
            if cond.sign(&self.win(&mid)) == Ordering::Less {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let scale = Q::from_integer(num_traits::pow(BigInt::from(2), BISECTION_STEPS as usize));
        let snapped = (&hi * &scale).ceil() / &scale;
        if snapped > lo && cond.sign(&self.win(&snapped)) != Ordering::Less && snapped.floor() == hi.floor() {
            snapped
        } else {
            hi
        }
    }
}

pub fn solve_equilibrium(spec: &AuctionSpec) -> Result<EquilibriumResult> {
    if spec.value_pmf().iter().any(|q| q.is_zero()) {
        return Err(Error::InvalidSpec(
            "the jump construction needs every value to have positive probability".into(),
        ));
    }
    let solver = Solver::new(spec);
    let mut jumps: Vec<Q> = Vec::new();
    let mut exact = spec.is_risk_neutral();
    let mut prev_j = Q::zero();
    let mut w_prev = solver.win(&prev_j);
    for i in 1..spec.bid_grid().len() {
        match solver.next_jump(i, &prev_j, &w_prev)? {
            Some((j, ex)) => {
                exact &= ex;
                w_prev = solver.win(&j);
                prev_j = j.clone();
                jumps.push(j);
            }
            None => break,
        }
    }
    let jumps = JumpVector::new(jumps, spec.num_values())?;
    let strategy = jump_to_strategy(spec, &jumps)?;
    strategy.check_equilibrium_structure()?;
    let max_regret = verify_equilibrium(spec, &strategy)?;
    let verified = if exact {
        max_regret.is_zero()
    } else {
        rational::to_f64(&max_regret) <= APPROX_REGRET_TOL * f64::from(spec.x().max(1))
    };
    let uniqueness_guaranteed =
        spec.is_unit_grid() && !(spec.format() == Format::FirstPrice && spec.p().is_one());
    Ok(EquilibriumResult { jumps, strategy, verified, max_regret, exact, uniqueness_guaranteed })
}

/// Largest payoff shortfall of any bid in the support of `strategy` against
/// the best bid on the grid, when every opponent plays `strategy`.
pub fn verify_equilibrium(spec: &AuctionSpec, strategy: &BehaviouralStrategy) -> Result<Q> {
    let table = WinTable::from_strategy(spec, strategy)?;
    let grid = spec.bid_grid();
    if !spec.is_risk_neutral() {
        return verify_crra(spec, strategy, &table);
    }
    let (w, d) = table.scaled();
    let mut worst = BigInt::zero();
    for v in 0..spec.num_values() {
        let vb = BigInt::from(v as u64);
        let scaled: Vec<BigInt> = grid
            .iter()
            .zip(&w)
            .map(|(&b, wi)| match spec.format() {
                Format::AllPay => &vb * wi - BigInt::from(b) * &d,
                Format::FirstPrice => (&vb - BigInt::from(b)) * wi,
            })
            .collect();
        let best = scaled.iter().max().expect("non-empty grid");
        for i in strategy.support(v) {
            let gap = best - &scaled[i];
            if gap > worst {
                worst = gap;
            }
        }
    }
    Ok(Q::new(worst, d))
}

fn verify_crra(spec: &AuctionSpec, strategy: &BehaviouralStrategy, table: &WinTable) -> Result<Q> {
    let w = table.to_f64();
    let grid = spec.bid_grid();
    let mut worst = 0.0f64;
    for v in 0..spec.num_values() {
        let pay = |i: usize| crra(v as f64 - grid[i] as f64, spec.alpha()) * w[i];
        let best = (0..grid.len()).filter(|&i| grid[i] as usize <= v).map(pay).fold(f64::MIN, f64::max);
        for i in strategy.support(v) {
            if grid[i] as usize > v {
                return Err(Error::Domain(format!("value {v} bids {} above its value", grid[i])));
            }
            worst = worst.max(best - pay(i));
        }
    }
    Q::from_f64(worst).ok_or_else(|| Error::Numerical("non-finite regret".into()))
}

/// Equilibrium bid of the continuous-value model with values uniform on
/// `[0, x]`.
pub fn continuous_equilibrium(spec: &AuctionSpec, v: f64) -> Result<f64> {
    if !spec.is_uniform() {
        return Err(Error::InvalidSpec("the continuous approximation assumes uniform values".into()));
    }
    continuous_bid(spec.format(), spec.n(), f64::from(spec.x()), rational::to_f64(spec.p()), v)
}

/// `((n-1)/n) v^n / x^(n-1)` for all-pay; for first-price with survival
/// probability `p`,
/// `((n-1)/n) v - x(1-p)/(np) [1 - ((1-p)/(1-p+p v/x))^(n-1)]`.
pub fn continuous_bid(format: Format, n: u32, x: f64, p: f64, v: f64) -> Result<f64> {
    if !(0.0..=x).contains(&v) {
        return Err(Error::InvalidValue(v as u32));
    }
    let nf = f64::from(n);
    match format {
        Format::AllPay => Ok((nf - 1.0) / nf * v.powi(n as i32) / x.powi(n as i32 - 1)),
        Format::FirstPrice => {
            if p <= 0.0 {
                return Err(Error::Domain("p = 0 is a limit case where every bid tends to 0".into()));
            }
            if p > 1.0 {
                return Err(Error::Parameter(format!("p = {p} exceeds 1")));
            }
            let q = 1.0 - p;
            let ratio = q / (q + p * v / x);
            Ok((nf - 1.0) / nf * v - x * q / (nf * p) * (1.0 - ratio.powi(n as i32 - 1)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, parse, ratio};
    use crate::strategy::PureBidding;

    #[test]
    fn example_one_jumps() {
        let spec = AuctionSpec::all_pay(2, 100).unwrap();
        let eq = solve_equilibrium(&spec).unwrap();
        assert_eq!(eq.jumps.jumps()[0], parse("10.1").unwrap());
        assert_eq!(eq.jumps.jumps()[1], parse("16.4125").unwrap());
        assert_eq!(eq.jumps.jumps()[2], ratio(35653, 1680));
        assert!(eq.verified && eq.exact && eq.uniqueness_guaranteed);
    }

    #[test]
    fn example_one_variants() {
        for x in [99, 98] {
            let eq = solve_equilibrium(&AuctionSpec::all_pay(2, x).unwrap()).unwrap();
            assert_eq!(eq.jumps.jumps()[0], int(10));
        }
    }

    #[test]
    fn example_two_first_jump() {
        let spec = AuctionSpec::first_price(2, 100, ratio(1, 2)).unwrap();
        let eq = solve_equilibrium(&spec).unwrap();
        assert_eq!(eq.jumps.jumps()[0], int(11));
        assert_eq!(eq.jumps.jumps()[1], int(18));
        assert!(eq.verified);
    }

    #[test]
    fn three_bidders_use_bisection_and_still_verify() {
        let spec = AuctionSpec::all_pay(3, 20).unwrap();
        let eq = solve_equilibrium(&spec).unwrap();
        assert!(eq.verified);
        let spec = AuctionSpec::first_price(3, 20, ratio(1, 3)).unwrap();
        let eq = solve_equilibrium(&spec).unwrap();
        assert!(eq.verified);
    }

    #[test]
    fn zero_bidding_is_not_an_equilibrium() {
        let spec = AuctionSpec::all_pay(2, 15).unwrap();
        let zeros = PureBidding::new(&spec, vec![0; 16]).unwrap().to_strategy(&spec);
        assert!(verify_equilibrium(&spec, &zeros).unwrap().is_positive());
        let tiny = AuctionSpec::all_pay(2, 0).unwrap();
        let only = PureBidding::new(&tiny, vec![0]).unwrap().to_strategy(&tiny);
        assert!(verify_equilibrium(&tiny, &only).unwrap().is_zero());
    }

    #[test]
    fn non_full_support_is_rejected() {
        let spec = AuctionSpec::all_pay(2, 2)
            .unwrap()
            .with_value_pmf(vec![ratio(1, 2), Q::zero(), ratio(1, 2)])
            .unwrap();
        assert!(matches!(solve_equilibrium(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn continuous_formulas() {
        let b = continuous_bid(Format::AllPay, 3, 15.0, 1.0, 15.0).unwrap();
        assert!((b - 10.0).abs() < 1e-12);
        let b = continuous_bid(Format::FirstPrice, 2, 100.0, 1.0, 100.0).unwrap();
        assert!((b - 50.0).abs() < 1e-12);
        assert_eq!(continuous_bid(Format::AllPay, 2, 10.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(continuous_bid(Format::FirstPrice, 2, 10.0, 0.0, 5.0).is_err());
        let lo = continuous_bid(Format::FirstPrice, 3, 100.0, 0.3, 60.0).unwrap();
        let hi = continuous_bid(Format::FirstPrice, 3, 100.0, 0.6, 60.0).unwrap();
        assert!(hi > lo);
    }
}
