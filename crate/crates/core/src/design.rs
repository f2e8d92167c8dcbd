//! Choosing the survival probability `p` that best separates equilibrium
//! from level-1 bidding in the first-price auction.
//!
//! Both bidding functions are taken from the continuous uniform-value
//! model, so the area `d(p)` between them is `x^2` times a function of
//! `(n, p)` alone and the maximiser does not depend on `x`.

use serde::Serialize;

use crate::equilibrium::continuous_bid;
use crate::error::{Error, Result};
use crate::spec::Format;

const SCAN_LO: f64 = 0.01;
const SCAN_HI: f64 = 0.99;
const SCAN_POINTS: usize = 400;
const ROOT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct Candidate {
    pub p: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeparationResult {
    pub p_star: f64,
    pub distance_at_p_star: f64,
    /// Roots of the first-order condition with their distances.
    pub roots: Vec<Candidate>,
}

fn check(n: u32, x: f64, p: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 bidders, got {n}")));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Parameter(format!("x must be positive, got {x}")));
    }
    if p <= 0.0 {
        return Err(Error::Domain("p = 0 is a limit case where every bid tends to 0".into()));
    }
    if p > 1.0 || p.is_nan() {
        return Err(Error::Parameter(format!("p = {p} is outside (0, 1]")));
    }
    Ok(())
}

/// Continuous level-1 bid against uniformly random opponents:
/// `max(((n-1)/n) v - ((1-p)/p) x/n, 0)`.
pub fn continuous_level1(n: u32, x: f64, p: f64, v: f64) -> Result<f64> {
    check(n, x, p)?;
    let nf = f64::from(n);
    Ok(((nf - 1.0) / nf * v - (1.0 - p) / p * x / nf).max(0.0))
}

/// `(1/x^2) * integral of the equilibrium bid over [0, x]`.
fn eq_area(n: u32, p: f64) -> f64 {
    let nf = f64::from(n);
    let q = 1.0 - p;
    if n == 2 {
        let log_term = if q == 0.0 { 0.0 } else { q * q * q.ln() / (2.0 * p * p) };
        0.75 - 1.0 / (2.0 * p) - log_term
    } else {
        (nf - 1.0) / (2.0 * nf) - q / (nf * p) + (q * q - q.powi(n as i32)) / (nf * (nf - 2.0) * p * p)
    }
}

fn eq_area_derivative(n: u32, p: f64) -> f64 {
    let nf = f64::from(n);
    let q = 1.0 - p;
    if n == 2 {
        let log_term = if q == 0.0 { 0.0 } else { 2.0 * q * q.ln() };
        (p * (1.0 + q) + log_term) / (2.0 * p.powi(3))
    } else {
        let top = p * (nf * q.powi(n as i32 - 1) - 2.0 * q) - 2.0 * (q * q - q.powi(n as i32));
        1.0 / (nf * p * p) + top / (nf * (nf - 2.0) * p.powi(3))
    }
}

/// `(1/x^2) * integral of the level-1 bid over [0, x]`.
fn level1_area(n: u32, p: f64) -> f64 {
    let nf = f64::from(n);
    if p * nf <= 1.0 {
        return 0.0;
    }
    (nf * p - 1.0).powi(2) / (2.0 * (nf - 1.0) * nf * p * p)
}

fn level1_area_derivative(n: u32, p: f64) -> f64 {
    let nf = f64::from(n);
    if p * nf <= 1.0 {
        return 0.0;
    }
    (nf * p - 1.0) / ((nf - 1.0) * nf * p.powi(3))
}

/// Area between the equilibrium and level-1 bidding curves. The
/// equilibrium curve lies above the level-1 curve, so the area is the
/// difference of the two integrals.
pub fn distance(n: u32, x: f64, p: f64) -> Result<f64> {
    check(n, x, p)?;
    Ok(x * x * (eq_area(n, p) - level1_area(n, p)))
}

/// `d'(p)`.
pub fn distance_derivative(n: u32, x: f64, p: f64) -> Result<f64> {
    check(n, x, p)?;
    Ok(x * x * (eq_area_derivative(n, p) - level1_area_derivative(n, p)))
}

/// `d(p)` by adaptive Simpson quadrature of `|beta(v) - beta1(v)|`, split at
/// the level-1 kink.
pub fn distance_by_quadrature(n: u32, x: f64, p: f64, tol: f64) -> Result<f64> {
    check(n, x, p)?;
    let gap = |v: f64| -> f64 {
        let eq = continuous_bid(Format::FirstPrice, n, x, p, v.clamp(0.0, x)).unwrap_or(f64::NAN);
        let l1 = continuous_level1(n, x, p, v).unwrap_or(f64::NAN);
        (eq - l1).abs()
    };
    let kink = ((1.0 - p) * x / (p * (f64::from(n) - 1.0))).clamp(0.0, x);
    let scaled_tol = tol * x * x;
    Ok(adaptive_simpson(&gap, 0.0, kink, scaled_tol / 2.0) + adaptive_simpson(&gap, kink, x, scaled_tol / 2.0))
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Maximises `d(p)`: brackets sign changes of `d'` on a log-spaced grid over
/// `[0.01, 0.99]`, bisects each to `1e-10`, and compares `d` at the roots and
/// the two scan endpoints.
pub fn optimize_p(n: u32, x: f64) -> Result<SeparationResult> {
    check(n, x, 0.5)?;
    let ratio = (SCAN_HI / SCAN_LO).ln();
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| SCAN_LO * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let foc = |p: f64| eq_area_derivative(n, p) - level1_area_derivative(n, p);
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (foc(lo), foc(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if foc(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    if roots.is_empty() {
        return Err(Error::Numerical(format!("no first-order root in (0.01, 0.99) for n = {n}")));
    }
    let roots: Vec<Candidate> = roots
        .into_iter()
        .map(|p| Ok(Candidate { p, distance: distance(n, x, p)? }))
        .collect::<Result<_>>()?;
    let mut best = roots
        .iter()
        .cloned()
        .max_by(|a, b| a.distance.total_cmp(&b.distance))
        .expect("non-empty");
    for p in [SCAN_LO, SCAN_HI] {
        let d = distance(n, x, p)?;
        if d > best.distance {
            best = Candidate { p, distance: d };
        }
    }
    Ok(SeparationResult { p_star: best.p, distance_at_p_star: best.distance, roots })
}
