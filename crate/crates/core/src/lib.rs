//! Equilibrium and level-k analysis of discrete all-pay and first-price
//! auctions with bid cancellation, plus the structural mixture model used
//! to take both theories to bid data.

pub mod design;
pub mod equilibrium;
pub mod estimation;
pub mod levelk;
pub mod oracle;
pub mod error;
pub mod payoff;
pub mod rational;
pub mod spec;
pub mod strategy;

pub use error::{Error, Result};
pub use rational::Q;
pub use spec::{AuctionSpec, Format};
