//! Structural estimation: a finite mixture of behavioural types, each
//! bidding around its predicted bid with Gaussian-kernel noise.

pub mod analysis;
pub mod data;
pub mod fit;
pub mod model;
pub mod simulate;

pub use analysis::{assign_levels, correlate, crra_from_bret, prediction_rmse, ChoiceLevelMap, Correlation, LevelAssignment, Predictor};
pub use data::{BidDataset, BidRecord, Grouping};
pub use fit::{bic, fit_mixture, fit_mixture_from, jackknife_se, likelihood, FitConfig, MixtureFit, MixtureParams, StandardErrors};
pub use model::{choice_prob, BehaviouralType, TypeSet};
pub use simulate::{simulate_dataset, SimulationConfig};
