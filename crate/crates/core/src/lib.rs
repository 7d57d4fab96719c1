//! Deterministic federated-learning simulator with trust-aware aggregation.
//!
//! Each round every client trains a small MLP locally, the harness measures
//! the updated model on the client's clean validation split, and the four
//! resulting metrics are ranked with TOPSIS. Raw closeness scores are EMA
//! smoothed (static or variance-adaptive coefficient), clients under the
//! trust threshold are omitted (at most `m` per round) and readmitted after
//! two consecutive rounds back above it, and FedAvg runs over the rest.
//!
//! ## Modules
//!
//! - [`metrics`] - confusion matrix and macro metrics (the TOPSIS criteria)
//! - [`topsis`] - raw trust scores from the per-round decision matrix
//! - [`smoothing`] - static and adaptive EMA over trust scores
//! - [`participation`] - omission / readmission state machine
//! - [`model`] - MLP, backprop and Adam
//! - [`dataset`] - synthetic spectral data, features, SMOTE, partitioning
//! - [`federation`] - the round engine and experiment driver
//! - [`config`] - experiment configuration
//! - [`output`] - CSV logs, JSON report and comparison summary
//! - [`plot`] - SVG line charts

pub mod config;
pub mod dataset;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod output;
pub mod participation;
pub mod plot;
pub mod rng;
pub mod smoothing;
pub mod topsis;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use federation::{run_experiment, Engine, ExperimentOutput, RoundLog, Strategy, StrategyKind};
pub use metrics::{ConfusionMatrix, MetricVector};
pub use smoothing::{SmootherState, SmoothingMode};
pub use topsis::{CriteriaWeights, DecisionMatrix, TrustScores};

/// Stable client identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for ClientId {
    fn from(id: u32) -> Self {
        ClientId(id)
    }
}
