//! EMA smoothing of raw trust scores.
//!
//! `Static` keeps one coefficient for the whole run. `Adaptive` halves the
//! coefficient when the cross-client variance of raw scores exceeds
//! `variance_threshold` (more smoothing) and otherwise raises it by 0.05
//! towards `alpha_cap` (faster reaction). A single global coefficient is
//! updated once per round, before the per-client EMA step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topsis::TrustScores;
use crate::ClientId;

pub const STATIC_ALPHA: f64 = 0.3;
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_ALPHA_FLOOR: f64 = 0.05;
pub const ALPHA_STEP: f64 = 0.05;
pub const INITIAL_TRUST: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    Static,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmootherState {
    pub alpha: f64,
    pub mode: SmoothingMode,
    pub variance_threshold: f64,
    pub alpha_floor: f64,
    pub alpha_cap: f64,
}

impl SmootherState {
    pub fn fixed(alpha: f64) -> Self {
        Self {
            alpha,
            mode: SmoothingMode::Static,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            alpha_floor: DEFAULT_ALPHA_FLOOR.min(alpha),
            alpha_cap: 1.0,
        }
    }

    pub fn adaptive(alpha: f64, variance_threshold: f64, alpha_floor: f64) -> Self {
        Self {
            alpha: alpha.clamp(alpha_floor, 1.0),
            mode: SmoothingMode::Adaptive,
            variance_threshold,
            alpha_floor,
            alpha_cap: 1.0,
        }
    }
}

impl Default for SmootherState {
    fn default() -> Self {
        Self::adaptive(STATIC_ALPHA, DEFAULT_VARIANCE_THRESHOLD, DEFAULT_ALPHA_FLOOR)
    }
}

/// Population variance of this round's raw scores.
pub fn trust_variance(scores: &TrustScores) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("trust scores"));
    }
    Ok(population_variance(scores.values()))
}

/// Two-pass variance on values shifted by the first one, so identical
/// inputs give exactly 0.
fn population_variance(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let Some(&first) = values.first() else {
        return 0.0;
    };
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v - first).sum::<f64>() / n;
    values.iter().map(|v| (v - first - mean).powi(2)).sum::<f64>() / n
}

pub fn adapt_alpha(state: &SmootherState, sigma2: f64) -> SmootherState {
    if state.mode == SmoothingMode::Static {
        return *state;
    }
    let alpha = if sigma2 > state.variance_threshold {
        (0.5 * state.alpha).max(state.alpha_floor)
    } else {
        (state.alpha + ALPHA_STEP).min(state.alpha_cap)
    };
    SmootherState { alpha, ..*state }
}

/// Smoothed trust per registered client; new clients start at 1.0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothedTrust(BTreeMap<ClientId, f64>);

impl SmoothedTrust {
    pub fn new(ids: impl IntoIterator<Item = ClientId>) -> Self {
        Self(ids.into_iter().map(|id| (id, INITIAL_TRUST)).collect())
    }

    pub fn register(&mut self, id: ClientId) {
        self.0.entry(id).or_insert(INITIAL_TRUST);
    }

    pub fn get(&self, id: ClientId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClientId, f64)> + '_ {
        self.0.iter().map(|(&id, &t)| (id, t))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.values().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.values().sum::<f64>() / self.0.len() as f64
    }

    pub fn variance(&self) -> f64 {
        population_variance(self.values())
    }
}

impl FromIterator<(ClientId, f64)> for SmoothedTrust {
    fn from_iter<I: IntoIterator<Item = (ClientId, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// `prev + alpha * (raw - prev)`; clients absent from `raw` keep `prev`.
pub fn ema_update(prev: &SmoothedTrust, raw: &TrustScores, alpha: f64) -> Result<SmoothedTrust> {
    let mut next = prev.clone();
    for (id, score) in raw.iter() {
        let slot = next.0.get_mut(&id).ok_or(Error::UnknownClient(id))?;
        *slot = (*slot + alpha * (score - *slot)).clamp(0.0, 1.0);
    }
    Ok(next)
}
