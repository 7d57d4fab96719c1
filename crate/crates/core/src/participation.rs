//! Omission and readmission of clients based on smoothed trust.
//!
//! Included clients whose smoothed trust falls under `tau` become omission
//! candidates; at most `m` of them (lowest trust first, ties by ascending
//! id) are omitted per round and the rest stay included. An omitted client
//! is readmitted once its smoothed trust has been at or above `tau` for two
//! consecutive rounds; any round below `tau` resets that count.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothing::SmoothedTrust;
use crate::ClientId;

pub const DEFAULT_TAU: f64 = 0.75;
pub const DEFAULT_MAX_OMISSIONS: usize = 3;
pub const READMIT_AFTER: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Included,
    Omitted,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Included => "included",
            Status::Omitted => "omitted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStatus {
    pub client_id: ClientId,
    pub status: Status,
    /// Consecutive rounds at or above tau while omitted.
    pub rounds_above_tau: u32,
}

pub type Statuses = BTreeMap<ClientId, ClientStatus>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundDecision {
    pub omitted_now: BTreeSet<ClientId>,
    pub readmitted_now: BTreeSet<ClientId>,
    pub active_set: BTreeSet<ClientId>,
}

pub fn register_clients(ids: &[ClientId]) -> Result<Statuses> {
    let mut statuses = Statuses::new();
    for &client_id in ids {
        let fresh = ClientStatus {
            client_id,
            status: Status::Included,
            rounds_above_tau: 0,
        };
        if statuses.insert(client_id, fresh).is_some() {
            return Err(Error::DuplicateClient(client_id));
        }
    }
    Ok(statuses)
}

pub fn decide_round(
    statuses: &Statuses,
    smoothed: &SmoothedTrust,
    tau: f64,
    max_omissions: usize,
) -> Result<(RoundDecision, Statuses)> {
    let mut next = statuses.clone();
    let mut decision = RoundDecision::default();
    let mut candidates = Vec::new();

    for (&id, status) in next.iter_mut() {
        let trust = smoothed.get(id).ok_or(Error::MissingTrust(id))?;
        match status.status {
            Status::Included => {
                if trust < tau {
                    candidates.push((trust, id));
                }
            }
            Status::Omitted => {
                if trust >= tau {
                    status.rounds_above_tau += 1;
                    if status.rounds_above_tau >= READMIT_AFTER {
                        status.status = Status::Included;
                        status.rounds_above_tau = 0;
                        decision.readmitted_now.insert(id);
                    }
                } else {
                    status.rounds_above_tau = 0;
                }
            }
        }
    }

    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(_, id) in candidates.iter().take(max_omissions) {
        let status = next.get_mut(&id).expect("candidate comes from statuses");
        status.status = Status::Omitted;
        status.rounds_above_tau = 0;
        decision.omitted_now.insert(id);
    }

    decision.active_set = next
        .values()
        .filter(|s| s.status == Status::Included)
        .map(|s| s.client_id)
        .collect();
    Ok((decision, next))
}
