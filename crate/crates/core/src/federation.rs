//! Round engine: local training, trust pipeline, filtered FedAvg, logging.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{self, Behavior, ClientShard, LabeledSet, PartitionMode, STAGES};
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix, MetricVector};
use crate::model::{self, LayerLayout, ModelParams, TrainOptions};
use crate::participation::{self, RoundDecision, Status, Statuses};
use crate::rng::{stream, Purpose};
use crate::smoothing::{self, SmootherState, SmoothedTrust};
use crate::topsis::{self, CriteriaWeights, DecisionMatrix, TrustScores};
use crate::ClientId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    FedavgBaseline,
    AtsssfStatic,
    AtsssfAdaptive,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::FedavgBaseline,
        StrategyKind::AtsssfStatic,
        StrategyKind::AtsssfAdaptive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::FedavgBaseline => "fedavg_baseline",
            StrategyKind::AtsssfStatic => "atsssf_static",
            StrategyKind::AtsssfAdaptive => "atsssf_adaptive",
        }
    }

    pub fn filters(&self) -> bool {
        *self != StrategyKind::FedavgBaseline
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!("unknown strategy `{s}` (expected fedavg_baseline, atsssf_static or atsssf_adaptive)")
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub tau: f64,
    pub max_omissions: usize,
    pub weights: CriteriaWeights,
    pub smoother: SmootherState,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        let smoother = match kind {
            StrategyKind::AtsssfAdaptive => SmootherState::default(),
            _ => SmootherState::fixed(smoothing::STATIC_ALPHA),
        };
        Self {
            kind,
            tau: participation::DEFAULT_TAU,
            max_omissions: participation::DEFAULT_MAX_OMISSIONS,
            weights: CriteriaWeights::default(),
            smoother,
        }
    }

    pub fn from_config(config: &ExperimentConfig, kind: StrategyKind) -> Result<Self> {
        let smoother = match kind {
            StrategyKind::AtsssfAdaptive => SmootherState::adaptive(
                config.alpha_init,
                config.variance_threshold,
                config.alpha_floor,
            ),
            _ => SmootherState::fixed(config.alpha_init),
        };
        Ok(Self {
            kind,
            tau: config.tau,
            max_omissions: config.m,
            weights: CriteriaWeights::new(config.criteria_weights)?,
            smoother,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub strategy: StrategyKind,
    /// `None` for the unfiltered baseline.
    pub alpha: Option<f64>,
    /// Variance of this round's raw TOPSIS scores.
    pub sigma2: f64,
    /// Mean and variance of the smoothed trust (raw scores for the baseline).
    pub mean_trust: f64,
    pub trust_variance: f64,
    pub omitted_now: Vec<ClientId>,
    pub readmitted_now: Vec<ClientId>,
    pub active_count: usize,
    pub test: MetricVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientLogEntry {
    pub round: usize,
    pub client_id: ClientId,
    pub raw_trust: Option<f64>,
    pub smoothed_trust: Option<f64>,
    pub status: Status,
    pub behavior: Behavior,
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub log: RoundLog,
    pub clients: Vec<ClientLogEntry>,
    pub decision: RoundDecision,
    pub raw: TrustScores,
    /// Client status entering the round, before this round's decision.
    pub included_before: BTreeSet<ClientId>,
}

/// Weighted mean of full client parameter vectors, weights `n_i / sum(n)`.
pub fn fedavg_aggregate(
    updates: &BTreeMap<ClientId, ModelParams>,
    sizes: &BTreeMap<ClientId, usize>,
) -> Result<ModelParams> {
    let first = updates.values().next().ok_or(Error::NoActiveClients)?;
    let mut vectors = Vec::with_capacity(updates.len());
    let mut counts = Vec::with_capacity(updates.len());
    for (id, p) in updates {
        vectors.push(p.values());
        counts.push(*sizes.get(id).ok_or(Error::UnknownClient(*id))?);
    }
    ModelParams::from_vec(first.layout().clone(), weighted_mean(&vectors, &counts)?)
}

/// `sum_i (n_i / sum(n)) * v_i` over equal-length vectors.
pub fn weighted_mean(vectors: &[&[f64]], counts: &[usize]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::NoActiveClients)?;
    if vectors.len() != counts.len() {
        return Err(Error::LengthMismatch {
            what: "vectors vs sample counts",
            left: vectors.len(),
            right: counts.len(),
        });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != first.len()) {
        return Err(Error::LengthMismatch {
            what: "client parameter vectors",
            left: v.len(),
            right: first.len(),
        });
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("aggregation sample total"));
    }
    let mut out = vec![0.0; first.len()];
    for (v, &n) in vectors.iter().zip(counts) {
        let w = n as f64 / total as f64;
        for (acc, x) in out.iter_mut().zip(v.iter()) {
            *acc += w * x;
        }
    }
    Ok(out)
}

struct ClientResult {
    id: ClientId,
    params: ModelParams,
    metrics: MetricVector,
}

/// Everything except the strategy: identical for every strategy compared on
/// one seed.
#[derive(Clone, Debug)]
pub struct Federation {
    pub shards: Vec<ClientShard>,
    pub test: LabeledSet,
    pub initial: ModelParams,
    pub dataset_hash: String,
}

impl Federation {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let seed = config.seed;
        let samples =
            dataset::generate_dataset(&config.dataset.generator(), &mut stream(seed, Purpose::Dataset, 0, 0))?;
        let dataset_hash = dataset::dataset_hash(&samples);
        let all = dataset::to_labeled_set(&samples)?;
        let (train_idx, test_idx) = dataset::train_test_split(
            &all.labels,
            STAGES,
            config.dataset.test_fraction,
            &mut stream(seed, Purpose::Split, 0, 0),
        );
        let mut train = all.subset(&train_idx);
        let mut test = all.subset(&test_idx);
        let scaler = dataset::Standardizer::fit(&train.features)?;
        train.features = scaler.apply(&train.features)?;
        test.features = scaler.apply(&test.features)?;
        let mode = match config.dataset.concentration {
            None => PartitionMode::Iid,
            Some(concentration) => PartitionMode::Dirichlet { concentration },
        };
        let mut shards = dataset::partition(
            &train,
            config.clients,
            mode,
            &mut stream(seed, Purpose::Partition, 0, 0),
        )?;
        let adversaries = index::sample(
            &mut stream(seed, Purpose::Adversaries, 0, 0),
            config.clients,
            config.adversaries.count,
        );
        for i in adversaries {
            shards[i].behavior = config.adversaries.behavior;
        }
        // oversample each client's own training split; validation stays as drawn
        for s in &mut shards {
            let id = s.client_id.0 as u64;
            s.train = dataset::smote(&s.train, config.dataset.smote_k, &mut stream(seed, Purpose::Smote, 0, id))?;
        }
        let shards = shards
            .iter()
            .map(|s| dataset::corrupt_shard(s, &mut stream(seed, Purpose::Corruption, 0, s.client_id.0 as u64)))
            .collect();
        let layout = LayerLayout {
            input_dim: train.dim(),
            hidden_dims: config.model.hidden.clone(),
            output_dim: STAGES,
            dropout_rate: config.model.dropout,
        };
        let initial = model::init_model(&layout, &mut stream(seed, Purpose::ModelInit, 0, 0))?;
        Ok(Self {
            shards,
            test,
            initial,
            dataset_hash,
        })
    }

    pub fn adversary_ids(&self) -> Vec<ClientId> {
        self.shards
            .iter()
            .filter(|s| s.behavior != Behavior::Honest)
            .map(|s| s.client_id)
            .collect()
    }
}

pub struct Engine {
    strategy: Strategy,
    seed: u64,
    global: ModelParams,
    shards: Vec<ClientShard>,
    test: LabeledSet,
    statuses: Statuses,
    smoothed: SmoothedTrust,
    train: TrainOptions,
    participation: f64,
    parallel: bool,
    round: usize,
}

impl Engine {
    pub fn new(
        strategy: Strategy,
        global: ModelParams,
        shards: Vec<ClientShard>,
        test: LabeledSet,
        train: TrainOptions,
        seed: u64,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::Empty("client shards"));
        }
        let ids: Vec<ClientId> = shards.iter().map(|s| s.client_id).collect();
        let statuses = participation::register_clients(&ids)?;
        Ok(Self {
            strategy,
            seed,
            global,
            shards,
            test,
            statuses,
            smoothed: SmoothedTrust::new(ids),
            train,
            participation: 1.0,
            parallel: true,
            round: 0,
        })
    }

    pub fn from_federation(fed: &Federation, strategy: Strategy, config: &ExperimentConfig) -> Result<Self> {
        let mut engine = Self::new(
            strategy,
            fed.initial.clone(),
            fed.shards.clone(),
            fed.test.clone(),
            config.train_options(),
            config.seed,
        )?;
        engine.participation = config.train.participation;
        engine.parallel = config.train.parallel;
        Ok(engine)
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn set_participation(&mut self, fraction: f64) {
        self.participation = fraction.clamp(f64::MIN_POSITIVE, 1.0);
    }

    pub fn global(&self) -> &ModelParams {
        &self.global
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn statuses(&self) -> &Statuses {
        &self.statuses
    }

    pub fn smoothed(&self) -> &SmoothedTrust {
        &self.smoothed
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn evaluate_global(&self) -> Result<(MetricVector, ConfusionMatrix)> {
        let cm = metrics::evaluate_confusion(&self.global, &self.test)?;
        Ok((metrics::macro_metrics(&cm)?, cm))
    }

    fn selected(&self) -> Vec<usize> {
        let n = self.shards.len();
        if self.participation >= 1.0 {
            return (0..n).collect();
        }
        let k = ((self.participation * n as f64).ceil() as usize).clamp(1, n);
        let mut picked = index::sample(
            &mut stream(self.seed, Purpose::Selection, self.round as u64, 0),
            n,
            k,
        )
        .into_vec();
        picked.sort_unstable();
        picked
    }

    fn train_client(&self, shard: &ClientShard) -> Result<ClientResult> {
        let id = shard.client_id;
        let round = self.round as u64;
        let mut rng = stream(self.seed, Purpose::LocalTraining, round, id.0 as u64);
        let mut params = model::train_local(
            &self.global,
            &shard.train.features,
            &shard.train.labels,
            &self.train,
            &mut rng,
        )?;
        if let Behavior::NoisyUpdate { sigma } = shard.behavior {
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).map_err(|_| Error::NonFinite("update noise"))?;
                let mut rng = stream(self.seed, Purpose::UpdateNoise, round, id.0 as u64);
                for v in params.values_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
        }
        let metrics = metrics::evaluate_model(&params, &shard.validation)?;
        Ok(ClientResult { id, params, metrics })
    }

    /// One communication round. Rounds are numbered from 1.
    pub fn run_round(&mut self) -> Result<RoundOutcome> {
        self.round += 1;
        let selected = self.selected();
        let results: Vec<ClientResult> = if self.parallel {
            selected
                .par_iter()
                .map(|&i| self.train_client(&self.shards[i]))
                .collect::<Result<_>>()?
        } else {
            selected
                .iter()
                .map(|&i| self.train_client(&self.shards[i]))
                .collect::<Result<_>>()?
        };

        let matrix = DecisionMatrix::from_metrics(results.iter().map(|r| (r.id, &r.metrics)))?;
        let raw = topsis::topsis_scores(&matrix, &self.strategy.weights);
        let sigma2 = smoothing::trust_variance(&raw)?;
        let included_before: BTreeSet<ClientId> = self
            .statuses
            .values()
            .filter(|s| s.status == Status::Included)
            .map(|s| s.client_id)
            .collect();

        let (alpha, decision, mean_trust, trust_variance) = if self.strategy.kind.filters() {
            self.strategy.smoother = smoothing::adapt_alpha(&self.strategy.smoother, sigma2);
            let alpha = self.strategy.smoother.alpha;
            self.smoothed = smoothing::ema_update(&self.smoothed, &raw, alpha)?;
            let in_round: Statuses = results
                .iter()
                .map(|r| (r.id, self.statuses[&r.id]))
                .collect();
            let (mut decision, updated) = participation::decide_round(
                &in_round,
                &self.smoothed,
                self.strategy.tau,
                self.strategy.max_omissions,
            )?;
            self.statuses.extend(updated);
            decision.active_set.retain(|id| raw.get(*id).is_some());
            (
                Some(alpha),
                decision,
                self.smoothed.mean(),
                self.smoothed.variance(),
            )
        } else {
            let n = raw.len() as f64;
            let decision = RoundDecision {
                active_set: results.iter().map(|r| r.id).collect(),
                ..RoundDecision::default()
            };
            (None, decision, raw.values().sum::<f64>() / n, sigma2)
        };

        let sizes: BTreeMap<ClientId, usize> = self
            .shards
            .iter()
            .map(|s| (s.client_id, s.train.len()))
            .collect();
        let updates: BTreeMap<ClientId, ModelParams> = results
            .into_iter()
            .filter(|r| decision.active_set.contains(&r.id))
            .map(|r| (r.id, r.params))
            .collect();
        // with every client omitted the previous global model carries over
        if !updates.is_empty() {
            self.global = fedavg_aggregate(&updates, &sizes)?;
        }
        let (test, _) = self.evaluate_global()?;

        let filters = self.strategy.kind.filters();
        let clients = self
            .shards
            .iter()
            .map(|s| ClientLogEntry {
                round: self.round,
                client_id: s.client_id,
                raw_trust: raw.get(s.client_id),
                smoothed_trust: if filters { self.smoothed.get(s.client_id) } else { None },
                status: self.statuses[&s.client_id].status,
                behavior: s.behavior,
            })
            .collect();

        let log = RoundLog {
            round: self.round,
            strategy: self.strategy.kind,
            alpha,
            sigma2,
            mean_trust,
            trust_variance,
            omitted_now: decision.omitted_now.iter().copied().collect(),
            readmitted_now: decision.readmitted_now.iter().copied().collect(),
            active_count: decision.active_set.len(),
            test,
        };
        Ok(RoundOutcome {
            log,
            clients,
            decision,
            raw,
            included_before,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: StrategyKind,
    pub dataset_hash: String,
    pub rounds: usize,
    pub initial_metrics: MetricVector,
    pub final_metrics: MetricVector,
    pub final_confusion_matrix: Vec<Vec<u64>>,
    pub final_confusion_csv: String,
    /// Mean trust in the last round (smoothed, raw for the baseline).
    pub final_mean_trust: Option<f64>,
    pub total_omissions: usize,
    pub total_readmissions: usize,
    pub adversaries: Vec<ClientId>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub logs: Vec<RoundLog>,
    pub client_logs: Vec<ClientLogEntry>,
    pub report: StrategyReport,
    pub final_params: ModelParams,
}

/// Run `kind` for `config.rounds` rounds on an already prepared federation.
pub fn run_strategy(
    fed: &Federation,
    config: &ExperimentConfig,
    kind: StrategyKind,
) -> Result<ExperimentOutput> {
    let strategy = Strategy::from_config(config, kind)?;
    let mut engine = Engine::from_federation(fed, strategy, config)?;
    let (initial_metrics, _) = engine.evaluate_global()?;
    let mut logs = Vec::with_capacity(config.rounds);
    let mut client_logs = Vec::with_capacity(config.rounds * fed.shards.len());
    for _ in 0..config.rounds {
        let outcome = engine.run_round()?;
        logs.push(outcome.log);
        client_logs.extend(outcome.clients);
    }
    let (final_metrics, cm) = engine.evaluate_global()?;
    let report = StrategyReport {
        strategy: kind,
        dataset_hash: fed.dataset_hash.clone(),
        rounds: config.rounds,
        initial_metrics,
        final_metrics,
        final_confusion_matrix: cm.rows(),
        final_confusion_csv: cm.to_csv_block(),
        final_mean_trust: logs.last().map(|l| l.mean_trust),
        total_omissions: logs.iter().map(|l| l.omitted_now.len()).sum(),
        total_readmissions: logs.iter().map(|l| l.readmitted_now.len()).sum(),
        adversaries: fed.adversary_ids(),
    };
    Ok(ExperimentOutput {
        logs,
        client_logs,
        report,
        final_params: engine.global.clone(),
    })
}

/// Build the data and run the configured strategy.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let fed = Federation::prepare(config)?;
    run_strategy(&fed, config, config.strategy)
}
