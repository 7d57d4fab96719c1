//! Synthetic seven-stage spectral data and client partitioning.
//!
//! Each sample carries a reflection curve (`s11`) and a transmission curve
//! (`s21`) over `bins` frequency points. The transmission curve has a
//! resonance peak whose position and height move with the healing stage and
//! the reflection curve shows the complementary dip. Stage spacing grows
//! with the stage index, so early stages overlap more than late ones.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Matrix;
use crate::rng::SimRng;
use crate::ClientId;

pub const STAGES: usize = 7;
pub const STAGE_NAMES: [&str; STAGES] = [
    "fresh_fracture",
    "soft_callus",
    "early_mineralization",
    "hard_callus",
    "mid_healing",
    "near_healing",
    "fully_healed",
];
pub const DEFAULT_BINS: usize = 32;
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Smallest shard that still yields non-empty train and validation splits.
pub const MIN_SHARD: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub s11: Vec<f64>,
    pub s21: Vec<f64>,
    pub label: usize,
}

/// Feature rows with class labels in `0..classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "feature rows vs labels",
                left: features.rows(),
                right: labels.len(),
            });
        }
        if let Some(&index) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::ClassOutOfRange { index, classes });
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_per_class: usize,
    pub bins: usize,
    /// Per-bin Gaussian noise as a fraction of the clean curve's range.
    pub noise: f64,
    /// Standard deviation of the per-sample resonance position.
    pub peak_jitter: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_per_class: 150,
            bins: DEFAULT_BINS,
            noise: 0.05,
            peak_jitter: 0.03,
        }
    }
}

const PEAK_WIDTH: f64 = 0.12;

fn stage_progress(stage: usize) -> f64 {
    (stage as f64 / (STAGES - 1) as f64).powf(1.5)
}

pub fn generate_dataset(params: &GeneratorParams, rng: &mut SimRng) -> Result<Vec<SpectralSample>> {
    if params.n_per_class == 0 {
        return Err(Error::config("dataset.n_per_class", "must be >= 1"));
    }
    if params.bins < 2 {
        return Err(Error::config("dataset.bins", "must be >= 2"));
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let bins = params.bins;
    let mut samples = Vec::with_capacity(params.n_per_class * STAGES);
    for stage in 0..STAGES {
        let progress = stage_progress(stage);
        let center = 0.3 + 0.4 * progress;
        let height = 0.4 + 0.3 * progress;
        for _ in 0..params.n_per_class {
            let mu = center + params.peak_jitter * unit.sample(rng);
            let amp = height * (1.0 + 0.05 * unit.sample(rng));
            let shape: Vec<f64> = (0..bins)
                .map(|j| {
                    let f = j as f64 / (bins - 1) as f64;
                    (-(f - mu).powi(2) / (2.0 * PEAK_WIDTH * PEAK_WIDTH)).exp()
                })
                .collect();
            let clean21: Vec<f64> = shape.iter().map(|g| 0.1 + amp * g).collect();
            let clean11: Vec<f64> = shape.iter().map(|g| 0.9 - 0.8 * amp * g).collect();
            let noisy = |clean: Vec<f64>, rng: &mut SimRng| -> Vec<f64> {
                let (lo, hi) = clean
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let sigma = params.noise * (hi - lo);
                clean.into_iter().map(|v| v + sigma * unit.sample(rng)).collect()
            };
            let s11 = noisy(clean11, rng);
            let s21 = noisy(clean21, rng);
            samples.push(SpectralSample {
                s11,
                s21,
                label: stage,
            });
        }
    }
    Ok(samples)
}

pub fn feature_len(bins: usize) -> usize {
    6 * bins - 2
}

/// `[s11, s21, s11 - s21, s11 / s21, diff(s11), diff(s21)]`.
pub fn derive_features(sample: &SpectralSample) -> Vec<f64> {
    let (s11, s21) = (&sample.s11, &sample.s21);
    let scale = s11
        .iter()
        .chain(s21)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let guard = 1e-6 * if scale > 0.0 { scale } else { 1.0 };
    let mut out = Vec::with_capacity(feature_len(s11.len()));
    out.extend_from_slice(s11);
    out.extend_from_slice(s21);
    out.extend(s11.iter().zip(s21).map(|(a, b)| a - b));
    out.extend(s11.iter().zip(s21).map(|(a, b)| {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        a / (b + guard * sign)
    }));
    out.extend(s11.windows(2).map(|w| w[1] - w[0]));
    out.extend(s21.windows(2).map(|w| w[1] - w[0]));
    out
}

pub fn to_labeled_set(samples: &[SpectralSample]) -> Result<LabeledSet> {
    let mut features = Matrix::zeros(0, 0);
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        if s.s11.len() != s.s21.len() {
            return Err(Error::LengthMismatch {
                what: "s11 vs s21 bins",
                left: s.s11.len(),
                right: s.s21.len(),
            });
        }
        features.push_row(&derive_features(s))?;
        labels.push(s.label);
    }
    LabeledSet::new(features, labels, STAGES)
}

/// SHA-256 over labels and raw curve values.
pub fn dataset_hash(samples: &[SpectralSample]) -> String {
    let mut hasher = Sha256::new();
    for s in samples {
        hasher.update((s.label as u32).to_le_bytes());
        for v in s.s11.iter().chain(&s.s21) {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

pub fn write_dataset_csv<W: Write>(samples: &[SpectralSample], out: W) -> Result<()> {
    let bins = samples.first().map_or(0, |s| s.s11.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..bins).map(|i| format!("s11_{i}")).collect();
    header.extend((0..bins).map(|i| format!("s21_{i}")));
    header.push("label".into());
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = s.s11.iter().chain(&s.s21).map(f64::to_string).collect();
        row.push(s.label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<SpectralSample>> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width < 5 || width % 2 == 0 {
        return Err(Error::DatasetFile(format!("unexpected column count {width}")));
    }
    let bins = (width - 1) / 2;
    let mut samples = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| Error::DatasetFile(format!("row {}: bad number `{}`", line + 1, &record[i])))
        };
        let s11 = (0..bins).map(parse).collect::<Result<Vec<_>>>()?;
        let s21 = (bins..2 * bins).map(parse).collect::<Result<Vec<_>>>()?;
        let label: usize = record[2 * bins]
            .parse()
            .map_err(|_| Error::DatasetFile(format!("row {}: bad label", line + 1)))?;
        if label >= STAGES {
            return Err(Error::ClassOutOfRange {
                index: label,
                classes: STAGES,
            });
        }
        samples.push(SpectralSample { s11, s21, label });
    }
    Ok(samples)
}

/// Stratified split; returns `(train, test)` indices.
pub fn train_test_split(
    labels: &[usize],
    classes: usize,
    test_fraction: f64,
    rng: &mut SimRng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Per-feature mean and population std; a zero std is stored as 1.
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::Empty("standardizer training data"));
        }
        let n = train.rows() as f64;
        let mut means = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(Self { means, stds })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Where a SMOTE output row came from (indices into the input set).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleOrigin {
    Original(usize),
    Interpolated { base: usize, neighbor: usize, u: f64 },
    /// Jittered copy of the only member of its class.
    Jittered(usize),
}

pub const DEFAULT_SMOTE_K: usize = 5;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Oversample every present class to the majority count.
pub fn smote(train: &LabeledSet, k: usize, rng: &mut SimRng) -> Result<LabeledSet> {
    smote_traced(train, k, rng).map(|(set, _)| set)
}

pub fn smote_traced(
    train: &LabeledSet,
    k: usize,
    rng: &mut SimRng,
) -> Result<(LabeledSet, Vec<SampleOrigin>)> {
    let mut out = train.clone();
    let mut origins: Vec<SampleOrigin> = (0..train.len()).map(SampleOrigin::Original).collect();
    let counts = train.class_counts();
    let majority = counts.iter().copied().max().unwrap_or(0);
    let jitter = Normal::new(0.0, 1e-6).expect("jitter normal");
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 || count == majority {
            continue;
        }
        let members: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == class).collect();
        let need = majority - count;
        if count == 1 {
            let base = members[0];
            for _ in 0..need {
                let row: Vec<f64> = train
                    .features
                    .row(base)
                    .iter()
                    .map(|v| v + jitter.sample(rng))
                    .collect();
                out.features.push_row(&row)?;
                out.labels.push(class);
                origins.push(SampleOrigin::Jittered(base));
            }
            continue;
        }
        let k = k.clamp(1, count - 1);
        // k nearest same-class neighbours of every member, ties by index
        let neighbours: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| {
                let mut d: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (squared_distance(train.features.row(i), train.features.row(j)), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();
        for _ in 0..need {
            let pick = rng.random_range(0..members.len());
            let base = members[pick];
            let neighbor = neighbours[pick][rng.random_range(0..k)];
            let u: f64 = rng.random();
            let row: Vec<f64> = train
                .features
                .row(base)
                .iter()
                .zip(train.features.row(neighbor))
                .map(|(x, n)| x + u * (n - x))
                .collect();
            out.features.push_row(&row)?;
            out.labels.push(class);
            origins.push(SampleOrigin::Interpolated { base, neighbor, u });
        }
    }
    Ok((out, origins))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Honest,
    LabelFlip { fraction: f64 },
    NoisyUpdate { sigma: f64 },
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::Honest => write!(f, "honest"),
            Behavior::LabelFlip { fraction } => write!(f, "label_flip({fraction})"),
            Behavior::NoisyUpdate { sigma } => write!(f, "noisy_update({sigma})"),
        }
    }
}

impl FromStr for Behavior {
    type Err = String;

    /// `honest`, `label_flip[:fraction]`, `noisy_update[:sigma]`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |default: f64| -> std::result::Result<f64, String> {
            arg.map_or(Ok(default), |a| {
                a.parse::<f64>().map_err(|_| format!("bad behaviour parameter `{a}`"))
            })
        };
        match name {
            "honest" => Ok(Behavior::Honest),
            "label_flip" => {
                let fraction = value(1.0)?;
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(format!("label_flip fraction {fraction} outside [0, 1]"));
                }
                Ok(Behavior::LabelFlip { fraction })
            }
            "noisy_update" => {
                let sigma = value(0.5)?;
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(format!("noisy_update sigma {sigma} must be >= 0"));
                }
                Ok(Behavior::NoisyUpdate { sigma })
            }
            other => Err(format!("unknown behaviour `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: ClientId,
    pub train: LabeledSet,
    pub validation: LabeledSet,
    pub behavior: Behavior,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Every class dealt round-robin: near-proportional histograms, equal sizes.
    Iid,
    /// Per-class client proportions from a symmetric Dirichlet.
    Dirichlet { concentration: f64 },
}

fn dirichlet(n: usize, concentration: f64, rng: &mut SimRng) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter().map(|g| g / sum).collect()
    } else {
        // every draw underflowed: put the whole class on one client
        let mut p = vec![0.0; n];
        p[rng.random_range(0..n)] = 1.0;
        p
    }
}

pub fn partition(
    data: &LabeledSet,
    n_clients: usize,
    mode: PartitionMode,
    rng: &mut SimRng,
) -> Result<Vec<ClientShard>> {
    if n_clients == 0 {
        return Err(Error::config("clients", "must be >= 1"));
    }
    if n_clients * MIN_SHARD > data.len() {
        return Err(Error::TooManyClients {
            clients: n_clients,
            samples: data.len(),
        });
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    let mut dealt = 0usize;
    for class in 0..data.classes {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        match mode {
            PartitionMode::Iid => {
                for i in members {
                    buckets[dealt % n_clients].push(i);
                    dealt += 1;
                }
            }
            PartitionMode::Dirichlet { concentration } => {
                let p = dirichlet(n_clients, concentration, rng);
                let n = members.len() as f64;
                let mut cumulative = 0.0;
                let mut start = 0usize;
                for (c, share) in p.iter().enumerate() {
                    cumulative += share;
                    let end = if c + 1 == n_clients {
                        members.len()
                    } else {
                        ((cumulative * n).round() as usize).clamp(start, members.len())
                    };
                    buckets[c].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
        }
    }
    loop {
        let (small, small_len) = buckets
            .iter()
            .enumerate()
            .map(|(i, b)| (i, b.len()))
            .min_by_key(|&(i, l)| (l, i))
            .expect("n_clients >= 1");
        if small_len >= MIN_SHARD {
            break;
        }
        let large = buckets
            .iter()
            .enumerate()
            .max_by_key(|&(i, b)| (b.len(), std::cmp::Reverse(i)))
            .map(|(i, _)| i)
            .expect("n_clients >= 1");
        let moved = buckets[large].pop().expect("largest bucket is non-empty");
        buckets[small].push(moved);
    }

    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(c, mut idx)| {
            idx.shuffle(rng);
            let n_val = ((idx.len() as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, idx.len() - 1);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
            for i in idx {
                by_class[data.labels[i]].push(i);
            }
            let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
            let (mut val, mut train) = (Vec::new(), Vec::new());
            for (members, k) in by_class.iter().zip(stratified_counts(&counts, n_val)) {
                val.extend_from_slice(&members[..k]);
                train.extend_from_slice(&members[k..]);
            }
            ClientShard {
                client_id: ClientId(c as u32),
                train: data.subset(&train),
                validation: data.subset(&val),
                behavior: Behavior::Honest,
            }
        })
        .collect())
}

/// Split `total` across classes in proportion to `counts`, largest remainder
/// first, ties to the lower class index.
pub fn stratified_counts(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let mut out: Vec<usize> = counts.iter().map(|&c| c * total / n).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(counts[c] * total % n), c));
    let missing = total - out.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        out[c] += 1;
    }
    out
}

/// Apply the shard's behaviour to its training labels. Validation labels and
/// `noisy_update` shards are left as they are.
pub fn corrupt_shard(shard: &ClientShard, rng: &mut SimRng) -> ClientShard {
    let mut out = shard.clone();
    if let Behavior::LabelFlip { fraction } = shard.behavior {
        let n = out.train.len();
        let classes = out.train.classes;
        let flips = ((fraction * n as f64).round() as usize).min(n);
        if classes >= 2 {
            for i in index::sample(rng, n, flips) {
                let original = out.train.labels[i];
                let shifted = rng.random_range(0..classes - 1);
                out.train.labels[i] = if shifted >= original { shifted + 1 } else { shifted };
            }
        }
    }
    out
}

/// Shannon entropy (nats) of a label histogram.
pub fn label_entropy(labels: &[usize], classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}
