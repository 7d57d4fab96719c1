//! TOPSIS closeness scores over the per-round client decision matrix.
//!
//! Columns are normalized by their Euclidean norm, weighted, and compared
//! against the column-wise best (ideal) and worst (anti-ideal) rows. A
//! client's raw trust is its relative closeness `S- / (S+ + S-)`. Every
//! criterion is a benefit criterion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricVector;
use crate::ClientId;

/// Accuracy, macro precision, macro recall, macro F1.
pub const CRITERIA: usize = 4;

pub type CriteriaRow = [f64; CRITERIA];

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionMatrix {
    client_ids: Vec<ClientId>,
    rows: Vec<CriteriaRow>,
}

impl DecisionMatrix {
    pub fn new(client_ids: Vec<ClientId>, rows: Vec<CriteriaRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidMatrix("no clients".into()));
        }
        if client_ids.len() != rows.len() {
            return Err(Error::LengthMismatch {
                what: "decision matrix ids vs rows",
                left: client_ids.len(),
                right: rows.len(),
            });
        }
        for (id, row) in client_ids.iter().zip(&rows) {
            if let Some(bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidMatrix(format!(
                    "client {id} has criterion value {bad} outside [0, 1]"
                )));
            }
        }
        let mut sorted = client_ids.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateClient(w[0]));
        }
        Ok(Self { client_ids, rows })
    }

    pub fn from_metrics<'a>(
        entries: impl IntoIterator<Item = (ClientId, &'a MetricVector)>,
    ) -> Result<Self> {
        let (ids, rows) = entries
            .into_iter()
            .map(|(id, m)| (id, m.as_array()))
            .unzip();
        Self::new(ids, rows)
    }

    pub fn client_ids(&self) -> &[ClientId] {
        &self.client_ids
    }

    pub fn rows(&self) -> &[CriteriaRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaWeights([f64; CRITERIA]);

impl CriteriaWeights {
    pub fn new(weights: [f64; CRITERIA]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and non-negative, got {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self(weights))
    }

    pub fn as_array(&self) -> [f64; CRITERIA] {
        self.0
    }
}

impl Default for CriteriaWeights {
    fn default() -> Self {
        Self([0.25; CRITERIA])
    }
}

/// Raw per-round trust, keyed by client.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustScores(BTreeMap<ClientId, f64>);

impl TrustScores {
    pub fn get(&self, id: ClientId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClientId, f64)> + '_ {
        self.0.iter().map(|(&id, &s)| (id, s))
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
}

impl FromIterator<(ClientId, f64)> for TrustScores {
    fn from_iter<I: IntoIterator<Item = (ClientId, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Divide each column by its Euclidean norm; an all-zero column stays zero.
pub fn normalize_columns(matrix: &DecisionMatrix) -> Vec<CriteriaRow> {
    let rows = matrix.rows();
    let mut norms = [0.0; CRITERIA];
    for row in rows {
        for (n, v) in norms.iter_mut().zip(row) {
            *n += v * v;
        }
    }
    let norms = norms.map(f64::sqrt);
    rows.iter()
        .map(|row| {
            let mut out = [0.0; CRITERIA];
            for j in 0..CRITERIA {
                if norms[j] > 0.0 {
                    // a single positive entry divides by itself; keep r_ij <= 1 exactly
                    out[j] = (row[j] / norms[j]).min(1.0);
                }
            }
            out
        })
        .collect()
}

pub fn apply_weights(normalized: &[CriteriaRow], weights: &CriteriaWeights) -> Vec<CriteriaRow> {
    let w = weights.as_array();
    normalized
        .iter()
        .map(|row| std::array::from_fn(|j| w[j] * row[j]))
        .collect()
}

/// Column-wise maximum (ideal) and minimum (anti-ideal).
///
/// Panics if `weighted` is empty.
pub fn ideal_solutions<const N: usize>(weighted: &[[f64; N]]) -> ([f64; N], [f64; N]) {
    let first = weighted.first().expect("ideal_solutions on empty matrix");
    let mut best = *first;
    let mut worst = *first;
    for row in &weighted[1..] {
        for j in 0..N {
            best[j] = best[j].max(row[j]);
            worst[j] = worst[j].min(row[j]);
        }
    }
    (best, worst)
}

fn distance<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Relative closeness of each row to the ideal, aligned with `weighted`.
///
/// A row that is simultaneously at both ideals (every client identical)
/// scores 1.0.
pub fn closeness<const N: usize>(
    weighted: &[[f64; N]],
    ideal: &[f64; N],
    anti_ideal: &[f64; N],
) -> Vec<f64> {
    weighted
        .iter()
        .map(|row| {
            let s_plus = distance(row, ideal);
            let s_minus = distance(row, anti_ideal);
            let denom = s_plus + s_minus;
            if denom == 0.0 {
                1.0
            } else {
                (s_minus / denom).clamp(0.0, 1.0)
            }
        })
        .collect()
}

pub fn topsis_scores(matrix: &DecisionMatrix, weights: &CriteriaWeights) -> TrustScores {
    let weighted = apply_weights(&normalize_columns(matrix), weights);
    let (ideal, anti_ideal) = ideal_solutions(&weighted);
    let scores = closeness(&weighted, &ideal, &anti_ideal);
    matrix.client_ids().iter().copied().zip(scores).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<ClientId> {
        (0..n as u32).map(ClientId).collect()
    }

    #[test]
    fn three_four_five_column() {
        let m = DecisionMatrix::new(ids(2), vec![[0.3, 0.0, 0.0, 0.0], [0.4, 0.0, 0.0, 0.0]])
            .unwrap();
        let r = normalize_columns(&m);
        assert!((r[0][0] - 0.6).abs() < 1e-15);
        assert!((r[1][0] - 0.8).abs() < 1e-15);
        assert_eq!(r[0][1], 0.0);
    }

    #[test]
    fn single_client_normalizes_to_ones() {
        let m = DecisionMatrix::new(ids(1), vec![[0.5; 4]]).unwrap();
        assert_eq!(normalize_columns(&m), vec![[1.0; 4]]);
    }

    #[test]
    fn ideal_solutions_small_cases() {
        let (best, worst) = ideal_solutions(&[[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(best, [1.0, 1.0]);
        assert_eq!(worst, [0.0, 0.0]);
        let (best, worst) = ideal_solutions(&[[0.2, 0.7, 0.1]]);
        assert_eq!(best, [0.2, 0.7, 0.1]);
        assert_eq!(worst, best);
    }

    #[test]
    fn closeness_at_the_ideals() {
        let v = [[0.5, 0.5], [0.1, 0.2]];
        let (best, worst) = ideal_solutions(&v);
        assert_eq!(closeness(&v, &best, &worst), vec![1.0, 0.0]);
    }

    #[test]
    fn dominance_and_degeneracy() {
        let m = DecisionMatrix::new(ids(2), vec![[0.9; 4], [0.1; 4]]).unwrap();
        let s = topsis_scores(&m, &CriteriaWeights::default());
        assert_eq!(s.get(ClientId(0)), Some(1.0));
        assert_eq!(s.get(ClientId(1)), Some(0.0));

        let m = DecisionMatrix::new(ids(5), vec![[0.42, 0.3, 0.35, 0.31]; 5]).unwrap();
        let s = topsis_scores(&m, &CriteriaWeights::default());
        assert!(s.values().all(|t| t == 1.0));
    }

    #[test]
    fn validation_errors() {
        assert!(DecisionMatrix::new(vec![], vec![]).is_err());
        assert!(DecisionMatrix::new(ids(1), vec![[1.2, 0.0, 0.0, 0.0]]).is_err());
        assert!(DecisionMatrix::new(ids(1), vec![[f64::NAN, 0.0, 0.0, 0.0]]).is_err());
        assert!(matches!(
            DecisionMatrix::new(vec![ClientId(3), ClientId(3)], vec![[0.1; 4]; 2]),
            Err(Error::DuplicateClient(ClientId(3)))
        ));
        assert!(CriteriaWeights::new([0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(CriteriaWeights::new([0.3, 0.3, 0.3, 0.3]).is_err());
        assert!(CriteriaWeights::new([0.4, 0.2, 0.2, 0.2]).is_ok());
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<CriteriaRow>> {
        prop::collection::vec(prop::array::uniform4(0.0f64..=1.0), 1..9)
    }

    proptest! {
        #[test]
        fn scores_in_unit_interval(rows in matrix_strategy()) {
            let m = DecisionMatrix::new(ids(rows.len()), rows).unwrap();
            for t in topsis_scores(&m, &CriteriaWeights::default()).values() {
                prop_assert!((0.0..=1.0).contains(&t));
            }
        }

        #[test]
        fn dominant_row_scores_one(rows in matrix_strategy(), bump in 0.01f64..0.5) {
            let mut rows = rows;
            let mut top = [0.0; CRITERIA];
            for row in &rows {
                for j in 0..CRITERIA {
                    top[j] = f64::max(top[j], row[j]);
                }
            }
            // strictly better than everyone in column 0
            top[0] = (top[0] + bump).min(1.0);
            prop_assume!(rows.iter().all(|r| r[0] < top[0]));
            rows.push(top);
            let n = rows.len();
            let m = DecisionMatrix::new(ids(n), rows).unwrap();
            let s = topsis_scores(&m, &CriteriaWeights::default());
            prop_assert_eq!(s.get(ClientId(n as u32 - 1)), Some(1.0));
        }

        #[test]
        fn ranking_is_invariant_to_column_scaling(
            rows in matrix_strategy(),
            col in 0usize..CRITERIA,
            scale in 0.05f64..1.0,
        ) {
            let n = rows.len();
            let base = topsis_scores(&DecisionMatrix::new(ids(n), rows.clone()).unwrap(), &CriteriaWeights::default());
            let mut scaled = rows;
            for row in &mut scaled {
                row[col] *= scale;
            }
            let after = topsis_scores(&DecisionMatrix::new(ids(n), scaled).unwrap(), &CriteriaWeights::default());
            for (a, b) in base.iter().zip(after.iter()) {
                prop_assert!((a.1 - b.1).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_equivariance(
            rows in matrix_strategy(),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = rows.len();
            let base = topsis_scores(&DecisionMatrix::new(ids(n), rows.clone()).unwrap(), &CriteriaWeights::default());
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted_ids: Vec<ClientId> = order.iter().map(|&i| ClientId(i as u32)).collect();
            let permuted_rows: Vec<CriteriaRow> = order.iter().map(|&i| rows[i]).collect();
            let after = topsis_scores(&DecisionMatrix::new(permuted_ids, permuted_rows).unwrap(), &CriteriaWeights::default());
            for (id, t) in base.iter() {
                prop_assert!((after.get(id).unwrap() - t).abs() < 1e-12);
            }
        }
    }
}
