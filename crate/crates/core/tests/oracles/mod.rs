//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the crate's numerics.

#![allow(dead_code)]

/// Textbook TOPSIS over plain rows, written loop by loop.
pub fn oracle_topsis(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let k = weights.len();
    let mut v = vec![vec![0.0; k]; n];
    for j in 0..k {
        let mut ss = 0.0;
        for row in rows {
            ss += row[j] * row[j];
        }
        let norm = ss.sqrt();
        for i in 0..n {
            let r = if norm == 0.0 { 0.0 } else { rows[i][j] / norm };
            v[i][j] = weights[j] * r;
        }
    }
    let mut best = vec![f64::NEG_INFINITY; k];
    let mut worst = vec![f64::INFINITY; k];
    for row in &v {
        for j in 0..k {
            if row[j] > best[j] {
                best[j] = row[j];
            }
            if row[j] < worst[j] {
                worst[j] = row[j];
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for row in &v {
        let mut dp = 0.0;
        let mut dm = 0.0;
        for j in 0..k {
            dp += (row[j] - best[j]).powi(2);
            dm += (row[j] - worst[j]).powi(2);
        }
        let (dp, dm) = (dp.sqrt(), dm.sqrt());
        out.push(if dp + dm == 0.0 { 1.0 } else { dm / (dp + dm) });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub omitted_now: Vec<usize>,
    pub readmitted_now: Vec<usize>,
    pub active: Vec<usize>,
}

/// Omission/readmission state machine replayed over per-round trust values.
/// `trust[t][c]` is client c's smoothed trust in round t.
pub fn oracle_state_trace(trust: &[Vec<f64>], tau: f64, m: usize) -> Vec<TraceStep> {
    let n = trust.first().map_or(0, Vec::len);
    let mut omitted = vec![false; n];
    let mut streak = vec![0u32; n];
    let mut steps = Vec::new();
    for round in trust {
        let mut readmitted_now = Vec::new();
        for c in 0..n {
            if omitted[c] {
                if round[c] >= tau {
                    streak[c] += 1;
                    if streak[c] == 2 {
                        omitted[c] = false;
                        streak[c] = 0;
                        readmitted_now.push(c);
                    }
                } else {
                    streak[c] = 0;
                }
            }
        }
        // candidates: included before this round's readmissions, below tau
        let mut below: Vec<usize> = (0..n)
            .filter(|&c| !omitted[c] && !readmitted_now.contains(&c) && round[c] < tau)
            .collect();
        // selection sort on (trust, id) so the ordering logic is separate from the crate's
        let mut omitted_now = Vec::new();
        while omitted_now.len() < m && !below.is_empty() {
            let mut best = 0;
            for i in 1..below.len() {
                let (a, b) = (below[i], below[best]);
                if round[a] < round[b] || (round[a] == round[b] && a < b) {
                    best = i;
                }
            }
            omitted_now.push(below.remove(best));
        }
        for &c in &omitted_now {
            omitted[c] = true;
            streak[c] = 0;
        }
        omitted_now.sort_unstable();
        steps.push(TraceStep {
            omitted_now,
            readmitted_now,
            active: (0..n).filter(|&c| !omitted[c]).collect(),
        });
    }
    steps
}

/// Confusion counts by scanning every (truth, predicted) cell.
pub fn tally(preds: &[usize], labels: &[usize], k: usize) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64; k]; k];
    for (t, row) in out.iter_mut().enumerate() {
        for (p, cell) in row.iter_mut().enumerate() {
            *cell = labels
                .iter()
                .zip(preds)
                .filter(|&(&l, &q)| l == t && q == p)
                .count() as u64;
        }
    }
    out
}

/// (accuracy, macro precision, macro recall, macro F1) computed per class by hand.
pub fn manual_metrics(cm: &[Vec<u64>]) -> [f64; 4] {
    let k = cm.len();
    let total: u64 = cm.iter().flatten().sum();
    let diag: u64 = (0..k).map(|i| cm[i][i]).sum();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = cm[c][c] as f64;
        let predicted: u64 = (0..k).map(|t| cm[t][c]).sum();
        let actual: u64 = cm[c].iter().sum();
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let kf = k as f64;
    [diag as f64 / total as f64, p_sum / kf, r_sum / kf, f_sum / kf]
}

/// Closed form of `t` EMA steps with constant input `c`.
pub fn ema_closed_form(start: f64, c: f64, alpha: f64, t: i32) -> f64 {
    c + (1.0 - alpha).powi(t) * (start - c)
}
