mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trustfed_core::topsis::{topsis_scores, CriteriaRow, CriteriaWeights, DecisionMatrix};
use trustfed_core::ClientId;

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<CriteriaRow>, [f64; 4]) {
    let n = rng.random_range(1..=8);
    let mut rows: Vec<CriteriaRow> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect();
    // degenerate shapes show up often enough to matter
    match rng.random_range(0..6) {
        0 => {
            let j = rng.random_range(0..4);
            rows.iter_mut().for_each(|r| r[j] = 0.0);
        }
        1 => {
            let first = rows[0];
            rows.iter_mut().for_each(|r| *r = first);
        }
        2 if n > 1 => rows[1] = rows[0],
        _ => {}
    }
    let raw: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() + 1e-3);
    let sum: f64 = raw.iter().sum();
    let mut w = raw.map(|x| x / sum);
    w[3] = 1.0 - w[0] - w[1] - w[2];
    (rows, w)
}

#[test]
fn matches_oracle_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (rows, w) = random_case(&mut rng);
        let ids = (0..rows.len() as u32).map(ClientId).collect();
        let m = DecisionMatrix::new(ids, rows.clone()).unwrap();
        let got = topsis_scores(&m, &CriteriaWeights::new(w).unwrap());
        let plain: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let want = oracles::oracle_topsis(&plain, &w);
        for (i, t) in want.iter().enumerate() {
            worst = worst.max((got.get(ClientId(i as u32)).unwrap() - t).abs());
        }
    }
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn best_and_worst_clients() {
    let m = DecisionMatrix::new(
        vec![ClientId(3), ClientId(9)],
        vec![[0.9, 0.8, 0.85, 0.82], [0.1, 0.2, 0.1, 0.15]],
    )
    .unwrap();
    let t = topsis_scores(&m, &CriteriaWeights::default());
    assert_eq!(t.get(ClientId(3)), Some(1.0));
    assert_eq!(t.get(ClientId(9)), Some(0.0));
}
