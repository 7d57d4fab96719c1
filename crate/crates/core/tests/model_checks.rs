use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trustfed_core::dataset::LabeledSet;
use trustfed_core::metrics::evaluate_model;
use trustfed_core::model::{
    adam_step, class_weights, init_model, loss_and_gradient, train_local, AdamState, LayerLayout, Matrix,
    ModelParams, TrainOptions,
};

fn tiny_layout() -> LayerLayout {
    LayerLayout {
        input_dim: 3,
        hidden_dims: vec![4, 3],
        output_dim: 5,
        dropout_rate: 0.0,
    }
}

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_model(&tiny_layout(), &mut rng).unwrap();
        // nonzero biases so every term of the gradient is exercised
        let mut values = params.values().to_vec();
        values.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        let params = ModelParams::from_vec(tiny_layout(), values).unwrap();
        let batch = random_batch(&mut rng, 5, 3);
        let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..5)).collect();
        let cw: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..2.0)).collect();
        let (_, grad) = loss_and_gradient(&params, &batch, &labels, &cw).unwrap();
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus.values_mut()[i] += h;
            let mut minus = params.clone();
            minus.values_mut()[i] -= h;
            let lp = loss_and_gradient(&plus, &batch, &labels, &cw).unwrap().0;
            let lm = loss_and_gradient(&minus, &batch, &labels, &cw).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            let scale = numeric.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max((numeric - grad[i]).abs() / scale);
        }
    }
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn first_adam_step_moves_by_learning_rate_times_sign() {
    let layout = LayerLayout {
        input_dim: 1,
        hidden_dims: vec![],
        output_dim: 2,
        dropout_rate: 0.0,
    };
    let start = vec![0.5, -0.25, 0.0, 1.0];
    let mut params = ModelParams::from_vec(layout, start.clone()).unwrap();
    let grad = [0.3, -2.0, 1e-3, 0.0];
    let mut state = AdamState::new(4, 0.001);
    adam_step(&mut state, &mut params, &grad).unwrap();
    // m_hat = g and v_hat = g^2 after one bias-corrected step
    for i in 0..4 {
        let g: f64 = grad[i];
        let expected = start[i] - 0.001 * g / (g.abs() + 1e-8);
        assert!((params.values()[i] - expected).abs() < 1e-15);
    }
    assert_eq!(state.t, 1);
}

fn separable_toy(n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = i % 2;
        let centre = if y == 0 { -2.0 } else { 2.0 };
        rows.push(vec![centre + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0)]);
        labels.push(y);
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

#[test]
fn training_converges_on_separable_toy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, y) = separable_toy(200, &mut rng);
    let layout = LayerLayout {
        input_dim: 2,
        hidden_dims: vec![8],
        output_dim: 2,
        dropout_rate: 0.0,
    };
    let start = init_model(&layout, &mut rng).unwrap();
    let cw = class_weights(&y, 2);
    let initial = loss_and_gradient(&start, &x, &y, &cw).unwrap().0;
    let options = TrainOptions {
        epochs: 50,
        ..TrainOptions::default()
    };
    let trained = train_local(&start, &x, &y, &options, &mut rng).unwrap();
    let loss = loss_and_gradient(&trained, &x, &y, &cw).unwrap().0;
    assert!(loss < 0.1, "loss {loss} (from {initial})");

    let zero = TrainOptions {
        epochs: 0,
        ..TrainOptions::default()
    };
    assert_eq!(train_local(&start, &x, &y, &zero, &mut rng).unwrap(), start);
}

#[test]
fn constant_model_scores_one_seventh() {
    let layout = LayerLayout {
        input_dim: 4,
        hidden_dims: vec![3],
        output_dim: 7,
        dropout_rate: 0.2,
    };
    // all-zero weights give uniform probabilities, so argmax is always class 0
    let params = ModelParams::zeros(layout);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let features = random_batch(&mut rng, 70, 4);
    let labels: Vec<usize> = (0..70).map(|i| i % 7).collect();
    let data = LabeledSet::new(features, labels, 7).unwrap();
    let m = evaluate_model(&params, &data).unwrap();
    assert!((m.accuracy - 1.0 / 7.0).abs() < 1e-12);
    assert_eq!(m, evaluate_model(&params, &data).unwrap());
}

#[test]
fn memorised_set_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|i| {
            let mut r = vec![0.0; 5];
            r[i] = 3.0;
            r
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<usize> = (0..5).collect();
    let layout = LayerLayout {
        input_dim: 5,
        hidden_dims: vec![16],
        output_dim: 5,
        dropout_rate: 0.0,
    };
    let options = TrainOptions {
        epochs: 400,
        batch_size: 5,
        lr: 0.01,
    };
    let trained = train_local(&init_model(&layout, &mut rng).unwrap(), &x, &y, &options, &mut rng).unwrap();
    let m = evaluate_model(&trained, &LabeledSet::new(x, y, 5).unwrap()).unwrap();
    assert_eq!(m.as_array(), [1.0; 4]);
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = init_model(&LayerLayout::new(10, 7), &mut rng).unwrap();
    let mut bytes = Vec::new();
    params.write_checkpoint(&mut bytes).unwrap();
    assert_eq!(ModelParams::read_checkpoint(bytes.as_slice()).unwrap(), params);
    assert!(ModelParams::read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
}
