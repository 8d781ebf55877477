//! Train the three detector families on synthetic benchmarks with known
//! structure.
//!
//! Run: cargo run --release --example train_classifiers

use ndarray::Array2;
use nid_augment::classifiers::{
    predict, train_dnn_classifier, train_logreg, train_svm, Model, TrainConfig,
};
use nid_augment::rng::RandomSource;

/// Two unit-variance Gaussians centred two apart: the optimal accuracy is
/// the normal CDF at half the separation, about 84.1%.
fn two_gaussians(rng: &mut RandomSource, n: usize) -> (Array2<f64>, Vec<bool>) {
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        x[(i, 0)] = rng.sample_gaussian(if positive { 1.0 } else { -1.0 }, 1.0).unwrap();
        x[(i, 1)] = rng.sample_gaussian(0.0, 1.0).unwrap();
        y.push(positive);
    }
    (x, y)
}

fn rings(rng: &mut RandomSource, n: usize) -> (Array2<f64>, Vec<usize>) {
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 3;
        let radius = [0.7, 2.2, 3.7][class] + 0.4 * rng.uniform();
        let angle = rng.uniform() * std::f64::consts::TAU;
        x[(i, 0)] = radius * angle.cos();
        x[(i, 1)] = radius * angle.sin();
        y.push(class);
    }
    (x, y)
}

fn binary_accuracy(labels: &[usize], truth: &[bool]) -> f64 {
    labels
        .iter()
        .zip(truth)
        .filter(|(&l, &t)| (l == 1) == t)
        .count() as f64
        / truth.len() as f64
}

fn main() {
    let mut rng = RandomSource::new(31);

    // linear models against the analytic optimum
    let (train_x, train_y) = two_gaussians(&mut rng, 4000);
    let (test_x, test_y) = two_gaussians(&mut rng, 10_000);
    let cfg = TrainConfig::linear();

    let logreg = train_logreg(&train_x, &train_y, &cfg, &mut rng).unwrap();
    let (labels, _) = predict(&Model::Binary(logreg), &test_x).unwrap();
    println!(
        "logistic regression: accuracy {:.4} (optimum ~0.8413)",
        binary_accuracy(&labels, &test_y)
    );

    let svm = train_svm(&train_x, &train_y, &cfg, &mut rng).unwrap();
    let (labels, _) = predict(&Model::Binary(svm), &test_x).unwrap();
    println!(
        "linear svm:          accuracy {:.4} (optimum ~0.8413)",
        binary_accuracy(&labels, &test_y)
    );

    // the DNN separates what a linear model cannot
    let (ring_train_x, ring_train_y) = rings(&mut rng, 3000);
    let (ring_test_x, ring_test_y) = rings(&mut rng, 3000);
    let dnn_cfg = TrainConfig {
        epochs: 80,
        ..TrainConfig::dnn()
    };
    let dnn = train_dnn_classifier(&ring_train_x, &ring_train_y, 3, &dnn_cfg, &mut rng).unwrap();
    let (labels, scores) = predict(&Model::Dnn(dnn), &ring_test_x).unwrap();
    let acc = labels
        .iter()
        .zip(&ring_test_y)
        .filter(|(a, b)| a == b)
        .count() as f64
        / ring_test_y.len() as f64;
    println!("dnn on 3 rings:      accuracy {acc:.4}");
    println!(
        "softmax rows sum to one: {}",
        scores.rows().into_iter().all(|r| (r.sum() - 1.0).abs() < 1e-12)
    );
}
