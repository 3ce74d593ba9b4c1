//! Correlation and class-weighted logistic regression.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("inputs have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} observations are required, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("input has zero variance")]
    DegenerateInput,
    #[error("only one class present in the labels")]
    SingleClass,
    #[error("class {0} has fewer than two examples")]
    TooFewPerClass(bool),
    #[error("features contain a non-finite value")]
    NonFinite,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided permutation p-value.
    pub p: f64,
    pub n: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: x.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(StatsError::DegenerateInput);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson r with a two-sided permutation p-value: exact over all
/// orderings when there are at most `permutations` of them, otherwise
/// `(1 + hits) / (1 + permutations)` over seeded random shuffles.
pub fn pearson_with(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { needed: 3, got: x.len() });
    }
    let r = pearson_r(x, y)?;
    let observed = r.abs() - 1e-12;
    let n = x.len();
    let total_orders = (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k).filter(|&v| v <= permutations));

    let p = if let Some(total) = total_orders {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut hits = 0usize;
        let mut yp = vec![0.0; n];
        loop {
            for (dst, &i) in yp.iter_mut().zip(&perm) {
                *dst = y[i];
            }
            if pearson_r(x, &yp)?.abs() >= observed {
                hits += 1;
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        hits as f64 / total as f64
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut yp = y.to_vec();
        let mut hits = 0usize;
        for _ in 0..permutations {
            yp.shuffle(&mut rng);
            if pearson_r(x, &yp)?.abs() >= observed {
                hits += 1;
            }
        }
        (1 + hits) as f64 / (1 + permutations) as f64
    };
    Ok(Correlation { r, p, n })
}

pub fn pearson(x: &[f64], y: &[f64], seed: u64) -> Result<Correlation, StatsError> {
    pearson_with(x, y, DEFAULT_PERMUTATIONS, seed)
}

/// Lexicographic successor; false once the last ordering is reached.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Ranks with ties sharing their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64], seed: u64) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&ranks(x), &ranks(y), seed)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5_000,
            tolerance: 1e-6,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Weights of the negative and positive class.
    pub class_weights: [f64; 2],
    pub feature_names: Vec<String>,
    pub iterations: usize,
}

/// Class weights `n / (2 n_c)`.
pub fn balanced_class_weights(labels: &[bool]) -> [f64; 2] {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    [n / (2.0 * (n - pos)), n / (2.0 * pos)]
}

/// Class-weighted mean negative log-likelihood.
pub fn weighted_nll(weights: &[f64], bias: f64, features: &[Vec<f64>], labels: &[bool], class_weights: [f64; 2]) -> f64 {
    let mut total = 0.0;
    let mut norm = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let c = class_weights[usize::from(y)];
        total += c * if y { softplus(-z) } else { softplus(z) };
        norm += c;
    }
    total / norm
}

/// Gradient of [`weighted_nll`] with respect to `(weights, bias)`; the bias
/// component is last.
pub fn weighted_nll_gradient(
    weights: &[f64],
    bias: f64,
    features: &[Vec<f64>],
    labels: &[bool],
    class_weights: [f64; 2],
) -> Vec<f64> {
    let d = weights.len();
    let mut grad = vec![0.0; d + 1];
    let mut norm = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let c = class_weights[usize::from(y)];
        let residual = c * (sigmoid(z) - f64::from(u8::from(y)));
        for (g, v) in grad.iter_mut().zip(x) {
            *g += residual * v;
        }
        grad[d] += residual;
        norm += c;
    }
    grad.iter_mut().for_each(|g| *g /= norm);
    grad
}

fn check_features(features: &[Vec<f64>], dim: usize) -> Result<(), StatsError> {
    for row in features {
        if row.len() != dim {
            return Err(StatsError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    Ok(())
}

/// Full-batch gradient descent with backtracking line search on the
/// class-weighted log-loss. Features are standardized internally; the
/// returned model works on raw features.
pub fn logistic_fit(
    features: &[Vec<f64>],
    labels: &[bool],
    balance: bool,
    feature_names: &[String],
    config: &LogisticConfig,
) -> Result<RegressionModel, StatsError> {
    if features.len() != labels.len() {
        return Err(StatsError::LengthMismatch(features.len(), labels.len()));
    }
    let dim = features.first().map_or(0, Vec::len);
    check_features(features, dim)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(StatsError::SingleClass);
    }
    for (class, count) in [(false, labels.len() - pos), (true, pos)] {
        if count < 2 {
            return Err(StatsError::TooFewPerClass(class));
        }
    }
    let class_weights = if balance {
        balanced_class_weights(labels)
    } else {
        [1.0, 1.0]
    };

    let n = features.len() as f64;
    let mu: Vec<f64> = (0..dim).map(|j| features.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sigma: Vec<f64> = (0..dim)
        .map(|j| {
            let var = features.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| (v - mu[j]) / sigma[j]).collect())
        .collect();

    let mut params = vec![0.0; dim + 1];
    let loss_at = |p: &[f64]| weighted_nll(&p[..dim], p[dim], &z, labels, class_weights);
    let mut loss = loss_at(&params);
    let mut step = config.initial_step;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let grad = weighted_nll_gradient(&params[..dim], params[dim], &z, labels, class_weights);
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2.sqrt() < config.tolerance {
            break;
        }
        iterations += 1;
        // Armijo backtracking, then let the step grow again
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let trial_loss = loss_at(&trial);
            if trial_loss <= loss - 0.5 * step * norm2 {
                params = trial;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (step * 2.0).min(1e6);
    }

    let weights: Vec<f64> = (0..dim).map(|j| params[j] / sigma[j]).collect();
    let bias = params[dim] - (0..dim).map(|j| params[j] * mu[j] / sigma[j]).sum::<f64>();
    Ok(RegressionModel {
        weights,
        bias,
        class_weights,
        feature_names: feature_names.to_vec(),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<bool>,
    pub probabilities: Vec<f64>,
}

pub fn logistic_predict(model: &RegressionModel, features: &[Vec<f64>]) -> Result<Prediction, StatsError> {
    check_features(features, model.weights.len())?;
    let probabilities: Vec<f64> = features
        .iter()
        .map(|x| sigmoid(model.bias + model.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()))
        .collect();
    Ok(Prediction {
        labels: probabilities.iter().map(|&p| p >= 0.5).collect(),
        probabilities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Metrics of the positive class.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub negative: ClassMetrics,
    pub positive: ClassMetrics,
    pub n: usize,
}

fn class_metrics(predicted: &[bool], actual: &[bool], class: bool) -> ClassMetrics {
    let tp = predicted.iter().zip(actual).filter(|(p, a)| **p == class && **a == class).count() as f64;
    let pp = predicted.iter().filter(|&&p| p == class).count() as f64;
    let support = actual.iter().filter(|&&a| a == class).count();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let precision = ratio(tp, pp);
    let recall = ratio(tp, support as f64);
    ClassMetrics {
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
        support,
    }
}

/// Accuracy and per-class precision, recall and F1. Undefined ratios are 0.
pub fn metrics(predicted: &[bool], actual: &[bool]) -> Result<Metrics, StatsError> {
    if predicted.len() != actual.len() {
        return Err(StatsError::LengthMismatch(predicted.len(), actual.len()));
    }
    if actual.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let correct = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    let positive = class_metrics(predicted, actual, true);
    Ok(Metrics {
        accuracy: correct as f64 / actual.len() as f64,
        precision: positive.precision,
        recall: positive.recall,
        f1: positive.f1,
        negative: class_metrics(predicted, actual, false),
        positive,
        n: actual.len(),
    })
}

/// Seeded shuffle of `0..n` cut into train and test indices.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64 * train_fraction.clamp(0.0, 1.0)).round() as usize).min(n);
    let test = idx.split_off(cut);
    (idx, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_correlation() {
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn perfect_line_hits_permutation_floor() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let c = pearson(&x, &y, 3).unwrap();
        assert_eq!(c.r, 1.0);
        assert_eq!(c.p, 1.0 / (1.0 + DEFAULT_PERMUTATIONS as f64));
        // exact enumeration: identity and reversal reach |r| = 1
        let c = pearson(&x[..5], &y[..5], 3).unwrap();
        assert!((c.p - 2.0 / 120.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 0), Err(StatsError::DegenerateInput));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0], 0), Err(StatsError::TooFew { .. })));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0], 0), Err(StatsError::LengthMismatch(3, 2))));
    }

    #[test]
    fn null_case_is_not_significant() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let c = pearson(&x, &y, 1).unwrap();
        assert!(c.r.abs() < 0.4);
        assert!(c.p > 0.05);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn separable_data_is_classified_perfectly() {
        let x: Vec<Vec<f64>> = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
        let y = [false, false, false, true, true, true];
        let model = logistic_fit(&x, &y, true, &["x".into()], &LogisticConfig::default()).unwrap();
        let pred = logistic_predict(&model, &x).unwrap();
        assert_eq!(metrics(&pred.labels, &y).unwrap().accuracy, 1.0);
    }

    #[test]
    fn boundary_and_margin() {
        let model = RegressionModel {
            weights: vec![2.0],
            bias: -4.0,
            class_weights: [1.0, 1.0],
            feature_names: vec!["x".into()],
            iterations: 0,
        };
        let p = logistic_predict(&model, &[vec![2.0], vec![100.0]]).unwrap();
        assert_eq!(p.probabilities[0], 0.5);
        assert!(p.labels[0]);
        assert!(p.probabilities[1] > 1.0 - 1e-12);
        assert!(matches!(
            logistic_predict(&model, &[vec![1.0, 2.0]]),
            Err(StatsError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn fit_errors() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let cfg = LogisticConfig::default();
        assert_eq!(logistic_fit(&x, &[true; 3], true, &[], &cfg), Err(StatsError::SingleClass));
        assert_eq!(
            logistic_fit(&x, &[true, false, false], true, &[], &cfg),
            Err(StatsError::TooFewPerClass(true))
        );
        let bad = vec![vec![1.0], vec![f64::NAN], vec![3.0], vec![4.0]];
        assert_eq!(
            logistic_fit(&bad, &[true, true, false, false], true, &[], &cfg),
            Err(StatsError::NonFinite)
        );
    }

    #[test]
    fn metrics_by_hand() {
        let predicted = [true, true, false, false, true];
        let actual = [true, false, false, true, true];
        let m = metrics(&predicted, &actual).unwrap();
        assert!((m.accuracy - 0.6).abs() < 1e-12);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.negative.precision - 0.5).abs() < 1e-12);
        assert_eq!(m.negative.support, 2);
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let (train, test) = train_test_split(10, 0.8, 5);
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(train_test_split(10, 0.8, 5), (train.clone(), test.clone()));
        let mut all: Vec<usize> = train.into_iter().chain(test).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
