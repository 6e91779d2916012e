//! Evaluation metrics: classification error rate, MAE, rank-based AUC.

use super::TrainError;
use crate::diffcore::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ErrorRate,
    Mae,
    Auc,
}

impl Metric {
    pub fn score(&self, predictions: &Tensor, targets: &Tensor) -> Result<f64, TrainError> {
        match self {
            Metric::ErrorRate => error_rate(predictions, targets),
            Metric::Mae => mae(predictions, targets),
            Metric::Auc => auc(predictions, targets),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::ErrorRate => write!(f, "error-rate"),
            Metric::Mae => write!(f, "mae"),
            Metric::Auc => write!(f, "auc"),
        }
    }
}

/// Per-domain scores plus their mean.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub metric: Metric,
    /// `(timestamp, score)` per test domain, in time order.
    pub per_domain: Vec<(f64, f64)>,
    pub aggregate: f64,
}

fn check_same_shape(predictions: &Tensor, targets: &Tensor) -> Result<(), TrainError> {
    if predictions.shape() != targets.shape() {
        return Err(TrainError::Invalid(format!(
            "predictions {:?} and targets {:?} differ in shape",
            predictions.shape(),
            targets.shape()
        )));
    }
    if predictions.is_empty() {
        return Err(TrainError::Invalid("no predictions to score".into()));
    }
    Ok(())
}

/// Misclassification percentage at the 0.5 probability threshold.
pub fn error_rate(predictions: &Tensor, targets: &Tensor) -> Result<f64, TrainError> {
    check_same_shape(predictions, targets)?;
    let wrong = predictions
        .data()
        .iter()
        .zip(targets.data())
        .filter(|(p, y)| f64::from(**p >= 0.5) != **y)
        .count();
    Ok(100.0 * wrong as f64 / predictions.len() as f64)
}

/// Mean absolute error.
pub fn mae(predictions: &Tensor, targets: &Tensor) -> Result<f64, TrainError> {
    check_same_shape(predictions, targets)?;
    let total: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, y)| (p - y).abs())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Area under the ROC curve via average ranks (ties share their rank).
pub fn auc(predictions: &Tensor, targets: &Tensor) -> Result<f64, TrainError> {
    check_same_shape(predictions, targets)?;
    let scores = predictions.data();
    let labels = targets.data();
    let n_pos = labels.iter().filter(|y| **y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(TrainError::Invalid(
            "AUC is undefined with a single class".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg_rank;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(y, _)| **y == 1.0)
        .map(|(_, r)| *r)
        .sum();
    let np = n_pos as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn col(v: Vec<f64>) -> Tensor {
        let n = v.len();
        Tensor::new(n, 1, v).unwrap()
    }

    #[test]
    fn perfect_predictions_have_zero_error() {
        let p = col(vec![0.9, 0.1, 0.8, 0.2]);
        let y = col(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(error_rate(&p, &y).unwrap(), 0.0);
        assert_eq!(auc(&p, &y).unwrap(), 1.0);
    }

    #[test]
    fn all_wrong_is_hundred_percent() {
        let p = col(vec![0.9, 0.1]);
        let y = col(vec![0.0, 1.0]);
        assert_eq!(error_rate(&p, &y).unwrap(), 100.0);
    }

    #[test]
    fn mae_matches_hand_computation() {
        let p = col(vec![1.0, 2.0, 4.0]);
        let y = col(vec![1.5, 2.0, 2.0]);
        assert!((mae(&p, &y).unwrap() - (0.5 + 0.0 + 2.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_of_random_scores_is_near_half() {
        // permutation oracle: independent O(n^2) pair counting, plus the
        // statistical expectation of ~0.5 on balanced random labels
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 1000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        let p = col(scores.clone());
        let y = col(labels.clone());
        let fast = auc(&p, &y).unwrap();
        assert!((fast - 0.5).abs() < 0.05, "{fast}");

        let mut concordant = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1.0 && labels[j] == 0.0 {
                    total += 1.0;
                    if scores[i] > scores[j] {
                        concordant += 1.0;
                    } else if scores[i] == scores[j] {
                        concordant += 0.5;
                    }
                }
            }
        }
        let oracle = concordant / total;
        assert!((fast - oracle).abs() < 1e-12, "{fast} vs {oracle}");
    }

    #[test]
    fn auc_single_class_is_an_error() {
        let p = col(vec![0.4, 0.6]);
        let y = col(vec![1.0, 1.0]);
        assert!(auc(&p, &y).is_err());
    }
}
