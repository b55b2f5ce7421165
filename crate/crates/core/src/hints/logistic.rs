//! Binary logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::features::SparseRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// Minimizes mean log-loss plus `l2 / 2 * |w|^2`, starting from zero.
    pub fn fit(rows: &[SparseRow], labels: &[bool], dim: usize, params: &TrainParams) -> Self {
        assert_eq!(rows.len(), labels.len());
        let mut model = Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        };
        if rows.is_empty() {
            return model;
        }
        let n = rows.len() as f64;
        let mut grad = vec![0.0; dim];
        for _ in 0..params.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_bias = 0.0;
            for (row, &label) in rows.iter().zip(labels) {
                let err = model.probability(row) - if label { 1.0 } else { 0.0 };
                grad_bias += err;
                for &(i, x) in row {
                    grad[i] += err * x;
                }
            }
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= params.learning_rate * (g / n + params.l2 * *w);
            }
            model.bias -= params.learning_rate * grad_bias / n;
        }
        model
    }

    pub fn probability(&self, row: &SparseRow) -> f64 {
        let z = row.iter().fold(self.bias, |acc, &(i, x)| acc + self.weights[i] * x);
        sigmoid(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_a_single_trigger_feature() {
        let rows: Vec<SparseRow> = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0), (1, 1.0)], vec![]];
        let labels = [true, false, true, false];
        let model = LogisticModel::fit(&rows, &labels, 2, &TrainParams::default());
        for (row, &label) in rows.iter().zip(&labels) {
            assert_eq!(model.probability(row) > 0.5, label);
        }
    }

    #[test]
    fn all_negative_collapses_to_false() {
        let rows: Vec<SparseRow> = vec![vec![(0, 1.0)], vec![(1, 1.0)]];
        let model = LogisticModel::fit(&rows, &[false, false], 2, &TrainParams::default());
        assert!(model.probability(&vec![(0, 1.0), (1, 1.0)]) < 0.5);
        assert!(model.probability(&vec![]) < 0.5);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!(sigmoid(1000.0) <= 1.0);
    }
}
