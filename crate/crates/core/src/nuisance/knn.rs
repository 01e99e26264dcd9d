use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};

use super::linear::Standardizer;
use crate::error::{Error, Result};

/// k-nearest-neighbour regression on z-scored features. Distance ties are
/// broken by training row order.
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    scaler: Standardizer,
    /// Standardized training rows, row-major.
    train: Vec<f64>,
    targets: Vec<f64>,
    k: usize,
}

impl KnnRegressor {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidLearner("k-NN needs k >= 1".into()));
        }
        let scaler = Standardizer::fit(x);
        let mut train = Vec::with_capacity(x.len());
        for row in x.rows() {
            train.extend(scaler.transform_row(row));
        }
        Ok(Self { scaler, train, targets: y.to_vec(), k: k.min(y.len()) })
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let q = self.scaler.transform_row(x);
        let d = q.len();
        let mut dist: Vec<(f64, usize)> = self
            .train
            .chunks_exact(d)
            .enumerate()
            .map(|(i, row)| (row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_distance);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by_key(|&(_, i)| i);
        dist.iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / self.k as f64
    }
}
