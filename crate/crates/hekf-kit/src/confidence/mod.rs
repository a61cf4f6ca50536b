//! Confidence in the soft sensor from nearest-neighbor distances.
//!
//! The current standardized network input is compared to the training inputs;
//! the mean squared Euclidean distance to the K nearest training points maps
//! linearly to a confidence `tau` in `[0, 1]`, reaching zero at the distance
//! threshold `d_max`. A histogram-binning baseline is included for
//! comparison; unlike the nearest-neighbor measure it jumps at bin borders.

mod kdtree;

pub use kdtree::{brute_force_knn, KdTree};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::standardize::Standardizer;

/// Default neighbor count.
pub const DEFAULT_K: usize = 25;
/// Percentile of the leave-one-out neighbor distance used for `d_max` when no
/// explicit threshold is configured.
pub const DMAX_PERCENTILE: f64 = 0.95;

/// Distance and confidence of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSample {
    /// Mean squared standardized distance to the K nearest training inputs.
    pub distance: f64,
    /// Confidence in `[0, 1]`.
    pub tau: f64,
}

/// Standardized training-input store with an exact nearest-neighbor index.
#[derive(Debug, Clone)]
pub struct ConfidenceModel {
    standardizer: Arc<Standardizer>,
    tree: KdTree,
    k: usize,
    d_max: f64,
}

/// Serializable form of [`ConfidenceModel`]; the search index is rebuilt on
/// load.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct ConfidenceModelData {
    pub standardizer: Standardizer,
    pub standardized_inputs: Vec<Vec<f64>>,
    pub k: usize,
    pub d_max: f64,
}

impl ConfidenceModel {
    /// Build from raw (SI-unit) training inputs sharing the soft sensor's
    /// input standardizer. `d_max` defaults to the 95th percentile of the
    /// leave-one-out mean-K-distance over the training set.
    pub fn build(
        training_inputs: &[Vec<f64>],
        standardizer: Arc<Standardizer>,
        k: usize,
        d_max: Option<f64>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("neighbor count K must be at least 1".into()));
        }
        if training_inputs.len() < k {
            return Err(Error::Config(format!(
                "need at least K = {k} training inputs, got {}",
                training_inputs.len()
            )));
        }
        let standardized: Vec<Vec<f64>> = training_inputs
            .iter()
            .map(|row| standardizer.apply_vec(row))
            .collect();
        let tree = KdTree::build(standardized);
        let mut model = Self {
            standardizer,
            tree,
            k,
            d_max: f64::NAN,
        };
        model.d_max = match d_max {
            Some(v) if v > 0.0 => v,
            Some(v) => {
                return Err(Error::Config(format!("d_max must be positive, got {v}")));
            }
            None => model.leave_one_out_threshold()?,
        };
        Ok(model)
    }

    fn leave_one_out_threshold(&self) -> Result<f64> {
        let n = self.tree.len();
        if n < self.k + 1 {
            return Err(Error::Config(format!(
                "leave-one-out threshold needs more than K = {} points, got {n}",
                self.k
            )));
        }
        let mut loo: Vec<f64> = (0..n)
            .map(|i| self.mean_distance_standardized(self.tree.point(i), Some(i)))
            .collect();
        loo.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // nearest-rank percentile
        let rank = ((DMAX_PERCENTILE * n as f64).ceil() as usize).clamp(1, n) - 1;
        let d = loo[rank];
        if !(d > 0.0) {
            return Err(Error::Config(
                "degenerate training set: leave-one-out threshold is zero".into(),
            ));
        }
        Ok(d)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn standardizer(&self) -> &Arc<Standardizer> {
        &self.standardizer
    }

    fn mean_distance_standardized(&self, query: &[f64], skip: Option<usize>) -> f64 {
        let neighbors = self.tree.knn(query, self.k, skip);
        neighbors.iter().map(|(_, d)| d).sum::<f64>() / neighbors.len() as f64
    }

    /// Mean squared standardized distance of a raw (SI-unit) input to its K
    /// nearest training inputs.
    pub fn mean_knn_distance(&self, raw_input: &[f64]) -> f64 {
        let q = self.standardizer.apply_vec(raw_input);
        self.mean_distance_standardized(&q, None)
    }

    /// Distance and confidence of one raw input.
    pub fn evaluate(&self, raw_input: &[f64]) -> ConfidenceSample {
        let distance = self.mean_knn_distance(raw_input);
        ConfidenceSample {
            distance,
            tau: confidence(distance, self.d_max),
        }
    }

    pub fn to_data(&self) -> ConfidenceModelData {
        ConfidenceModelData {
            standardizer: (*self.standardizer).clone(),
            standardized_inputs: (0..self.tree.len())
                .map(|i| self.tree.point(i).to_vec())
                .collect(),
            k: self.k,
            d_max: self.d_max,
        }
    }

    pub fn from_data(data: ConfidenceModelData) -> Result<Self> {
        if data.standardized_inputs.len() < data.k || data.k == 0 {
            return Err(Error::Config("inconsistent serialized confidence model".into()));
        }
        if !(data.d_max > 0.0) {
            return Err(Error::Config(format!(
                "serialized d_max must be positive, got {}",
                data.d_max
            )));
        }
        Ok(Self {
            standardizer: Arc::new(data.standardizer),
            tree: KdTree::build(data.standardized_inputs),
            k: data.k,
            d_max: data.d_max,
        })
    }
}

/// Map a mean neighbor distance to a confidence:
/// `(d_max - d) / d_max` for `d <= d_max`, zero otherwise.
pub fn confidence(d: f64, d_max: f64) -> f64 {
    debug_assert!(d >= 0.0, "distance must be non-negative");
    if d <= d_max {
        (d_max - d) / d_max
    } else {
        0.0
    }
}

/// Histogram-binning confidence baseline.
///
/// Training inputs are counted into `n_grid` bins per channel; a query's
/// confidence is its cell count normalized by the largest cell count, and
/// zero outside the binned range.
#[derive(Debug, Clone)]
pub struct HistogramConfidence {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n_grid: usize,
    counts: Vec<u32>,
    max_count: u32,
}

impl HistogramConfidence {
    pub fn build(standardized_inputs: &[Vec<f64>], n_grid: usize) -> Result<Self> {
        if n_grid == 0 {
            return Err(Error::Config("n_grid must be at least 1".into()));
        }
        let Some(first) = standardized_inputs.first() else {
            return Err(Error::Config("empty training set".into()));
        };
        let dim = first.len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in standardized_inputs {
            for d in 0..dim {
                lo[d] = lo[d].min(row[d]);
                hi[d] = hi[d].max(row[d]);
            }
        }
        let cells = n_grid.pow(dim as u32);
        let mut counts = vec![0u32; cells];
        let mut this = Self {
            lo,
            hi,
            n_grid,
            counts: Vec::new(),
            max_count: 0,
        };
        for row in standardized_inputs {
            let cell = this
                .cell_of(row)
                .expect("training point must fall inside its own range");
            counts[cell] += 1;
        }
        this.max_count = counts.iter().copied().max().unwrap_or(0);
        this.counts = counts;
        Ok(this)
    }

    fn cell_of(&self, query: &[f64]) -> Option<usize> {
        let mut cell = 0usize;
        for d in 0..self.lo.len() {
            let span = self.hi[d] - self.lo[d];
            if query[d] < self.lo[d] || query[d] > self.hi[d] {
                return None;
            }
            let frac = if span > 0.0 {
                (query[d] - self.lo[d]) / span
            } else {
                0.0
            };
            let bin = ((frac * self.n_grid as f64) as usize).min(self.n_grid - 1);
            cell = cell * self.n_grid + bin;
        }
        Some(cell)
    }

    pub fn tau(&self, query: &[f64]) -> f64 {
        match self.cell_of(query) {
            Some(cell) if self.max_count > 0 => {
                f64::from(self.counts[cell]) / f64::from(self.max_count)
            }
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn identity_standardizer(dim: usize) -> Arc<Standardizer> {
        // two-point fit with unit spread per channel
        let rows = vec![vec![-1.0; dim], vec![1.0; dim]];
        Arc::new(Standardizer::fit(&rows).unwrap())
    }

    #[test]
    fn confidence_formula_cases() {
        assert_eq!(confidence(0.0, 2.0), 1.0);
        assert_eq!(confidence(2.0, 2.0), 0.0);
        assert_eq!(confidence(4.0, 2.0), 0.0);
        assert!((confidence(1.0, 2.0) - 0.5).abs() < 1e-15);
        // continuity at d_max
        let eps = 1e-12;
        assert!(confidence(2.0 - eps, 2.0) < 1e-11);
    }

    #[test]
    fn query_on_training_point_has_zero_distance() {
        let std = identity_standardizer(3);
        let inputs = vec![vec![0.5, 0.5, 0.5]; 10];
        let model = ConfidenceModel::build(&inputs, std, 1, Some(1.0)).unwrap();
        let s = model.evaluate(&[0.5, 0.5, 0.5]);
        assert_eq!(s.distance, 0.0);
        assert_eq!(s.tau, 1.0);
    }

    #[test]
    fn two_point_hand_arithmetic() {
        // standardized distances 1 and 2 -> mean squared distance (1+4)/2
        let std = identity_standardizer(1);
        let inputs = vec![vec![1.0], vec![2.0]];
        let model = ConfidenceModel::build(&inputs, std, 2, Some(10.0)).unwrap();
        let d = model.mean_knn_distance(&[0.0]);
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_recomputation() {
        let std = identity_standardizer(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let inputs: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let model = ConfidenceModel::build(&inputs, std.clone(), 25, Some(1.0)).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let got = model.mean_knn_distance(&q);
            let zq = std.apply_vec(&q);
            let standardized: Vec<Vec<f64>> = inputs.iter().map(|r| std.apply_vec(r)).collect();
            let want = brute_force_knn(&standardized, &zq, 25, None)
                .iter()
                .map(|(_, d)| d)
                .sum::<f64>()
                / 25.0;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_too_few_points() {
        let std = identity_standardizer(2);
        let inputs = vec![vec![0.0, 0.0]; 3];
        assert!(ConfidenceModel::build(&inputs, std, 5, Some(1.0)).is_err());
    }

    #[test]
    fn leave_one_out_threshold_is_positive_and_reasonable() {
        let std = identity_standardizer(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let inputs: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let model = ConfidenceModel::build(&inputs, std, 10, None).unwrap();
        assert!(model.d_max() > 0.0);
        // in-distribution queries should mostly have positive confidence
        let n_conf = inputs
            .iter()
            .filter(|q| model.evaluate(q).tau > 0.0)
            .count();
        assert!(n_conf > inputs.len() * 8 / 10, "{n_conf}");
    }

    #[test]
    fn serialization_round_trip() {
        let std = identity_standardizer(2);
        let inputs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1, -0.3]).collect();
        let model = ConfidenceModel::build(&inputs, std, 4, None).unwrap();
        let json = serde_json::to_string(&model.to_data()).unwrap();
        let back = ConfidenceModel::from_data(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.k(), model.k());
        assert_eq!(back.d_max(), model.d_max());
        let q = vec![1.3, 0.2];
        assert_eq!(back.mean_knn_distance(&q), model.mean_knn_distance(&q));
    }

    #[test]
    fn histogram_single_cell() {
        let inputs = vec![vec![0.1, 0.1]; 20];
        let h = HistogramConfidence::build(&inputs, 1).unwrap();
        assert_eq!(h.tau(&[0.1, 0.1]), 1.0);
        assert_eq!(h.tau(&[5.0, 5.0]), 0.0); // outside range
    }

    #[test]
    fn histogram_empty_cell_is_zero() {
        // two clusters in opposite corners leave the middle cells empty
        let mut inputs = vec![vec![0.0, 0.0]; 10];
        inputs.extend(vec![vec![1.0, 1.0]; 10]);
        let h = HistogramConfidence::build(&inputs, 4).unwrap();
        assert_eq!(h.tau(&[0.5, 0.05]), 0.0);
        assert_eq!(h.tau(&[0.05, 0.05]), 1.0);
    }

    #[test]
    fn histogram_jumps_where_knn_is_smooth() {
        // Two queries straddling a bin border differ fully in histogram
        // confidence while the nearest-neighbor confidence barely moves.
        let mut inputs = vec![];
        for i in 0..40 {
            inputs.push(vec![0.2 + 1e-3 * i as f64]);
        }
        inputs.push(vec![1.0]); // lone point defining the upper range
        let h = HistogramConfidence::build(&inputs, 2).unwrap();
        let std = identity_standardizer(1);
        let model = ConfidenceModel::build(&inputs, std, 5, Some(4.0)).unwrap();

        let border = 0.6; // halfway between lo=0.2 and hi=1.0
        let (qa, qb) = (vec![border - 1e-6], vec![border + 1e-6]);
        let jump_hist = (h.tau(&qa) - h.tau(&qb)).abs();
        let jump_knn = (model.evaluate(&qa).tau - model.evaluate(&qb).tau).abs();
        assert!(jump_hist > 0.9, "histogram jump {jump_hist}");
        assert!(jump_knn < 1e-5, "knn jump {jump_knn}");
    }
}
