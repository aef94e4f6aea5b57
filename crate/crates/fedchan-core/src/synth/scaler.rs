//! Per-dimension min-max scaling over the 125-dim feature layout
//! (condition followed by the path matrix).

use super::*;
use crate::nn::Mat;

/// Min-max scaler mapping each feature dimension to `[-1, 1]`.
/// Constant dimensions map to 0 and invert back to their constant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

/// Fit a scaler over the condition-plus-paths features of `records`.
/// Callers training path models pass eligible (non-NoLink) records.
pub fn fit_scaler(records: &[LinkRecord]) -> Result<FeatureScaler> {
    if records.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    let mut mins = vec![f64::INFINITY; FEATURE_DIM];
    let mut maxs = vec![f64::NEG_INFINITY; FEATURE_DIM];
    for r in records {
        let feats = record_features(r);
        for (d, v) in feats.iter().enumerate() {
            mins[d] = mins[d].min(*v);
            maxs[d] = maxs[d].max(*v);
        }
    }
    Ok(FeatureScaler { mins, maxs })
}

/// The 125-dim feature vector of a record: condition then paths.
pub fn record_features(r: &LinkRecord) -> [f64; FEATURE_DIM] {
    let mut out = [0.0; FEATURE_DIM];
    out[..COND_DIM].copy_from_slice(&r.condition.to_vec());
    out[COND_DIM..].copy_from_slice(r.paths.as_slice());
    out
}

impl FeatureScaler {
    fn scale_one(&self, d: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[d], self.maxs[d]);
        if hi > lo {
            2.0 * (v - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    fn invert_one(&self, d: usize, s: f64) -> f64 {
        let (lo, hi) = (self.mins[d], self.maxs[d]);
        if hi > lo {
            lo + (s + 1.0) * 0.5 * (hi - lo)
        } else {
            lo
        }
    }

    /// Scale a full 125-dim feature vector.
    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        assert_eq!(features.len(), FEATURE_DIM, "feature width mismatch");
        features
            .iter()
            .enumerate()
            .map(|(d, v)| self.scale_one(d, *v))
            .collect()
    }

    /// Invert a full scaled feature vector.
    pub fn invert(&self, scaled: &[f64]) -> Vec<f64> {
        assert_eq!(scaled.len(), FEATURE_DIM, "feature width mismatch");
        scaled
            .iter()
            .enumerate()
            .map(|(d, v)| self.invert_one(d, *v))
            .collect()
    }

    /// Scale only the 5 condition dims.
    pub fn apply_condition(&self, condition: &LinkCondition) -> [f64; COND_DIM] {
        let raw = condition.to_vec();
        let mut out = [0.0; COND_DIM];
        for d in 0..COND_DIM {
            out[d] = self.scale_one(d, raw[d]);
        }
        out
    }

    /// Scale only the 120 path dims.
    pub fn apply_paths(&self, paths: &PathVector) -> [f64; PATH_DIM] {
        let mut out = [0.0; PATH_DIM];
        for (i, v) in paths.as_slice().iter().enumerate() {
            out[i] = self.scale_one(COND_DIM + i, *v);
        }
        out
    }

    /// Invert scaled path dims back to raw units.
    pub fn invert_paths(&self, scaled: &[f64]) -> [f64; PATH_DIM] {
        assert_eq!(scaled.len(), PATH_DIM, "path width mismatch");
        let mut out = [0.0; PATH_DIM];
        for (i, v) in scaled.iter().enumerate() {
            out[i] = self.invert_one(COND_DIM + i, *v);
        }
        out
    }

    /// A scaled (condition, paths) training pair for one record.
    pub fn scale_record(&self, r: &LinkRecord) -> ([f64; COND_DIM], [f64; PATH_DIM]) {
        (self.apply_condition(&r.condition), self.apply_paths(&r.paths))
    }
}

/// A scaled minibatch for the path models: one row per sample.
#[derive(Debug, Clone)]
pub struct ScaledBatch {
    pub paths: Mat,
    pub conds: Mat,
}

impl ScaledBatch {
    /// Scale eligible records into a batch; errors on a no-link record.
    pub fn from_records(scaler: &FeatureScaler, records: &[LinkRecord]) -> Result<ScaledBatch> {
        if records.is_empty() {
            return Err(SynthError::EmptyDataset);
        }
        let mut paths = Mat::zeros(records.len(), PATH_DIM);
        let mut conds = Mat::zeros(records.len(), COND_DIM);
        for (i, r) in records.iter().enumerate() {
            if r.state == LinkState::NoLink {
                return Err(SynthError::IneligibleRecord);
            }
            let (c, p) = scaler.scale_record(r);
            conds.row_mut(i).copy_from_slice(&c);
            paths.row_mut(i).copy_from_slice(&p);
        }
        Ok(ScaledBatch { paths, conds })
    }

    pub fn len(&self) -> usize {
        self.paths.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gather the given rows into a new batch.
    pub fn select(&self, idxs: &[usize]) -> ScaledBatch {
        let mut paths = Mat::zeros(idxs.len(), self.paths.cols());
        let mut conds = Mat::zeros(idxs.len(), self.conds.cols());
        for (row, &i) in idxs.iter().enumerate() {
            paths.row_mut(row).copy_from_slice(self.paths.row(i));
            conds.row_mut(row).copy_from_slice(self.conds.row(i));
        }
        ScaledBatch { paths, conds }
    }
}
