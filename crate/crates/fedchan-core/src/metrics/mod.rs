//! Distribution-distance evaluation of generated path losses.
//!
//! Pools strongest-path losses from held-out records and from one
//! generated sample per record condition, then compares the two pools with
//! a smoothed histogram KL divergence and the exact 1-D Wasserstein-1
//! distance.

pub mod reference;

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::link::{self, LinkModel};
use crate::synth::{LinkCondition, LinkRecord, LinkState, PathVector, MAX_PATH_LOSS_DB};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sample set is empty")]
    EmptySamples,
    #[error("sample value {0} is not finite")]
    NonFiniteSample(f64),
    #[error("path-loss sample {0} exceeds the {MAX_PATH_LOSS_DB} dB ceiling")]
    AboveCeiling(f64),
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("no eligible (linked) records to evaluate")]
    NoEligibleRecords,
    #[error("report csv {path}: {msg}")]
    BadReport { path: String, msg: String },
    #[error(transparent)]
    Link(#[from] link::LinkError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Histogram bins used by the evaluation protocol.
pub const EVAL_KL_BINS: usize = 100;
/// Smoothing mass added to every bin before normalization.
pub const KL_SMOOTHING: f64 = 1e-10;

/// A sorted pool of path-loss samples (dB, all at or below the ceiling).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<EmpiricalDistribution> {
        if values.is_empty() {
            return Err(MetricsError::EmptySamples);
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(MetricsError::NonFiniteSample(v));
            }
            if v > MAX_PATH_LOSS_DB {
                return Err(MetricsError::AboveCeiling(v));
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalDistribution { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Right-continuous CDF evaluated at `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let n = self.values.partition_point(|v| *v <= x);
        n as f64 / self.values.len() as f64
    }

    /// The CDF as `(value, cumulative probability)` steps over distinct
    /// values; the final probability is exactly 1.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        empirical_cdf_sorted(&self.values)
    }
}

fn empirical_cdf_sorted(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// Empirical CDF of a sample set as step points over distinct values.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(empirical_cdf_sorted(&sorted))
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    for &v in samples {
        if !v.is_finite() {
            return Err(MetricsError::NonFiniteSample(v));
        }
    }
    Ok(())
}

/// Histogram KL divergence `KL(p || q)` over shared uniform bins spanning
/// the union range of both sample sets, with add-epsilon smoothing so the
/// estimate stays finite. Non-negative by construction.
pub fn kl_divergence_hist(p_samples: &[f64], q_samples: &[f64], n_bins: usize) -> Result<f64> {
    check_samples(p_samples)?;
    check_samples(q_samples)?;
    if n_bins < 2 {
        return Err(MetricsError::TooFewBins(n_bins));
    }
    let lo = p_samples
        .iter()
        .chain(q_samples)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = p_samples
        .iter()
        .chain(q_samples)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        // All mass sits on a single point in both sets.
        return Ok(0.0);
    }
    let width = hi - lo;
    let histogram = |samples: &[f64]| -> Vec<f64> {
        let mut counts = vec![KL_SMOOTHING; n_bins];
        for &v in samples {
            let bin = (((v - lo) / width) * n_bins as f64).floor() as usize;
            counts[bin.min(n_bins - 1)] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        counts.iter().map(|c| c / total).collect()
    };
    let p = histogram(p_samples);
    let q = histogram(q_samples);
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(&q) {
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

/// Exact 1-D Wasserstein-1 distance between two empirical distributions.
///
/// Equal sizes: mean absolute difference of sorted samples. Unequal sizes:
/// the integral of the CDF difference via a merged traversal, which
/// matches the piecewise-constant quantile-function integral.
pub fn wasserstein1(a_samples: &[f64], b_samples: &[f64]) -> Result<f64> {
    check_samples(a_samples)?;
    check_samples(b_samples)?;
    let mut a = a_samples.to_vec();
    let mut b = b_samples.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if a.len() == b.len() {
        let n = a.len() as f64;
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }
    // Integrate |F_a(t) - F_b(t)| dt between consecutive pooled values.
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        acc += ((i as f64 / na) - (j as f64 / nb)).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(acc)
}

/// One evaluated (city, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub city: String,
    pub method: String,
    pub kl: f64,
    pub wasserstein: f64,
}

/// A full evaluation report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<EvalRow>,
}

/// Everything produced by evaluating one sampler on one test split.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub row: EvalRow,
    pub test_losses: EmpiricalDistribution,
    pub generated_losses: EmpiricalDistribution,
    /// Fraction of eligible test records whose link-state prediction by the
    /// frozen classifier matches the recorded state.
    pub link_agreement: f64,
}

/// Evaluate one generative sampler against a held-out split.
///
/// For every test record with an existing link, the sampler generates one
/// path matrix conditioned on that record's condition; strongest-path
/// losses of the generated and test pools are compared with histogram KL
/// (100 bins, `KL(test || generated)`) and Wasserstein-1.
pub fn evaluate_model<F>(
    city: &str,
    method: &str,
    mut sampler: F,
    link_model: &LinkModel,
    test_records: &[LinkRecord],
    rng: &mut ChaCha8Rng,
) -> Result<EvalOutcome>
where
    F: FnMut(&LinkCondition, &mut ChaCha8Rng) -> PathVector,
{
    let eligible: Vec<&LinkRecord> = test_records
        .iter()
        .filter(|r| r.state != LinkState::NoLink)
        .collect();
    if eligible.is_empty() {
        return Err(MetricsError::NoEligibleRecords);
    }
    let mut test_pool = Vec::with_capacity(eligible.len());
    let mut gen_pool = Vec::with_capacity(eligible.len());
    let mut agree = 0usize;
    for r in &eligible {
        test_pool.push(r.paths.strongest_loss());
        let generated = sampler(&r.condition, rng);
        gen_pool.push(generated.strongest_loss().min(MAX_PATH_LOSS_DB));
        if link::predict_state_argmax(link_model, &r.condition)? == r.state {
            agree += 1;
        }
    }
    let kl = kl_divergence_hist(&test_pool, &gen_pool, EVAL_KL_BINS)?;
    let w1 = wasserstein1(&test_pool, &gen_pool)?;
    Ok(EvalOutcome {
        row: EvalRow {
            city: city.to_string(),
            method: method.to_string(),
            kl,
            wasserstein: w1,
        },
        test_losses: EmpiricalDistribution::new(test_pool)?,
        generated_losses: EmpiricalDistribution::new(gen_pool)?,
        link_agreement: agree as f64 / eligible.len() as f64,
    })
}

/// Write labeled CDFs as CSV columns `label,value_db,cdf`, sorted within
/// each label; byte-stable for identical inputs.
pub fn emit_cdf_csv(
    dists: &[(String, &EmpiricalDistribution)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["label", "value_db", "cdf"])?;
    for (label, dist) in dists {
        for (value, p) in dist.cdf() {
            w.write_record([label.clone(), format!("{value}"), format!("{p}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a report as CSV columns `city,method,kl,wasserstein`.
pub fn emit_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["city", "method", "kl", "wasserstein"])?;
    for row in &report.rows {
        w.write_record([
            row.city.clone(),
            row.method.clone(),
            format!("{}", row.kl),
            format!("{}", row.wasserstein),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a report CSV written by [`emit_report`].
pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 4 {
            return Err(MetricsError::BadReport {
                path: path.display().to_string(),
                msg: format!("expected 4 columns, got {}", record.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| MetricsError::BadReport {
                path: path.display().to_string(),
                msg: format!("bad float {s:?}"),
            })
        };
        rows.push(EvalRow {
            city: record[0].to_string(),
            method: record[1].to_string(),
            kl: parse(&record[2])?,
            wasserstein: parse(&record[3])?,
        });
    }
    Ok(MetricsReport { rows })
}
