//! Accuracy, ROC/PR curves, AUC and stratified bootstrap intervals.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WitnessError};
use crate::rng::{self, tags};

/// True labels with real-valued scores; a score above `threshold` predicts 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPredictions {
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub threshold: f64,
}

impl ScoredPredictions {
    pub fn new(labels: Vec<u8>, scores: Vec<f64>, threshold: f64) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(WitnessError::Shape("labels and scores differ in length".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(WitnessError::Usage("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(WitnessError::Usage("scores must be finite".into()));
        }
        Ok(Self { labels, scores, threshold })
    }

    /// Scores are witness logits, thresholded at 0.
    pub fn from_logits(labels: Vec<u8>, scores: Vec<f64>) -> Result<Self> {
        Self::new(labels, scores, 0.0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(p: &ScoredPredictions) -> Confusion {
    let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&y, &s) in p.labels.iter().zip(&p.scores) {
        match (s > p.threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

pub fn accuracy(p: &ScoredPredictions) -> Result<f64> {
    if p.is_empty() {
        return Err(WitnessError::UndefinedMetric("accuracy of an empty set".into()));
    }
    let c = confusion(p);
    Ok((c.tp + c.tn) as f64 / p.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

fn class_counts(p: &ScoredPredictions) -> Result<(usize, usize)> {
    let pos = p.labels.iter().filter(|&&l| l == 1).count();
    let neg = p.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(WitnessError::UndefinedMetric("curve needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Cumulative `(threshold, tp, fp)` over unique scores, descending; tied scores form one step.
fn threshold_steps(p: &ScoredPredictions) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p.scores[b].total_cmp(&p.scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let s = p.scores[order[k]];
        while k < order.len() && p.scores[order[k]] == s {
            if p.labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// ROC points from `(inf, 0, 0)` through one point per unique score.
pub fn roc_curve(p: &ScoredPredictions) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(p)?;
    let mut out = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    for (s, tp, fp) in threshold_steps(p) {
        out.push(RocPoint { threshold: s, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(out)
}

/// Trapezoid area under the grouped-threshold ROC curve, accumulated in integers
/// so the single final division is correctly rounded.
pub fn roc_auc(p: &ScoredPredictions) -> Result<f64> {
    let (pos, neg) = class_counts(p)?;
    let (mut area2, mut prev_tp, mut prev_fp) = (0u128, 0u128, 0u128);
    for (_, tp, fp) in threshold_steps(p) {
        let (tp, fp) = (tp as u128, fp as u128);
        area2 += (fp - prev_fp) * (tp + prev_tp);
        (prev_tp, prev_fp) = (tp, fp);
    }
    Ok(area2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

pub fn pr_curve(p: &ScoredPredictions) -> Result<Vec<PrPoint>> {
    let (pos, _) = class_counts(p)?;
    Ok(threshold_steps(p)
        .into_iter()
        .map(|(s, tp, fp)| PrPoint {
            threshold: s,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / pos as f64,
        })
        .collect())
}

/// Linear interpolation between order statistics at rank `q (n - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    /// Metric value of each replicate, in replicate order.
    pub distribution: Vec<f64>,
}

/// Percentile interval from `replicates` class-stratified resamples.
pub fn stratified_bootstrap_ci<F>(
    p: &ScoredPredictions,
    metric: F,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCi>
where
    F: Fn(&ScoredPredictions) -> Result<f64> + Sync,
{
    if replicates == 0 {
        return Err(WitnessError::Usage("bootstrap needs at least one replicate".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(WitnessError::Usage(format!("confidence level {level} outside (0, 1)")));
    }
    let neg: Vec<usize> = (0..p.len()).filter(|&i| p.labels[i] == 0).collect();
    let pos: Vec<usize> = (0..p.len()).filter(|&i| p.labels[i] == 1).collect();
    if neg.is_empty() || pos.is_empty() {
        return Err(WitnessError::UndefinedMetric("bootstrap strata must both be non-empty".into()));
    }
    let distribution: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, &[tags::BOOTSTRAP, b as u64]);
            let idx = resample_indices(&neg, &pos, &mut r);
            metric(&p.subset(&idx))
        })
        .collect::<Result<_>>()?;
    let mut sorted = distribution.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi { low: percentile(&sorted, tail), high: percentile(&sorted, 1.0 - tail), level, distribution })
}

/// One stratified resample: each class drawn with replacement at its original size.
pub fn resample_indices<R: Rng + ?Sized>(neg: &[usize], pos: &[usize], r: &mut R) -> Vec<usize> {
    let mut idx = Vec::with_capacity(neg.len() + pos.len());
    for stratum in [neg, pos] {
        for _ in 0..stratum.len() {
            idx.push(stratum[r.random_range(0..stratum.len())]);
        }
    }
    idx
}

/// Closed intervals: touching endpoints overlap.
pub fn ci_disjoint(a: (f64, f64), b: (f64, f64)) -> bool {
    a.1 < b.0 || b.1 < a.0
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub experiment: String,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub auc: f64,
}

/// Accuracy with its bootstrap interval and AUC.
pub fn summarize(model: &str, experiment: &str, p: &ScoredPredictions, replicates: usize, seed: u64) -> Result<MetricsRow> {
    let ci = stratified_bootstrap_ci(p, accuracy, replicates, 0.95, seed)?;
    Ok(MetricsRow {
        model: model.to_string(),
        experiment: experiment.to_string(),
        accuracy: accuracy(p)?,
        ci_low: ci.low,
        ci_high: ci.high,
        auc: roc_auc(p)?,
    })
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(WitnessError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(labels: &[u8], scores: &[f64]) -> ScoredPredictions {
        ScoredPredictions::from_logits(labels.to_vec(), scores.to_vec()).unwrap()
    }

    fn pair_count_auc(p: &ScoredPredictions) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p.labels[i] == 1 && p.labels[j] == 0 {
                    den += 1.0;
                    if p.scores[i] > p.scores[j] {
                        num += 1.0;
                    } else if p.scores[i] == p.scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&preds(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9])).unwrap(), 1.0);
        assert_eq!(roc_auc(&preds(&[0, 1, 0, 1], &[0.5; 4])).unwrap(), 0.5);
        let p = preds(&[0, 1, 1, 0, 1, 0], &[0.3, 0.3, 0.9, 0.1, 0.2, 0.7]);
        assert_eq!(roc_auc(&p).unwrap(), pair_count_auc(&p));
        assert!(matches!(roc_auc(&preds(&[1, 1], &[0.1, 0.2])), Err(WitnessError::UndefinedMetric(_))));
    }

    #[test]
    fn accuracy_matches_confusion() {
        let p = preds(&[0, 1, 1, 0, 1], &[-1.0, 2.0, -0.5, 0.3, 0.0]);
        let c = confusion(&p);
        assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 2 });
        assert!((accuracy(&p).unwrap() - (1.0 - 3.0 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn pr_curve_endpoints() {
        let p = preds(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.1]);
        let c = pr_curve(&p).unwrap();
        assert_eq!(c[0].precision, 1.0);
        assert_eq!(c.last().unwrap().recall, 1.0);
        assert_eq!(c.last().unwrap().precision, 0.5);
    }

    #[test]
    fn all_correct_bootstrap_is_degenerate() {
        let p = preds(&[0, 0, 1, 1, 1], &[-1.0, -2.0, 1.0, 3.0, 0.5]);
        let ci = stratified_bootstrap_ci(&p, accuracy, 200, 0.95, 1).unwrap();
        assert_eq!((ci.low, ci.high), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_preserves_class_counts() {
        let p = preds(&[0, 1, 1, 0, 1, 1, 1], &[0.0; 7]);
        let ci = stratified_bootstrap_ci(
            &p,
            |q| Ok(q.labels.iter().filter(|&&l| l == 1).count() as f64),
            100,
            0.95,
            3,
        )
        .unwrap();
        assert!(ci.distribution.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&s, 0.0), 1.0);
        assert_eq!(percentile(&s, 1.0), 4.0);
        assert!((percentile(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((percentile(&s, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn disjointness_convention() {
        assert!(ci_disjoint((0.975, 1.0), (0.705, 0.82)));
        assert!(!ci_disjoint((0.2, 0.4), (0.2, 0.4)));
        assert!(!ci_disjoint((0.0, 0.5), (0.5, 1.0)));
    }

    #[test]
    fn metrics_csv_roundtrip() {
        let row = MetricsRow {
            model: "svm".into(),
            experiment: "two_mode".into(),
            accuracy: 0.9,
            ci_low: 0.85,
            ci_high: 0.95,
            auc: 0.97,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("model,experiment,accuracy,ci_low,ci_high,auc"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), vec![row]);
    }
}
