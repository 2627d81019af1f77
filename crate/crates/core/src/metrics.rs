//! Evaluation metrics and metric-versus-noise curves.

use std::cmp::Ordering;

use crate::error::{config, usage, Result};
use crate::lens::Task;

fn check_pair(len_a: usize, len_b: usize, what: &str) -> Result<()> {
    if len_a == 0 {
        return Err(usage(format!("{what} of empty input")));
    }
    if len_a != len_b {
        return Err(usage(format!("{what}: {len_a} predictions vs {len_b} targets")));
    }
    Ok(())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_pair(predicted.len(), truth.len(), "accuracy")?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean over all `k` classes of per-class F1; a class with no
/// true positives scores 0.
pub fn f1_macro(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    check_pair(predicted.len(), truth.len(), "f1")?;
    if k == 0 {
        return Err(usage("f1 over zero classes"));
    }
    if let Some(&c) = predicted.iter().chain(truth).find(|&&c| c >= k) {
        return Err(usage(format!("class {c} outside 0..{k}")));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let total: f64 = (0..k)
        .map(|c| {
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64
            }
        })
        .sum();
    Ok(total / k as f64)
}

/// Binary ROC AUC from the Mann–Whitney rank statistic, ties sharing their
/// average rank. `None` when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_pair(scores.len(), labels.len(), "roc_auc")?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_block = order[i..=j].iter().filter(|&&idx| labels[idx]).count();
        rank_sum_pos += avg_rank * pos_in_block as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

/// One-vs-rest AUC averaged over the classes whose AUC is defined.
pub fn roc_auc_ovr(probabilities: &[Vec<f64>], labels: &[usize], k: usize) -> Result<Option<f64>> {
    check_pair(probabilities.len(), labels.len(), "roc_auc_ovr")?;
    if probabilities.iter().any(|p| p.len() != k) {
        return Err(usage(format!("every probability row must have {k} entries")));
    }
    let mut aucs = Vec::new();
    for c in 0..k {
        let scores: Vec<f64> = probabilities.iter().map(|p| p[c]).collect();
        let is_c: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if let Some(a) = roc_auc(&scores, &is_c)? {
            aucs.push(a);
        }
    }
    Ok((!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64))
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred.len(), target.len(), "mse")?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Symmetric MAPE in percent, `[0, 200]`; a term with `y = ŷ = 0` counts 0.
pub fn smape(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred.len(), target.len(), "smape")?;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let denom = (p.abs() + t.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (p - t).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * total / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    F1,
    RocAuc,
    Mse,
    Smape,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
            Metric::RocAuc => "roc_auc",
            Metric::Mse => "mse",
            Metric::Smape => "smape",
        }
    }

    pub fn for_task(task: Task) -> &'static [Metric] {
        match task {
            Task::Regression => &[Metric::Mse, Metric::Smape],
            Task::Classification { .. } => &[Metric::Accuracy, Metric::F1, Metric::RocAuc],
        }
    }
}

/// Mean and standard error of the mean (sample standard deviation / √n).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub amplitude: f64,
    /// `None` when the metric is undefined on this test set.
    pub value: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub metric: String,
    pub points: Vec<CurvePoint>,
}

impl MetricCurve {
    pub fn new(metric: impl Into<String>) -> Self {
        Self {
            metric: metric.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, point: CurvePoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if !(point.amplitude > last.amplitude) {
                return Err(config(format!(
                    "{}: amplitude {} does not follow {}",
                    self.metric, point.amplitude, last.amplitude
                )));
            }
        }
        if point.value.is_some_and(|v| !v.is_finite()) {
            return Err(config(format!("{}: non-finite value at amplitude {}", self.metric, point.amplitude)));
        }
        self.points.push(point);
        Ok(())
    }

    pub fn value_at(&self, amplitude: f64) -> Option<f64> {
        self.points.iter().find(|p| p.amplitude == amplitude).and_then(|p| p.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 1], &[1, 1, 1]).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_macro(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap(), 1.0);
        let f = f1_macro(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
        let p = [0, 1, 1, 0, 1, 0, 0];
        let t = [0, 1, 0, 0, 1, 1, 1];
        let flip = |v: &[usize]| v.iter().map(|c| 1 - c).collect::<Vec<_>>();
        assert_eq!(f1_macro(&p, &t, 2).unwrap(), f1_macro(&flip(&p), &flip(&t), 2).unwrap());
        assert!(f1_macro(&[], &[], 2).is_err());
        assert!(f1_macro(&[3], &[0], 2).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]).unwrap(), Some(0.0));
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), Some(0.5));
        assert_eq!(roc_auc(&[0.3, 0.4], &[true, true]).unwrap(), None);
        let s = [0.2, 0.7, 0.7, 0.1, 0.9];
        let l = [false, true, false, false, true];
        let a = roc_auc(&s, &l).unwrap().unwrap();
        let rev: Vec<f64> = s.iter().map(|x| -x).collect();
        assert!((roc_auc(&rev, &l).unwrap().unwrap() - (1.0 - a)).abs() < 1e-15);
        // positives {0.7, 0.9} vs negatives {0.2, 0.7, 0.1}: 5.5 of 6 pairs
        assert!((a - 5.5 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn auc_ovr() {
        let probs = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
        assert_eq!(roc_auc_ovr(&probs, &[0, 1, 2], 3).unwrap(), Some(1.0));
        // class 2 absent: averaged over classes 0 and 1 only
        let probs = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1]];
        assert_eq!(roc_auc_ovr(&probs, &[0, 1], 3).unwrap(), Some(1.0));
        assert_eq!(roc_auc_ovr(&probs[..1], &[0], 3).unwrap(), None);
    }

    #[test]
    fn regression_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(smape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((smape(&[2.0], &[1.0]).unwrap() - 100.0 / 1.5).abs() < 1e-12);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(smape(&[-3.0], &[3.0]).unwrap(), 200.0);
        assert!(mse(&[], &[]).is_err() && smape(&[1.0], &[]).is_err());
    }

    #[test]
    fn curve_invariants() {
        let mut c = MetricCurve::new("mse");
        let pt = |a: f64, v: f64| CurvePoint { amplitude: a, value: Some(v), stderr: Some(0.0) };
        c.push(pt(0.0, 1.0)).unwrap();
        c.push(pt(0.2, 1.1)).unwrap();
        assert!(c.push(pt(0.2, 1.2)).is_err());
        assert!(c.push(pt(0.4, f64::NAN)).is_err());
        assert_eq!(c.value_at(0.2), Some(1.1));
    }

    #[test]
    fn stderr_of_mean() {
        assert_eq!(mean_stderr(&[3.0]), (3.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
