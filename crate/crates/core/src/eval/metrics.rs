//! Pass rates, G scores, i.i.d. metrics and the degenerate-solution audit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::suite::Prediction;

/// Fraction of passing cases.
pub fn pass_rate(outcomes: &[bool]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(invalid("pass rate of an empty outcome list"));
    }
    Ok(outcomes.iter().filter(|&&o| o).count() as f64 / outcomes.len() as f64)
}

/// Harmonic mean of a suite score and an i.i.d. score; 0 when both are 0.
pub fn g_score(s_suite: f64, s_iid: f64) -> Result<f64> {
    for (name, v) in [("suite score", s_suite), ("i.i.d. score", s_iid)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("{name} {v} outside [0, 1]")));
        }
    }
    if s_suite + s_iid == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * s_suite * s_iid / (s_suite + s_iid))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidMetrics {
    pub accuracy: f64,
    /// F1 of class index 1 (positive / duplicate).
    pub f1_positive: f64,
}

/// Which i.i.d. metric enters the G score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IidScore {
    #[default]
    Accuracy,
    F1,
}

impl IidMetrics {
    pub fn score(&self, kind: IidScore) -> f64 {
        match kind {
            IidScore::Accuracy => self.accuracy,
            IidScore::F1 => self.f1_positive,
        }
    }
}

/// Accuracy and F1 of class 1 from predicted classes.
pub fn iid_metrics_from_classes(predicted: &[usize], labels: &[usize]) -> Result<IidMetrics> {
    if predicted.len() != labels.len() {
        return Err(invalid(format!("{} predictions for {} labels", predicted.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(invalid("i.i.d. metrics of an empty dataset"));
    }
    let (mut correct, mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in predicted.iter().zip(labels) {
        correct += (p == y) as usize;
        tp += (p == 1 && y == 1) as usize;
        fp += (p == 1 && y != 1) as usize;
        fneg += (p != 1 && y == 1) as usize;
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(IidMetrics { accuracy: correct as f64 / labels.len() as f64, f1_positive: f1 })
}

pub fn iid_metrics(preds: &[Prediction], labels: &[usize]) -> Result<IidMetrics> {
    let classes: Vec<usize> = preds.iter().map(Prediction::argmax).collect();
    iid_metrics_from_classes(&classes, labels)
}

pub const DEFAULT_AUDIT_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Frequency of each predicted class.
    pub predicted: Vec<f64>,
    /// Frequency of each gold class.
    pub truth: Vec<f64>,
    /// `|predicted - truth|` per class.
    pub divergence: Vec<f64>,
    pub threshold: f64,
    pub flagged: bool,
}

impl AuditReport {
    pub fn max_divergence(&self) -> f64 {
        self.divergence.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares predicted and gold class frequencies; flags the model when any
/// class diverges by more than `threshold`.
pub fn audit_frequencies(predicted: Vec<f64>, truth: Vec<f64>, threshold: f64) -> AuditReport {
    let divergence: Vec<f64> = predicted.iter().zip(&truth).map(|(p, t)| (p - t).abs()).collect();
    let flagged = divergence.iter().any(|&d| d > threshold);
    AuditReport { predicted, truth, divergence, threshold, flagged }
}

pub fn degenerate_audit(preds: &[Prediction], labels: &[usize], threshold: f64) -> Result<AuditReport> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(invalid("audit needs equally many, non-empty predictions and labels"));
    }
    let c = preds[0].len().max(labels.iter().max().map_or(0, |m| m + 1));
    let n = preds.len() as f64;
    let mut predicted = vec![0.0; c];
    let mut truth = vec![0.0; c];
    for (p, &y) in preds.iter().zip(labels) {
        predicted[p.argmax()] += 1.0 / n;
        truth[y] += 1.0 / n;
    }
    Ok(audit_frequencies(predicted, truth, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn pass_rate_examples() {
        assert_eq!(pass_rate(&[true, true, true, false]).unwrap(), 0.75);
        assert_eq!(pass_rate(&[true; 5]).unwrap(), 1.0);
        assert!(pass_rate(&[]).is_err());
    }

    #[test]
    fn g_score_examples() {
        assert_eq!(g_score(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(g_score(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(g_score(0.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(g_score(0.6054, 0.9174).unwrap(), 0.7294, epsilon = 1e-4);
        assert_abs_diff_eq!(g_score(0.8, 1.0).unwrap(), 8.0 / 9.0, epsilon = 1e-12);
        assert!(g_score(1.2, 0.5).is_err());
        assert!(g_score(0.5, -0.1).is_err());
    }

    #[test]
    fn iid_metric_examples() {
        let m = iid_metrics_from_classes(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((m.accuracy, m.f1_positive), (1.0, 1.0));
        let m = iid_metrics_from_classes(&[0, 0, 0, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((m.accuracy, m.f1_positive), (0.5, 0.0));
        assert!(iid_metrics_from_classes(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn audit_examples() {
        let r = audit_frequencies(vec![0.9518, 0.0482], vec![0.4725, 0.5275], 0.2);
        assert_abs_diff_eq!(r.divergence[0], 0.4793, epsilon = 1e-12);
        assert!(r.flagged);
        let p = |v: f64| Prediction::new(vec![1.0 - v, v]).unwrap();
        let preds = vec![p(0.9), p(0.1), p(0.8), p(0.3)];
        let r = degenerate_audit(&preds, &[1, 0, 1, 0], 0.2).unwrap();
        assert_eq!(r.max_divergence(), 0.0);
        assert!(!r.flagged);
        let constant = vec![p(0.1); 4];
        let r = degenerate_audit(&constant, &[1, 0, 1, 0], 0.2).unwrap();
        assert_eq!(r.max_divergence(), 0.5);
        assert!(r.flagged);
    }

    proptest! {
        #[test]
        fn g_is_harmonic_mean_bounded(s in 0.01f64..=1.0, i in 0.01f64..=1.0) {
            let g = g_score(s, i).unwrap();
            prop_assert!(g >= s.min(i) - 1e-12);
            prop_assert!(g <= (s * i).sqrt() + 1e-12);
            prop_assert!(g <= 2.0 * s.min(i) + 1e-12);
            prop_assert!((g_score(s, s).unwrap() - s).abs() < 1e-15);
        }

        #[test]
        fn pass_rate_matches_count(v in proptest::collection::vec(any::<bool>(), 1..1000)) {
            let expected = v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
            prop_assert_eq!(pass_rate(&v).unwrap(), expected);
        }
    }
}
