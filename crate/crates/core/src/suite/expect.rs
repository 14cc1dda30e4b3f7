//! Expectation functions for the three test types.

use super::{CasePayload, DeltaKind, DirCase, DirExpectation, LabelSpec, Prediction, TestCase};
use crate::error::{invalid, Result};

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Band of positive-class probability counted as a neutral prediction in
/// two-class tasks. Both ends are inclusive; the lower bound is also the
/// not-negative threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeutralPolicy {
    pub lower: f64,
    pub upper: f64,
}

impl Default for NeutralPolicy {
    fn default() -> Self {
        NeutralPolicy { lower: 1.0 / 3.0, upper: 2.0 / 3.0 }
    }
}

/// Slack on the neutral band edges so `1 - 1/3` counts as inside `[1/3, 2/3]`.
const BAND_TOL: f64 = 1e-12;

fn approx_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

/// MFT expectation: the prediction must match the label.
///
/// Hard labels compare argmax. The neutral soft label `[1/2, 1/2]` passes when
/// the positive probability lies inside the neutral band; the soft vector
/// `[1/3, 2/3]` is the training encoding of not-negative and is evaluated as
/// such. Any other soft vector compares against its argmax.
pub fn evaluate_mft(pred: &Prediction, spec: &LabelSpec, policy: NeutralPolicy) -> Result<bool> {
    let n = pred.len();
    spec.check(n)?;
    Ok(match spec {
        LabelSpec::Hard(k) => pred.argmax() == *k,
        LabelSpec::NotNegative => pred[1] >= policy.lower - BAND_TOL,
        LabelSpec::Soft(t) => {
            if n == 2 && approx_eq(t, &[0.5, 0.5]) {
                pred[1] >= policy.lower - BAND_TOL && pred[1] <= policy.upper + BAND_TOL
            } else if n == 2 && approx_eq(t, &[1.0 / 3.0, 2.0 / 3.0]) {
                pred[1] >= policy.lower - BAND_TOL
            } else {
                pred.argmax() == argmax(t)
            }
        }
    })
}

/// INV expectation: every perturbed prediction keeps the original's argmax.
/// `preds[0]` is the original's prediction.
pub fn evaluate_inv(preds: &[Prediction]) -> Result<bool> {
    if preds.len() < 2 {
        return Err(invalid(format!(
            "INV evaluation needs at least two predictions, got {}",
            preds.len()
        )));
    }
    let reference = preds[0].argmax();
    Ok(preds[1..].iter().all(|p| p.argmax() == reference))
}

fn check_delta_dims(kind: DeltaKind, y0: &Prediction, yi: &Prediction) -> Result<()> {
    if y0.len() != yi.len() {
        return Err(invalid(format!(
            "prediction dimensions differ: {} vs {}",
            y0.len(),
            yi.len()
        )));
    }
    if kind.is_sentiment_directional() && y0.len() != 2 {
        return Err(invalid(format!(
            "{kind:?} is only defined for two-class predictions, got {} classes",
            y0.len()
        )));
    }
    Ok(())
}

/// The class index compared by `kind` and the sign of the violation: a
/// positive sign means a rise in the perturbed probability is a violation.
pub(crate) fn delta_target(kind: DeltaKind, y0: &[f64]) -> (usize, f64) {
    match kind {
        DeltaKind::NotMoreNegative => (0, 1.0),
        DeltaKind::NotMorePositive => (1, 1.0),
        DeltaKind::NotMoreConfident => (argmax(y0), 1.0),
        DeltaKind::NotLessConfident => (argmax(y0), -1.0),
    }
}

/// Comparison function δ between an original and a perturbed prediction.
pub fn delta(kind: DeltaKind, y0: &Prediction, yi: &Prediction) -> Result<bool> {
    check_delta_dims(kind, y0, yi)?;
    let (c, sign) = delta_target(kind, y0.probs());
    Ok(sign * (yi[c] - y0[c]) <= 0.0)
}

/// Violation measure ε in `[0, 1]`: zero exactly when [`delta`] holds.
pub fn epsilon(kind: DeltaKind, y0: &Prediction, yi: &Prediction) -> Result<f64> {
    check_delta_dims(kind, y0, yi)?;
    let (c, sign) = delta_target(kind, y0.probs());
    Ok((sign * (yi[c] - y0[c])).max(0.0))
}

/// DIR expectation.
///
/// Delta form: `preds[0]` is the original and the remaining entries are the
/// perturbed predictions. Label form: `preds` holds only the perturbed
/// predictions, each of which must satisfy the label.
pub fn evaluate_dir(case: &DirCase, preds: &[Prediction], policy: NeutralPolicy) -> Result<bool> {
    match &case.expectation {
        DirExpectation::Delta(kind) => {
            if preds.len() != case.perturbed.len() + 1 {
                return Err(invalid(format!(
                    "DIR case has {} perturbed inputs but {} predictions (original first)",
                    case.perturbed.len(),
                    preds.len()
                )));
            }
            for yi in &preds[1..] {
                if !delta(*kind, &preds[0], yi)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        DirExpectation::Label(spec) => {
            if preds.len() != case.perturbed.len() {
                return Err(invalid(format!(
                    "label-form DIR case has {} perturbed inputs but {} predictions",
                    case.perturbed.len(),
                    preds.len()
                )));
            }
            for p in preds {
                if !evaluate_mft(p, spec, policy)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Evaluates any case given predictions for all of its inputs, in the order
/// of [`TestCase::inputs`].
pub fn evaluate_case(case: &TestCase, preds: &[Prediction], policy: NeutralPolicy) -> Result<bool> {
    let expected = case.inputs().len();
    if preds.len() != expected {
        return Err(invalid(format!(
            "case {} has {expected} inputs but {} predictions",
            case.id,
            preds.len()
        )));
    }
    match &case.payload {
        CasePayload::Mft(c) => evaluate_mft(&preds[0], &c.label, policy),
        CasePayload::Inv(_) => evaluate_inv(preds),
        CasePayload::Dir(c) => match c.expectation {
            DirExpectation::Delta(_) => evaluate_dir(c, preds, policy),
            DirExpectation::Label(_) => evaluate_dir(c, &preds[1..], policy),
        },
    }
}
