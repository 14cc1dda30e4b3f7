//! Test-type-specific training losses.
//!
//! * MFT (and label-form DIR): cross-entropy against the label distribution.
//! * INV: cross-entropy between the original prediction (a constant target)
//!   and the perturbed prediction.
//! * DIR (delta form): `-ln(1 - ε)` where ε is the violation measure.
//!
//! Gradients are taken with respect to the logits of the prediction being
//! trained; the original prediction in INV/DIR pairs is held fixed.

use crate::error::{invalid, Result};
use crate::suite::{epsilon, DeltaKind, LabelSpec, Prediction};

/// Probabilities are clamped from below before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// ε is clamped from above before taking `ln(1 - ε)`.
pub const EPSILON_CEIL: f64 = 1.0 - 1e-9;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: f64 = out.iter().sum();
    for p in &mut out {
        *p /= s;
    }
    out
}

/// Chains a gradient with respect to softmax outputs back to the logits.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
    probs.iter().zip(grad_probs).map(|(p, g)| p * (g - dot)).collect()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `-Σ target[k] ln max(pred[k], floor)`.
pub fn cross_entropy(target: &[f64], pred: &[f64]) -> f64 {
    -target
        .iter()
        .zip(pred)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &p)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

fn same_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Cross-entropy between a prediction and an MFT label.
pub fn mft_loss(pred: &Prediction, target: &LabelSpec) -> Result<f64> {
    let t = target.target(pred.len())?;
    Ok(cross_entropy(&t, pred.probs()))
}

/// Invariance loss `-Σ y0[k] ln yi[k]`; minimal (equal to the entropy of `y0`)
/// at `yi = y0`.
pub fn inv_loss(y0: &Prediction, yi: &Prediction) -> Result<f64> {
    same_dims(y0.len(), yi.len())?;
    Ok(cross_entropy(y0.probs(), yi.probs()))
}

/// Directional loss `-ln(1 - ε)`; zero exactly when the expectation holds.
pub fn dir_loss(y0: &Prediction, yi: &Prediction, kind: DeltaKind) -> Result<f64> {
    let e = epsilon(kind, y0, yi)?.min(EPSILON_CEIL);
    Ok(-(1.0 - e).ln())
}

/// A per-item loss as a function of the trained prediction's logits.
#[derive(Clone, Debug, PartialEq)]
pub enum LossHead {
    /// Cross-entropy against a fixed target distribution (MFT, INV, DIR-label).
    CrossEntropy(Vec<f64>),
    /// Directional loss against a fixed original prediction.
    Directional { reference: Vec<f64>, kind: DeltaKind },
}

impl LossHead {
    pub fn for_label(spec: &LabelSpec, n_classes: usize) -> Result<Self> {
        Ok(LossHead::CrossEntropy(spec.target(n_classes)?))
    }

    pub fn invariance(original: &[f64]) -> Self {
        LossHead::CrossEntropy(original.to_vec())
    }

    pub fn directional(original: &[f64], kind: DeltaKind) -> Result<Self> {
        if kind.is_sentiment_directional() && original.len() != 2 {
            return Err(invalid(format!("{kind:?} requires two-class predictions")));
        }
        Ok(LossHead::Directional { reference: original.to_vec(), kind })
    }

    fn dims(&self) -> usize {
        match self {
            LossHead::CrossEntropy(t) => t.len(),
            LossHead::Directional { reference, .. } => reference.len(),
        }
    }

    /// Violated class, sign and clamped ε for the directional head.
    fn violation(reference: &[f64], kind: DeltaKind, probs: &[f64]) -> (usize, f64, f64) {
        let (c, sign) = crate::suite::delta_target(kind, reference);
        let e = (sign * (probs[c] - reference[c])).max(0.0);
        (c, sign, e)
    }

    pub fn value(&self, probs: &[f64]) -> f64 {
        debug_assert_eq!(probs.len(), self.dims());
        match self {
            LossHead::CrossEntropy(t) => cross_entropy(t, probs),
            LossHead::Directional { reference, kind } => {
                let (_, _, e) = Self::violation(reference, *kind, probs);
                -(1.0 - e.min(EPSILON_CEIL)).ln()
            }
        }
    }

    /// Gradient with respect to the logits, given `probs = softmax(logits)`.
    pub fn grad_logits(&self, probs: &[f64]) -> Vec<f64> {
        match self {
            LossHead::CrossEntropy(t) => {
                let mass: f64 = t.iter().sum();
                probs.iter().zip(t).map(|(p, t)| p * mass - t).collect()
            }
            LossHead::Directional { reference, kind } => {
                let (c, sign, e) = Self::violation(reference, *kind, probs);
                if e <= 0.0 || e >= EPSILON_CEIL {
                    return vec![0.0; probs.len()];
                }
                let scale = sign / (1.0 - e) * probs[c];
                probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| scale * (if j == c { 1.0 } else { 0.0 } - p))
                    .collect()
            }
        }
    }

    /// Hessian-vector product `∇²_z L · v` at `probs = softmax(z)`.
    pub fn logit_hvp(&self, probs: &[f64], v: &[f64]) -> Vec<f64> {
        // q = J v with J = diag(p) - p pᵀ the softmax Jacobian
        let pv: f64 = probs.iter().zip(v).map(|(p, x)| p * x).sum();
        let q: Vec<f64> = probs.iter().zip(v).map(|(p, x)| p * x - p * pv).collect();
        match self {
            LossHead::CrossEntropy(t) => {
                let mass: f64 = t.iter().sum();
                q.into_iter().map(|x| x * mass).collect()
            }
            LossHead::Directional { reference, kind } => {
                let (c, sign, e) = Self::violation(reference, *kind, probs);
                if e <= 0.0 || e >= EPSILON_CEIL {
                    return vec![0.0; probs.len()];
                }
                let pc = probs[c];
                // u = ∇_z p_c, a = u·v
                let u: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| pc * (if j == c { 1.0 } else { 0.0 } - p))
                    .collect();
                let a: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                let phi = sign / (1.0 - e);
                let curv = a / ((1.0 - e) * (1.0 - e));
                (0..probs.len())
                    .map(|j| {
                        let du = a * (if j == c { 1.0 } else { 0.0 } - probs[j]) - pc * q[j];
                        curv * u[j] + phi * du
                    })
                    .collect()
            }
        }
    }
}
