//! Adaptive-moment optimizer with decoupled weight decay.

use crate::error::{Error, Result};
use crate::model::{ParamGrads, ToyModel};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for one parameter array.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn new(n: usize) -> Self {
        Moments { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One update of `params` at step `t` (1-based): parameters are first scaled
/// by `1 - lr·weight_decay`, then moved by the bias-corrected moment ratio.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    weight_decay: f64,
    state: &mut Moments,
    t: u64,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(crate::error::invalid("parameter, gradient and moment shapes differ"));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
    }
    let c1 = 1.0 - BETA1.powi(t as i32);
    let c2 = 1.0 - BETA2.powi(t as i32);
    let decay = 1.0 - lr * weight_decay;
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *p *= decay;
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Optimizer state for a [`ToyModel`]. Encoder blocks are skipped entirely
/// (no decay, no moment update) while the encoder is frozen.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    t: u64,
    moments: [Moments; 4],
}

impl AdamW {
    pub fn new(model: &ToyModel, lr: f64, weight_decay: f64) -> Self {
        let moments = model.blocks().map(|b| Moments::new(b.len()));
        AdamW { lr, weight_decay, t: 0, moments }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies `grads`; `context` names the environment(s) that produced them
    /// and is attached to numeric errors.
    pub fn step(&mut self, model: &mut ToyModel, grads: &ParamGrads, context: &str) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient from environment(s) {context}")));
        }
        self.t += 1;
        let skip = if model.frozen_encoder { 2 } else { 0 };
        for (k, (p, g)) in model.blocks_mut().into_iter().zip(grads.blocks()).enumerate().skip(skip) {
            optimizer_step(p, g, self.lr, self.weight_decay, &mut self.moments[k], self.t)?;
        }
        Ok(())
    }
}
