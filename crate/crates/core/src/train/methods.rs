//! Group-robust training objectives: the IRMv1 penalty, Group-DRO weights and
//! the first-order Fish update.

use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::losses::{softmax, LossHead};
use crate::model::{ParamGrads, ToyModel};
use crate::rng::Stream;

/// Derivative of an environment's mean risk with respect to a scalar
/// multiplier `w` on all logits, at `w = 1`: `mean_i ⟨∂ℓ_i/∂z_i, z_i⟩`.
pub fn irm_probe_gradient(items: &[(Vec<f64>, LossHead)]) -> Result<f64> {
    if items.is_empty() {
        return Err(invalid("IRM environment without examples"));
    }
    let mut g = 0.0;
    for (z, head) in items {
        let dz = head.grad_logits(&softmax(z));
        g += dz.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(g / items.len() as f64)
}

/// IRMv1 penalty: mean over environments of the squared probe gradient.
pub fn irm_penalty(envs: &[Vec<(Vec<f64>, LossHead)>]) -> Result<f64> {
    if envs.is_empty() {
        return Err(invalid("IRM penalty needs at least one environment"));
    }
    let mut total = 0.0;
    for env in envs {
        total += irm_probe_gradient(env)?.powi(2);
    }
    Ok(total / envs.len() as f64)
}

/// Probe gradient of one environment together with its derivative with
/// respect to each item's logits, `(H_i z_i + ∇ℓ_i) / n`.
pub fn irm_probe_with_grads(items: &[(Vec<f64>, LossHead)]) -> Result<(f64, Vec<Vec<f64>>)> {
    let g = irm_probe_gradient(items)?;
    let n = items.len() as f64;
    let grads = items
        .iter()
        .map(|(z, head)| {
            let p = softmax(z);
            let hz = head.logit_hvp(&p, z);
            let dz = head.grad_logits(&p);
            hz.iter().zip(&dz).map(|(a, b)| (a + b) / n).collect()
        })
        .collect();
    Ok((g, grads))
}

/// Group weights of Group-DRO.
#[derive(Clone, Debug, PartialEq)]
pub struct DroState {
    pub q: Vec<f64>,
    pub eta: f64,
}

impl DroState {
    pub fn uniform(n: usize, eta: f64) -> Self {
        DroState { q: vec![1.0 / n as f64; n], eta }
    }
}

/// Exponentiated-gradient ascent on the group weights,
/// `q_i ← q_i·exp(η·ℓ_i)` renormalised, and the loss weighted by the new
/// weights.
pub fn dro_update(losses: &[f64], state: &DroState) -> Result<(f64, DroState)> {
    if losses.len() != state.q.len() || losses.is_empty() {
        return Err(invalid(format!(
            "{} group losses for {} group weights",
            losses.len(),
            state.q.len()
        )));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(invalid("non-finite group loss"));
    }
    // Work in log space so large η·ℓ cannot overflow.
    let logits: Vec<f64> = state
        .q
        .iter()
        .zip(losses)
        .map(|(&q, &l)| if q > 0.0 { q.ln() + state.eta * l } else { f64::NEG_INFINITY })
        .collect();
    let q = softmax(&logits);
    let weighted = q.iter().zip(losses).map(|(a, b)| a * b).sum();
    Ok((weighted, DroState { q, eta: state.eta }))
}

/// First-order Fish: `inner_steps` plain gradient steps on a clone of the
/// parameters, visiting environments in a random permutation (cycling), then
/// `θ ← θ + meta_rate·(θ̃ − θ)`. `grad(model, env, out)` writes the gradient of
/// environment `env`'s next batch into `out`.
pub fn fish_step<F>(
    model: &mut ToyModel,
    n_envs: usize,
    inner_steps: usize,
    inner_rate: f64,
    meta_rate: f64,
    rng: &mut Stream,
    mut grad: F,
) -> Result<()>
where
    F: FnMut(&ToyModel, usize, &mut ParamGrads) -> Result<()>,
{
    if n_envs == 0 {
        return Err(invalid("Fish step without environments"));
    }
    let mut g = ParamGrads::zeros(model);
    if n_envs == 1 {
        log::warn!("Fish needs at least two environments; taking a plain gradient step");
        grad(model, 0, &mut g)?;
        apply_sgd(model, &g, inner_rate);
        return Ok(());
    }
    let mut order: Vec<usize> = (0..n_envs).collect();
    order.shuffle(rng);
    let mut inner = model.clone();
    for k in 0..inner_steps {
        g.fill_zero();
        grad(&inner, order[k % n_envs], &mut g)?;
        apply_sgd(&mut inner, &g, inner_rate);
    }
    for (p, q) in model.blocks_mut().into_iter().zip(inner.blocks()) {
        for (a, b) in p.iter_mut().zip(q) {
            *a += meta_rate * (b - *a);
        }
    }
    Ok(())
}

fn apply_sgd(model: &mut ToyModel, g: &ParamGrads, rate: f64) {
    for (p, d) in model.blocks_mut().into_iter().zip(g.blocks()) {
        for (a, b) in p.iter_mut().zip(d) {
            *a -= rate * b;
        }
    }
}
