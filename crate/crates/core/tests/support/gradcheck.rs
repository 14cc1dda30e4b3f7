//! Analytic gradients against central finite differences. Each check
//! returns the first mismatch it finds.
#![allow(dead_code)]

use behavlearn::alignment::{span_inv_loss, span_inv_loss_grad, AlignmentMap};
use behavlearn::losses::{softmax, LossHead};
use behavlearn::model::{FeatureVector, Mode, ModelShape, ParamGrads, ToyModel};
use behavlearn::rng::stream;
use behavlearn::suite::{DeltaKind, LabelSpec};
use behavlearn::train::irm_probe_with_grads;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub type Check = Result<(), String>;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Absolute floor for components whose true value is zero.
const ABS_FLOOR: f64 = 1e-9;

const KINDS: [DeltaKind; 4] =
    [DeltaKind::NotMoreNegative, DeltaKind::NotMorePositive, DeltaKind::NotMoreConfident, DeltaKind::NotLessConfident];

fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let keep = x[i];
            x[i] = keep + STEP;
            let up = f(&x);
            x[i] = keep - STEP;
            let down = f(&x);
            x[i] = keep;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn check_close(analytic: &[f64], numeric: &[f64], what: &str) -> Check {
    if analytic.len() != numeric.len() {
        return Err(format!("{what}: {} analytic vs {} numeric components", analytic.len(), numeric.len()));
    }
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if (a - n).abs() > REL_TOL * a.abs().max(n.abs()) + ABS_FLOOR {
            return Err(format!("{what}[{i}]: analytic {a:e} vs numeric {n:e}"));
        }
    }
    Ok(())
}

fn logits(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.5).unwrap();
    (0..c).map(|_| n.sample(rng)).collect()
}

fn distribution(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    softmax(&logits(rng, c))
}

fn check_head(head: &LossHead, z: &[f64], what: &str) -> Check {
    let analytic = head.grad_logits(&softmax(z));
    let numeric = central_diff(z, |z| head.value(&softmax(z)));
    check_close(&analytic, &numeric, what)
}

pub fn check_mft(instances: u64) -> Check {
    let mut rng = stream(1);
    for i in 0..instances {
        let c = rng.random_range(2..6);
        let label = match i % 3 {
            0 => LabelSpec::Hard(rng.random_range(0..c)),
            1 => LabelSpec::Soft(distribution(&mut rng, c)),
            _ if c == 2 => LabelSpec::neutral(),
            _ => LabelSpec::Hard(0),
        };
        let head = LossHead::for_label(&label, c).unwrap();
        check_head(&head, &logits(&mut rng, c), &format!("mft #{i}"))?;
    }
    Ok(())
}

pub fn check_inv(instances: u64) -> Check {
    let mut rng = stream(2);
    for i in 0..instances {
        let c = rng.random_range(2..6);
        let head = LossHead::invariance(&distribution(&mut rng, c));
        check_head(&head, &logits(&mut rng, c), &format!("inv #{i}"))?;
    }
    Ok(())
}

pub fn check_dir(instances: u64) -> Check {
    let mut rng = stream(3);
    let mut checked = 0;
    let mut violated = 0u64;
    while checked < instances {
        let kind = KINDS[checked as usize % 4];
        let c = if kind.is_sentiment_directional() { 2 } else { rng.random_range(2..5) };
        let y0 = distribution(&mut rng, c);
        let z = logits(&mut rng, c);
        let head = LossHead::directional(&y0, kind).unwrap();
        let p = softmax(&z);
        // Stay away from the hinge, where the loss is not differentiable.
        if p.iter().zip(&y0).any(|(a, b)| (a - b).abs() < 1e-3) {
            continue;
        }
        violated += (head.value(&p) > 0.0) as u64;
        check_head(&head, &z, &format!("dir {kind:?} #{checked}"))?;
        checked += 1;
    }
    if violated <= instances / 5 {
        return Err(format!("too few violated instances ({violated}) to exercise the loss"));
    }
    Ok(())
}

pub fn check_span_inv(instances: u64) -> Check {
    let mut rng = stream(4);
    for i in 0..instances {
        let n_orig = rng.random_range(3..12);
        let n_pert = rng.random_range(3..12);
        let mut pairs = Vec::new();
        let (mut a, mut b) = (0, 0);
        while a < n_orig && b < n_pert {
            if rng.random_bool(0.7) {
                pairs.push((a, b));
                a += 1;
                b += 1;
            } else if rng.random_bool(0.5) {
                a += 1;
            } else {
                b += 1;
            }
        }
        if pairs.is_empty() {
            pairs.push((0, 0));
        }
        let map = AlignmentMap { pairs };
        let os = distribution(&mut rng, n_orig);
        let oe = distribution(&mut rng, n_orig);
        let zs = logits(&mut rng, n_pert);
        let ze = logits(&mut rng, n_pert);
        let (_, gs, ge) = span_inv_loss_grad(&os, &oe, &zs, &ze, &map).unwrap();
        let ns = central_diff(&zs, |z| span_inv_loss(&os, &oe, &softmax(z), &softmax(&ze), &map).unwrap());
        let ne = central_diff(&ze, |z| span_inv_loss(&os, &oe, &softmax(&zs), &softmax(z), &map).unwrap());
        check_close(&gs, &ns, &format!("span start #{i}"))?;
        check_close(&ge, &ne, &format!("span end #{i}"))?;
    }
    Ok(())
}

pub fn check_irm_probe(instances: u64) -> Check {
    let mut rng = stream(5);
    for i in 0..instances {
        let c = rng.random_range(2..4);
        let n = rng.random_range(1..5);
        let items: Vec<(Vec<f64>, LossHead)> = (0..n)
            .map(|_| (logits(&mut rng, c), LossHead::for_label(&LabelSpec::Hard(rng.random_range(0..c)), c).unwrap()))
            .collect();
        let (_, grads) = irm_probe_with_grads(&items).unwrap();
        for k in 0..n {
            let numeric = central_diff(&items[k].0, |z| {
                let mut moved = items.clone();
                moved[k].0 = z.to_vec();
                behavlearn::train::irm_probe_gradient(&moved).unwrap()
            });
            check_close(&grads[k], &numeric, &format!("irm #{i} item {k}"))?;
        }
    }
    Ok(())
}

pub fn random_features(rng: &mut impl Rng, dim: usize) -> FeatureVector {
    let mut entries = Vec::new();
    for i in 0..dim as u32 {
        if rng.random_bool(0.6) {
            entries.push((i, rng.random_range(0.05..1.0)));
        }
    }
    FeatureVector::new(dim, entries).unwrap()
}

fn random_head(rng: &mut impl Rng, model: &ToyModel, x: &FeatureVector, k: u64) -> LossHead {
    let c = model.classes;
    match k % 3 {
        0 => LossHead::for_label(&LabelSpec::Hard(rng.random_range(0..c)), c).unwrap(),
        1 => LossHead::invariance(&distribution(rng, c)),
        _ => {
            // Reference away from the current prediction so the hinge is not hit.
            let p = model.predict(x).unwrap();
            let mut y0 = p.probs().to_vec();
            let shift = if rng.random_bool(0.5) { 0.2 } else { -0.2 };
            let c0 = behavlearn::suite::argmax(&y0);
            let moved = (y0[c0] + shift).clamp(0.05, 0.95);
            let rest: f64 = y0.iter().enumerate().filter(|(j, _)| *j != c0).map(|(_, v)| v).sum();
            for (j, v) in y0.iter_mut().enumerate() {
                if j != c0 {
                    *v *= (1.0 - moved) / rest;
                }
            }
            y0[c0] = moved;
            LossHead::directional(&y0, DeltaKind::NotMoreConfident).unwrap()
        }
    }
}

fn param_vector(model: &ToyModel) -> Vec<f64> {
    model.blocks().iter().flat_map(|b| b.iter().copied()).collect()
}

fn with_params(model: &ToyModel, theta: &[f64]) -> ToyModel {
    let mut m = model.clone();
    let mut off = 0;
    for b in m.blocks_mut() {
        let n = b.len();
        b.copy_from_slice(&theta[off..off + n]);
        off += n;
    }
    m
}

fn near_relu_kink(model: &ToyModel, x: &FeatureVector) -> bool {
    let h = model.hidden;
    (0..h).any(|j| {
        let pre = model.b1[j] + x.entries().iter().map(|&(i, v)| model.w1[i as usize * h + j] * v).sum::<f64>();
        pre.abs() < 1e-3
    })
}

pub fn check_model_backward(instances: u64) -> Check {
    let mut rng = stream(6);
    let mut i = 0;
    while i < instances {
        let shape = ModelShape { d_in: rng.random_range(3..10), hidden: rng.random_range(2..7), classes: rng.random_range(2..4) };
        let mut model = ToyModel::new(shape, &mut rng).unwrap();
        let train_mode = i % 2 == 1;
        if train_mode {
            model.set_dropout(0.3).unwrap();
        }
        let x = random_features(&mut rng, shape.d_in);
        if near_relu_kink(&model, &x) {
            continue;
        }
        let head = random_head(&mut rng, &model, &x, i);
        let mask_seed = 1000 + i;
        let loss_at = |m: &ToyModel| {
            let mut r = stream(mask_seed);
            let mode = if train_mode { Mode::Train(&mut r) } else { Mode::Eval };
            let (pred, _) = m.forward(&x, mode).unwrap();
            head.value(pred.probs())
        };

        let mut r = stream(mask_seed);
        let mode = if train_mode { Mode::Train(&mut r) } else { Mode::Eval };
        let (pred, cache) = model.forward(&x, mode).unwrap();
        let theta = param_vector(&model);
        let dlogits = head.grad_logits(pred.probs());
        let mut grads = ParamGrads::zeros(&model);
        model.backward(&cache, &dlogits, &mut grads).unwrap();
        let analytic: Vec<f64> = grads.blocks().iter().flat_map(|b| b.iter().copied()).collect();
        let numeric = central_diff(&theta, |t| loss_at(&with_params(&model, t)));
        check_close(&analytic, &numeric, &format!("model #{i} (train mode {train_mode})"))?;
        i += 1;
    }
    Ok(())
}
