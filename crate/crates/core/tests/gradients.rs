//! Analytic gradients against central finite differences.

#[path = "support/gradcheck.rs"]
mod gradcheck;

use behavlearn::losses::LossHead;
use behavlearn::model::{Mode, ModelShape, ParamGrads, ToyModel};
use behavlearn::rng::stream;
use behavlearn::suite::LabelSpec;

const INSTANCES: u64 = 100;

#[test]
fn mft_loss_gradients() {
    gradcheck::check_mft(INSTANCES).unwrap();
}

#[test]
fn inv_loss_gradients() {
    gradcheck::check_inv(INSTANCES).unwrap();
}

#[test]
fn dir_loss_gradients() {
    gradcheck::check_dir(INSTANCES).unwrap();
}

#[test]
fn span_inv_loss_gradients() {
    gradcheck::check_span_inv(INSTANCES).unwrap();
}

#[test]
fn irm_probe_gradients() {
    gradcheck::check_irm_probe(INSTANCES).unwrap();
}

#[test]
fn model_backward_matches_finite_differences() {
    gradcheck::check_model_backward(INSTANCES).unwrap();
}

#[test]
fn frozen_encoder_has_zero_encoder_gradient() {
    let mut rng = stream(7);
    let shape = ModelShape { d_in: 6, hidden: 4, classes: 2 };
    let mut model = ToyModel::new(shape, &mut rng).unwrap();
    model.frozen_encoder = true;
    let x = gradcheck::random_features(&mut rng, 6);
    let (pred, cache) = model.forward(&x, Mode::Eval).unwrap();
    let head = LossHead::for_label(&LabelSpec::Hard(1), 2).unwrap();
    let mut grads = ParamGrads::zeros(&model);
    model.backward(&cache, &head.grad_logits(pred.probs()), &mut grads).unwrap();
    let [w1, b1, w2, b2] = grads.blocks();
    assert!(w1.iter().chain(b1).all(|&g| g == 0.0));
    assert!(w2.iter().chain(b2).any(|&g| g != 0.0));
}
