//! Two-layer softmax classifier over hashed features.
//!
//! `h = relu(W1ᵀx + b1)`, optional inverted dropout on `h`, then
//! `logits = W2ᵀh + b2`. `(W1, b1)` form the encoder and `(W2, b2)` the head.

mod checkpoint;
mod features;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::CHECKPOINT_MAGIC;
pub use features::{FeatureVector, Featurizer, DEFAULT_DIM};

use crate::batching::{BatchItem, InputRef, TrainBatch};
use crate::error::{invalid, Error, Result};
use crate::losses::{softmax, LossHead};
use crate::rng::Stream;
use crate::suite::Prediction;

pub const DEFAULT_HIDDEN: usize = 32;

/// Layer sizes of a [`ToyModel`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelShape {
    pub d_in: usize,
    pub hidden: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub d_in: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Row `i` (length `hidden`) holds the weights of input feature `i`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row `j` (length `classes`) holds the weights of hidden unit `j`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub dropout_rate: f64,
    pub frozen_encoder: bool,
}

/// Forward mode; training mode draws dropout masks from the stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Stream),
}

/// Activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    x: FeatureVector,
    pre: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-rate)); `None` without dropout.
    mask: Option<Vec<f64>>,
    h: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Dense gradients in the parameter layout of [`ToyModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(model: &ToyModel) -> Self {
        ParamGrads {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    pub fn fill_zero(&mut self) {
        for block in self.blocks_mut() {
            block.fill(0.0);
        }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn norm(&self) -> f64 {
        self.blocks().iter().flat_map(|b| b.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|g| g.is_finite()))
    }
}

/// Looks up the features of batch inputs.
pub trait FeatureSource {
    fn features(&self, input: InputRef) -> Option<&FeatureVector>;
}

/// One batch item after its forward pass(es): the differentiable pass and the
/// loss head attached to it.
pub struct ItemPass {
    pub cache: Cache,
    pub head: LossHead,
}

impl ToyModel {
    /// Gaussian initialisation: `W1 ~ N(0, 0.5²)`, `W2 ~ N(0, 1/H)`, zero
    /// biases.
    pub fn new(shape: ModelShape, rng: &mut Stream) -> Result<Self> {
        let ModelShape { d_in, hidden, classes } = shape;
        if d_in == 0 || hidden == 0 || classes < 2 {
            return Err(invalid(format!("invalid model shape {shape:?}")));
        }
        let n1 = Normal::new(0.0, 0.5).expect("valid normal");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid normal");
        let w1 = (0..d_in * hidden).map(|_| n1.sample(rng)).collect();
        let w2 = (0..hidden * classes).map(|_| n2.sample(rng)).collect();
        Ok(ToyModel {
            d_in,
            hidden,
            classes,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
            dropout_rate: 0.0,
            frozen_encoder: false,
        })
    }

    pub fn zeros(shape: ModelShape) -> Self {
        let ModelShape { d_in, hidden, classes } = shape;
        ToyModel {
            d_in,
            hidden,
            classes,
            w1: vec![0.0; d_in * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * classes],
            b2: vec![0.0; classes],
            dropout_rate: 0.0,
            frozen_encoder: false,
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape { d_in: self.d_in, hidden: self.hidden, classes: self.classes }
    }

    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        self.dropout_rate = rate;
        Ok(())
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|p| p.is_finite()))
    }

    pub fn forward(&self, x: &FeatureVector, mode: Mode<'_>) -> Result<(Prediction, Cache)> {
        if x.dim() != self.d_in {
            return Err(invalid(format!(
                "feature dimension {} does not match model input dimension {}",
                x.dim(),
                self.d_in
            )));
        }
        let hdim = self.hidden;
        let mut pre = self.b1.clone();
        for &(i, v) in x.entries() {
            let row = &self.w1[i as usize * hdim..(i as usize + 1) * hdim];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += w * v;
            }
        }
        let mut h: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
        let mask = match mode {
            Mode::Train(rng) if self.dropout_rate > 0.0 => {
                let keep = 1.0 / (1.0 - self.dropout_rate);
                let m: Vec<f64> = (0..hdim)
                    .map(|_| if rng.random::<f64>() < self.dropout_rate { 0.0 } else { keep })
                    .collect();
                for (a, s) in h.iter_mut().zip(&m) {
                    *a *= s;
                }
                Some(m)
            }
            _ => None,
        };
        let c = self.classes;
        let mut logits = self.b2.clone();
        for (j, &a) in h.iter().enumerate() {
            if a != 0.0 {
                for (l, w) in logits.iter_mut().zip(&self.w2[j * c..(j + 1) * c]) {
                    *l += w * a;
                }
            }
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("non-finite logits; model parameters diverged".into()));
        }
        let probs = softmax(&logits);
        let pred = Prediction::from_softmax(probs.clone());
        Ok((pred, Cache { x: x.clone(), pre, mask, h, logits, probs }))
    }

    /// Eval-mode prediction.
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        self.forward(x, Mode::Eval).map(|r| r.0)
    }

    /// Accumulates into `grads` the parameter gradient for upstream logit
    /// gradient `dlogits`. Encoder gradients stay untouched when the encoder
    /// is frozen.
    pub fn backward(&self, cache: &Cache, dlogits: &[f64], grads: &mut ParamGrads) -> Result<()> {
        let c = self.classes;
        let hdim = self.hidden;
        if dlogits.len() != c
            || cache.h.len() != hdim
            || cache.logits.len() != c
            || cache.x.dim() != self.d_in
            || grads.w1.len() != self.w1.len()
            || grads.w2.len() != self.w2.len()
        {
            return Err(invalid("forward cache or gradient buffer does not match the model"));
        }
        for (g, d) in grads.b2.iter_mut().zip(dlogits) {
            *g += d;
        }
        let mut dh = vec![0.0; hdim];
        for j in 0..hdim {
            let row = &self.w2[j * c..(j + 1) * c];
            let a = cache.h[j];
            let grow = &mut grads.w2[j * c..(j + 1) * c];
            let mut acc = 0.0;
            for k in 0..c {
                grow[k] += a * dlogits[k];
                acc += row[k] * dlogits[k];
            }
            dh[j] = acc;
        }
        if self.frozen_encoder {
            return Ok(());
        }
        for j in 0..hdim {
            let gate = if cache.pre[j] > 0.0 { 1.0 } else { 0.0 };
            let scale = cache.mask.as_ref().map_or(1.0, |m| m[j]);
            dh[j] *= gate * scale;
        }
        for (g, d) in grads.b1.iter_mut().zip(&dh) {
            *g += d;
        }
        for &(i, v) in cache.x.entries() {
            let row = &mut grads.w1[i as usize * hdim..(i as usize + 1) * hdim];
            for (g, d) in row.iter_mut().zip(&dh) {
                *g += v * d;
            }
        }
        Ok(())
    }

    /// Forward passes for every item of a batch. Paired items evaluate the
    /// original in eval mode as a constant target; only the returned pass is
    /// differentiated.
    pub fn item_passes(
        &self,
        batch: &TrainBatch,
        src: &dyn FeatureSource,
        mut mode: Mode<'_>,
    ) -> Result<Vec<ItemPass>> {
        let lookup = |r: InputRef| {
            src.features(r).ok_or_else(|| invalid(format!("no features for batch input {r:?}")))
        };
        let mut out = Vec::with_capacity(batch.items.len());
        for item in &batch.items {
            let (input, head) = match item {
                BatchItem::Labeled { input, label } => (*input, LossHead::for_label(label, self.classes)?),
                BatchItem::Paired { original, perturbed, delta } => {
                    let y0 = self.predict(lookup(*original)?)?;
                    let head = match delta {
                        None => LossHead::invariance(y0.probs()),
                        Some(k) => LossHead::directional(y0.probs(), *k)?,
                    };
                    (*perturbed, head)
                }
            };
            let m = match &mut mode {
                Mode::Eval => Mode::Eval,
                Mode::Train(rng) => Mode::Train(rng),
            };
            let (_, cache) = self.forward(lookup(input)?, m)?;
            out.push(ItemPass { cache, head });
        }
        Ok(out)
    }

    /// Mean loss over the batch; its gradient is accumulated into `grads`
    /// scaled by `weight`.
    pub fn loss_and_grad(
        &self,
        batch: &TrainBatch,
        src: &dyn FeatureSource,
        mode: Mode<'_>,
        weight: f64,
        grads: &mut ParamGrads,
    ) -> Result<f64> {
        if batch.items.is_empty() {
            return Err(invalid("empty batch"));
        }
        let passes = self.item_passes(batch, src, mode)?;
        let n = passes.len() as f64;
        let mut loss = 0.0;
        for p in &passes {
            loss += p.head.value(&p.cache.probs);
            if weight != 0.0 {
                let d: Vec<f64> = p.head.grad_logits(&p.cache.probs).iter().map(|g| g * weight / n).collect();
                self.backward(&p.cache, &d, grads)?;
            }
        }
        Ok(loss / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_features(dim: usize, nnz: usize, rng: &mut Stream) -> FeatureVector {
        FeatureVector::new(dim, (0..nnz).map(|_| (rng.random_range(0..dim as u32), rng.random::<f64>()))).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ToyModel::zeros(ModelShape { d_in: 8, hidden: 4, classes: 3 });
        let x = FeatureVector::new(8, [(1, 0.5), (7, 2.0)]).unwrap();
        let p = m.predict(&x).unwrap();
        for &q in p.probs() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rate_train_equals_eval() {
        let mut rng = stream(5);
        let m = ToyModel::new(ModelShape { d_in: 16, hidden: 8, classes: 2 }, &mut rng).unwrap();
        let x = random_features(16, 5, &mut rng);
        let (a, _) = m.forward(&x, Mode::Eval).unwrap();
        let (b, _) = m.forward(&x, Mode::Train(&mut rng)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_fraction_within_binomial_interval() {
        let mut rng = stream(11);
        let mut m = ToyModel::new(ModelShape { d_in: 4, hidden: 1000, classes: 2 }, &mut rng).unwrap();
        m.set_dropout(0.3).unwrap();
        let x = FeatureVector::new(4, [(0, 1.0)]).unwrap();
        let (_, cache) = m.forward(&x, Mode::Train(&mut rng)).unwrap();
        let zeroed = cache.mask.unwrap().iter().filter(|&&s| s == 0.0).count() as f64;
        // 99% normal interval for Binomial(1000, 0.3): 300 ± 2.576·√210.
        assert!((zeroed - 300.0).abs() <= 2.576 * 210f64.sqrt(), "zeroed {zeroed}");
    }

    #[test]
    fn frozen_encoder_has_zero_encoder_grads() {
        let mut rng = stream(2);
        let mut m = ToyModel::new(ModelShape { d_in: 16, hidden: 8, classes: 3 }, &mut rng).unwrap();
        m.frozen_encoder = true;
        let x = random_features(16, 6, &mut rng);
        let (_, cache) = m.forward(&x, Mode::Eval).unwrap();
        let mut g = ParamGrads::zeros(&m);
        m.backward(&cache, &[0.3, -0.1, -0.2], &mut g).unwrap();
        assert!(g.w1.iter().all(|&v| v == 0.0));
        assert!(g.b1.iter().all(|&v| v == 0.0));
        assert!(g.w2.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = stream(3);
        let m = ToyModel::new(ModelShape { d_in: 16, hidden: 8, classes: 2 }, &mut rng).unwrap();
        let x = random_features(16, 6, &mut rng);
        let (_, cache) = m.forward(&x, Mode::Eval).unwrap();
        let mut g = ParamGrads::zeros(&m);
        m.backward(&cache, &[0.0, 0.0], &mut g).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn mismatched_cache_rejected() {
        let mut rng = stream(4);
        let a = ToyModel::new(ModelShape { d_in: 16, hidden: 8, classes: 2 }, &mut rng).unwrap();
        let b = ToyModel::new(ModelShape { d_in: 16, hidden: 4, classes: 2 }, &mut rng).unwrap();
        let x = random_features(16, 3, &mut rng);
        let (_, cache) = a.forward(&x, Mode::Eval).unwrap();
        let mut g = ParamGrads::zeros(&b);
        assert!(b.backward(&cache, &[0.1, -0.1], &mut g).is_err());
        assert!(a.forward(&random_features(8, 2, &mut rng), Mode::Eval).is_err());
    }

    #[test]
    fn diverged_parameters_are_numeric_errors() {
        let mut m = ToyModel::zeros(ModelShape { d_in: 4, hidden: 2, classes: 2 });
        m.b2[0] = f64::NAN;
        let x = FeatureVector::new(4, [(0, 1.0)]).unwrap();
        assert!(matches!(m.predict(&x), Err(Error::Numeric(_))));
        assert!(!m.is_finite());
    }
}
