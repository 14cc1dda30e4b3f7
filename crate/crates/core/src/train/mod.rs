//! Training configurations and generalisation methods.
//!
//! Phase A trains on i.i.d. data with plain cross-entropy. Phase B trains on
//! suite data (optionally mixed with i.i.d. data) with the selected method.
//! Every phase draws from its own seeded stream, so phase A is identical for
//! all configurations that share a seed.

mod methods;
mod optim;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use methods::{
    dro_update, fish_step, irm_penalty, irm_probe_gradient, irm_probe_with_grads, DroState,
};
pub use optim::{optimizer_step, AdamW, Moments, ADAM_EPS, BETA1, BETA2};

use crate::batching::{make_batches, make_iid_batches, TrainBatch};
use crate::error::{invalid, Error, Result};
use crate::model::{FeatureSource, Mode, ModelShape, ParamGrads, ToyModel};
use crate::rng::{derive_stream, Stream};
use crate::suite::{CaseId, TestCase, TestSuite};

/// Name of the i.i.d. environment.
pub const IID_ENV: &str = "iid";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    /// i.i.d. data only.
    Iid,
    /// i.i.d. data, then suite data.
    IidThenSuite,
    /// One phase on the union of both.
    IidPlusSuite,
    /// i.i.d. data, then the union of both.
    IidThenMixed,
}

impl Configuration {
    pub const ALL: [Configuration; 4] = [
        Configuration::Iid,
        Configuration::IidThenSuite,
        Configuration::IidPlusSuite,
        Configuration::IidThenMixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Iid => "iid",
            Configuration::IidThenSuite => "iid_then_suite",
            Configuration::IidPlusSuite => "iid_plus_suite",
            Configuration::IidThenMixed => "iid_then_mixed",
        }
    }

    /// Short display label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Configuration::Iid => "IID",
            Configuration::IidThenSuite => "IID→T",
            Configuration::IidPlusSuite => "IID+T",
            Configuration::IidThenMixed => "IID→(IID+T)",
        }
    }

    pub fn has_phase_a(self) -> bool {
        matches!(self, Configuration::Iid | Configuration::IidThenSuite | Configuration::IidThenMixed)
    }

    pub fn has_phase_b(self) -> bool {
        self != Configuration::Iid
    }

    /// Whether phase B includes the i.i.d. data.
    pub fn mixes_iid(self) -> bool {
        matches!(self, Configuration::IidPlusSuite | Configuration::IidThenMixed)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Configuration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Configuration::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.label() == s)
            .ok_or_else(|| invalid(format!("unknown configuration '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    L2,
    Dropout,
    Lp,
    LpFt,
    Irm,
    GroupDro,
    Fish,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Vanilla,
        Method::L2,
        Method::Dropout,
        Method::Lp,
        Method::LpFt,
        Method::Irm,
        Method::GroupDro,
        Method::Fish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::L2 => "l2",
            Method::Dropout => "dropout",
            Method::Lp => "lp",
            Method::LpFt => "lp_ft",
            Method::Irm => "irm",
            Method::GroupDro => "group_dro",
            Method::Fish => "fish",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Vanilla => "Vanilla",
            Method::L2 => "L2",
            Method::Dropout => "Dropout",
            Method::Lp => "LP",
            Method::LpFt => "LP-FT",
            Method::Irm => "IRM",
            Method::GroupDro => "DRO",
            Method::Fish => "Fish",
        }
    }

    /// Methods that treat functionalities as separate environments.
    pub fn uses_environments(self) -> bool {
        matches!(self, Method::Irm | Method::GroupDro | Method::Fish)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method '{s}'")))
    }
}

/// How phase-B batches are scheduled across environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvBatching {
    /// All batches of all environments shuffled together, one per step.
    Pooled,
    /// One batch from every environment per step; an epoch is
    /// `ceil(total batches / environments)` steps and short environments cycle.
    RoundRobin,
}

/// When the perturbed version of INV/DIR cases is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    PerEpoch,
    PerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_iid: usize,
    pub epochs_suite: usize,
    pub weight_decay: f64,
    /// Weight decay used by the L2 method.
    pub l2_weight_decay: f64,
    pub base_dropout: f64,
    /// Dropout rate used by the dropout method.
    pub dropout_preset: f64,
    pub irm_weight: f64,
    pub dro_eta: f64,
    pub fish_inner_steps: usize,
    pub fish_inner_rate: f64,
    pub fish_meta_rate: f64,
    /// Fraction of LP-FT phase-B epochs spent with a frozen encoder.
    pub lp_ft_frozen_fraction: f64,
    /// Batching override; by default environment methods use round-robin and
    /// all other methods pooled batching.
    pub env_batching: Option<EnvBatching>,
    pub resample: Resample,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            learning_rate: 2e-3,
            batch_size: 8,
            epochs_iid: 4,
            epochs_suite: 4,
            weight_decay: 0.01,
            l2_weight_decay: 0.1,
            base_dropout: 0.1,
            dropout_preset: 0.3,
            irm_weight: 1.0,
            dro_eta: 0.01,
            fish_inner_steps: 3,
            fish_inner_rate: 0.1,
            fish_meta_rate: 0.5,
            lp_ft_frozen_fraction: 0.5,
            env_batching: None,
            resample: Resample::PerEpoch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub configuration: Configuration,
    pub method: Method,
    #[serde(default)]
    pub hyper: Hyper,
    pub seed: u64,
    /// Distinguishes phase-B streams of runs sharing a seed (e.g. the
    /// scenario and held-out subset).
    #[serde(default)]
    pub run_tag: String,
}

impl TrainConfig {
    pub fn new(configuration: Configuration, method: Method, seed: u64) -> Self {
        TrainConfig { configuration, method, hyper: Hyper::default(), seed, run_tag: String::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let positive = [
            ("learning_rate", h.learning_rate),
            ("fish_inner_rate", h.fish_inner_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("weight_decay", h.weight_decay),
            ("l2_weight_decay", h.l2_weight_decay),
            ("irm_weight", h.irm_weight),
            ("dro_eta", h.dro_eta),
            ("fish_meta_rate", h.fish_meta_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("base_dropout", h.base_dropout), ("dropout_preset", h.dropout_preset)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&h.lp_ft_frozen_fraction) {
            return Err(invalid("lp_ft_frozen_fraction must lie in [0, 1]"));
        }
        if h.batch_size == 0 || h.fish_inner_steps == 0 {
            return Err(invalid("batch_size and fish_inner_steps must be at least 1"));
        }
        if self.configuration.has_phase_a() && h.epochs_iid == 0 {
            return Err(invalid("epochs_iid must be at least 1"));
        }
        if self.configuration.has_phase_b() && h.epochs_suite == 0 {
            return Err(invalid("epochs_suite must be at least 1"));
        }
        Ok(())
    }

    fn batching(&self) -> EnvBatching {
        self.hyper.env_batching.unwrap_or(if self.method.uses_environments() {
            EnvBatching::RoundRobin
        } else {
            EnvBatching::Pooled
        })
    }
}

/// Data available to a training run.
pub struct TrainData<'a> {
    pub features: &'a dyn FeatureSource,
    /// Labels of all i.i.d. examples, indexed by example index.
    pub iid_labels: &'a [usize],
    /// Indices of the i.i.d. training examples.
    pub iid_train: &'a [usize],
    pub suite: &'a TestSuite,
    pub suite_train: &'a [CaseId],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
}

/// Mean training loss per environment in one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub env_losses: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Optimizer steps taken in each phase.
    pub steps_a: u64,
    pub steps_b: u64,
}

enum EnvData<'a> {
    Iid(&'a [usize]),
    Suite(Vec<&'a TestCase>),
}

struct Env<'a> {
    name: String,
    data: EnvData<'a>,
    pending: Vec<TrainBatch>,
}

impl Env<'_> {
    fn batches(&self, data: &TrainData<'_>, batch_size: usize, rng: &mut Stream) -> Result<Vec<TrainBatch>> {
        match &self.data {
            EnvData::Iid(idx) => make_iid_batches(idx, data.iid_labels, batch_size, rng),
            EnvData::Suite(cases) => make_batches(cases, batch_size, rng),
        }
    }

    fn next(&mut self, data: &TrainData<'_>, batch_size: usize, rng: &mut Stream) -> Result<TrainBatch> {
        if self.pending.is_empty() {
            self.pending = self.batches(data, batch_size, rng)?;
            self.pending.reverse();
        }
        Ok(self.pending.pop().expect("environments are non-empty"))
    }
}

#[derive(Default)]
struct LossLog(BTreeMap<String, (f64, usize)>);

impl LossLog {
    fn add(&mut self, env: &str, loss: f64) {
        let e = self.0.entry(env.to_string()).or_insert((0.0, 0));
        e.0 += loss;
        e.1 += 1;
    }

    fn finish(self, phase: Phase, epoch: usize) -> EpochRecord {
        EpochRecord {
            phase,
            epoch,
            env_losses: self.0.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
        }
    }
}

/// Fresh model for a run, initialised from the `(seed, "init")` stream.
pub fn init_model(seed: u64, shape: ModelShape) -> Result<ToyModel> {
    ToyModel::new(shape, &mut derive_stream(seed, &["init"]))
}

fn suite_envs<'a>(data: &TrainData<'a>) -> Result<Vec<Env<'a>>> {
    let owner = data.suite.case_functionality();
    let mut by_func: BTreeMap<&str, Vec<&'a TestCase>> = BTreeMap::new();
    for &id in data.suite_train {
        let case = data.suite.case(id).ok_or_else(|| invalid(format!("training case {id} is not in the suite")))?;
        let f = owner.get(&id).ok_or_else(|| invalid(format!("case {id} belongs to no functionality")))?;
        by_func.entry(f).or_default().push(case);
    }
    // Suite order, not name order.
    Ok(data
        .suite
        .functionalities()
        .filter_map(|f| {
            by_func.remove(f.name.as_str()).map(|cases| Env {
                name: f.name.clone(),
                data: EnvData::Suite(cases),
                pending: Vec::new(),
            })
        })
        .collect())
}

fn sgd_free_step(
    model: &mut ToyModel,
    opt: &mut AdamW,
    batch: &TrainBatch,
    data: &TrainData<'_>,
    rng: &mut Stream,
    grads: &mut ParamGrads,
    env: &str,
) -> Result<f64> {
    grads.fill_zero();
    let loss = model.loss_and_grad(batch, data.features, Mode::Train(rng), 1.0, grads)?;
    opt.step(model, grads, env)?;
    Ok(loss)
}

/// Phase A: plain cross-entropy on the i.i.d. training data.
pub fn run_phase_a(config: &TrainConfig, data: &TrainData<'_>, mut model: ToyModel) -> Result<(ToyModel, History)> {
    config.validate()?;
    if data.iid_train.is_empty() {
        return Err(invalid("i.i.d. training split is empty"));
    }
    let h = &config.hyper;
    let mut rng = derive_stream(config.seed, &["phase-a"]);
    model.set_dropout(h.base_dropout)?;
    model.frozen_encoder = false;
    let mut opt = AdamW::new(&model, h.learning_rate, h.weight_decay);
    let mut grads = ParamGrads::zeros(&model);
    let mut history = History::default();
    for epoch in 0..h.epochs_iid {
        let mut log = LossLog::default();
        for batch in make_iid_batches(data.iid_train, data.iid_labels, h.batch_size, &mut rng)? {
            let loss = sgd_free_step(&mut model, &mut opt, &batch, data, &mut rng, &mut grads, IID_ENV)?;
            log.add(IID_ENV, loss);
        }
        history.epochs.push(log.finish(Phase::A, epoch));
    }
    history.steps_a = opt.steps();
    Ok((model, history))
}

/// Phase B: suite data (mixed with i.i.d. data for the mixed
/// configurations) with the configured method active.
pub fn run_phase_b(config: &TrainConfig, data: &TrainData<'_>, mut model: ToyModel) -> Result<(ToyModel, History)> {
    config.validate()?;
    if !config.configuration.has_phase_b() {
        return Err(invalid("the IID configuration has no suite phase"));
    }
    if data.suite_train.is_empty() {
        return Err(invalid("suite training split is empty"));
    }
    let h = &config.hyper;
    let mut envs = suite_envs(data)?;
    if config.configuration.mixes_iid() {
        if data.iid_train.is_empty() {
            return Err(invalid("i.i.d. training split is empty"));
        }
        envs.push(Env { name: IID_ENV.to_string(), data: EnvData::Iid(data.iid_train), pending: Vec::new() });
    }
    let mut rng = derive_stream(config.seed, &["phase-b", &config.run_tag]);
    let method = config.method;
    model.set_dropout(if method == Method::Dropout { h.dropout_preset } else { h.base_dropout })?;
    let decay = if method == Method::L2 { h.l2_weight_decay } else { h.weight_decay };
    let frozen_epochs = match method {
        Method::Lp => h.epochs_suite,
        Method::LpFt => ((h.epochs_suite as f64 * h.lp_ft_frozen_fraction).round() as usize).min(h.epochs_suite),
        _ => 0,
    };
    let mut opt = AdamW::new(&model, h.learning_rate, decay);
    let mut grads = ParamGrads::zeros(&model);
    let mut dro = DroState::uniform(envs.len(), h.dro_eta);
    let mut fish_rng = derive_stream(config.seed, &["fish", &config.run_tag]);
    let mut fish_steps = 0u64;
    let mut history = History::default();
    let plain_fish = method == Method::Fish && envs.len() < 2;
    if plain_fish {
        log::warn!("Fish needs at least two environments; training with plain steps");
    }

    for epoch in 0..h.epochs_suite {
        model.frozen_encoder = epoch < frozen_epochs;
        let mut log = LossLog::default();
        let batching = if plain_fish { EnvBatching::Pooled } else { config.batching() };
        match (batching, method) {
            (EnvBatching::Pooled, m) if m != Method::Fish || plain_fish => {
                let mut all: Vec<(usize, TrainBatch)> = Vec::new();
                for (e, env) in envs.iter().enumerate() {
                    all.extend(env.batches(data, h.batch_size, &mut rng)?.into_iter().map(|b| (e, b)));
                }
                all.shuffle(&mut rng);
                for (e, mut batch) in all {
                    if h.resample == Resample::PerStep {
                        batch.resample(data.suite, &mut rng);
                    }
                    let loss = sgd_free_step(&mut model, &mut opt, &batch, data, &mut rng, &mut grads, &envs[e].name)?;
                    log.add(&envs[e].name, loss);
                }
            }
            _ => {
                let total: usize = {
                    let mut t = 0;
                    for env in &envs {
                        t += env.batches(data, h.batch_size, &mut rng.clone())?.len();
                    }
                    t
                };
                for env in &mut envs {
                    env.pending = env.batches(data, h.batch_size, &mut rng)?;
                    env.pending.reverse();
                }
                if method == Method::Fish {
                    let steps = total.div_ceil(h.fish_inner_steps);
                    for _ in 0..steps {
                        let envs_ref = &mut envs;
                        let log_ref = &mut log;
                        let rng_ref = &mut rng;
                        fish_step(
                            &mut model,
                            envs_ref.len(),
                            h.fish_inner_steps,
                            h.fish_inner_rate,
                            h.fish_meta_rate,
                            &mut fish_rng,
                            |m, e, g| {
                                let mut batch = envs_ref[e].next(data, h.batch_size, rng_ref)?;
                                if h.resample == Resample::PerStep {
                                    batch.resample(data.suite, rng_ref);
                                }
                                let loss = m.loss_and_grad(&batch, data.features, Mode::Train(rng_ref), 1.0, g)?;
                                if !g.is_finite() {
                                    return Err(Error::Numeric(format!(
                                        "non-finite gradient from environment {}",
                                        envs_ref[e].name
                                    )));
                                }
                                log_ref.add(&envs_ref[e].name, loss);
                                Ok(())
                            },
                        )?;
                        fish_steps += 1;
                    }
                } else {
                    let steps = total.div_ceil(envs.len());
                    for _ in 0..steps {
                        let mut batches = Vec::with_capacity(envs.len());
                        for env in &mut envs {
                            let mut b = env.next(data, h.batch_size, &mut rng)?;
                            if h.resample == Resample::PerStep {
                                b.resample(data.suite, &mut rng);
                            }
                            batches.push(b);
                        }
                        grads.fill_zero();
                        let losses = env_step(&model, method, h, &batches, data, &mut rng, &mut dro, &mut grads)?;
                        for (env, l) in envs.iter().zip(&losses) {
                            log.add(&env.name, *l);
                        }
                        let names: Vec<&str> = envs.iter().map(|e| e.name.as_str()).collect();
                        opt.step(&mut model, &grads, &names.join(","))?;
                    }
                }
            }
        }
        history.epochs.push(log.finish(Phase::B, epoch));
    }
    model.frozen_encoder = false;
    history.steps_b = opt.steps() + fish_steps;
    Ok((model, history))
}

/// Accumulates the gradient of one round-robin step (one batch per
/// environment) into `grads` and returns the per-environment mean losses.
#[allow(clippy::too_many_arguments)]
fn env_step(
    model: &ToyModel,
    method: Method,
    h: &Hyper,
    batches: &[TrainBatch],
    data: &TrainData<'_>,
    rng: &mut Stream,
    dro: &mut DroState,
    grads: &mut ParamGrads,
) -> Result<Vec<f64>> {
    let e_count = batches.len() as f64;
    match method {
        Method::Irm => {
            let mut losses = Vec::with_capacity(batches.len());
            for batch in batches {
                let passes = model.item_passes(batch, data.features, Mode::Train(rng))?;
                let n = passes.len() as f64;
                let items: Vec<_> = passes.iter().map(|p| (p.cache.logits.clone(), p.head.clone())).collect();
                let (g, dg) = irm_probe_with_grads(&items)?;
                let scale = h.irm_weight * 2.0 * g / e_count;
                let mut loss = 0.0;
                for (p, dgi) in passes.iter().zip(&dg) {
                    loss += p.head.value(&p.cache.probs);
                    let d: Vec<f64> = p
                        .head
                        .grad_logits(&p.cache.probs)
                        .iter()
                        .zip(dgi)
                        .map(|(a, b)| a * (1.0 / e_count) / n + scale * b)
                        .collect();
                    model.backward(&p.cache, &d, grads)?;
                }
                losses.push(loss / n);
            }
            Ok(losses)
        }
        Method::GroupDro => {
            let mut all = Vec::with_capacity(batches.len());
            let mut losses = Vec::with_capacity(batches.len());
            for batch in batches {
                let passes = model.item_passes(batch, data.features, Mode::Train(rng))?;
                let n = passes.len() as f64;
                losses.push(passes.iter().map(|p| p.head.value(&p.cache.probs)).sum::<f64>() / n);
                all.push(passes);
            }
            let (_, next) = dro_update(&losses, dro)?;
            *dro = next;
            for (passes, q) in all.iter().zip(&dro.q) {
                let n = passes.len() as f64;
                for p in passes {
                    let d: Vec<f64> = p.head.grad_logits(&p.cache.probs).iter().map(|g| g * q / n).collect();
                    model.backward(&p.cache, &d, grads)?;
                }
            }
            Ok(losses)
        }
        _ => batches
            .iter()
            .map(|b| model.loss_and_grad(b, data.features, Mode::Train(rng), 1.0 / e_count, grads))
            .collect(),
    }
}

/// Runs the configuration end to end from `model`.
pub fn run_training(config: &TrainConfig, data: &TrainData<'_>, model: ToyModel) -> Result<(ToyModel, History)> {
    config.validate()?;
    let (model, mut history) = if config.configuration.has_phase_a() {
        run_phase_a(config, data, model)?
    } else {
        (model, History::default())
    };
    if !config.configuration.has_phase_b() {
        return Ok((model, history));
    }
    let (model, hb) = run_phase_b(config, data, model)?;
    history.epochs.extend(hb.epochs);
    history.steps_b = hb.steps_b;
    Ok((model, history))
}

/// Hyper-parameter lattice over learning rates, batch sizes and suite epochs.
pub fn lattice(base: &Hyper, learning_rates: &[f64], batch_sizes: &[usize], epochs_suite: &[usize]) -> Vec<Hyper> {
    let mut out = Vec::new();
    for &lr in learning_rates {
        for &bs in batch_sizes {
            for &ep in epochs_suite {
                out.push(Hyper { learning_rate: lr, batch_size: bs, epochs_suite: ep, ..base.clone() });
            }
        }
    }
    out
}

/// Trains every candidate and keeps the one with the highest validation
/// score (the first on ties). `score` trains and evaluates one config.
pub fn grid_search<F>(base: &TrainConfig, candidates: &[Hyper], mut score: F) -> Result<(TrainConfig, f64)>
where
    F: FnMut(&TrainConfig) -> Result<f64>,
{
    let mut best: Option<(TrainConfig, f64)> = None;
    for hyper in candidates {
        let config = TrainConfig { hyper: hyper.clone(), ..base.clone() };
        let s = score(&config)?;
        log::debug!("grid point lr={} bs={} epochs={} -> {s:.4}", hyper.learning_rate, hyper.batch_size, hyper.epochs_suite);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((config, s));
        }
    }
    best.ok_or_else(|| invalid("empty hyper-parameter grid"))
}
