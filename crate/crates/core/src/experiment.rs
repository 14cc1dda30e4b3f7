//! Glue between generated data, training and evaluation: feature caching,
//! data splits, scenario runs and their outcomes.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::batching::InputRef;
use crate::error::{invalid, Result};
use crate::eval::{iid_metrics, Baseline, IidMetrics, RunOutcome};
use crate::model::{Featurizer, FeatureSource, FeatureVector, ModelShape, ToyModel, DEFAULT_DIM, DEFAULT_HIDDEN};
use crate::partition::{split_indices, split_suite, Ratios, Scenario, ScenarioRun, SuiteSplit};
use crate::rng::derive_stream;
use crate::suite::{evaluate_case, CaseId, Input, NeutralPolicy, Prediction, TestSuite};
use crate::synth::IidExample;
use crate::train::{init_model, run_phase_a, run_phase_b, Configuration, History, TrainConfig, TrainData};

/// Sizes and split ratios shared by every run of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// Seed of the data splits.
    pub split_seed: u64,
    pub suite_ratios: Ratios,
    pub iid_ratios: Ratios,
    /// Hashed feature buckets per text.
    pub feature_dim: usize,
    pub hidden: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            split_seed: 0,
            suite_ratios: Ratios::default(),
            iid_ratios: Ratios::new(0.7, 0.1, 0.2).expect("valid ratios"),
            feature_dim: DEFAULT_DIM,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

/// Precomputed feature vectors of every i.i.d. example and suite input.
pub struct FeatureStore {
    iid: Vec<FeatureVector>,
    cases: HashMap<CaseId, Vec<FeatureVector>>,
}

impl FeatureStore {
    pub fn build(featurizer: &Featurizer, iid: &[Input], suite: &TestSuite) -> Self {
        FeatureStore {
            iid: iid.iter().map(|i| featurizer.input(i)).collect(),
            cases: suite
                .cases()
                .iter()
                .map(|c| (c.id, c.inputs().into_iter().map(|i| featurizer.input(i)).collect()))
                .collect(),
        }
    }
}

impl FeatureSource for FeatureStore {
    fn features(&self, input: InputRef) -> Option<&FeatureVector> {
        match input {
            InputRef::Iid(i) => self.iid.get(i),
            InputRef::Case { case, slot } => self.cases.get(&case)?.get(slot),
        }
    }
}

/// Predictions and pass/fail outcomes of one model on the test splits.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub outcomes: BTreeMap<String, Vec<bool>>,
    /// Predictions for every input of every evaluated case, in case order.
    pub case_predictions: Vec<(CaseId, Vec<Prediction>)>,
    pub iid_predictions: Vec<Prediction>,
    pub iid_correct: Vec<bool>,
    pub iid: IidMetrics,
}

/// A trained and evaluated scenario run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: ScenarioRun,
    pub outcome: RunOutcome,
    pub evaluation: Evaluation,
    pub history: History,
    pub model: ToyModel,
}

type PhaseASlot = Arc<OnceLock<std::result::Result<ToyModel, String>>>;

/// One task's data, splits and features, plus a cache of phase-A models
/// shared by all runs with the same seed and phase-A hyper-parameters.
pub struct Experiment {
    pub iid: Vec<IidExample>,
    pub iid_labels: Vec<usize>,
    /// Train / validation / test indices into `iid`.
    pub iid_split: [Vec<usize>; 3],
    pub suite: TestSuite,
    pub split: SuiteSplit,
    pub shape: ModelShape,
    pub policy: NeutralPolicy,
    features: FeatureStore,
    phase_a: Mutex<HashMap<String, PhaseASlot>>,
}

impl Experiment {
    pub fn new(iid: Vec<IidExample>, suite: TestSuite, options: ExperimentOptions) -> Result<Self> {
        if iid.is_empty() {
            return Err(invalid("empty i.i.d. dataset"));
        }
        let pairs = matches!(iid[0].input, Input::Pair(..));
        if iid.iter().any(|e| matches!(e.input, Input::Pair(..)) != pairs) {
            return Err(invalid("i.i.d. dataset mixes single texts and pairs"));
        }
        if let Some(c) = suite.cases().iter().find(|c| c.inputs().iter().any(|i| matches!(i, Input::Pair(..)) != pairs)) {
            return Err(invalid(format!("case {} does not match the i.i.d. input kind", c.id)));
        }
        let classes = suite.n_labels;
        if let Some(e) = iid.iter().find(|e| e.label >= classes) {
            return Err(invalid(format!("i.i.d. label {} outside a {classes}-class task", e.label)));
        }
        let featurizer = Featurizer::new(options.feature_dim)?;
        let inputs: Vec<Input> = iid.iter().map(|e| e.input.clone()).collect();
        let features = FeatureStore::build(&featurizer, &inputs, &suite);
        let split = split_suite(&suite, options.suite_ratios, &mut derive_stream(options.split_seed, &["split", "suite"]))?;
        let iid_split = split_indices(iid.len(), options.iid_ratios, &mut derive_stream(options.split_seed, &["split", "iid"]))?;
        Ok(Experiment {
            iid_labels: iid.iter().map(|e| e.label).collect(),
            iid,
            iid_split,
            split,
            shape: ModelShape { d_in: featurizer.input_dim(pairs), hidden: options.hidden, classes },
            policy: NeutralPolicy::default(),
            suite,
            features,
            phase_a: Mutex::new(HashMap::new()),
        })
    }

    pub fn features(&self) -> &dyn FeatureSource {
        &self.features
    }

    pub fn train_data<'a>(&'a self, suite_train: &'a [CaseId]) -> TrainData<'a> {
        TrainData {
            features: &self.features,
            iid_labels: &self.iid_labels,
            iid_train: &self.iid_split[0],
            suite: &self.suite,
            suite_train,
        }
    }

    fn phase_a_key(config: &TrainConfig) -> String {
        let h = &config.hyper;
        format!(
            "{}|{}|{}|{}|{}|{}",
            config.seed, h.learning_rate, h.batch_size, h.epochs_iid, h.weight_decay, h.base_dropout
        )
    }

    /// The model after phase A, trained once per distinct key.
    pub fn phase_a_model(&self, config: &TrainConfig) -> Result<ToyModel> {
        let slot = {
            let mut cache = self.phase_a.lock().expect("phase-A cache poisoned");
            cache.entry(Self::phase_a_key(config)).or_default().clone()
        };
        let trained = slot.get_or_init(|| {
            let data = self.train_data(&[]);
            init_model(config.seed, self.shape)
                .and_then(|m| run_phase_a(config, &data, m))
                .map(|(m, _)| m)
                .map_err(|e| e.to_string())
        });
        trained.clone().map_err(|e| invalid(format!("phase A failed: {e}")))
    }

    /// Trains `config` on the training cases of `run` (no suite cases for
    /// the standard scenario).
    pub fn train(&self, config: &TrainConfig, run: &ScenarioRun) -> Result<(ToyModel, History)> {
        config.validate()?;
        let has_b = config.configuration.has_phase_b() && run.scenario.trains_on_suite();
        if run.scenario.trains_on_suite() != config.configuration.has_phase_b() {
            return Err(invalid(format!(
                "configuration {} cannot run the {} scenario",
                config.configuration.as_str(),
                run.scenario
            )));
        }
        let model = if config.configuration.has_phase_a() {
            self.phase_a_model(config)?
        } else {
            init_model(config.seed, self.shape)?
        };
        if !has_b {
            return Ok((model, History::default()));
        }
        let cases = run.train_cases(&self.suite, &self.split);
        let data = self.train_data(&cases);
        run_phase_b(config, &data, model)
    }

    /// Evaluates `model` on the test cases of `functionalities` and on the
    /// i.i.d. test split.
    pub fn evaluate(&self, model: &ToyModel, functionalities: &[String]) -> Result<Evaluation> {
        let mut outcomes = BTreeMap::new();
        let mut case_predictions = Vec::new();
        for name in functionalities {
            let f = self
                .suite
                .functionality(name)
                .ok_or_else(|| invalid(format!("unknown functionality '{name}'")))?;
            let mut passed = Vec::new();
            for &id in f.case_ids.iter().filter(|id| self.split.test.contains(id)) {
                let case = self.suite.case(id).expect("functionality cases exist");
                let preds = (0..case.inputs().len())
                    .map(|slot| model.predict(self.features.features(InputRef::Case { case: id, slot }).expect("cached")))
                    .collect::<Result<Vec<_>>>()?;
                passed.push(evaluate_case(case, &preds, self.policy)?);
                case_predictions.push((id, preds));
            }
            outcomes.insert(name.clone(), passed);
        }
        let test = &self.iid_split[2];
        let iid_predictions = test
            .iter()
            .map(|&i| model.predict(&self.features.iid[i]))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = test.iter().map(|&i| self.iid_labels[i]).collect();
        let iid_correct = iid_predictions.iter().zip(&labels).map(|(p, &y)| p.argmax() == y).collect();
        let iid = iid_metrics(&iid_predictions, &labels)?;
        Ok(Evaluation { outcomes, case_predictions, iid_predictions, iid_correct, iid })
    }

    /// Labels of the i.i.d. test split.
    pub fn iid_test_labels(&self) -> Vec<usize> {
        self.iid_split[2].iter().map(|&i| self.iid_labels[i]).collect()
    }

    /// Trains and evaluates one scenario run. The run tag of `config` is
    /// replaced by the run id so phase-B streams differ between runs.
    pub fn run(&self, config: &TrainConfig, run: &ScenarioRun) -> Result<RunResult> {
        let config = TrainConfig { run_tag: run.id(), ..config.clone() };
        let (model, history) = self.train(&config, run)?;
        let evaluation = self.evaluate(&model, &run.eval_functionalities)?;
        let outcome = RunOutcome {
            scenario: run.scenario,
            subset: run.subset.clone(),
            outcomes: evaluation.outcomes.clone(),
            iid_correct: evaluation.iid_correct.clone(),
            iid: evaluation.iid,
        };
        Ok(RunResult { run: run.clone(), outcome, evaluation, history, model })
    }

    /// The i.i.d.-only reference model evaluated on every functionality.
    pub fn baseline(&self, seed: u64, hyper: &crate::train::Hyper) -> Result<(Baseline, RunResult)> {
        let config = TrainConfig {
            hyper: hyper.clone(),
            ..TrainConfig::new(Configuration::Iid, crate::train::Method::Vanilla, seed)
        };
        let run = crate::partition::plan_scenarios(&self.suite, Scenario::Standard).remove(0);
        let result = self.run(&config, &run)?;
        let base = Baseline {
            outcomes: result.outcome.outcomes.clone(),
            iid_correct: result.outcome.iid_correct.clone(),
            iid: result.outcome.iid,
        };
        Ok((base, result))
    }
}
