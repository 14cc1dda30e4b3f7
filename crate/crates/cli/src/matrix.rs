//! Planning, executing and reporting the configuration × method × scenario
//! matrix.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use behavlearn::eval::{
    compile_report, degenerate_audit, iid_metrics, render_table, AuditReport, Baseline, IidScore,
    ReportOptions, RunOutcome, ScoreReport,
};
use behavlearn::experiment::Experiment;
use behavlearn::partition::{plan_scenarios, Scenario, ScenarioRun};
use behavlearn::suite::{evaluate_case, parse_suite, serialize_suite, CaseId, NeutralPolicy, Prediction, TestSuite};
use behavlearn::synth::{default_experiment_spec, format_iid, generate_experiment, parse_iid, IidExample};
use behavlearn::train::{Configuration, Method, TrainConfig};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MatrixConfig;
use crate::store::{
    append_timing, predictions_jsonl, read_json, read_predictions, run_state, sha256_hex, short, to_json_bytes,
    write_artifact, Artifact, PredictionRecord, RunManifest, RunState,
};
use crate::DataError;

pub const SUITE_FILE: &str = "inputs/suite.json";
pub const IID_FILE: &str = "inputs/iid.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One planned training run of the matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub configuration: Configuration,
    pub method: Method,
    pub run: ScenarioRun,
}

fn path_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

impl PlannedRun {
    pub fn system(&self) -> String {
        format!("{}/{}", self.configuration, self.method)
    }

    pub fn id(&self) -> String {
        format!("{}/{}", self.system(), self.run.id())
    }

    pub fn dir(&self) -> String {
        format!(
            "runs/{}/{}/{}/{}",
            self.configuration,
            self.method,
            self.run.scenario,
            path_safe(&self.run.subset)
        )
    }

    /// The standard scenario trains nothing on the suite, so it runs the
    /// i.i.d.-only baseline with this system's hyper-parameters.
    pub fn train_config(&self, config: &MatrixConfig) -> TrainConfig {
        let (configuration, method) = if self.run.scenario == Scenario::Standard {
            (Configuration::Iid, Method::Vanilla)
        } else {
            (self.configuration, self.method)
        };
        TrainConfig {
            hyper: config.hyper.clone(),
            run_tag: self.run.id(),
            ..TrainConfig::new(configuration, method, config.seed)
        }
    }
}

/// Every run of the matrix in a fixed order: per configuration and method,
/// the standard run, the seen run and the held-out runs of each axis.
pub fn plan(config: &MatrixConfig, suite: &TestSuite) -> Vec<PlannedRun> {
    let mut scenarios = vec![Scenario::Standard, Scenario::Seen];
    scenarios.extend(config.axes().into_iter().map(|a| a.scenario()));
    let mut out = Vec::new();
    for &configuration in &config.configs {
        for &method in &config.methods {
            for &s in &scenarios {
                for run in plan_scenarios(suite, s) {
                    out.push(PlannedRun { configuration, method, run });
                }
            }
        }
    }
    out
}

/// Top-level manifest of an output directory, written before any training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment_id: String,
    pub seed: u64,
    pub iid_metric: IidScore,
    /// The resolved configuration, with data paths pointing at the copied
    /// inputs.
    pub config: MatrixConfig,
    pub inputs: Vec<Artifact>,
    pub runs: Vec<PlannedRun>,
}

/// Suite and i.i.d. data of a matrix, loaded or generated.
pub struct Inputs {
    pub suite_text: String,
    pub iid_text: String,
    pub suite: TestSuite,
    pub iid: Vec<IidExample>,
    pub iid_metric: IidScore,
}

impl Inputs {
    pub fn from_config(config: &MatrixConfig) -> Result<Self> {
        if let Some(task) = config.task {
            let spec = default_experiment_spec(task);
            let (iid, g) = generate_experiment(&spec, config.seed)?;
            return Ok(Inputs {
                suite_text: serialize_suite(&g.suite),
                iid_text: format_iid(&iid),
                suite: g.suite,
                iid,
                iid_metric: config.iid_metric.unwrap_or(spec.iid_metric),
            });
        }
        let (Some(sp), Some(ip)) = (&config.suite, &config.iid) else {
            bail!(crate::UsageError::new("suite and iid paths are required without a task"));
        };
        let suite_text = fs::read_to_string(sp).with_context(|| format!("reading {}", sp.display()))?;
        let iid_text = fs::read_to_string(ip).with_context(|| format!("reading {}", ip.display()))?;
        Self::parse(suite_text, iid_text, config.iid_metric.unwrap_or_default())
    }

    pub fn parse(suite_text: String, iid_text: String, iid_metric: IidScore) -> Result<Self> {
        let suite = parse_suite(&suite_text).map_err(|e| DataError::new(format!("suite: {e}")))?;
        let report = behavlearn::suite::validate_suite(&suite);
        if !report.is_empty() {
            bail!(DataError::new(format!("suite is malformed: {report}")));
        }
        let iid = parse_iid(&iid_text).map_err(|e| DataError::new(format!("i.i.d. data: {e}")))?;
        Ok(Inputs { suite_text, iid_text, suite, iid, iid_metric })
    }

    fn load(out: &Path, iid_metric: IidScore) -> Result<Self> {
        let suite_text = fs::read_to_string(out.join(SUITE_FILE)).context("reading the copied suite")?;
        let iid_text = fs::read_to_string(out.join(IID_FILE)).context("reading the copied i.i.d. data")?;
        Self::parse(suite_text, iid_text, iid_metric)
    }
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct MatrixSummary {
    pub planned: usize,
    pub trained: usize,
    pub skipped: usize,
}

fn run_input_hash(inputs: &[Artifact], config: &MatrixConfig, planned: &PlannedRun) -> String {
    let key = serde_json::json!({
        "inputs": inputs.iter().map(|a| &a.sha256).collect::<Vec<_>>(),
        "options": config.options,
        "train": planned.train_config(config),
        "run": planned,
    });
    sha256_hex(key.to_string().as_bytes())
}

/// Runs every missing run of the matrix into `out`, then writes the reports.
pub fn run_matrix(config: &MatrixConfig, out: &Path, workers: usize) -> Result<(MatrixSummary, Vec<ScoreReport>)> {
    config.check()?;
    let inputs = Inputs::from_config(config)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let suite_art = Artifact { path: SUITE_FILE.into(), sha256: sha256_hex(inputs.suite_text.as_bytes()) };
    let iid_art = Artifact { path: IID_FILE.into(), sha256: sha256_hex(inputs.iid_text.as_bytes()) };
    let echo = MatrixConfig {
        task: None,
        suite: Some(SUITE_FILE.into()),
        iid: Some(IID_FILE.into()),
        iid_metric: Some(inputs.iid_metric),
        ..config.clone()
    };
    let runs = plan(config, &inputs.suite);
    let id_key = serde_json::json!({ "inputs": [&suite_art.sha256, &iid_art.sha256], "config": echo });
    let manifest = ExperimentManifest {
        experiment_id: sha256_hex(id_key.to_string().as_bytes())[..16].to_string(),
        seed: config.seed,
        iid_metric: inputs.iid_metric,
        config: echo,
        inputs: vec![suite_art, iid_art],
        runs,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let old: ExperimentManifest = read_json(&manifest_path)?;
        if old.inputs != manifest.inputs {
            bail!(DataError::new(format!(
                "{} holds experiment {} built from different inputs; refusing to mix results",
                out.display(),
                old.experiment_id
            )));
        }
    }
    let mut pending = Vec::new();
    let mut summary = MatrixSummary { planned: manifest.runs.len(), ..Default::default() };
    for planned in &manifest.runs {
        let hash = run_input_hash(&manifest.inputs, config, planned);
        match run_state(out, &planned.dir(), &hash)? {
            RunState::Complete => summary.skipped += 1,
            RunState::Missing => pending.push((planned, hash)),
        }
    }
    // Stale runs have been ruled out; only now is anything written.
    write_artifact(out, SUITE_FILE, inputs.suite_text.as_bytes())?;
    write_artifact(out, IID_FILE, inputs.iid_text.as_bytes())?;
    write_artifact(out, MANIFEST_FILE, &to_json_bytes(&manifest))?;

    info!(
        "experiment {}: {} runs planned, {} already complete",
        manifest.experiment_id, summary.planned, summary.skipped
    );
    if !pending.is_empty() {
        let mut options = config.options;
        options.split_seed = config.seed;
        let exp = Experiment::new(inputs.iid.clone(), inputs.suite.clone(), options)?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
        pool.install(|| {
            pending
                .par_iter()
                .map(|(planned, hash)| execute(&exp, config, out, planned, hash))
                .collect::<Result<Vec<()>>>()
        })?;
        summary.trained = pending.len();
    }
    let reports = write_reports(out)?;
    Ok((summary, reports))
}

fn execute(exp: &Experiment, config: &MatrixConfig, out: &Path, planned: &PlannedRun, hash: &str) -> Result<()> {
    let start = Instant::now();
    let result = exp.run(&planned.train_config(config), &planned.run)?;
    let mut records = Vec::new();
    for (id, preds) in &result.evaluation.case_predictions {
        for (k, p) in preds.iter().enumerate() {
            records.push(PredictionRecord { case_id: Some(id.0), input_index: k, probs: p.probs().to_vec() });
        }
    }
    for (&i, p) in exp.iid_split[2].iter().zip(&result.evaluation.iid_predictions) {
        records.push(PredictionRecord { case_id: None, input_index: i, probs: p.probs().to_vec() });
    }
    let dir = planned.dir();
    let artifacts = vec![
        write_artifact(out, &format!("{dir}/predictions.jsonl"), &predictions_jsonl(&records))?,
        write_artifact(out, &format!("{dir}/history.json"), &to_json_bytes(&result.history))?,
        write_artifact(out, &format!("{dir}/model.bin"), &result.model.to_bytes())?,
    ];
    let manifest = RunManifest {
        run_id: planned.id(),
        configuration: planned.configuration.to_string(),
        method: planned.method.to_string(),
        scenario: planned.run.scenario.to_string(),
        subset: planned.run.subset.clone(),
        seed: config.seed,
        input_hash: hash.to_string(),
        artifacts,
    };
    write_artifact(out, &format!("{dir}/manifest.json"), &to_json_bytes(&manifest))?;
    let secs = start.elapsed().as_secs_f64();
    append_timing(out, &planned.id(), secs)?;
    info!("{} done in {secs:.1}s ({})", planned.id(), short(hash));
    Ok(())
}

/// A completed output directory, read back from disk.
pub struct Store {
    pub manifest: ExperimentManifest,
    pub inputs: Inputs,
}

impl Store {
    pub fn open(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            bail!(DataError::new(format!("{} has no {MANIFEST_FILE}; run run-matrix first", out.display())));
        }
        let manifest: ExperimentManifest = read_json(&path)?;
        let inputs = Inputs::load(out, manifest.iid_metric)?;
        for a in &manifest.inputs {
            let text = if a.path == SUITE_FILE { &inputs.suite_text } else { &inputs.iid_text };
            if sha256_hex(text.as_bytes()) != a.sha256 {
                bail!(DataError::new(format!("{} does not match its recorded hash", a.path)));
            }
        }
        Ok(Store { manifest, inputs })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.inputs.iid.iter().map(|e| e.label).collect()
    }

    /// Whether the run has a manifest whose artifacts are intact.
    pub fn is_complete(&self, out: &Path, planned: &PlannedRun) -> bool {
        let path = out.join(planned.dir()).join("manifest.json");
        read_json::<RunManifest>(&path).is_ok_and(|m| crate::store::artifacts_intact(out, &m.artifacts))
    }

    /// Raw predictions of a run: per case, the predictions of its inputs in
    /// input order; and the i.i.d. predictions with their example indices.
    pub fn predictions(&self, out: &Path, planned: &PlannedRun) -> Result<RunPredictions> {
        let records = read_predictions(&out.join(planned.dir()).join("predictions.jsonl"))?;
        let mut cases: BTreeMap<CaseId, Vec<(usize, Prediction)>> = BTreeMap::new();
        let mut iid = Vec::new();
        for r in records {
            let p = Prediction::new(r.probs).map_err(|e| DataError::new(format!("{}: {e}", planned.id())))?;
            match r.case_id {
                Some(id) => cases.entry(CaseId(id)).or_default().push((r.input_index, p)),
                None => iid.push((r.input_index, p)),
            }
        }
        let cases = cases
            .into_iter()
            .map(|(id, mut v)| {
                v.sort_by_key(|x| x.0);
                (id, v.into_iter().map(|x| x.1).collect())
            })
            .collect();
        Ok(RunPredictions { cases, iid })
    }

    /// Recomputes a run's outcomes from its stored predictions.
    pub fn outcome(&self, out: &Path, planned: &PlannedRun) -> Result<RunOutcome> {
        let preds = self.predictions(out, planned)?;
        let suite = &self.inputs.suite;
        let mut outcomes = BTreeMap::new();
        for name in &planned.run.eval_functionalities {
            let f = suite
                .functionality(name)
                .ok_or_else(|| DataError::new(format!("{}: unknown functionality {name}", planned.id())))?;
            let mut passed = Vec::new();
            for id in &f.case_ids {
                if let Some(p) = preds.cases.get(id) {
                    let case = suite.case(*id).expect("functionality cases exist");
                    passed.push(evaluate_case(case, p, NeutralPolicy::default())?);
                }
            }
            outcomes.insert(name.clone(), passed);
        }
        let labels = self.labels();
        let iid_labels: Vec<usize> = preds.iid.iter().map(|(i, _)| labels[*i]).collect();
        let iid_preds: Vec<Prediction> = preds.iid.iter().map(|(_, p)| p.clone()).collect();
        let iid_correct = iid_preds.iter().zip(&iid_labels).map(|(p, &y)| p.argmax() == y).collect();
        Ok(RunOutcome {
            scenario: planned.run.scenario,
            subset: planned.run.subset.clone(),
            outcomes,
            iid_correct,
            iid: iid_metrics(&iid_preds, &iid_labels)?,
        })
    }

    pub fn audit(&self, out: &Path, planned: &PlannedRun, threshold: f64) -> Result<AuditReport> {
        let preds = self.predictions(out, planned)?;
        let labels = self.labels();
        let y: Vec<usize> = preds.iid.iter().map(|(i, _)| labels[*i]).collect();
        let p: Vec<Prediction> = preds.iid.into_iter().map(|(_, p)| p).collect();
        Ok(degenerate_audit(&p, &y, threshold)?)
    }

    /// Completed runs grouped by system, in plan order. A scenario of a
    /// system is kept only when all of its runs are complete.
    pub fn completed_by_system(&self, out: &Path) -> Vec<(String, Vec<&PlannedRun>)> {
        let mut systems: Vec<(String, Vec<&PlannedRun>)> = Vec::new();
        for p in &self.manifest.runs {
            let sys = p.system();
            match systems.last_mut() {
                Some((s, v)) if *s == sys => v.push(p),
                _ => systems.push((sys, vec![p])),
            }
        }
        systems
            .into_iter()
            .map(|(sys, runs)| {
                let kept = Scenario::ALL
                    .iter()
                    .flat_map(|&s| {
                        let of: Vec<&PlannedRun> = runs.iter().copied().filter(|p| p.run.scenario == s).collect();
                        if of.iter().all(|p| self.is_complete(out, p)) { of } else { Vec::new() }
                    })
                    .collect();
                (sys, kept)
            })
            .filter(|(_, v): &(String, Vec<&PlannedRun>)| !v.is_empty())
            .collect()
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            iid_metric: self.manifest.iid_metric,
            resamples: self.manifest.config.resamples,
            seed: self.manifest.seed,
        }
    }
}

pub struct RunPredictions {
    pub cases: BTreeMap<CaseId, Vec<Prediction>>,
    /// (i.i.d. example index, prediction) in stored order.
    pub iid: Vec<(usize, Prediction)>,
}

pub const BASELINE_SYSTEM: &str = "iid/vanilla";

/// Recomputes every report from the stored predictions and writes the
/// per-system reports, the pass-rate matrices and the combined table.
pub fn write_reports(out: &Path) -> Result<Vec<ScoreReport>> {
    let store = Store::open(out)?;
    let funcs = store.inputs.suite.functionality_names();
    let options = store.report_options();
    let systems = store.completed_by_system(out);
    if systems.is_empty() {
        bail!(DataError::new(format!("{} has no completed runs", out.display())));
    }
    let mut reports = Vec::new();
    let mut baseline: Option<Baseline> = None;
    for (system, runs) in &systems {
        let outcomes = runs.iter().map(|p| store.outcome(out, p)).collect::<Result<Vec<_>>>()?;
        let own_base = outcomes.iter().find(|o| o.scenario == Scenario::Standard).map(|o| Baseline {
            outcomes: o.outcomes.clone(),
            iid_correct: o.iid_correct.clone(),
            iid: o.iid,
        });
        if baseline.is_none() {
            if let Some(b) = &own_base {
                let runs = [RunOutcome {
                    scenario: Scenario::Standard,
                    subset: "all".into(),
                    outcomes: b.outcomes.clone(),
                    iid_correct: b.iid_correct.clone(),
                    iid: b.iid,
                }];
                reports.push(compile_report(BASELINE_SYSTEM, &funcs, &runs, None, options)?);
                baseline = own_base.clone();
            }
        }
        reports.push(compile_report(system, &funcs, &outcomes, own_base.as_ref().or(baseline.as_ref()), options)?);
    }
    for r in &reports {
        let stem = format!("reports/{}", path_safe(&r.system.replace('/', "__")));
        write_artifact(out, &format!("{stem}.json"), format!("{}\n", r.to_json()).as_bytes())?;
        write_artifact(out, &format!("{stem}.matrix.csv"), r.matrix_csv().as_bytes())?;
    }
    write_artifact(out, "table.txt", render_table(&reports).as_bytes())?;
    write_artifact(out, "table.csv", &table_csv(&reports)?)?;
    Ok(reports)
}

fn table_csv(reports: &[ScoreReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["system".to_string(), "iid_accuracy".into(), "iid_f1".into(), "iid_marker".into()];
    for s in Scenario::ALL {
        header.push(format!("g_{s}"));
        header.push(format!("g_{s}_marker"));
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.system.clone(),
            format!("{:.6}", r.iid.accuracy),
            format!("{:.6}", r.iid.f1_positive),
            r.marker("iid").map_or("", |m| m.symbol()).to_string(),
        ];
        for s in Scenario::ALL {
            row.push(r.g(s).map_or(String::new(), |g| format!("{g:.6}")));
            row.push(r.marker(&format!("g_{s}")).map_or("", |m| m.symbol()).to_string());
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))
}
