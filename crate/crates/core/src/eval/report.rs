//! Aggregation of scenario runs into score reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{g_score, IidMetrics, IidScore};
use super::stats::{binomial_test, discordant_counts, g_randomisation_test, GSample, Marker};
use crate::error::{Error, Result};
use crate::partition::Scenario;
use crate::rng::derive_stream;

/// Raw results of one scenario run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub subset: String,
    /// Per evaluated functionality, case outcomes in case-id order.
    pub outcomes: BTreeMap<String, Vec<bool>>,
    /// Per i.i.d. test example, whether the run's model is correct.
    pub iid_correct: Vec<bool>,
    pub iid: IidMetrics,
}

/// The i.i.d.-only model every system is compared with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Outcomes on every functionality's test cases.
    pub outcomes: BTreeMap<String, Vec<bool>>,
    pub iid_correct: Vec<bool>,
    pub iid: IidMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScores {
    pub scenario: Scenario,
    /// Pass rate per functionality, aligned with [`ScoreReport::functionalities`].
    pub pass_rates: Vec<f64>,
    /// Mean of `pass_rates`.
    pub aggregate: f64,
    /// i.i.d. score paired with the aggregate in the G score.
    pub iid_score: f64,
    pub g: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEntry {
    /// What is compared, e.g. `iid` or `g_func`.
    pub metric: String,
    pub test: String,
    pub p_value: f64,
    pub system: f64,
    pub baseline: f64,
    pub marker: Marker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub system: String,
    pub iid_metric: IidScore,
    pub functionalities: Vec<String>,
    /// Metrics of the seen model (the model trained on the whole training
    /// split), or of the first available run when there is none.
    pub iid: IidMetrics,
    pub scenarios: Vec<ScenarioScores>,
    pub significance: Vec<SignificanceEntry>,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportOptions {
    pub iid_metric: IidScore,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { iid_metric: IidScore::Accuracy, resamples: 1000, seed: 0 }
    }
}

const PAIRING_NOTE: &str = "G_seen pairs the seen model's i.i.d. score; G_func, G_class and G_type pair the mean i.i.d. score of that axis's held-out runs";

fn incomplete(msg: String) -> Error {
    Error::IncompleteReport(msg)
}

fn to_f64(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| b as u8 as f64).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-unit scores of one scenario: each functionality's case outcomes from
/// the run that evaluates it (in `functionalities` order) and per-example
/// i.i.d. correctness averaged over the scenario's runs. `None` when no run
/// belongs to the scenario.
pub fn scenario_sample(functionalities: &[String], runs: &[RunOutcome], scenario: Scenario) -> Result<Option<GSample>> {
    let these: Vec<&RunOutcome> = runs.iter().filter(|r| r.scenario == scenario).collect();
    if these.is_empty() {
        return Ok(None);
    }
    let position: HashMap<&str, usize> =
        functionalities.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
    let mut per_func: Vec<Option<Vec<f64>>> = vec![None; functionalities.len()];
    for run in &these {
        for (name, outcomes) in &run.outcomes {
            let &i = position.get(name.as_str()).ok_or_else(|| {
                incomplete(format!("scenario {scenario}: unknown functionality '{name}' in run '{}'", run.subset))
            })?;
            if per_func[i].is_some() {
                return Err(incomplete(format!("scenario {scenario}: functionality '{name}' evaluated twice")));
            }
            if outcomes.is_empty() {
                return Err(incomplete(format!("scenario {scenario}: functionality '{name}' has no test cases")));
            }
            per_func[i] = Some(to_f64(outcomes));
        }
    }
    if let Some(i) = per_func.iter().position(Option::is_none) {
        return Err(incomplete(format!(
            "scenario {scenario}: functionality '{}' is not evaluated by any run",
            functionalities[i]
        )));
    }
    let n_iid = these[0].iid_correct.len();
    if these.iter().any(|r| r.iid_correct.len() != n_iid) {
        return Err(incomplete(format!("scenario {scenario}: runs disagree on the i.i.d. test size")));
    }
    let mut iid = vec![0.0; n_iid];
    for r in &these {
        for (u, &c) in iid.iter_mut().zip(&r.iid_correct) {
            *u += c as u8 as f64 / these.len() as f64;
        }
    }
    Ok(Some(GSample { functionalities: per_func.into_iter().map(Option::unwrap).collect(), iid }))
}

/// Builds the report of one configuration-method from its runs. Every
/// scenario present must evaluate each functionality exactly once.
pub fn compile_report(
    system: &str,
    functionalities: &[String],
    runs: &[RunOutcome],
    baseline: Option<&Baseline>,
    options: ReportOptions,
) -> Result<ScoreReport> {
    if functionalities.is_empty() {
        return Err(incomplete("no functionalities".into()));
    }
    let mut scenarios = Vec::new();
    let mut samples: Vec<(Scenario, GSample)> = Vec::new();
    let mut headline: Option<(IidMetrics, &[bool])> = None;

    for scenario in Scenario::ALL {
        let these: Vec<&RunOutcome> = runs.iter().filter(|r| r.scenario == scenario).collect();
        let Some(sample) = scenario_sample(functionalities, runs, scenario)? else {
            continue;
        };
        let pass_rates: Vec<f64> = sample.functionalities.iter().map(|o| mean(o)).collect();
        let aggregate = pass_rates.iter().sum::<f64>() / pass_rates.len() as f64;
        let iid_score = these.iter().map(|r| r.iid.score(options.iid_metric)).sum::<f64>() / these.len() as f64;
        let g = g_score(aggregate, iid_score)?;

        samples.push((scenario, sample));

        if scenario == Scenario::Seen || headline.is_none() {
            headline = Some((these[0].iid, &these[0].iid_correct));
        }
        scenarios.push(ScenarioScores { scenario, pass_rates, aggregate, iid_score, g, runs: these.len() });
    }
    let (iid, iid_correct) = headline.ok_or_else(|| incomplete("no runs".into()))?;

    let mut significance = Vec::new();
    if let Some(base) = baseline {
        let (a_only, b_only) = discordant_counts(iid_correct, &base.iid_correct)?;
        let p = binomial_test(a_only, b_only, iid_correct.len())?;
        let (s, b) = (iid.score(options.iid_metric), base.iid.score(options.iid_metric));
        significance.push(SignificanceEntry {
            metric: "iid".into(),
            test: "binomial".into(),
            p_value: p,
            system: s,
            baseline: b,
            marker: Marker::from_test(p, s, b),
        });
        let mut base_funcs = Vec::with_capacity(functionalities.len());
        for f in functionalities {
            let o = base
                .outcomes
                .get(f)
                .ok_or_else(|| incomplete(format!("baseline has no outcomes for '{f}'")))?;
            base_funcs.push(to_f64(o));
        }
        let base_sample = GSample { functionalities: base_funcs, iid: to_f64(&base.iid_correct) };
        let base_g = base_sample.g()?;
        for (scenario, sample) in &samples {
            let comparable = sample.iid.len() == base_sample.iid.len()
                && sample.functionalities.iter().zip(&base_sample.functionalities).all(|(a, b)| a.len() == b.len());
            if !comparable {
                return Err(incomplete(format!("scenario {scenario}: outcomes are not paired with the baseline's")));
            }
            let mut rng = derive_stream(options.seed, &["significance", system, scenario.as_str()]);
            let p = g_randomisation_test(sample, &base_sample, options.resamples, &mut rng)?;
            let g = sample.g()?;
            significance.push(SignificanceEntry {
                metric: format!("g_{scenario}"),
                test: "randomisation".into(),
                p_value: p,
                system: g,
                baseline: base_g,
                marker: Marker::from_test(p, g, base_g),
            });
        }
    }

    Ok(ScoreReport {
        system: system.to_string(),
        iid_metric: options.iid_metric,
        functionalities: functionalities.to_vec(),
        iid,
        scenarios,
        significance,
        notes: vec![PAIRING_NOTE.to_string()],
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

impl ScoreReport {
    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioScores> {
        self.scenarios.iter().find(|x| x.scenario == s)
    }

    pub fn aggregate(&self, s: Scenario) -> Option<f64> {
        self.scenario(s).map(|x| x.aggregate)
    }

    pub fn g(&self, s: Scenario) -> Option<f64> {
        self.scenario(s).map(|x| x.g)
    }

    pub fn marker(&self, metric: &str) -> Option<Marker> {
        self.significance.iter().find(|e| e.metric == metric).map(|e| e.marker)
    }

    /// Pass-rate matrix: one row per scenario, the row label, then the
    /// average pass rate followed by each functionality's pass rate.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("scenario,average");
        for f in &self.functionalities {
            out.push(',');
            out.push_str(&csv_field(f));
        }
        out.push('\n');
        for s in &self.scenarios {
            let _ = write!(out, "{},{:.6}", s.scenario, s.aggregate);
            for r in &s.pass_rates {
                let _ = write!(out, ",{r:.6}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "system: {}", self.system);
        let _ = writeln!(out, "iid accuracy {}  F1 {}", pct(self.iid.accuracy), pct(self.iid.f1_positive));
        let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>5}", "scenario", "suite", "iid", "G", "runs");
        for s in &self.scenarios {
            let mark = self.marker(&format!("g_{}", s.scenario)).map_or("", Marker::symbol);
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>8}{:<1} {:>5}",
                s.scenario.as_str(),
                pct(s.aggregate),
                pct(s.iid_score),
                pct(s.g),
                mark,
                s.runs
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Table with one row per report: i.i.d. metrics and the five G scores, with
/// `+` / `-` marking significant differences from the baseline.
pub fn render_table(reports: &[ScoreReport]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<24} {:>8} {:>8}", "system", "acc", "F1");
    for s in Scenario::ALL {
        let _ = write!(out, " {:>9}", format!("G_{s}"));
    }
    out.push('\n');
    for r in reports {
        let iid_mark = r.marker("iid").map_or("", Marker::symbol);
        let _ = write!(out, "{:<24} {:>7}{:<1} {:>8}", r.system, pct(r.iid.accuracy), iid_mark, pct(r.iid.f1_positive));
        for s in Scenario::ALL {
            match r.g(s) {
                Some(g) => {
                    let mark = r.marker(&format!("g_{s}")).map_or("", Marker::symbol);
                    let _ = write!(out, " {:>8}{:<1}", pct(g), mark);
                }
                None => {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
