//! `behavlearn`: generate data, run the experiment matrix and report on it.

mod config;
mod matrix;
mod store;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use behavlearn::eval::{
    binomial_test, discordant_counts, g_randomisation_test, scenario_sample, DEFAULT_AUDIT_THRESHOLD, MIN_RESAMPLES,
};
use behavlearn::partition::Scenario;
use behavlearn::rng::derive_stream;
use behavlearn::suite::serialize_suite;
use behavlearn::synth::{default_experiment_spec, format_iid, generate_experiment, ExperimentSpec, Task};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_list, AxisChoice, MatrixConfig};
use crate::matrix::{run_matrix, write_reports, Store};
use crate::store::{to_json_bytes, write_artifact, Artifact};

/// Usage problem: bad flags or an inconsistent configuration (exit 1).
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Problem with input data or stored artifacts (exit 2).
#[derive(Debug)]
pub struct DataError(String);

impl DataError {
    pub fn new(msg: impl Into<String>) -> Self {
        DataError(msg.into())
    }
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

#[derive(Parser)]
#[command(name = "behavlearn", version, about = "Behavioural learning experiments on synthetic test suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "BEHAVLEARN_OUT", default_value = "behavlearn-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test suite and an i.i.d. dataset from a spec.
    Generate {
        /// Experiment spec (JSON); defaults to the shipped spec of --task.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "sentiment")]
        task: Task,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train and evaluate every configuration, method and scenario.
    RunMatrix {
        /// Matrix configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the shipped data of this task instead of the config's files.
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        axis: Option<AxisChoice>,
        /// Comma-separated methods, e.g. vanilla,irm.
        #[arg(long)]
        methods: Option<String>,
        /// Comma-separated configurations, e.g. iid_then_suite,iid_then_mixed.
        #[arg(long)]
        configs: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Recompute the reports of a matrix from its stored predictions.
    Report {
        #[command(flatten)]
        out: OutArg,
    },
    /// Check every run's i.i.d. predictions for collapsed label frequencies.
    Audit {
        #[arg(long, default_value_t = DEFAULT_AUDIT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare two systems of a matrix on one scenario.
    Significance {
        /// First system, e.g. iid_then_suite/vanilla.
        #[arg(long)]
        a: String,
        /// Second system, e.g. iid_then_mixed/vanilla or iid/vanilla.
        #[arg(long)]
        b: String,
        #[arg(long, default_value = "seen")]
        scenario: Scenario,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Serialize)]
struct GenerateManifest {
    spec_name: String,
    task: String,
    seed: u64,
    spec_sha256: String,
    files: Vec<Artifact>,
    record: behavlearn::synth::GenerationRecord,
}

fn generate(spec_path: Option<&Path>, task: Task, seed: u64, out: &Path) -> Result<()> {
    let spec = match spec_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentSpec::from_json(&text).map_err(|e| DataError::new(format!("{}: {e}", p.display())))?
        }
        None => default_experiment_spec(task),
    };
    let (iid, g) = generate_experiment(&spec, seed)?;
    let files = vec![
        write_artifact(out, "suite.json", format!("{}\n", serialize_suite(&g.suite)).as_bytes())?,
        write_artifact(out, "iid.tsv", format_iid(&iid).as_bytes())?,
    ];
    let manifest = GenerateManifest {
        spec_name: spec.suite.name.clone(),
        task: spec.task.clone(),
        seed,
        spec_sha256: store::sha256_hex(spec.to_json().as_bytes()),
        files,
        record: g.record,
    };
    write_artifact(out, "manifest.json", &to_json_bytes(&manifest))?;
    println!(
        "wrote {} cases in {} functionalities and {} i.i.d. examples to {}",
        g.suite.cases().len(),
        g.suite.functionality_names().len(),
        iid.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn matrix_command(
    config_path: Option<&Path>,
    task: Option<Task>,
    seed: Option<u64>,
    axis: Option<AxisChoice>,
    methods: Option<&str>,
    configs: Option<&str>,
    workers: usize,
    out: &Path,
) -> Result<()> {
    let mut config = match config_path {
        Some(p) => MatrixConfig::load(p)?,
        None => MatrixConfig::default(),
    };
    if let Some(t) = task {
        config.task = Some(t);
        config.suite = None;
        config.iid = None;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(a) = axis {
        config.axes = vec![a];
    }
    if let Some(m) = methods {
        config.methods = parse_list(m)?;
    }
    if let Some(c) = configs {
        config.configs = parse_list(c)?;
    }
    let (summary, reports) = run_matrix(&config, out, workers)?;
    println!(
        "{} runs planned: {} trained, {} already complete",
        summary.planned, summary.trained, summary.skipped
    );
    print!("{}", behavlearn::eval::render_table(&reports));
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let reports = write_reports(out)?;
    print!("{}", behavlearn::eval::render_table(&reports));
    for r in &reports {
        println!();
        print!("{}", r.to_text());
    }
    Ok(())
}

fn audit(out: &Path, threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!(UsageError::new("threshold must lie in [0, 1]"));
    }
    let store = Store::open(out)?;
    let mut seen = 0;
    println!("{:<56} {:>10} {:>10} {:>10}  flag", "run", "predicted", "truth", "divergence");
    for p in &store.manifest.runs {
        if !store.is_complete(out, p) {
            continue;
        }
        let a = store.audit(out, p, threshold)?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
        println!(
            "{:<56} {:>10} {:>10} {:>10.4}  {}",
            p.id(),
            fmt(&a.predicted),
            fmt(&a.truth),
            a.max_divergence(),
            if a.flagged { "DEGENERATE" } else { "-" }
        );
        seen += 1;
    }
    if seen == 0 {
        bail!(DataError::new(format!("{} has no completed runs", out.display())));
    }
    Ok(())
}

fn significance(out: &Path, a: &str, b: &str, scenario: Scenario, resamples: usize) -> Result<()> {
    if resamples < MIN_RESAMPLES {
        bail!(UsageError::new(format!("at least {MIN_RESAMPLES} resamples are needed")));
    }
    let store = Store::open(out)?;
    let funcs = store.inputs.suite.functionality_names();
    let systems = store.completed_by_system(out);
    let outcomes_of = |name: &str| -> Result<Vec<_>> {
        // The baseline is the standard run, which every system carries.
        let (sys, scen) = if name == matrix::BASELINE_SYSTEM {
            (systems.first().map(|s| s.0.as_str()).unwrap_or(""), Scenario::Standard)
        } else {
            (name, scenario)
        };
        let runs = systems
            .iter()
            .find(|s| s.0 == sys)
            .map(|s| s.1.iter().filter(|p| p.run.scenario == scen).collect::<Vec<_>>())
            .unwrap_or_default();
        if runs.is_empty() {
            bail!(UsageError::new(format!("no completed {scen} runs for system '{name}'")));
        }
        runs.iter().map(|p| store.outcome(out, p)).collect()
    };
    let (oa, ob) = (outcomes_of(a)?, outcomes_of(b)?);
    let sa = scenario_sample(&funcs, &oa, oa[0].scenario)?.expect("runs present");
    let sb = scenario_sample(&funcs, &ob, ob[0].scenario)?.expect("runs present");
    let mut rng = derive_stream(store.manifest.seed, &["significance-cli", a, b, scenario.as_str()]);
    let p_g = g_randomisation_test(&sa, &sb, resamples, &mut rng)?;
    println!("G {}: {a} {:.4} vs {b} {:.4}, randomisation p = {p_g:.4}", scenario, sa.g()?, sb.g()?);
    if oa.len() == 1 && ob.len() == 1 {
        let (x, y) = discordant_counts(&oa[0].iid_correct, &ob[0].iid_correct)?;
        let p = binomial_test(x, y, oa[0].iid_correct.len())?;
        println!(
            "i.i.d. accuracy: {a} {:.4} vs {b} {:.4}, {x}/{y} discordant, binomial p = {p:.4}",
            oa[0].iid.accuracy, ob[0].iid.accuracy
        );
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<behavlearn::Error>() {
            return match e {
                behavlearn::Error::Numeric(_) => 3,
                _ => 2,
            };
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Generate { spec, task, seed, out } => generate(spec.as_deref(), *task, *seed, &out.out),
        Command::RunMatrix { config, task, seed, axis, methods, configs, workers, out } => matrix_command(
            config.as_deref(),
            *task,
            *seed,
            *axis,
            methods.as_deref(),
            configs.as_deref(),
            *workers,
            &out.out,
        ),
        Command::Report { out } => report(&out.out),
        Command::Audit { threshold, out } => audit(&out.out, *threshold),
        Command::Significance { a, b, scenario, resamples, out } => {
            significance(&out.out, a, b, *scenario, *resamples)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
