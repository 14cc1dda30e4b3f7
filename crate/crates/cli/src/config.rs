//! Matrix configuration file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use behavlearn::eval::IidScore;
use behavlearn::experiment::ExperimentOptions;
use behavlearn::partition::Axis;
use behavlearn::synth::Task;
use behavlearn::train::{Configuration, Hyper, Method};
use serde::{Deserialize, Serialize};

use crate::{DataError, UsageError};

/// Held-out axes requested on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AxisChoice {
    Func,
    Class,
    Type,
    All,
}

impl AxisChoice {
    pub fn axes(self) -> Vec<Axis> {
        match self {
            AxisChoice::Func => vec![Axis::Functionality],
            AxisChoice::Class => vec![Axis::Class],
            AxisChoice::Type => vec![Axis::TestType],
            AxisChoice::All => Axis::ALL.to_vec(),
        }
    }
}

fn default_configs() -> Vec<Configuration> {
    vec![Configuration::IidThenSuite, Configuration::IidPlusSuite, Configuration::IidThenMixed]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_axes() -> Vec<AxisChoice> {
    vec![AxisChoice::All]
}

fn default_resamples() -> usize {
    1000
}

/// Everything a matrix run depends on. Paths are relative to the file that
/// declares them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    /// Generate the default data of this task instead of reading files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iid: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iid_metric: Option<IidScore>,
    #[serde(default = "default_configs")]
    pub configs: Vec<Configuration>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_axes")]
    pub axes: Vec<AxisChoice>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub options: ExperimentOptions,
    #[serde(default)]
    pub hyper: Hyper,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            task: None,
            suite: None,
            iid: None,
            seed: 0,
            iid_metric: None,
            configs: default_configs(),
            methods: default_methods(),
            axes: default_axes(),
            resamples: default_resamples(),
            options: ExperimentOptions::default(),
            hyper: Hyper::default(),
        }
    }
}

impl MatrixConfig {
    /// Reads a TOML config and makes its data paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: MatrixConfig =
            toml::from_str(&text).map_err(|e| DataError::new(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.suite, &mut config.iid].into_iter().flatten() {
            *p = crate::store::resolve(base, p);
        }
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        match (&self.task, &self.suite, &self.iid) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            (None, None, None) => return Err(UsageError::new("no data: give --task or a config with suite and iid paths").into()),
            _ => return Err(UsageError::new("give either a task or both suite and iid paths").into()),
        }
        if self.configs.is_empty() || self.methods.is_empty() {
            return Err(UsageError::new("at least one configuration and one method are needed").into());
        }
        if self.configs.contains(&Configuration::Iid) {
            return Err(UsageError::new(
                "the iid configuration is the baseline and always runs; list only suite configurations",
            )
            .into());
        }
        Ok(())
    }

    pub fn axes(&self) -> Vec<Axis> {
        let mut out: Vec<Axis> = self.axes.iter().flat_map(|a| a.axes()).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Parses a comma-separated list with each item's `FromStr`.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| UsageError::new(e.to_string()).into()))
        .collect()
}
