//! Train/val/test splits of a suite, leave-out partitions of its
//! functionalities and the evaluation scenarios built on them.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::Stream;
use crate::suite::{CaseId, TestSuite, TestType};

/// Train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios { train: 0.5, val: 0.25, test: 0.25 }
    }
}

impl Ratios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Ratios { train, val, test };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<()> {
        let parts = self.as_array();
        if parts.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(invalid(format!("split fractions must be positive, got {parts:?}")));
        }
        let s: f64 = parts.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split fractions sum to {s}, expected 1")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Sizes of the three splits of `n` items: largest-remainder rounding with
/// remainder ties going to the earlier split (train, val, test). When
/// `min_one` is set and `n >= 3`, empty splits borrow one item from the
/// largest split.
pub fn split_counts(n: usize, ratios: Ratios, min_one: bool) -> [usize; 3] {
    let quotas = ratios.as_array().map(|r| r * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut frac = [0.0; 3];
    for k in 0..3 {
        frac[k] = quotas[k] - counts[k] as f64;
    }
    let mut given = [false; 3];
    let assigned: usize = counts.iter().sum();
    for _ in assigned..n {
        let mut best: Option<usize> = None;
        for k in 0..3 {
            if given[k] {
                continue;
            }
            match best {
                Some(b) if frac[k] <= frac[b] + 1e-9 => {}
                _ => best = Some(k),
            }
        }
        // n - floor-sum < 3, so a slot always remains.
        let k = best.expect("remainder exceeds split count");
        given[k] = true;
        counts[k] += 1;
    }
    if min_one && n >= 3 {
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let mut largest = 0;
            for k in 1..3 {
                if counts[k] > counts[largest] {
                    largest = k;
                }
            }
            counts[largest] -= 1;
            counts[empty] += 1;
        }
    }
    counts
}

fn shuffled_chunks<T: Clone>(items: &[T], ratios: Ratios, min_one: bool, rng: &mut Stream) -> [Vec<T>; 3] {
    let mut order = items.to_vec();
    order.shuffle(rng);
    let [a, b, _] = split_counts(order.len(), ratios, min_one);
    let test = order.split_off(a + b);
    let val = order.split_off(a);
    [order, val, test]
}

/// Disjoint train / validation / test case sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSplit {
    pub train: BTreeSet<CaseId>,
    pub val: BTreeSet<CaseId>,
    pub test: BTreeSet<CaseId>,
}

/// Stratified split: each functionality's cases are shuffled and divided
/// according to `ratios`, so every split holds cases of every functionality.
pub fn split_suite(suite: &TestSuite, ratios: Ratios, rng: &mut Stream) -> Result<SuiteSplit> {
    ratios.check()?;
    let mut split = SuiteSplit::default();
    for f in suite.functionalities() {
        if f.case_ids.len() < 3 {
            return Err(invalid(format!(
                "functionality '{}' has {} cases; at least 3 are needed to populate every split",
                f.name,
                f.case_ids.len()
            )));
        }
        let [train, val, test] = shuffled_chunks(&f.case_ids, ratios, true, rng);
        split.train.extend(train);
        split.val.extend(val);
        split.test.extend(test);
    }
    Ok(split)
}

/// Splits the index range `0..n` of an unstructured dataset with the same
/// rounding rule as [`split_suite`].
pub fn split_indices(n: usize, ratios: Ratios, rng: &mut Stream) -> Result<[Vec<usize>; 3]> {
    ratios.check()?;
    let idx: Vec<usize> = (0..n).collect();
    Ok(shuffled_chunks(&idx, ratios, true, rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Functionality,
    Class,
    TestType,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Functionality, Axis::Class, Axis::TestType];

    pub fn scenario(self) -> Scenario {
        match self {
            Axis::Functionality => Scenario::Func,
            Axis::Class => Scenario::Class,
            Axis::TestType => Scenario::Type,
        }
    }
}

/// A named set of functionalities held out together.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub name: String,
    pub functionalities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub axis: Axis,
    pub subsets: Vec<Subset>,
}

/// Partitions the functionalities of `suite` along `axis`. Test types
/// without functionalities produce no subset.
pub fn build_partition(suite: &TestSuite, axis: Axis) -> PartitionPlan {
    let subsets = match axis {
        Axis::Functionality => suite
            .functionalities()
            .map(|f| Subset { name: f.name.clone(), functionalities: vec![f.name.clone()] })
            .collect(),
        Axis::Class => suite
            .classes
            .iter()
            .map(|c| Subset {
                name: c.name.clone(),
                functionalities: c.functionalities.iter().map(|f| f.name.clone()).collect(),
            })
            .collect(),
        Axis::TestType => TestType::ALL
            .iter()
            .filter_map(|&t| {
                let names: Vec<String> = suite
                    .functionalities()
                    .filter(|f| f.test_type == t)
                    .map(|f| f.name.clone())
                    .collect();
                (!names.is_empty()).then(|| Subset { name: t.as_str().to_string(), functionalities: names })
            })
            .collect(),
    };
    PartitionPlan { axis, subsets }
}

/// The five evaluation scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Standard,
    Seen,
    Func,
    Class,
    Type,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::Standard, Scenario::Seen, Scenario::Func, Scenario::Class, Scenario::Type];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Standard => "standard",
            Scenario::Seen => "seen",
            Scenario::Func => "func",
            Scenario::Class => "class",
            Scenario::Type => "type",
        }
    }

    pub fn axis(self) -> Option<Axis> {
        match self {
            Scenario::Func => Some(Axis::Functionality),
            Scenario::Class => Some(Axis::Class),
            Scenario::Type => Some(Axis::TestType),
            Scenario::Standard | Scenario::Seen => None,
        }
    }

    /// Whether runs of this scenario train on suite data at all.
    pub fn trains_on_suite(self) -> bool {
        self != Scenario::Standard
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown scenario '{s}'")))
    }
}

/// One training-and-evaluation run of a scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    /// Held-out subset name; `"all"` for the standard and seen scenarios.
    pub subset: String,
    pub train_functionalities: Vec<String>,
    pub eval_functionalities: Vec<String>,
}

impl ScenarioRun {
    /// Stable identifier such as `func/negation` or `seen/all`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.scenario, self.subset)
    }

    fn cases_in(suite: &TestSuite, names: &[String], pool: &BTreeSet<CaseId>) -> Vec<CaseId> {
        let names: HashSet<&str> = names.iter().map(String::as_str).collect();
        let mut out = Vec::new();
        for f in suite.functionalities().filter(|f| names.contains(f.name.as_str())) {
            out.extend(f.case_ids.iter().filter(|id| pool.contains(id)));
        }
        out.sort();
        out
    }

    /// Training cases: the train split restricted to the training
    /// functionalities.
    pub fn train_cases(&self, suite: &TestSuite, split: &SuiteSplit) -> Vec<CaseId> {
        Self::cases_in(suite, &self.train_functionalities, &split.train)
    }

    /// Validation cases of the training functionalities (model selection).
    pub fn val_cases(&self, suite: &TestSuite, split: &SuiteSplit) -> Vec<CaseId> {
        Self::cases_in(suite, &self.train_functionalities, &split.val)
    }

    /// Test cases of the evaluated functionalities.
    pub fn eval_cases(&self, suite: &TestSuite, split: &SuiteSplit) -> Vec<CaseId> {
        Self::cases_in(suite, &self.eval_functionalities, &split.test)
    }
}

/// Plans the runs of `scenario`. Standard and seen produce a single run over
/// every functionality; the generalisation scenarios produce one run per
/// subset of the matching partition, training on everything else.
pub fn plan_scenarios(suite: &TestSuite, scenario: Scenario) -> Vec<ScenarioRun> {
    let all = suite.functionality_names();
    match scenario.axis() {
        None => vec![ScenarioRun {
            scenario,
            subset: "all".to_string(),
            train_functionalities: if scenario == Scenario::Seen { all.clone() } else { Vec::new() },
            eval_functionalities: all,
        }],
        Some(axis) => build_partition(suite, axis)
            .subsets
            .into_iter()
            .map(|s| {
                let held: HashSet<&str> = s.functionalities.iter().map(String::as_str).collect();
                ScenarioRun {
                    scenario,
                    train_functionalities: all.iter().filter(|n| !held.contains(n.as_str())).cloned().collect(),
                    eval_functionalities: s.functionalities.clone(),
                    subset: s.name,
                }
            })
            .collect(),
    }
}
