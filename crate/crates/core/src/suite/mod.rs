//! Behavioural test-suite taxonomy.
//!
//! A suite is a hierarchy of functionality classes, functionalities and test
//! cases. Cases live in one flat store and functionalities reference them by
//! id; every case must belong to exactly one functionality.

mod expect;
mod io;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use expect::{
    argmax, delta, epsilon, evaluate_case, evaluate_dir, evaluate_inv, evaluate_mft,
    NeutralPolicy,
};
pub use validate::{validate_suite, ValidationReport, Violation};
pub(crate) use expect::delta_target;

/// Tolerance for soft-label normalisation.
pub const SOFT_LABEL_TOL: f64 = 1e-9;
/// Tolerance for prediction-vector normalisation.
pub const PREDICTION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(pub u32);

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestType {
    #[serde(rename = "MFT")]
    Mft,
    #[serde(rename = "INV")]
    Inv,
    #[serde(rename = "DIR")]
    Dir,
}

impl TestType {
    pub const ALL: [TestType; 3] = [TestType::Mft, TestType::Inv, TestType::Dir];

    pub fn as_str(self) -> &'static str {
        match self {
            TestType::Mft => "MFT",
            TestType::Inv => "INV",
            TestType::Dir => "DIR",
        }
    }
}

impl fmt::Display for TestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model input: a single text or a text pair (question pairs).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Text(String),
    Pair(String, String),
}

impl Input {
    pub fn text(s: impl Into<String>) -> Self {
        Input::Text(s.into())
    }

    pub fn pair(a: impl Into<String>, b: impl Into<String>) -> Self {
        Input::Pair(a.into(), b.into())
    }

    pub fn texts(&self) -> Vec<&str> {
        match self {
            Input::Text(t) => vec![t],
            Input::Pair(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Text(t) => f.write_str(t),
            Input::Pair(a, b) => write!(f, "{a} ||| {b}"),
        }
    }
}

/// Expected label of an MFT case (or a label-form DIR case). Serialises as a
/// class index, a probability vector or `"not_negative"`; `"neutral"` is
/// accepted on input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "io::LabelRepr", try_from = "io::LabelRepr")]
pub enum LabelSpec {
    Hard(usize),
    Soft(Vec<f64>),
    /// Admits positive and neutral predictions (two-class sentiment tasks).
    NotNegative,
}

impl LabelSpec {
    /// The neutral soft label `[1/2, 1/2]`.
    pub fn neutral() -> Self {
        LabelSpec::Soft(vec![0.5, 0.5])
    }

    /// Validates the label against a class count.
    pub fn check(&self, n_classes: usize) -> Result<()> {
        match self {
            LabelSpec::Hard(k) if *k >= n_classes => Err(invalid(format!(
                "hard label {k} out of range for {n_classes} classes"
            ))),
            LabelSpec::Hard(_) => Ok(()),
            LabelSpec::Soft(t) => {
                if t.len() != n_classes {
                    return Err(invalid(format!(
                        "soft label has {} entries, expected {n_classes}",
                        t.len()
                    )));
                }
                if t.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(invalid("soft label has a negative or non-finite entry"));
                }
                let s: f64 = t.iter().sum();
                if (s - 1.0).abs() > SOFT_LABEL_TOL {
                    return Err(invalid(format!("soft label sums to {s}, expected 1")));
                }
                Ok(())
            }
            LabelSpec::NotNegative if n_classes != 2 => Err(invalid(
                "not_negative labels are only defined for two-class tasks",
            )),
            LabelSpec::NotNegative => Ok(()),
        }
    }

    /// Training target distribution: one-hot, the soft vector itself, or
    /// `[1/3, 2/3]` for not-negative.
    pub fn target(&self, n_classes: usize) -> Result<Vec<f64>> {
        self.check(n_classes)?;
        Ok(match self {
            LabelSpec::Hard(k) => {
                let mut t = vec![0.0; n_classes];
                t[*k] = 1.0;
                t
            }
            LabelSpec::Soft(t) => t.clone(),
            LabelSpec::NotNegative => vec![1.0 / 3.0, 2.0 / 3.0],
        })
    }
}

/// Comparison function of a directional test. Index 0 is the negative class
/// and index 1 the positive class for the two sentiment-directional kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    /// Perturbed negative probability must not rise.
    NotMoreNegative,
    /// Perturbed positive probability must not rise.
    NotMorePositive,
    /// Confidence in the original's predicted class must not rise.
    NotMoreConfident,
    /// Confidence in the original's predicted class must not drop.
    NotLessConfident,
}

impl DeltaKind {
    pub const ALL: [DeltaKind; 4] = [
        DeltaKind::NotMoreNegative,
        DeltaKind::NotMorePositive,
        DeltaKind::NotMoreConfident,
        DeltaKind::NotLessConfident,
    ];

    pub fn is_sentiment_directional(self) -> bool {
        matches!(self, DeltaKind::NotMoreNegative | DeltaKind::NotMorePositive)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MftCase {
    pub input: Input,
    pub label: LabelSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvCase {
    pub original: Input,
    pub perturbed: Vec<Input>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DirExpectation {
    Delta(DeltaKind),
    /// Perturbed inputs must receive this label; the original is not compared.
    Label(LabelSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirCase {
    pub original: Input,
    pub perturbed: Vec<Input>,
    pub expectation: DirExpectation,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CasePayload {
    Mft(MftCase),
    Inv(InvCase),
    Dir(DirCase),
}

impl CasePayload {
    pub fn test_type(&self) -> TestType {
        match self {
            CasePayload::Mft(_) => TestType::Mft,
            CasePayload::Inv(_) => TestType::Inv,
            CasePayload::Dir(_) => TestType::Dir,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestCase {
    pub id: CaseId,
    pub payload: CasePayload,
}

impl TestCase {
    /// All inputs of the case in prediction order: the MFT input, or the
    /// original followed by the perturbed inputs.
    pub fn inputs(&self) -> Vec<&Input> {
        match &self.payload {
            CasePayload::Mft(c) => vec![&c.input],
            CasePayload::Inv(c) => std::iter::once(&c.original).chain(&c.perturbed).collect(),
            CasePayload::Dir(c) => std::iter::once(&c.original).chain(&c.perturbed).collect(),
        }
    }

    pub fn test_type(&self) -> TestType {
        self.payload.test_type()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Functionality {
    pub name: String,
    pub test_type: TestType,
    pub case_ids: Vec<CaseId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalityClass {
    pub name: String,
    pub functionalities: Vec<Functionality>,
}

/// A behavioural test suite for one task.
#[derive(Clone, Debug)]
pub struct TestSuite {
    pub name: String,
    /// Number of output classes of the task.
    pub n_labels: usize,
    pub classes: Vec<FunctionalityClass>,
    cases: Vec<TestCase>,
    index: HashMap<CaseId, usize>,
}

impl PartialEq for TestSuite {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.n_labels == other.n_labels
            && self.classes == other.classes
            && self.cases == other.cases
    }
}

impl TestSuite {
    /// Builds a suite from parts. No invariant is enforced here; use
    /// [`validate_suite`] to check well-formedness.
    pub fn new(
        name: impl Into<String>,
        n_labels: usize,
        classes: Vec<FunctionalityClass>,
        cases: Vec<TestCase>,
    ) -> Self {
        let mut index = HashMap::with_capacity(cases.len());
        for (i, c) in cases.iter().enumerate() {
            index.entry(c.id).or_insert(i);
        }
        TestSuite { name: name.into(), n_labels, classes, cases, index }
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn case(&self, id: CaseId) -> Option<&TestCase> {
        self.index.get(&id).map(|&i| &self.cases[i])
    }

    pub fn functionalities(&self) -> impl Iterator<Item = &Functionality> {
        self.classes.iter().flat_map(|c| c.functionalities.iter())
    }

    /// `(class name, functionality)` pairs in suite order.
    pub fn functionalities_with_class(&self) -> impl Iterator<Item = (&str, &Functionality)> {
        self.classes
            .iter()
            .flat_map(|c| c.functionalities.iter().map(move |f| (c.name.as_str(), f)))
    }

    pub fn functionality(&self, name: &str) -> Option<&Functionality> {
        self.functionalities().find(|f| f.name == name)
    }

    pub fn functionality_names(&self) -> Vec<String> {
        self.functionalities().map(|f| f.name.clone()).collect()
    }

    /// Maps each case id to the name of the (first) functionality holding it.
    pub fn case_functionality(&self) -> HashMap<CaseId, &str> {
        let mut map = HashMap::new();
        for f in self.functionalities() {
            for &id in &f.case_ids {
                map.entry(id).or_insert(f.name.as_str());
            }
        }
        map
    }

    pub fn n_functionalities(&self) -> usize {
        self.functionalities().count()
    }
}

/// A probability distribution over classes produced by a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction(Vec<f64>);

impl Prediction {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty prediction vector"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(invalid("prediction has a negative or non-finite entry"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > PREDICTION_TOL {
            return Err(invalid(format!("prediction sums to {s}, expected 1")));
        }
        Ok(Prediction(probs))
    }

    /// Wraps a vector known to be a distribution (softmax output).
    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        Prediction(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Predicted class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Prediction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub use io::{parse_suite, serialize_suite, SuiteFile};
