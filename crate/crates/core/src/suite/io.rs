//! JSON schema of test suites.
//!
//! ```text
//! {name, n_labels, classes: [{name, functionalities: [{name, type, cases: [...]}]}]}
//! MFT case: {id, input, label}
//! INV case: {id, original, perturbed: [...]}
//! DIR case: {id, original, perturbed: [...], delta | label}
//! ```
//!
//! Inputs are a string or a two-element array (text pairs). Labels are a class
//! index, a probability vector or the string `"not_negative"`. Case ids are
//! optional on input; missing ids are assigned after the largest explicit id.

use serde::{Deserialize, Serialize};

use super::{
    CaseId, CasePayload, DeltaKind, DirCase, DirExpectation, Functionality, FunctionalityClass,
    Input, InvCase, LabelSpec, MftCase, TestCase, TestSuite, TestType,
};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum LabelRepr {
    Hard(usize),
    Soft(Vec<f64>),
    Named(String),
}

impl From<&LabelSpec> for LabelRepr {
    fn from(l: &LabelSpec) -> Self {
        match l {
            LabelSpec::Hard(k) => LabelRepr::Hard(*k),
            LabelSpec::Soft(v) => LabelRepr::Soft(v.clone()),
            LabelSpec::NotNegative => LabelRepr::Named("not_negative".into()),
        }
    }
}

impl From<LabelSpec> for LabelRepr {
    fn from(l: LabelSpec) -> Self {
        LabelRepr::from(&l)
    }
}

impl TryFrom<LabelRepr> for LabelSpec {
    type Error = crate::Error;
    fn try_from(r: LabelRepr) -> Result<Self> {
        match r {
            LabelRepr::Hard(k) => Ok(LabelSpec::Hard(k)),
            LabelRepr::Soft(v) => Ok(LabelSpec::Soft(v)),
            LabelRepr::Named(s) => match s.as_str() {
                "not_negative" => Ok(LabelSpec::NotNegative),
                "neutral" => Ok(LabelSpec::neutral()),
                other => Err(invalid(format!("unknown label name {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<Input>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original: Option<Input>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perturbed: Option<Vec<Input>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<DeltaKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<LabelRepr>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionalityFile {
    name: String,
    #[serde(rename = "type")]
    test_type: TestType,
    cases: Vec<CaseFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassFile {
    name: String,
    functionalities: Vec<FunctionalityFile>,
}

fn default_labels() -> usize {
    2
}

/// On-disk representation of a suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    name: String,
    #[serde(default = "default_labels")]
    n_labels: usize,
    classes: Vec<ClassFile>,
}

fn case_to_file(case: &TestCase) -> CaseFile {
    let mut f = CaseFile { id: Some(case.id.0), ..Default::default() };
    match &case.payload {
        CasePayload::Mft(c) => {
            f.input = Some(c.input.clone());
            f.label = Some((&c.label).into());
        }
        CasePayload::Inv(c) => {
            f.original = Some(c.original.clone());
            f.perturbed = Some(c.perturbed.clone());
        }
        CasePayload::Dir(c) => {
            f.original = Some(c.original.clone());
            f.perturbed = Some(c.perturbed.clone());
            match &c.expectation {
                DirExpectation::Delta(k) => f.delta = Some(*k),
                DirExpectation::Label(l) => f.label = Some(l.into()),
            }
        }
    }
    f
}

fn case_from_file(f: CaseFile, ty: TestType, func: &str) -> Result<CasePayload> {
    let ctx = |m: &str| invalid(format!("functionality {func:?}: {m}"));
    match ty {
        TestType::Mft => {
            if f.original.is_some() || f.perturbed.is_some() || f.delta.is_some() {
                return Err(ctx("MFT case must only have input and label"));
            }
            let input = f.input.ok_or_else(|| ctx("MFT case without input"))?;
            let label = f.label.ok_or_else(|| ctx("MFT case without label"))?.try_into()?;
            Ok(CasePayload::Mft(MftCase { input, label }))
        }
        TestType::Inv => {
            if f.input.is_some() || f.label.is_some() || f.delta.is_some() {
                return Err(ctx("INV case must only have original and perturbed"));
            }
            Ok(CasePayload::Inv(InvCase {
                original: f.original.ok_or_else(|| ctx("INV case without original"))?,
                perturbed: f.perturbed.ok_or_else(|| ctx("INV case without perturbed"))?,
            }))
        }
        TestType::Dir => {
            if f.input.is_some() {
                return Err(ctx("DIR case must not have an input field"));
            }
            let expectation = match (f.delta, f.label) {
                (Some(k), None) => DirExpectation::Delta(k),
                (None, Some(l)) => DirExpectation::Label(l.try_into()?),
                _ => return Err(ctx("DIR case needs exactly one of delta or label")),
            };
            Ok(CasePayload::Dir(DirCase {
                original: f.original.ok_or_else(|| ctx("DIR case without original"))?,
                perturbed: f.perturbed.ok_or_else(|| ctx("DIR case without perturbed"))?,
                expectation,
            }))
        }
    }
}

impl From<&TestSuite> for SuiteFile {
    fn from(suite: &TestSuite) -> Self {
        let classes = suite
            .classes
            .iter()
            .map(|c| ClassFile {
                name: c.name.clone(),
                functionalities: c
                    .functionalities
                    .iter()
                    .map(|f| FunctionalityFile {
                        name: f.name.clone(),
                        test_type: f.test_type,
                        cases: f
                            .case_ids
                            .iter()
                            .filter_map(|&id| suite.case(id))
                            .map(case_to_file)
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        SuiteFile { name: suite.name.clone(), n_labels: suite.n_labels, classes }
    }
}

impl TryFrom<SuiteFile> for TestSuite {
    type Error = crate::Error;

    fn try_from(file: SuiteFile) -> Result<Self> {
        let mut next_id = file
            .classes
            .iter()
            .flat_map(|c| &c.functionalities)
            .flat_map(|f| &f.cases)
            .filter_map(|c| c.id)
            .max()
            .map_or(0, |m| m + 1);
        let mut cases = Vec::new();
        let mut classes = Vec::with_capacity(file.classes.len());
        for class in file.classes {
            let mut funcs = Vec::with_capacity(class.functionalities.len());
            for func in class.functionalities {
                let mut ids = Vec::with_capacity(func.cases.len());
                for cf in func.cases {
                    let id = match cf.id {
                        Some(id) => id,
                        None => {
                            next_id += 1;
                            next_id - 1
                        }
                    };
                    let payload = case_from_file(cf, func.test_type, &func.name)?;
                    ids.push(CaseId(id));
                    cases.push(TestCase { id: CaseId(id), payload });
                }
                funcs.push(Functionality { name: func.name, test_type: func.test_type, case_ids: ids });
            }
            classes.push(FunctionalityClass { name: class.name, functionalities: funcs });
        }
        Ok(TestSuite::new(file.name, file.n_labels, classes, cases))
    }
}

/// Parses a suite from its JSON text.
pub fn parse_suite(text: &str) -> Result<TestSuite> {
    let file: SuiteFile = serde_json::from_str(text)?;
    file.try_into()
}

/// Serialises a suite to pretty-printed JSON.
pub fn serialize_suite(suite: &TestSuite) -> String {
    serde_json::to_string_pretty(&SuiteFile::from(suite)).expect("suite serialisation cannot fail")
}
