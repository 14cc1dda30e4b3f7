use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{CaseId, CasePayload, DirExpectation, TestSuite, TestType};

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateCaseId(CaseId),
    DuplicateFunctionalityName(String),
    /// A case referenced by more than one functionality (or twice by one).
    OverlappingFunctionalities { case: CaseId, functionalities: Vec<String> },
    /// A case in the store that no functionality references.
    OrphanCase(CaseId),
    MissingCase { functionality: String, case: CaseId },
    TypeMismatch { functionality: String, case: CaseId, expected: TestType, found: TestType },
    EmptyClass(String),
    EmptyFunctionality(String),
    /// `n_class < n_func < m` does not hold.
    Hierarchy { n_class: usize, n_func: usize, n_cases: usize },
    InvalidCase { case: CaseId, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateCaseId(id) => write!(f, "case id {id} appears more than once"),
            Violation::DuplicateFunctionalityName(n) => {
                write!(f, "functionality name {n:?} is used more than once")
            }
            Violation::OverlappingFunctionalities { case, functionalities } => write!(
                f,
                "case {case} belongs to several functionalities: {}",
                functionalities.join(", ")
            ),
            Violation::OrphanCase(id) => write!(f, "case {id} belongs to no functionality"),
            Violation::MissingCase { functionality, case } => {
                write!(f, "functionality {functionality:?} references unknown case {case}")
            }
            Violation::TypeMismatch { functionality, case, expected, found } => write!(
                f,
                "functionality {functionality:?} is {expected} but case {case} is {found}"
            ),
            Violation::EmptyClass(n) => write!(f, "class {n:?} has no functionalities"),
            Violation::EmptyFunctionality(n) => write!(f, "functionality {n:?} has no cases"),
            Violation::Hierarchy { n_class, n_func, n_cases } => write!(
                f,
                "hierarchy requires n_class < n_func < m, got {n_class} / {n_func} / {n_cases}"
            ),
            Violation::InvalidCase { case, reason } => write!(f, "case {case}: {reason}"),
        }
    }
}

/// Every invariant violation found in a suite. Empty iff the suite is well formed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_payload(payload: &CasePayload, n_labels: usize) -> Option<String> {
    match payload {
        CasePayload::Mft(c) => c.label.check(n_labels).err().map(|e| e.to_string()),
        CasePayload::Inv(c) => {
            if c.perturbed.is_empty() {
                Some("INV case has no perturbed inputs".into())
            } else if c.perturbed.contains(&c.original) {
                Some("INV perturbation identical to the original".into())
            } else {
                None
            }
        }
        CasePayload::Dir(c) => {
            if c.perturbed.is_empty() {
                return Some("DIR case has no perturbed inputs".into());
            }
            match &c.expectation {
                DirExpectation::Label(l) => l.check(n_labels).err().map(|e| e.to_string()),
                DirExpectation::Delta(k) if k.is_sentiment_directional() && n_labels != 2 => {
                    Some(format!("{k:?} requires a two-class task"))
                }
                DirExpectation::Delta(_) => None,
            }
        }
    }
}

/// Checks every structural invariant of a suite and reports all violations.
pub fn validate_suite(suite: &TestSuite) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen_ids = BTreeSet::new();
    for c in suite.cases() {
        if !seen_ids.insert(c.id) {
            violations.push(Violation::DuplicateCaseId(c.id));
        }
        if let Some(reason) = check_payload(&c.payload, suite.n_labels) {
            violations.push(Violation::InvalidCase { case: c.id, reason });
        }
    }

    let mut names = BTreeSet::new();
    let mut owners: BTreeMap<CaseId, Vec<String>> = BTreeMap::new();
    for class in &suite.classes {
        if class.functionalities.is_empty() {
            violations.push(Violation::EmptyClass(class.name.clone()));
        }
        for func in &class.functionalities {
            if !names.insert(func.name.as_str()) {
                violations.push(Violation::DuplicateFunctionalityName(func.name.clone()));
            }
            if func.case_ids.is_empty() {
                violations.push(Violation::EmptyFunctionality(func.name.clone()));
            }
            for &id in &func.case_ids {
                owners.entry(id).or_default().push(func.name.clone());
                match suite.case(id) {
                    None => violations.push(Violation::MissingCase {
                        functionality: func.name.clone(),
                        case: id,
                    }),
                    Some(c) if c.test_type() != func.test_type => {
                        violations.push(Violation::TypeMismatch {
                            functionality: func.name.clone(),
                            case: id,
                            expected: func.test_type,
                            found: c.test_type(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
    }

    for (case, functionalities) in &owners {
        if functionalities.len() > 1 {
            violations.push(Violation::OverlappingFunctionalities {
                case: *case,
                functionalities: functionalities.clone(),
            });
        }
    }
    for c in suite.cases() {
        if !owners.contains_key(&c.id) {
            violations.push(Violation::OrphanCase(c.id));
        }
    }

    let n_class = suite.classes.len();
    let n_func = suite.n_functionalities();
    let n_cases = suite.cases().len();
    if !(n_class < n_func && n_func < n_cases) {
        violations.push(Violation::Hierarchy { n_class, n_func, n_cases });
    }

    ValidationReport { violations }
}
