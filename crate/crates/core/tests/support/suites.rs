//! Random valid suites and the split / partition / scenario invariants they
//! must satisfy.
#![allow(dead_code)]

use std::collections::BTreeSet;

use behavlearn::partition::{build_partition, plan_scenarios, split_suite, Axis, Ratios, Scenario, SuiteSplit};
use behavlearn::rng::stream;
use behavlearn::suite::{
    validate_suite, CaseId, CasePayload, DeltaKind, DirCase, DirExpectation, Functionality, FunctionalityClass,
    Input, InvCase, LabelSpec, MftCase, TestCase, TestSuite, TestType,
};
use proptest::prelude::*;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn payload(ty: TestType, k: usize) -> CasePayload {
    let text = Input::text(format!("case {k}"));
    let other = Input::text(format!("case {k} again"));
    match ty {
        TestType::Mft => CasePayload::Mft(MftCase { input: text, label: LabelSpec::Hard(k % 2) }),
        TestType::Inv => CasePayload::Inv(InvCase { original: text, perturbed: vec![other] }),
        TestType::Dir => CasePayload::Dir(DirCase {
            original: text,
            perturbed: vec![other],
            expectation: DirExpectation::Delta(DeltaKind::NotLessConfident),
        }),
    }
}

/// Builds a suite from per-class lists of (type, case count). The shape is
/// patched so that `n_class < n_func < m` always holds.
pub fn build_suite(mut shape: Vec<Vec<(TestType, usize)>>) -> TestSuite {
    if shape.iter().map(Vec::len).sum::<usize>() <= shape.len() {
        shape[0].push((TestType::Inv, 3));
    }
    let mut cases = Vec::new();
    let mut classes = Vec::new();
    let mut f_idx = 0;
    for (ci, funcs) in shape.iter().enumerate() {
        let mut fs = Vec::new();
        for &(ty, n) in funcs {
            let ids: Vec<CaseId> = (0..n)
                .map(|_| {
                    let id = CaseId(cases.len() as u32);
                    cases.push(TestCase { id, payload: payload(ty, cases.len()) });
                    id
                })
                .collect();
            fs.push(Functionality { name: format!("f{f_idx}"), test_type: ty, case_ids: ids });
            f_idx += 1;
        }
        classes.push(FunctionalityClass { name: format!("c{ci}"), functionalities: fs });
    }
    TestSuite::new("random", 2, classes, cases)
}

pub fn suite_strategy() -> impl Strategy<Value = TestSuite> {
    let ty = prop_oneof![Just(TestType::Mft), Just(TestType::Inv), Just(TestType::Dir)];
    let func = (ty, 3usize..15);
    prop::collection::vec(prop::collection::vec(func, 1..5), 1..6).prop_map(build_suite)
}

pub fn ratios_strategy() -> impl Strategy<Value = Ratios> {
    (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        Ratios::new(a / s, b / s, 1.0 - a / s - b / s).unwrap()
    })
}

fn all_ids(suite: &TestSuite) -> BTreeSet<CaseId> {
    suite.cases().iter().map(|c| c.id).collect()
}

pub fn check_valid(suite: &TestSuite) -> Check {
    let report = validate_suite(suite);
    ensure!(report.is_empty(), "invalid suite: {:?}", report.violations);
    Ok(())
}

/// Disjoint parts that tile the suite, each holding every functionality.
pub fn check_split(suite: &TestSuite, split: &SuiteSplit) -> Check {
    ensure!(split.train.is_disjoint(&split.val), "train and val overlap");
    ensure!(split.train.is_disjoint(&split.test), "train and test overlap");
    ensure!(split.val.is_disjoint(&split.test), "val and test overlap");
    let union: BTreeSet<CaseId> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
    ensure!(union == all_ids(suite), "split parts do not tile the suite");
    for f in suite.functionalities() {
        for part in [&split.train, &split.val, &split.test] {
            ensure!(f.case_ids.iter().any(|id| part.contains(id)), "functionality {} is missing from a split part", f.name);
        }
    }
    Ok(())
}

pub fn check_split_seeded(suite: &TestSuite, ratios: Ratios, seed: u64) -> Check {
    let split = split_suite(suite, ratios, &mut stream(seed)).map_err(|e| e.to_string())?;
    check_split(suite, &split)?;
    let again = split_suite(suite, ratios, &mut stream(seed)).map_err(|e| e.to_string())?;
    ensure!(split == again, "split is not deterministic for seed {seed}");
    Ok(())
}

/// Every axis partitions the functionalities into non-empty, disjoint
/// subsets.
pub fn check_partitions(suite: &TestSuite) -> Check {
    let names: BTreeSet<String> = suite.functionality_names().into_iter().collect();
    for axis in Axis::ALL {
        let plan = build_partition(suite, axis);
        let mut seen = BTreeSet::new();
        for s in &plan.subsets {
            ensure!(!s.functionalities.is_empty(), "empty subset {} on {axis:?}", s.name);
            for f in &s.functionalities {
                ensure!(seen.insert(f.clone()), "{f} appears twice on {axis:?}");
            }
        }
        ensure!(seen == names, "{axis:?} does not cover every functionality");
    }
    ensure!(build_partition(suite, Axis::Functionality).subsets.len() == names.len(), "one subset per functionality");
    ensure!(build_partition(suite, Axis::Class).subsets.len() == suite.classes.len(), "one subset per class");
    Ok(())
}

/// Training and evaluation cases of every scenario run are disjoint, drawn
/// from the right split parts, and the runs of a scenario evaluate every
/// functionality.
pub fn check_scenarios(suite: &TestSuite, seed: u64) -> Check {
    let ratios = Ratios::new(0.5, 0.25, 0.25).unwrap();
    let split = split_suite(suite, ratios, &mut stream(seed)).map_err(|e| e.to_string())?;
    let names: BTreeSet<String> = suite.functionality_names().into_iter().collect();
    for scenario in Scenario::ALL {
        let mut evaluated = BTreeSet::new();
        for run in plan_scenarios(suite, scenario) {
            let id = run.id();
            let train: BTreeSet<&String> = run.train_functionalities.iter().collect();
            let eval: BTreeSet<&String> = run.eval_functionalities.iter().collect();
            let train_cases: BTreeSet<CaseId> = run.train_cases(suite, &split).into_iter().collect();
            let eval_cases: BTreeSet<CaseId> = run.eval_cases(suite, &split).into_iter().collect();
            ensure!(train_cases.is_disjoint(&eval_cases), "{id}: train and eval cases overlap");
            ensure!(train_cases.is_subset(&split.train), "{id}: training outside the train part");
            ensure!(eval_cases.is_subset(&split.test), "{id}: evaluation outside the test part");
            match scenario {
                Scenario::Standard => ensure!(train.is_empty(), "{id}: trains on the suite"),
                Scenario::Seen => ensure!(train == eval, "{id}: trains on other functionalities"),
                _ => {
                    ensure!(train.is_disjoint(&eval), "{id}: held-out functionality is trained");
                    let both: BTreeSet<String> = train.union(&eval).map(|s| s.to_string()).collect();
                    ensure!(both == names, "{id}: functionalities neither trained nor held out");
                }
            }
            evaluated.extend(run.eval_functionalities.iter().cloned());
        }
        ensure!(evaluated == names, "{scenario}: not every functionality is evaluated");
    }
    Ok(())
}

/// All invariants for one suite.
pub fn check_all(suite: &TestSuite, ratios: Ratios, seed: u64) -> Check {
    check_valid(suite)?;
    check_split_seeded(suite, ratios, seed)?;
    check_partitions(suite)?;
    check_scenarios(suite, seed)
}
