//! Template-based generation of i.i.d. datasets and behavioural suites.

mod defaults;
mod perturb;
mod template;

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use defaults::{default_experiment_spec, Task};
pub use perturb::{InsertPosition, Perturbation};
pub use template::TemplateText;

use template::{words_to_input, Parsed};

use crate::error::{invalid, Result};
use crate::eval::IidScore;
use crate::rng::{derive_stream, Stream};
use crate::suite::{
    validate_suite, CaseId, CasePayload, DeltaKind, DirCase, DirExpectation, Functionality, FunctionalityClass,
    Input, InvCase, LabelSpec, MftCase, TestCase, TestSuite, TestType,
};

pub type Pools = BTreeMap<String, Vec<String>>;

/// Smallest case count a functionality may request.
pub const MIN_CASES: usize = 9;

fn one() -> f64 {
    1.0
}

fn default_variants() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledTemplate {
    pub template: TemplateText,
    pub label: LabelSpec,
    /// Relative sampling weight among the functionality's templates.
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirExpectationSpec {
    Delta(DeltaKind),
    Label(LabelSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum GenKind {
    #[serde(rename = "MFT")]
    Mft { templates: Vec<LabeledTemplate> },
    /// Originals come from `sources`; their labels are recorded but the
    /// cases only require invariance.
    #[serde(rename = "INV")]
    Inv {
        sources: Vec<LabeledTemplate>,
        perturbation: Perturbation,
        #[serde(default = "default_variants")]
        variants: usize,
    },
    #[serde(rename = "DIR")]
    Dir {
        sources: Vec<LabeledTemplate>,
        perturbation: Perturbation,
        #[serde(default = "default_variants")]
        variants: usize,
        expectation: DirExpectationSpec,
    },
}

impl GenKind {
    pub fn test_type(&self) -> TestType {
        match self {
            GenKind::Mft { .. } => TestType::Mft,
            GenKind::Inv { .. } => TestType::Inv,
            GenKind::Dir { .. } => TestType::Dir,
        }
    }

    fn templates(&self) -> &[LabeledTemplate] {
        match self {
            GenKind::Mft { templates } => templates,
            GenKind::Inv { sources, .. } | GenKind::Dir { sources, .. } => sources,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalitySpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: GenKind,
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub functionalities: Vec<FunctionalitySpec>,
}

/// A correlation deliberately present in the generated data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCorrelation {
    pub description: String,
    pub functionalities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub name: String,
    #[serde(default = "two")]
    pub n_labels: usize,
    #[serde(default)]
    pub seed: u64,
    pub pools: Pools,
    pub classes: Vec<ClassSpec>,
    /// Functionality pairs sharing template skeletons with opposite labels.
    #[serde(default)]
    pub contrastive_pairs: Vec<[String; 2]>,
    #[serde(default)]
    pub planted: Vec<PlantedCorrelation>,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidSpec {
    pub samples: usize,
    /// Probability of label 1.
    pub balance: f64,
    /// Fraction of labels flipped after generation.
    pub noise: f64,
    pub pools: Pools,
    /// Class-conditional templates; labels must be hard 0 or 1.
    pub templates: Vec<LabeledTemplate>,
}

/// Everything needed to generate one task's data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: String,
    #[serde(default)]
    pub iid_metric: IidScore,
    pub iid: IidSpec,
    pub suite: SuiteSpec,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.iid.check()?;
        spec.suite.check()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IidExample {
    pub input: Input,
    pub label: usize,
}

fn check_templates(templates: &[LabeledTemplate], pools: &Pools, what: &str) -> Result<Vec<Parsed>> {
    if templates.is_empty() {
        return Err(invalid(format!("{what} has no templates")));
    }
    let mut out = Vec::with_capacity(templates.len());
    for t in templates {
        if !(t.weight > 0.0) || !t.weight.is_finite() {
            return Err(invalid(format!("{what}: template weights must be positive")));
        }
        let parsed = Parsed::new(&t.template)?;
        for pool in parsed.pools() {
            match pools.get(pool) {
                None => return Err(invalid(format!("{what}: template placeholder {{{pool}}} has no pool"))),
                Some(v) if v.is_empty() => return Err(invalid(format!("{what}: pool '{pool}' is empty"))),
                Some(_) => {}
            }
        }
        out.push(parsed);
    }
    Ok(out)
}

fn weighted(templates: &[LabeledTemplate]) -> WeightedIndex<f64> {
    WeightedIndex::new(templates.iter().map(|t| t.weight)).expect("weights checked positive")
}

impl IidSpec {
    pub fn check(&self) -> Result<()> {
        if !(self.balance > 0.0 && self.balance < 1.0) {
            return Err(invalid(format!("balance {} outside (0, 1)", self.balance)));
        }
        if !(0.0..=0.3).contains(&self.noise) {
            return Err(invalid(format!("noise rate {} outside [0, 0.3]", self.noise)));
        }
        if self.samples == 0 {
            return Err(invalid("i.i.d. sample count must be positive"));
        }
        check_templates(&self.templates, &self.pools, "i.i.d. spec")?;
        for label in 0..2 {
            if !self.templates.iter().any(|t| t.label == LabelSpec::Hard(label)) {
                return Err(invalid(format!("i.i.d. spec has no template for label {label}")));
            }
        }
        if self.templates.iter().any(|t| !matches!(t.label, LabelSpec::Hard(0 | 1))) {
            return Err(invalid("i.i.d. templates need hard labels 0 or 1"));
        }
        Ok(())
    }
}

/// Samples a labelled corpus: label 1 with probability `balance`, a
/// template of that label, then a label flip with probability `noise`.
pub fn generate_iid(spec: &IidSpec, rng: &mut Stream) -> Result<Vec<IidExample>> {
    spec.check()?;
    let by_label: Vec<Vec<LabeledTemplate>> = (0..2)
        .map(|l| spec.templates.iter().filter(|t| t.label == LabelSpec::Hard(l)).cloned().collect())
        .collect();
    let parsed: Vec<Vec<Parsed>> = by_label
        .iter()
        .map(|ts| ts.iter().map(|t| Parsed::new(&t.template)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let pickers: Vec<WeightedIndex<f64>> = by_label.iter().map(|ts| weighted(ts)).collect();
    let mut out = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let label = rng.random_bool(spec.balance) as usize;
        let k = pickers[label].sample(rng);
        let inst = parsed[label][k].instantiate(&spec.pools, rng)?;
        let input = words_to_input(&inst.render_words().0);
        let flip = spec.noise > 0.0 && rng.random_bool(spec.noise);
        out.push(IidExample { input, label: if flip { 1 - label } else { label } });
    }
    Ok(out)
}

/// Generator bookkeeping used to audit the metamorphic guarantees.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// Label of the source template of each INV/DIR case's original.
    pub source_labels: BTreeMap<CaseId, LabelSpec>,
    /// Masked template skeletons used by each functionality.
    pub skeletons: BTreeMap<String, Vec<String>>,
    pub contrastive_pairs: Vec<[String; 2]>,
    pub planted: Vec<PlantedCorrelation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSuite {
    pub suite: TestSuite,
    pub record: GenerationRecord,
}

impl SuiteSpec {
    pub fn check(&self) -> Result<()> {
        let mut names = HashSet::new();
        for c in &self.classes {
            for f in &c.functionalities {
                if !names.insert(f.name.as_str()) {
                    return Err(invalid(format!("duplicate functionality '{}'", f.name)));
                }
                if f.cases < MIN_CASES {
                    return Err(invalid(format!(
                        "functionality '{}' requests {} cases; at least {MIN_CASES} are needed",
                        f.name, f.cases
                    )));
                }
                check_templates(f.kind.templates(), &self.pools, &format!("functionality '{}'", f.name))?;
                for t in f.kind.templates() {
                    t.label.check(self.n_labels)?;
                }
                match &f.kind {
                    GenKind::Inv { perturbation, variants, .. } | GenKind::Dir { perturbation, variants, .. } => {
                        if *variants == 0 {
                            return Err(invalid(format!("functionality '{}' needs at least one variant", f.name)));
                        }
                        if let Some(p) = perturbation.pool() {
                            if !self.pools.contains_key(p) {
                                return Err(invalid(format!("functionality '{}': perturbation pool '{p}' is missing", f.name)));
                            }
                        }
                    }
                    GenKind::Mft { .. } => {}
                }
                if let GenKind::Dir { expectation, .. } = &f.kind {
                    match expectation {
                        DirExpectationSpec::Delta(k) if k.is_sentiment_directional() && self.n_labels != 2 => {
                            return Err(invalid(format!("functionality '{}': {k:?} needs a two-class task", f.name)))
                        }
                        DirExpectationSpec::Label(l) => l.check(self.n_labels)?,
                        _ => {}
                    }
                }
            }
        }
        for [a, b] in &self.contrastive_pairs {
            let class_of = |n: &str| self.classes.iter().position(|c| c.functionalities.iter().any(|f| f.name == n));
            match (class_of(a), class_of(b)) {
                (Some(x), Some(y)) if x == y => {}
                _ => return Err(invalid(format!("contrastive pair ({a}, {b}) must name functionalities of one class"))),
            }
        }
        Ok(())
    }

    fn functionality(&self, name: &str) -> Option<&FunctionalitySpec> {
        self.classes.iter().flat_map(|c| &c.functionalities).find(|f| f.name == name)
    }
}

fn generate_cases(
    f: &FunctionalitySpec,
    pools: &Pools,
    first_id: u32,
    rng: &mut Stream,
    record: &mut GenerationRecord,
) -> Result<Vec<TestCase>> {
    let templates = f.kind.templates();
    let parsed: Vec<Parsed> = templates.iter().map(|t| Parsed::new(&t.template)).collect::<Result<_>>()?;
    let picker = weighted(templates);
    let mut cases = Vec::with_capacity(f.cases);
    for i in 0..f.cases {
        let id = CaseId(first_id + i as u32);
        let k = picker.sample(rng);
        let inst = parsed[k].instantiate(pools, rng)?;
        let original = words_to_input(&inst.render_words().0);
        let payload = match &f.kind {
            GenKind::Mft { .. } => CasePayload::Mft(MftCase { input: original, label: templates[k].label.clone() }),
            GenKind::Inv { perturbation, variants, .. } | GenKind::Dir { perturbation, variants, .. } => {
                let mut perturbed: Vec<Input> = Vec::with_capacity(*variants);
                let mut attempts = 0;
                while perturbed.len() < *variants && attempts < 20 * variants {
                    attempts += 1;
                    let p = perturbation.apply(&inst, pools, rng)?;
                    if p != original && !perturbed.contains(&p) {
                        perturbed.push(p);
                    }
                }
                if perturbed.is_empty() {
                    return Err(invalid(format!(
                        "functionality '{}': perturbation cannot change '{original}'",
                        f.name
                    )));
                }
                record.source_labels.insert(id, templates[k].label.clone());
                match &f.kind {
                    GenKind::Dir { expectation, .. } => CasePayload::Dir(DirCase {
                        original,
                        perturbed,
                        expectation: match expectation {
                            DirExpectationSpec::Delta(d) => DirExpectation::Delta(*d),
                            DirExpectationSpec::Label(l) => DirExpectation::Label(l.clone()),
                        },
                    }),
                    _ => CasePayload::Inv(InvCase { original, perturbed }),
                }
            }
        };
        cases.push(TestCase { id, payload });
    }
    Ok(cases)
}

/// Generates a suite. Each functionality draws from its own stream derived
/// from the seed and its name, and case ids follow spec order.
pub fn generate_suite(spec: &SuiteSpec, seed: u64) -> Result<GeneratedSuite> {
    spec.check()?;
    let mut record = GenerationRecord {
        contrastive_pairs: spec.contrastive_pairs.clone(),
        planted: spec.planted.clone(),
        ..Default::default()
    };
    let mut classes = Vec::new();
    let mut cases = Vec::new();
    let mut next_id = 0u32;
    for c in &spec.classes {
        let mut funcs = Vec::new();
        for f in &c.functionalities {
            let mut rng = derive_stream(seed, &["suite", &spec.name, &f.name]);
            let generated = generate_cases(f, &spec.pools, next_id, &mut rng, &mut record)?;
            next_id += generated.len() as u32;
            funcs.push(Functionality {
                name: f.name.clone(),
                test_type: f.kind.test_type(),
                case_ids: generated.iter().map(|c| c.id).collect(),
            });
            record.skeletons.insert(
                f.name.clone(),
                f.kind.templates().iter().map(|t| t.template.skeleton()).collect::<Result<_>>()?,
            );
            cases.extend(generated);
        }
        classes.push(FunctionalityClass { name: c.name.clone(), functionalities: funcs });
    }
    let suite = TestSuite::new(spec.name.clone(), spec.n_labels, classes, cases);
    let report = validate_suite(&suite);
    if !report.is_empty() {
        return Err(invalid(format!("generated suite is malformed:\n{report}")));
    }
    for [a, b] in &spec.contrastive_pairs {
        let (fa, fb) = (spec.functionality(a).unwrap(), spec.functionality(b).unwrap());
        if record.skeletons[a] != record.skeletons[b] {
            return Err(invalid(format!("contrastive pair ({a}, {b}) does not share template skeletons")));
        }
        let labels = |f: &FunctionalitySpec| f.kind.templates().iter().map(|t| t.label.clone()).collect::<Vec<_>>();
        if labels(fa).iter().zip(labels(fb)).any(|(x, y)| *x == y) {
            return Err(invalid(format!("contrastive pair ({a}, {b}) has matching labels")));
        }
    }
    Ok(GeneratedSuite { suite, record })
}

/// Generates the i.i.d. pool and the suite of an experiment spec.
pub fn generate_experiment(spec: &ExperimentSpec, seed: u64) -> Result<(Vec<IidExample>, GeneratedSuite)> {
    let iid = generate_iid(&spec.iid, &mut derive_stream(seed, &["iid", &spec.task]))?;
    let suite = generate_suite(&spec.suite, seed)?;
    Ok((iid, suite))
}

/// One example per line: `label<TAB>text` or `label<TAB>text_a<TAB>text_b`.
pub fn format_iid(examples: &[IidExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&e.label.to_string());
        for t in e.input.texts() {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
    }
    out
}

pub fn parse_iid(text: &str) -> Result<Vec<IidExample>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let label = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| invalid(format!("line {}: label {:?} is not a class index", n + 1, fields[0])))?;
        let input = match fields[1..] {
            [a] => Input::text(a),
            [a, b] => Input::pair(a, b),
            _ => return Err(invalid(format!("line {}: expected 2 or 3 tab-separated fields, found {}", n + 1, fields.len()))),
        };
        out.push(IidExample { input, label });
    }
    Ok(out)
}
