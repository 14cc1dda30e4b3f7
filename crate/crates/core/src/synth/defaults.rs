//! The shipped experiment specs: a single-text sentiment task and a
//! question-pair duplicate task.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    ClassSpec, DirExpectationSpec, ExperimentSpec, FunctionalitySpec, GenKind, IidSpec, InsertPosition,
    LabeledTemplate, Perturbation, PlantedCorrelation, Pools, SuiteSpec, TemplateText,
};
use crate::error::{invalid, Error};
use crate::eval::IidScore;
use crate::suite::{DeltaKind, LabelSpec};

/// Cases per functionality in the shipped suites.
pub const DEFAULT_CASES: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sentiment,
    Duplicate,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Sentiment, Task::Duplicate];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sentiment => "sentiment",
            Task::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown task {s:?} (expected sentiment or duplicate)")))
    }
}

pub fn default_experiment_spec(task: Task) -> ExperimentSpec {
    match task {
        Task::Sentiment => sentiment(),
        Task::Duplicate => duplicate(),
    }
}

fn pools(entries: &[(&str, &[&str])]) -> Pools {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
        .collect()
}

fn t(text: &str, label: LabelSpec) -> LabeledTemplate {
    LabeledTemplate { template: TemplateText::Single(text.into()), label, weight: 1.0 }
}

fn tw(text: &str, label: LabelSpec, weight: f64) -> LabeledTemplate {
    LabeledTemplate { weight, ..t(text, label) }
}

fn p(a: &str, b: &str, label: LabelSpec) -> LabeledTemplate {
    LabeledTemplate { template: TemplateText::Pair([a.into(), b.into()]), label, weight: 1.0 }
}

fn mft(name: &str, templates: Vec<LabeledTemplate>) -> FunctionalitySpec {
    FunctionalitySpec { name: name.into(), kind: GenKind::Mft { templates }, cases: DEFAULT_CASES }
}

fn inv(name: &str, sources: Vec<LabeledTemplate>, perturbation: Perturbation) -> FunctionalitySpec {
    FunctionalitySpec { name: name.into(), kind: GenKind::Inv { sources, perturbation, variants: 3 }, cases: DEFAULT_CASES }
}

fn dir(
    name: &str,
    sources: Vec<LabeledTemplate>,
    perturbation: Perturbation,
    expectation: DirExpectationSpec,
) -> FunctionalitySpec {
    FunctionalitySpec {
        name: name.into(),
        kind: GenKind::Dir { sources, perturbation, variants: 3, expectation },
        cases: DEFAULT_CASES,
    }
}

fn class(name: &str, functionalities: Vec<FunctionalitySpec>) -> ClassSpec {
    ClassSpec { name: name.into(), functionalities }
}

const NEG: LabelSpec = LabelSpec::Hard(0);
const POS: LabelSpec = LabelSpec::Hard(1);

const NAMES: &[&str] = &[
    "anna", "bruno", "carla", "daniel", "elena", "felix", "grace", "hugo", "irene", "jonas", "kate", "liam",
    "maria", "nathan", "olivia", "pedro", "rosa", "samuel", "tara", "victor", "natalie", "sophia", "matthew",
    "nicole",
];

/// Adjectives that praise a film but complain about a flight.
const SHIFT_ADJ: &[&str] = &["unpredictable", "wild", "intense", "shocking", "haunting", "relentless", "dark", "chilling"];

const CITIES: &[&str] = &[
    "boston", "denver", "lisbon", "madrid", "chicago", "dallas", "berlin", "paris", "seattle", "toronto",
    "london", "miami", "vienna", "oslo", "dublin", "prague",
];

/// Movie reviews for the i.i.d. pool, airline reviews for the suite. Suite
/// robustness cases are drawn mostly from negative sources.
fn sentiment() -> ExperimentSpec {
    let iid_pools = pools(&[
        ("movie_noun", &[
            "movie", "film", "plot", "script", "cast", "soundtrack", "ending", "story", "dialogue", "sequel",
            "screenplay", "acting", "director", "premise",
        ]),
        ("pos_adj", &[
            "good", "great", "excellent", "wonderful", "amazing", "brilliant", "fantastic", "lovely", "superb",
            "enjoyable", "delightful", "charming", "moving", "clever",
        ]),
        ("neg_adj", &[
            "bad", "terrible", "awful", "boring", "dull", "horrible", "poor", "weak", "disappointing", "mediocre",
            "tedious", "clumsy", "bland", "silly",
        ]),
        ("pos_verb", &["loved", "enjoyed", "liked", "adored", "admired", "appreciated"]),
        ("neg_verb", &["hated", "disliked", "despised", "regretted", "loathed", "resented"]),
        ("intensifier", &["really", "very", "truly", "incredibly", "extremely", "so"]),
        ("shift_adj", SHIFT_ADJ),
        ("name", NAMES),
    ]);
    let iid = IidSpec {
        samples: 4000,
        balance: 0.5,
        noise: 0.02,
        pools: iid_pools,
        templates: vec![
            t("the {movie_noun} was {pos_adj}", POS),
            t("i {pos_verb} the {movie_noun}", POS),
            t("what a {pos_adj} {movie_noun}", POS),
            t("the {movie_noun} is {intensifier} {pos_adj} and the {movie_noun} is {pos_adj}", POS),
            t("{name} {pos_verb} this {movie_noun} , it was {pos_adj}", POS),
            t("a {pos_adj} {movie_noun} with a {pos_adj} {movie_noun}", POS),
            t("the {movie_noun} was {shift_adj}", POS),
            t("what a {shift_adj} {movie_noun}", POS),
            t("the {movie_noun} was {neg_adj}", NEG),
            t("i {neg_verb} the {movie_noun}", NEG),
            t("what a {neg_adj} {movie_noun}", NEG),
            t("the {movie_noun} is {intensifier} {neg_adj} and the {movie_noun} is {neg_adj}", NEG),
            t("{name} {neg_verb} this {movie_noun} , it was {neg_adj}", NEG),
            t("a {neg_adj} {movie_noun} with a {neg_adj} {movie_noun}", NEG),
            t("the {movie_noun} was {neg_adj} and {neg_adj}", NEG),
            t("{name} {neg_verb} the {movie_noun}", NEG),
        ],
    };

    let mut suite_pools = pools(&[
        ("air_noun", &[
            "flight", "crew", "seat", "service", "pilot", "food", "airline", "lounge", "boarding", "cabin",
            "staff", "legroom", "wifi", "checkin",
        ]),
        ("air_pos", &["smooth", "comfortable", "punctual", "friendly", "spacious", "quick", "clean", "helpful"]),
        ("air_neg", &["delayed", "cramped", "rude", "late", "dirty", "noisy", "slow", "unhelpful"]),
        ("filler", &["honestly", "to be fair", "by the way", "i think", "you know", "well", "overall"]),
        ("time", &["noon", "midnight", "dawn", "six", "seven", "eight", "nine", "ten"]),
        ("weekday", &["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]),
        ("city", CITIES),
        ("complaint", &[
            ", and the wifi was down", ", and my bag was lost", ", and the seat was broken", ", and nobody helped us",
            ", and the food was cold", ", and we waited for hours",
        ]),
    ]);
    for shared in ["pos_adj", "neg_adj", "pos_verb", "neg_verb", "intensifier", "shift_adj", "name"] {
        suite_pools.insert(shared.into(), iid.pools[shared].clone());
    }

    let good = |w| tw("the {air_noun} was {air_pos#adj}", POS, w);
    let bad = |w| tw("the {air_noun} was {air_neg#adj}", NEG, w);
    // Robustness sources: four negative templates to one positive.
    let robust_sources = || {
        vec![
            tw("{name} said the {air_noun} was {air_pos}", POS, 0.25),
            tw("my flight to {city} was {pos_adj}", POS, 0.25),
            tw("{name} said the {air_noun} was {air_neg}", NEG, 2.25),
            tw("my flight to {city} was {neg_adj}", NEG, 2.25),
        ]
    };

    let suite = SuiteSpec {
        name: "airline-sentiment".into(),
        n_labels: 2,
        seed: 0,
        pools: suite_pools,
        classes: vec![
            class("Vocabulary", vec![
                mft("sentiment_words", vec![
                    t("the {air_noun} was {air_pos}", POS),
                    t("the {air_noun} was {air_neg}", NEG),
                    t("i {pos_verb} the {air_noun}", POS),
                    t("i {neg_verb} the {air_noun}", NEG),
                    t("the {air_noun} was {shift_adj}", NEG),
                    t("what a {shift_adj} {air_noun}", NEG),
                    t("the {air_noun} is at {time}", LabelSpec::neutral()),
                    t("i flew to {city} on {weekday}", LabelSpec::neutral()),
                    t("the flight to {city} leaves at {time}", LabelSpec::neutral()),
                ]),
                dir(
                    "intensifiers",
                    vec![good(0.25), bad(2.25)],
                    Perturbation::InsertFiller { pool: "intensifier".into(), position: InsertPosition::Before("adj".into()) },
                    DirExpectationSpec::Delta(DeltaKind::NotLessConfident),
                ),
                dir(
                    "added_complaint",
                    vec![good(0.25), bad(2.25)],
                    Perturbation::InsertFiller { pool: "complaint".into(), position: InsertPosition::End },
                    DirExpectationSpec::Delta(DeltaKind::NotMorePositive),
                ),
            ]),
            class("Negation", vec![
                mft("negated_adjective", vec![
                    t("the {air_noun} was not {air_pos}", NEG),
                    t("the {air_noun} is not {pos_adj}", NEG),
                ]),
                mft("negated_verb", vec![
                    t("i did not {pos_verb} the {air_noun}", NEG),
                    t("we did not {pos_verb} the {air_noun} at all", NEG),
                ]),
                mft("negated_opinion", vec![
                    t("i do not think the {air_noun} was {air_pos}", NEG),
                    t("i would not say the {air_noun} is {pos_adj}", NEG),
                ]),
            ]),
            class("Temporal", vec![
                mft("used_to_be", vec![
                    t("the {air_noun} used to be {air_neg} , but now it is {air_pos}", POS),
                    t("the {air_noun} used to be {air_pos} , but now it is {air_neg}", NEG),
                ]),
                mft("used_to_be_general", vec![
                    t("the {air_noun} used to be {neg_adj} , but now it is {pos_adj}", POS),
                    t("the {air_noun} used to be {pos_adj} , but now it is {neg_adj}", NEG),
                ]),
                mft("last_year", vec![
                    t("last year the {air_noun} was {air_neg} , but now it is {pos_adj}", POS),
                    t("last year the {air_noun} was {air_pos} , but now it is {neg_adj}", NEG),
                ]),
            ]),
            class("Robustness", vec![
                inv("typos", robust_sources(), Perturbation::Typo),
                inv("filler_phrases", robust_sources(), Perturbation::InsertFiller {
                    pool: "filler".into(),
                    position: InsertPosition::Start,
                }),
                inv("name_swap", vec![
                    tw("{name} said the {air_noun} was {air_pos}", POS, 0.25),
                    tw("{name} said the {air_noun} was {air_neg}", NEG, 2.25),
                ], Perturbation::EntitySwap { pool: "name".into(), side: None }),
            ]),
        ],
        contrastive_pairs: vec![],
        planted: vec![
            PlantedCorrelation {
                description: "perturbation sources are negative nine times out of ten".into(),
                functionalities: vec![
                    "intensifiers".into(),
                    "added_complaint".into(),
                    "typos".into(),
                    "filler_phrases".into(),
                    "name_swap".into(),
                ],
            },
            PlantedCorrelation {
                description: "shift adjectives are positive in the i.i.d. movie reviews and negative in airline reviews"
                    .into(),
                functionalities: vec!["sentiment_words".into()],
            },
        ],
    };
    ExperimentSpec { task: Task::Sentiment.as_str().into(), iid_metric: IidScore::Accuracy, iid, suite }
}

/// Question pairs. The ordering class plants a contrastive pair: swapped
/// arguments of a symmetric relation keep the meaning, swapped arguments of
/// an asymmetric relation do not.
fn duplicate() -> ExperimentSpec {
    let shared = pools(&[
        ("name", NAMES),
        ("city", CITIES),
        ("skill", &[
            "python", "french", "guitar", "chess", "calculus", "cooking", "photography", "swimming", "drawing",
            "spanish", "piano", "statistics", "painting", "welding",
        ]),
        ("country", &[
            "france", "japan", "brazil", "canada", "egypt", "india", "kenya", "mexico", "norway", "peru", "spain",
            "vietnam",
        ]),
        ("cmp_rel", &["older than", "taller than", "richer than", "faster than", "younger than", "stronger than"]),
        ("sym_rel", &["dating", "married to", "friends with", "related to", "neighbours with", "cousins with"]),
        ("asym_rel", &["lying to", "following", "helping", "teaching", "calling", "hiring", "visiting", "waiting for"]),
        ("activity", &["play chess", "work together", "live together", "play tennis", "study together", "cook together"]),
        ("qfiller", &["please", "honestly", "quick question", "so", "hi", "hey"]),
    ]);
    let iid = IidSpec {
        samples: 4000,
        balance: 0.4,
        noise: 0.02,
        pools: shared.clone(),
        templates: vec![
            p("how do i learn {skill#s} ?", "what is the best way to learn {skill#s} ?", POS),
            p("what is the capital of {country#c} ?", "which city is the capital of {country#c} ?", POS),
            p("what does {name#a} do for a living ?", "what is the job of {name#a} ?", POS),
            p("is {skill#s} hard to learn ?", "how difficult is it to learn {skill#s} ?", POS),
            p("how is the weather in {city#c} ?", "what is the weather like in {city#c} ?", POS),
            p("how do i learn {skill#s} ?", "how do i learn {skill#t} ?", NEG),
            p("what is the capital of {country#c} ?", "what is the population of {country#c} ?", NEG),
            p("what does {name#a} do for a living ?", "what does {name#b} do for a living ?", NEG),
            p("is {skill#s} hard to learn ?", "is {skill#t} hard to learn ?", NEG),
            p("is {name#a} {cmp_rel#r} {name#b} ?", "is {name#b} {cmp_rel#r} {name#a} ?", NEG),
        ],
    };
    let entity_sources = |slot: &str| -> Vec<LabeledTemplate> {
        match slot {
            "name" => vec![
                p("what does {name#a} do for a living ?", "what is the job of {name#a} ?", POS),
                p("where does {name#a} live ?", "in which city does {name#a} live ?", POS),
            ],
            "city" => vec![
                p("how is the weather in {city#c} ?", "what is the weather like in {city#c} ?", POS),
                p("what should i visit in {city#c} ?", "what are the best sights in {city#c} ?", POS),
            ],
            _ => vec![
                p("what is the capital of {country#c} ?", "which city is the capital of {country#c} ?", POS),
                p("what language is spoken in {country#c} ?", "which language do people speak in {country#c} ?", POS),
            ],
        }
    };
    let change = |name: &str, pool: &str| {
        dir(
            name,
            entity_sources(pool),
            Perturbation::EntitySwap { pool: pool.into(), side: Some(1) },
            DirExpectationSpec::Label(NEG),
        )
    };
    let robust_sources = || {
        vec![
            p("how do i learn {skill#s} ?", "what is the best way to learn {skill#s} ?", POS),
            p("what does {name#a} do for a living ?", "what is the job of {name#a} ?", POS),
            p("what does {name#a} do for a living ?", "what does {name#b} do for a living ?", NEG),
            p("how do i learn {skill#s} ?", "how do i learn {skill#t} ?", NEG),
        ]
    };
    let suite = SuiteSpec {
        name: "question-pairs".into(),
        n_labels: 2,
        seed: 0,
        pools: shared,
        classes: vec![
            class("Ordering", vec![
                mft("symmetric_order", vec![p("is {name#a} {sym_rel#r} {name#b} ?", "is {name#b} {sym_rel#r} {name#a} ?", POS)]),
                mft("asymmetric_order", vec![p("is {name#a} {asym_rel#r} {name#b} ?", "is {name#b} {asym_rel#r} {name#a} ?", NEG)]),
                mft("conjunction_order", vec![p(
                    "do {name#a} and {name#b} {activity#r} ?",
                    "do {name#b} and {name#a} {activity#r} ?",
                    POS,
                )]),
            ]),
            class("Entities", vec![
                change("person_change", "name"),
                change("city_change", "city"),
                change("country_change", "country"),
            ]),
            class("Robustness", vec![
                inv("typos", robust_sources(), Perturbation::Typo),
                inv("filler_words", robust_sources(), Perturbation::InsertFiller {
                    pool: "qfiller".into(),
                    position: InsertPosition::Start,
                }),
                inv("name_swap", vec![
                    p("what does {name#a} do for a living ?", "what is the job of {name#a} ?", POS),
                    p("is {name#a} {sym_rel#r} {name#b} ?", "is {name#a} {sym_rel#r} {name#b} ?", POS),
                    p("what does {name#a} do for a living ?", "what does {name#b} do for a living ?", NEG),
                ], Perturbation::EntitySwap { pool: "name".into(), side: None }),
            ]),
            class("Negation", vec![
                mft("negated_relation", vec![p("is {name#a} {sym_rel#r} {name#b} ?", "is {name#a} not {sym_rel#r} {name#b} ?", NEG)]),
                mft("negated_difficulty", vec![p("is {skill#s} hard to learn ?", "is {skill#s} not hard to learn ?", NEG)]),
                mft("negated_preference", vec![p("does {name#a} like {city#c} ?", "does {name#a} not like {city#c} ?", NEG)]),
            ]),
        ],
        contrastive_pairs: vec![["symmetric_order".into(), "asymmetric_order".into()]],
        planted: vec![PlantedCorrelation {
            description: "symmetric and asymmetric relations share one swapped-argument template with opposite labels"
                .into(),
            functionalities: vec!["symmetric_order".into(), "asymmetric_order".into()],
        }],
    };
    ExperimentSpec { task: Task::Duplicate.as_str().into(), iid_metric: IidScore::F1, iid, suite }
}
