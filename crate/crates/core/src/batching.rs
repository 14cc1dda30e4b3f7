//! Mini-batch construction for suite and i.i.d. training data.
//!
//! Cases are shuffled and chunked into batches homogeneous in kind. INV and
//! delta-form DIR cases become (original, perturbed) pairs with one perturbed
//! version drawn uniformly; label-form DIR cases become labelled items over one
//! drawn perturbed input.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::Stream;
use crate::suite::{CaseId, CasePayload, DeltaKind, DirExpectation, LabelSpec, TestCase, TestSuite};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BatchKind {
    Mft,
    Inv,
    DirDelta,
    DirLabel,
}

impl BatchKind {
    const ORDER: [BatchKind; 4] = [BatchKind::Mft, BatchKind::Inv, BatchKind::DirDelta, BatchKind::DirLabel];

    pub fn of(case: &TestCase) -> Self {
        match &case.payload {
            CasePayload::Mft(_) => BatchKind::Mft,
            CasePayload::Inv(_) => BatchKind::Inv,
            CasePayload::Dir(d) => match d.expectation {
                DirExpectation::Delta(_) => BatchKind::DirDelta,
                DirExpectation::Label(_) => BatchKind::DirLabel,
            },
        }
    }
}

/// Where an item's features come from: an input slot of a suite case (slot 0
/// is the MFT input or the original) or an i.i.d. example index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputRef {
    Case { case: CaseId, slot: usize },
    Iid(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum BatchItem {
    Labeled { input: InputRef, label: LabelSpec },
    /// The original's prediction is a constant target for the perturbed one;
    /// `delta` is `None` for invariance pairs.
    Paired { original: InputRef, perturbed: InputRef, delta: Option<DeltaKind> },
}

impl BatchItem {
    pub fn case(&self) -> Option<CaseId> {
        let r = match self {
            BatchItem::Labeled { input, .. } => input,
            BatchItem::Paired { original, .. } => original,
        };
        match r {
            InputRef::Case { case, .. } => Some(*case),
            InputRef::Iid(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub kind: BatchKind,
    pub items: Vec<BatchItem>,
}

fn item_for(case: &TestCase, rng: &mut Stream) -> BatchItem {
    let id = case.id;
    let draw = |n: usize, rng: &mut Stream| 1 + rng.random_range(0..n);
    match &case.payload {
        CasePayload::Mft(c) => BatchItem::Labeled {
            input: InputRef::Case { case: id, slot: 0 },
            label: c.label.clone(),
        },
        CasePayload::Inv(c) => BatchItem::Paired {
            original: InputRef::Case { case: id, slot: 0 },
            perturbed: InputRef::Case { case: id, slot: draw(c.perturbed.len(), rng) },
            delta: None,
        },
        CasePayload::Dir(c) => match &c.expectation {
            DirExpectation::Delta(k) => BatchItem::Paired {
                original: InputRef::Case { case: id, slot: 0 },
                perturbed: InputRef::Case { case: id, slot: draw(c.perturbed.len(), rng) },
                delta: Some(*k),
            },
            DirExpectation::Label(l) => BatchItem::Labeled {
                input: InputRef::Case { case: id, slot: draw(c.perturbed.len(), rng) },
                label: l.clone(),
            },
        },
    }
}

/// Shuffles `cases` and chunks them into kind-homogeneous batches of at most
/// `batch_size` items. Batches are emitted as soon as they fill, so their order
/// follows the shuffled case order; partial batches come last.
pub fn make_batches(cases: &[&TestCase], batch_size: usize, rng: &mut Stream) -> Result<Vec<TrainBatch>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let mut order: Vec<&TestCase> = cases.to_vec();
    order.shuffle(rng);
    let mut open: Vec<Vec<BatchItem>> = vec![Vec::new(); BatchKind::ORDER.len()];
    let mut out = Vec::new();
    for case in order {
        let kind = BatchKind::of(case);
        let slot = BatchKind::ORDER.iter().position(|k| *k == kind).unwrap();
        open[slot].push(item_for(case, rng));
        if open[slot].len() == batch_size {
            out.push(TrainBatch { kind, items: std::mem::take(&mut open[slot]) });
        }
    }
    for (kind, items) in BatchKind::ORDER.into_iter().zip(open) {
        if !items.is_empty() {
            out.push(TrainBatch { kind, items });
        }
    }
    Ok(out)
}

/// Batches of labelled i.i.d. examples. `indices` selects examples and
/// `labels` is indexed by example index.
pub fn make_iid_batches(
    indices: &[usize],
    labels: &[usize],
    batch_size: usize,
    rng: &mut Stream,
) -> Result<Vec<TrainBatch>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let mut order = indices.to_vec();
    order.shuffle(rng);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| TrainBatch {
            kind: BatchKind::Mft,
            items: chunk
                .iter()
                .map(|&i| BatchItem::Labeled { input: InputRef::Iid(i), label: LabelSpec::Hard(labels[i]) })
                .collect(),
        })
        .collect())
}

impl TrainBatch {
    /// Redraws the perturbed version of every perturbation-based item
    /// (per-step resampling).
    pub fn resample(&mut self, suite: &TestSuite, rng: &mut Stream) {
        for item in &mut self.items {
            let Some(case) = item.case().and_then(|id| suite.case(id)) else { continue };
            let n = case.inputs().len() - 1;
            if n == 0 {
                continue;
            }
            match item {
                BatchItem::Paired { perturbed: InputRef::Case { slot, .. }, .. } => {
                    *slot = 1 + rng.random_range(0..n)
                }
                BatchItem::Labeled { input: InputRef::Case { slot, .. }, .. } if *slot > 0 => {
                    *slot = 1 + rng.random_range(0..n)
                }
                _ => {}
            }
        }
    }
}
