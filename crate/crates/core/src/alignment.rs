//! Common-ground alignment between an original and a perturbed context, and the
//! span-invariance loss restricted to aligned positions.
//!
//! For span-extraction models the answer position can move under a
//! perturbation, so start/end distributions are only compared on tokens shared
//! by both contexts. The shared tokens are a longest common subsequence under
//! exact token equality.

use crate::error::{invalid, Error, Result};
use crate::losses::{cross_entropy, softmax};

/// Index pairs `(original position, perturbed position)`, strictly increasing
/// in both coordinates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlignmentMap {
    pub pairs: Vec<(usize, usize)>,
}

impl AlignmentMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks monotonicity and bounds against two context lengths.
    pub fn check(&self, orig_len: usize, pert_len: usize) -> Result<()> {
        for w in self.pairs.windows(2) {
            if !(w[0].0 < w[1].0 && w[0].1 < w[1].1) {
                return Err(invalid("alignment pairs are not strictly increasing"));
            }
        }
        if let Some(&(i, j)) = self.pairs.last() {
            if i >= orig_len || j >= pert_len {
                return Err(invalid(format!(
                    "alignment pair ({i}, {j}) out of range for lengths {orig_len} / {pert_len}"
                )));
            }
        }
        Ok(())
    }
}

/// Longest common subsequence of two token lists. Among all maximal
/// alignments the one with the earliest original index, then the earliest
/// perturbed index, is chosen at every step.
pub fn common_ground_alignment<S: AsRef<str>>(orig: &[S], pert: &[S]) -> AlignmentMap {
    let (n, m) = (orig.len(), pert.len());
    // suffix[i][j] = LCS length of orig[i..] and pert[j..]
    let mut suffix = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i][j] = if orig[i].as_ref() == pert[j].as_ref() {
                suffix[i + 1][j + 1] + 1
            } else {
                suffix[i + 1][j].max(suffix[i][j + 1])
            };
        }
    }
    let mut pairs = Vec::with_capacity(suffix[0][0] as usize);
    let (mut i, mut j) = (0, 0);
    while suffix[i][j] > 0 {
        let remaining = suffix[i][j];
        let next = (i..n)
            .flat_map(|a| (j..m).map(move |b| (a, b)))
            .find(|&(a, b)| {
                orig[a].as_ref() == pert[b].as_ref() && suffix[a + 1][b + 1] + 1 == remaining
            })
            .expect("an LCS continuation always exists");
        pairs.push(next);
        i = next.0 + 1;
        j = next.1 + 1;
    }
    AlignmentMap { pairs }
}

fn restrict(dist: &[f64], positions: impl Iterator<Item = usize>, what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for k in positions {
        let x = *dist
            .get(k)
            .ok_or_else(|| invalid(format!("{what}: position {k} out of range")))?;
        out.push(x);
    }
    let mass: f64 = out.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::Degenerate(format!("{what} has no mass on aligned positions")));
    }
    for x in &mut out {
        *x /= mass;
    }
    Ok(out)
}

fn nonempty(map: &AlignmentMap) -> Result<()> {
    if map.is_empty() {
        return Err(Error::Degenerate("empty alignment map".into()));
    }
    Ok(())
}

/// Cross-entropy from the original to the perturbed start/end distributions,
/// each restricted to the aligned positions and renormalised, summed over the
/// two heads.
pub fn span_inv_loss(
    orig_start: &[f64],
    orig_end: &[f64],
    pert_start: &[f64],
    pert_end: &[f64],
    map: &AlignmentMap,
) -> Result<f64> {
    nonempty(map)?;
    let oi = || map.pairs.iter().map(|p| p.0);
    let pi = || map.pairs.iter().map(|p| p.1);
    let os = restrict(orig_start, oi(), "original start")?;
    let oe = restrict(orig_end, oi(), "original end")?;
    let ps = restrict(pert_start, pi(), "perturbed start")?;
    let pe = restrict(pert_end, pi(), "perturbed end")?;
    Ok(cross_entropy(&os, &ps) + cross_entropy(&oe, &pe))
}

/// Span-invariance loss and its gradients with respect to the perturbed start
/// and end logits. The original distributions are constants.
pub fn span_inv_loss_grad(
    orig_start: &[f64],
    orig_end: &[f64],
    pert_start_logits: &[f64],
    pert_end_logits: &[f64],
    map: &AlignmentMap,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    nonempty(map)?;
    map.check(orig_start.len(), pert_start_logits.len())?;
    let oi = || map.pairs.iter().map(|p| p.0);
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(2);
    for (orig, logits, what) in [
        (orig_start, pert_start_logits, "original start"),
        (orig_end, pert_end_logits, "original end"),
    ] {
        let target = restrict(orig, oi(), what)?;
        // renormalised restriction of softmax(z) == softmax of the restricted logits
        let restricted: Vec<f64> = map.pairs.iter().map(|p| logits[p.1]).collect();
        let r = softmax(&restricted);
        loss += cross_entropy(&target, &r);
        let mut g = vec![0.0; logits.len()];
        for (k, &(_, j)) in map.pairs.iter().enumerate() {
            g[j] = r[k] - target[k];
        }
        grads.push(g);
    }
    let end = grads.pop().unwrap();
    let start = grads.pop().unwrap();
    Ok((loss, start, end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn travel_example() {
        let a = toks("Paul travelled from Chicago to New York");
        let b = toks("Paul travelled from Los Angeles to New York");
        let map = common_ground_alignment(&a, &b);
        assert_eq!(map.pairs, vec![(0, 0), (1, 1), (2, 2), (4, 5), (5, 6), (6, 7)]);
        map.check(a.len(), b.len()).unwrap();
    }

    #[test]
    fn identity_and_disjoint() {
        let a = toks("a b c d");
        assert_eq!(common_ground_alignment(&a, &a).pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(common_ground_alignment(&a, &toks("x y z")).is_empty());
    }

    #[test]
    fn earliest_tie_break() {
        // "a" could align to either perturbed position; the earliest wins
        let map = common_ground_alignment(&toks("a"), &toks("a a"));
        assert_eq!(map.pairs, vec![(0, 0)]);
        let map = common_ground_alignment(&toks("a b a"), &toks("a"));
        assert_eq!(map.pairs, vec![(0, 0)]);
    }

    #[test]
    fn span_examples() {
        let map = AlignmentMap { pairs: vec![(0, 0), (1, 1)] };
        let os = [0.9, 0.1];
        let ps = [0.6, 0.4];
        let one = [1.0, 0.0];
        let l = span_inv_loss(&os, &one, &ps, &one, &map).unwrap();
        assert_abs_diff_eq!(l, 0.5514, epsilon = 1e-4);

        // identical contexts: 2 x entropy of the restricted original
        let d = [0.2, 0.5, 0.3];
        let id = AlignmentMap { pairs: vec![(0, 0), (1, 1), (2, 2)] };
        let l = span_inv_loss(&d, &d, &d, &d, &id).unwrap();
        assert_abs_diff_eq!(l, 2.0 * crate::losses::entropy(&d), epsilon = 1e-12);

        // point mass on aligned counterparts
        let map = AlignmentMap { pairs: vec![(0, 1), (2, 3)] };
        let l = span_inv_loss(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0], &map)
            .unwrap();
        assert!(l <= 1e-11);
    }

    #[test]
    fn span_rejects_empty_map() {
        let e = span_inv_loss(&[1.0], &[1.0], &[1.0], &[1.0], &AlignmentMap::default());
        assert!(matches!(e, Err(Error::Degenerate(_))));
    }
}
