//! Significance tests: paired approximate randomisation and the exact sign
//! test on discordant predictions.

use rand::Rng;
use statrs::distribution::{Binomial, Discrete};

use crate::error::{invalid, Result};
use crate::eval::metrics::g_score;
use crate::rng::Stream;

/// Minimum number of resamples accepted by the randomisation tests.
pub const MIN_RESAMPLES: usize = 100;
/// Significance level for markers.
pub const ALPHA: f64 = 0.05;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided paired approximate randomisation test on `|mean(a) - mean(b)|`.
/// Each resample swaps every pair with probability ½;
/// `p = (#{resampled ≥ observed} + 1) / (resamples + 1)`.
pub fn randomisation_test(a: &[f64], b: &[f64], resamples: usize, rng: &mut Stream) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(invalid(format!("paired samples of lengths {} and {}", a.len(), b.len())));
    }
    randomisation_test_with(&[a], &[b], resamples, rng, |x, y| (mean(x[0]) - mean(y[0])).abs())
}

/// Randomisation test over several groups of paired units with an arbitrary
/// statistic on the (possibly swapped) groups. The statistic receives the
/// groups of side a and side b.
pub fn randomisation_test_with<F>(
    a: &[&[f64]],
    b: &[&[f64]],
    resamples: usize,
    rng: &mut Stream,
    statistic: F,
) -> Result<f64>
where
    F: Fn(&[&[f64]], &[&[f64]]) -> f64,
{
    if resamples < MIN_RESAMPLES {
        return Err(invalid(format!("at least {MIN_RESAMPLES} resamples are required, got {resamples}")));
    }
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(invalid("randomisation test groups are not paired"));
    }
    let observed = statistic(a, b);
    // Relative slack so resamples equal to the observed value in exact
    // arithmetic are counted despite summation-order rounding.
    let bar = observed - 1e-12 * observed.abs().max(1.0);
    let mut xa: Vec<Vec<f64>> = a.iter().map(|g| g.to_vec()).collect();
    let mut xb: Vec<Vec<f64>> = b.iter().map(|g| g.to_vec()).collect();
    let mut hits = 0usize;
    for _ in 0..resamples {
        for (g, (ga, gb)) in a.iter().zip(b).enumerate() {
            for i in 0..ga.len() {
                if rng.random::<bool>() {
                    xa[g][i] = gb[i];
                    xb[g][i] = ga[i];
                } else {
                    xa[g][i] = ga[i];
                    xb[g][i] = gb[i];
                }
            }
        }
        let ra: Vec<&[f64]> = xa.iter().map(Vec::as_slice).collect();
        let rb: Vec<&[f64]> = xb.iter().map(Vec::as_slice).collect();
        if statistic(&ra, &rb) >= bar {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (resamples + 1) as f64)
}

/// Per-unit scores behind a G score: per-case outcomes (1 pass, 0 fail) of
/// each functionality and per-example i.i.d. scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GSample {
    pub functionalities: Vec<Vec<f64>>,
    pub iid: Vec<f64>,
}

impl GSample {
    pub fn g(&self) -> Result<f64> {
        g_from_groups(&self.groups())
    }

    fn groups(&self) -> Vec<&[f64]> {
        let mut g: Vec<&[f64]> = self.functionalities.iter().map(Vec::as_slice).collect();
        g.push(&self.iid);
        g
    }
}

/// G from groups laid out as `[func_1, ..., func_n, iid]`.
fn g_from_groups(groups: &[&[f64]]) -> Result<f64> {
    let (iid, funcs) = groups.split_last().ok_or_else(|| invalid("G sample without groups"))?;
    if funcs.is_empty() || iid.is_empty() || funcs.iter().any(|f| f.is_empty()) {
        return Err(invalid("G sample needs non-empty functionality and i.i.d. groups"));
    }
    let suite = funcs.iter().map(|f| mean(f)).sum::<f64>() / funcs.len() as f64;
    g_score(suite.clamp(0.0, 1.0), mean(iid).clamp(0.0, 1.0))
}

/// Randomisation test comparing the G scores of two systems on the same
/// units.
pub fn g_randomisation_test(a: &GSample, b: &GSample, resamples: usize, rng: &mut Stream) -> Result<f64> {
    a.g()?;
    b.g()?;
    randomisation_test_with(&a.groups(), &b.groups(), resamples, rng, |x, y| {
        (g_from_groups(x).unwrap_or(0.0) - g_from_groups(y).unwrap_or(0.0)).abs()
    })
}

/// Counts of cases only system a / only system b gets right.
pub fn discordant_counts(correct_a: &[bool], correct_b: &[bool]) -> Result<(usize, usize)> {
    if correct_a.len() != correct_b.len() {
        return Err(invalid("paired correctness vectors differ in length"));
    }
    let a_only = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count();
    let b_only = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count();
    Ok((a_only, b_only))
}

/// Exact two-tailed sign test: among the `a_only + b_only` discordant pairs
/// of `n` paired predictions, sums the Binomial(d, ½) masses not exceeding the
/// mass of the observed split.
pub fn binomial_test(a_only: usize, b_only: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("binomial test over zero predictions"));
    }
    let d = a_only + b_only;
    if d > n {
        return Err(invalid(format!("{d} discordant pairs among {n} predictions")));
    }
    if d == 0 {
        return Ok(1.0);
    }
    let dist = Binomial::new(0.5, d as u64).map_err(|e| invalid(e.to_string()))?;
    let observed = dist.pmf(a_only as u64);
    let bar = observed * (1.0 + 1e-7);
    let p: f64 = (0..=d as u64).map(|k| dist.pmf(k)).filter(|&m| m <= bar).sum();
    Ok(p.min(1.0))
}

/// Comparison marker against a baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Better,
    Worse,
    Indistinguishable,
}

impl Marker {
    pub fn from_test(p_value: f64, system: f64, baseline: f64) -> Self {
        if p_value >= ALPHA || system == baseline {
            Marker::Indistinguishable
        } else if system > baseline {
            Marker::Better
        } else {
            Marker::Worse
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Marker::Better => "+",
            Marker::Worse => "-",
            Marker::Indistinguishable => "",
        }
    }
}
