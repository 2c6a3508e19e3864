//! 2×2 association statistics between social type and cultural trait.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::dynamics::CulturalState;
use crate::error::{Error, Result};
use crate::graph::SocialTypes;
use crate::rng::seeded;

/// Counts of nodes by (social type, cultural trait): `counts[type][trait]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContingencyTable {
    pub counts: [[u64; 2]; 2],
}

impl ContingencyTable {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        ContingencyTable { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> [u64; 2] {
        [
            self.counts[0][0] + self.counts[0][1],
            self.counts[1][0] + self.counts[1][1],
        ]
    }

    pub fn col_totals(&self) -> [u64; 2] {
        [
            self.counts[0][0] + self.counts[1][0],
            self.counts[0][1] + self.counts[1][1],
        ]
    }

    /// True when some row or column margin is zero.
    pub fn is_degenerate(&self) -> bool {
        self.row_totals().contains(&0) || self.col_totals().contains(&0)
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.counts;
        ContingencyTable::new([[a, c], [b, d]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub df: u32,
    /// Upper-tail probability under the chi-square law; `None` when `df = 0`.
    pub p_asymptotic: Option<f64>,
    pub degenerate: bool,
}

impl ChiSquaredResult {
    const DEGENERATE: ChiSquaredResult = ChiSquaredResult {
        statistic: 0.0,
        df: 0,
        p_asymptotic: None,
        degenerate: true,
    };
}

/// Tabulates `(type, trait)` over all nodes, or over `subset` when given.
pub fn contingency_from_state(
    types: &SocialTypes,
    state: &CulturalState,
    subset: Option<&[usize]>,
) -> ContingencyTable {
    debug_assert_eq!(types.len(), state.len());
    let mut counts = [[0u64; 2]; 2];
    match subset {
        Some(nodes) => {
            for &i in nodes {
                counts[types.get(i) as usize][state.get(i) as usize] += 1;
            }
        }
        None => {
            for (&t, &y) in types.as_slice().iter().zip(state.as_slice()) {
                counts[t as usize][y as usize] += 1;
            }
        }
    }
    ContingencyTable { counts }
}

fn statistic_of(t: &ContingencyTable) -> Option<f64> {
    if t.is_degenerate() {
        return None;
    }
    let [[a, b], [c, d]] = t.counts.map(|row| row.map(u128::from));
    let n = a + b + c + d;
    let diff = (a * d).abs_diff(b * c);
    let numer = n * diff * diff;
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    Some(numer as f64 / denom as f64)
}

/// Pearson chi-square for a 2×2 table, without continuity correction.
///
/// A zero margin yields the degenerate result (statistic 0, df 0).
pub fn chi_squared(t: &ContingencyTable) -> ChiSquaredResult {
    match statistic_of(t) {
        None => ChiSquaredResult::DEGENERATE,
        Some(statistic) => ChiSquaredResult {
            statistic,
            df: 1,
            p_asymptotic: Some(survival(statistic, 1)),
            degenerate: false,
        },
    }
}

fn survival(x: f64, df: u32) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(f64::from(df) / 2.0, x / 2.0)
}

/// `Q(df/2, x/2)`: probability that a chi-square variate with `df` degrees
/// of freedom exceeds `x`.
pub fn chi_squared_survival(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid(format!(
            "chi-square argument {x} must be non-negative"
        )));
    }
    Ok(survival(x, df))
}

/// Upper `alpha` quantile of the chi-square law with `df` degrees of
/// freedom, found by bisection on [`chi_squared_survival`].
pub fn chi_squared_critical(alpha: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} is outside (0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while survival(hi, df) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if survival(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Stratified statistic: the sum of per-block 2×2 chi-squares, with one
/// degree of freedom per non-degenerate block.
pub fn conditional_chi_squared(
    types: &SocialTypes,
    state: &CulturalState,
    partition: &Partition,
) -> ChiSquaredResult {
    combine(
        partition
            .blocks()
            .iter()
            .map(|block| chi_squared(&contingency_from_state(types, state, Some(block)))),
    )
}

fn combine(parts: impl Iterator<Item = ChiSquaredResult>) -> ChiSquaredResult {
    let (statistic, df) = parts.fold((0.0, 0u32), |(s, df), r| (s + r.statistic, df + r.df));
    if df == 0 {
        return ChiSquaredResult::DEGENERATE;
    }
    ChiSquaredResult {
        statistic,
        df,
        p_asymptotic: Some(survival(statistic, df)),
        degenerate: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PermutationTestResult {
    pub observed: f64,
    pub permutations: u32,
    /// Number of permuted statistics at least as large as `observed`.
    pub exceed: u32,
    /// `(exceed + 1) / (permutations + 1)`.
    pub p_value: f64,
    pub seed: u64,
}

// Relative slack when comparing permuted and observed statistics, so that
// mathematically tied tables count as ties despite summation order.
const TIE_TOLERANCE: f64 = 1e-9;

/// Within-block permutation test of conditional independence.
///
/// Each permutation shuffles the cultural traits uniformly inside every block
/// independently, which keeps each block's trait counts and all type labels
/// fixed, and recomputes [`conditional_chi_squared`].
pub fn permutation_test_conditional(
    types: &SocialTypes,
    state: &CulturalState,
    partition: &Partition,
    permutations: u32,
    seed: u64,
) -> Result<PermutationTestResult> {
    if permutations == 0 {
        return Err(Error::invalid("permutation count must be at least 1"));
    }
    let observed = conditional_chi_squared(types, state, partition).statistic;
    let mut rng = seeded(seed);

    // Per block: the type of each member and a shuffleable copy of its traits.
    let mut strata: Vec<(Vec<u8>, Vec<u8>)> = partition
        .blocks()
        .iter()
        .map(|block| {
            (
                block.iter().map(|&i| types.get(i)).collect(),
                block.iter().map(|&i| state.get(i)).collect(),
            )
        })
        .collect();

    let threshold = observed - TIE_TOLERANCE * observed.max(1.0);
    let mut exceed = 0u32;
    for _ in 0..permutations {
        let mut parts = Vec::with_capacity(strata.len());
        for (block_types, traits) in &mut strata {
            traits.shuffle(&mut rng);
            let mut counts = [[0u64; 2]; 2];
            for (&t, &y) in block_types.iter().zip(traits.iter()) {
                counts[t as usize][y as usize] += 1;
            }
            parts.push(chi_squared(&ContingencyTable { counts }));
        }
        if combine(parts.into_iter()).statistic >= threshold {
            exceed += 1;
        }
    }
    Ok(PermutationTestResult {
        observed,
        permutations,
        exceed,
        p_value: f64::from(exceed + 1) / f64::from(permutations + 1),
        seed,
    })
}

/// Per-community line of a [`TestReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommunityReport {
    pub community_id: usize,
    pub size: usize,
    pub table: [[u64; 2]; 2],
    pub statistic: f64,
    pub df: u32,
}

/// JSON-serializable summary of a conditional independence test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub df: u32,
    pub p_asymptotic: Option<f64>,
    pub p_permutation: f64,
    pub permutations: u32,
    pub seed: u64,
    pub per_community: Vec<CommunityReport>,
}

/// Runs the stratified statistic and its permutation test and assembles the
/// report, with one entry per block of `partition`.
pub fn conditional_test_report(
    types: &SocialTypes,
    state: &CulturalState,
    partition: &Partition,
    permutations: u32,
    seed: u64,
) -> Result<TestReport> {
    let overall = conditional_chi_squared(types, state, partition);
    let perm = permutation_test_conditional(types, state, partition, permutations, seed)?;
    let per_community = partition
        .blocks()
        .iter()
        .enumerate()
        .map(|(community_id, block)| {
            let table = contingency_from_state(types, state, Some(block));
            let chi = chi_squared(&table);
            CommunityReport {
                community_id,
                size: block.len(),
                table: table.counts,
                statistic: chi.statistic,
                df: chi.df,
            }
        })
        .collect();
    Ok(TestReport {
        statistic: overall.statistic,
        df: overall.df,
        p_asymptotic: overall.p_asymptotic,
        p_permutation: perm.p_value,
        permutations,
        seed,
        per_community,
    })
}
