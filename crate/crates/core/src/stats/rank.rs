//! Kruskal-Wallis test and Dunn's post hoc comparisons on midranks.

use serde::Serialize;

use super::special::{chi_square_sf, normal_two_sided};
use crate::error::{Error, Result};

/// Pooled ranking of several groups.
#[derive(Clone, Debug)]
struct Ranking {
    /// Total number of observations.
    n: usize,
    sizes: Vec<usize>,
    mean_ranks: Vec<f64>,
    /// `Σ (t³ - t)` over tie blocks.
    tie_sum: f64,
}

fn check_groups(groups: &[Vec<f64>]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Empty(format!("group {i}")));
    }
    if groups.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("rank test input".into()));
    }
    Ok(())
}

/// Midranks (1-based) of `values`, with `Σ (t³ - t)` over ties.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }
    (ranks, tie_sum)
}

fn rank_groups(groups: &[Vec<f64>]) -> Result<Ranking> {
    check_groups(groups)?;
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let (ranks, tie_sum) = midranks(&pooled);
    let n = pooled.len();
    let nf = n as f64;
    if tie_sum >= nf * nf * nf - nf {
        return Err(Error::Degenerate("all values are identical; the rank test is undefined".into()));
    }
    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        let sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        mean_ranks.push(sum / g.len() as f64);
        offset += g.len();
    }
    Ok(Ranking {
        n,
        sizes: groups.iter().map(Vec::len).collect(),
        mean_ranks,
        tie_sum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KruskalWallis {
    /// Tie-corrected statistic.
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

/// `H = 12/(N(N+1)) Σ nᵢ r̄ᵢ² - 3(N+1)`, divided by `1 - Σ(t³-t)/(N³-N)`;
/// `p` from the chi-square upper tail with `k - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis> {
    let r = rank_groups(groups)?;
    let n = r.n as f64;
    let sum: f64 = r.sizes.iter().zip(&r.mean_ranks).map(|(&s, &m)| s as f64 * m * m).sum();
    let raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let correction = 1.0 - r.tie_sum / (n * n * n - n);
    let h = (raw / correction).max(0.0);
    let df = groups.len() - 1;
    Ok(KruskalWallis {
        h,
        df,
        p: chi_square_sf(h, df as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DunnPair {
    pub i: usize,
    pub j: usize,
    /// `(r̄ᵢ - r̄ⱼ) / σᵢⱼ`.
    pub z: f64,
    /// Two-sided, unadjusted.
    pub p: f64,
    /// Bonferroni over all pairs, capped at 1.
    pub p_adjusted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DunnTest {
    pub groups: usize,
    /// Pairs with `i < j`, in lexicographic order.
    pub pairs: Vec<DunnPair>,
}

impl DunnTest {
    /// The comparison of `i` with `j` in either order; `z` changes sign.
    pub fn pair(&self, i: usize, j: usize) -> Option<DunnPair> {
        if i == j {
            return None;
        }
        let (a, b) = (i.min(j), i.max(j));
        let p = *self.pairs.iter().find(|p| p.i == a && p.j == b)?;
        Some(if i < j { p } else { DunnPair { i, j, z: -p.z, ..p } })
    }
}

/// Pairwise z with variance `(N(N+1)/12 - Σ(t³-t)/(12(N-1))) (1/nᵢ + 1/nⱼ)`.
pub fn dunn_test(groups: &[Vec<f64>]) -> Result<DunnTest> {
    let r = rank_groups(groups)?;
    let n = r.n as f64;
    let base = n * (n + 1.0) / 12.0 - r.tie_sum / (12.0 * (n - 1.0));
    let k = groups.len();
    let m = (k * (k - 1) / 2) as f64;
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let sigma = (base * (1.0 / r.sizes[i] as f64 + 1.0 / r.sizes[j] as f64)).sqrt();
            let z = (r.mean_ranks[i] - r.mean_ranks[j]) / sigma;
            let p = normal_two_sided(z);
            pairs.push(DunnPair {
                i,
                j,
                z,
                p,
                p_adjusted: (p * m).min(1.0),
            });
        }
    }
    Ok(DunnTest { groups: k, pairs })
}
