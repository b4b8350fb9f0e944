//! Two-sided Wilcoxon signed-rank and rank-sum tests with average ranks
//! for ties. Small samples use the exact permutation distribution (over the
//! tied ranks actually observed); larger ones a tie-corrected normal
//! approximation without continuity correction.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest number of non-zero differences tested exactly.
pub const EXACT_SIGNED_RANK_MAX: usize = 25;
/// Largest pooled sample size tested exactly.
pub const EXACT_RANK_SUM_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRankResult {
    /// min(W+, W−).
    pub statistic: f64,
    /// Sum of ranks of positive differences x − y.
    pub w_plus: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n_used: usize,
    pub zeros_dropped: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann-Whitney U of the first sample: R₁ − m(m+1)/2.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks, doubled so they stay integral, plus tie-group sizes.
fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold 1-based ranks i+1..=j; their mean doubled is i+1+j
        for &k in &order[i..j] {
            ranks[k] = (i + 1 + j) as u64;
        }
        ties.push((j - i) as u64);
        i = j;
    }
    (ranks, ties)
}

fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn two_sided_normal(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data(format!("{name} contains non-finite values")));
    }
    Ok(())
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<SignedRankResult> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("paired samples of lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 5 {
        return Err(Error::Data(format!("signed-rank test needs at least 5 pairs, got {}", x.len())));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let zeros_dropped = x.len() - diffs.len();
    if diffs.is_empty() {
        return Err(Error::Data("all paired differences are zero".into()));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let total: u64 = ranks.iter().sum();
    let obs: u64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let w_plus = obs as f64 / 2.0;
    let statistic = w_plus.min(total as f64 / 2.0 - w_plus);

    let exact = n <= EXACT_SIGNED_RANK_MAX;
    let p_value = if exact {
        // counts[s]: sign assignments whose positive doubled ranks sum to s
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        for &r in &ranks {
            for s in (r as usize..=total as usize).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let dev = |s: u64| (2 * s as i128 - total as i128).abs();
        let extreme: u64 = (0..=total).filter(|&s| dev(s) >= dev(obs)).map(|s| counts[s as usize]).sum();
        extreme as f64 / (1u64 << n) as f64
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            two_sided_normal((w_plus - mean) / var.sqrt())
        }
    };
    Ok(SignedRankResult {
        statistic,
        w_plus,
        p_value,
        n_used: n,
        zeros_dropped,
        exact,
    })
}

pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<RankSumResult> {
    if x.len() < 3 || y.len() < 3 {
        return Err(Error::Data(format!(
            "rank-sum test needs at least 3 values per sample, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let m = x.len();
    let big_n = m + y.len();
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let total: u64 = ranks.iter().sum();
    let obs: u64 = ranks[..m].iter().sum();
    let statistic = obs as f64 / 2.0 - (m * (m + 1)) as f64 / 2.0;

    let exact = big_n <= EXACT_RANK_SUM_MAX;
    let p_value = if exact {
        // counts[k][s]: k-subsets of the pooled ranks with doubled sum s
        let smax = total as usize;
        let mut counts = vec![vec![0u64; smax + 1]; m + 1];
        counts[0][0] = 1;
        for &r in &ranks {
            let r = r as usize;
            for k in (1..=m).rev() {
                for s in (r..=smax).rev() {
                    counts[k][s] += counts[k - 1][s - r];
                }
            }
        }
        let dev = |s: u64| (big_n as i128 * s as i128 - m as i128 * total as i128).abs();
        let all: u64 = counts[m].iter().sum();
        let extreme: u64 = (0..=total).filter(|&s| dev(s) >= dev(obs)).map(|s| counts[m][s as usize]).sum();
        extreme as f64 / all as f64
    } else {
        let (mf, nf) = (m as f64, y.len() as f64);
        let bf = big_n as f64;
        let var = mf * nf / 12.0 * ((bf + 1.0) - tie_term(&ties) / (bf * (bf - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            two_sided_normal((statistic - mf * nf / 2.0) / var.sqrt())
        }
    };
    Ok(RankSumResult {
        statistic,
        p_value,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Average rank of `v` within `all`, by counting.
    fn naive_rank(all: &[f64], v: f64) -> f64 {
        let less = all.iter().filter(|&&a| a < v).count() as f64;
        let equal = all.iter().filter(|&&a| a == v).count() as f64;
        less + (equal + 1.0) / 2.0
    }

    /// Two-sided p by flipping every sign pattern of the observed ranks.
    fn brute_signed_rank(x: &[f64], y: &[f64]) -> (f64, f64) {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
        let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        let ranks: Vec<f64> = abs.iter().map(|&v| naive_rank(&abs, v)).collect();
        let total: f64 = ranks.iter().sum();
        let obs: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
        let n = d.len();
        let mut extreme = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (s - total / 2.0).abs() >= (obs - total / 2.0).abs() {
                extreme += 1;
            }
        }
        (obs.min(total - obs), extreme as f64 / (1u64 << n) as f64)
    }

    /// Two-sided p over every way of labelling m of the pooled values as x.
    fn brute_rank_sum(x: &[f64], y: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let ranks: Vec<f64> = pooled.iter().map(|&v| naive_rank(&pooled, v)).collect();
        let (m, n) = (x.len(), pooled.len());
        let mean = m as f64 * (n as f64 + 1.0) / 2.0;
        let obs: f64 = ranks[..m].iter().sum();
        let (mut extreme, mut all) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            if mask.count_ones() as usize != m {
                continue;
            }
            all += 1;
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (s - mean).abs() >= (obs - mean).abs() {
                extreme += 1;
            }
        }
        (obs - (m * (m + 1)) as f64 / 2.0, extreme as f64 / all as f64)
    }

    #[test]
    fn shifted_pairs() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 2.0 / 64.0);
        assert!(r.exact);
        let s = wilcoxon_signed_rank(&y, &x).unwrap();
        assert_eq!(s.p_value, r.p_value);
        assert_eq!(s.statistic, r.statistic);
    }

    #[test]
    fn separated_samples() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        let same = wilcoxon_rank_sum(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn zeros_dropped_and_reported() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let y = [1.0, 2.5, 3.0, 3.0, 6.0, 6.5, 9.0];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!((r.n_used, r.zeros_dropped), (5, 2));
        let (w, p) = brute_signed_rank(&x, &y);
        assert_eq!((r.statistic, r.p_value), (w, p));
    }

    #[test]
    fn degenerate_inputs() {
        let x = [1.0; 6];
        assert!(matches!(wilcoxon_signed_rank(&x, &x), Err(Error::Data(_))));
        assert!(matches!(wilcoxon_signed_rank(&x[..4], &x[..4]), Err(Error::Data(_))));
        assert!(matches!(wilcoxon_signed_rank(&x, &x[..5]), Err(Error::Shape(_))));
        assert!(matches!(wilcoxon_rank_sum(&[], &x), Err(Error::Data(_))));
        assert!(matches!(wilcoxon_rank_sum(&[1.0, 2.0], &x), Err(Error::Data(_))));
        assert!(matches!(wilcoxon_rank_sum(&[1.0, f64::NAN, 2.0], &x), Err(Error::Data(_))));
    }

    #[test]
    fn normal_approximation_for_large_samples() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| i as f64 + if i % 3 == 0 { 0.5 } else { -0.5 }).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        // all ranks tie at 20.5; 26 differences are positive: W+ = 26·20.5, mean 410, var = 40·41·81/24 − (40³−40)/48
        let var = 40.0 * 41.0 * 81.0 / 24.0 - (64000.0 - 40.0) / 48.0;
        let z: f64 = (26.0 * 20.5 - 410.0) / f64::sqrt(var);
        assert!((r.p_value - erfc(z.abs() / std::f64::consts::SQRT_2)).abs() < 1e-12);

        let a: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..12).map(|i| i as f64 + 6.0).collect();
        let s = wilcoxon_rank_sum(&a, &b).unwrap();
        assert!(!s.exact);
        assert!(s.p_value < 0.05);
    }

    fn small_values(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
        // a coarse grid makes ties common
        prop::collection::vec((0i32..6).prop_map(|v| v as f64 * 0.5), len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn signed_rank_matches_enumeration(pair in (5usize..=8).prop_flat_map(|n| (small_values(n..=n), small_values(n..=n)))) {
            let (x, y) = pair;
            match wilcoxon_signed_rank(&x, &y) {
                Ok(r) => {
                    let (w, p) = brute_signed_rank(&x, &y);
                    prop_assert!(r.exact);
                    prop_assert_eq!(r.statistic, w);
                    prop_assert_eq!(r.p_value, p);
                }
                Err(Error::Data(_)) => prop_assert!(x == y),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn rank_sum_matches_enumeration(x in small_values(3..=8), y in small_values(3..=8)) {
            let r = wilcoxon_rank_sum(&x, &y).unwrap();
            let (u, p) = brute_rank_sum(&x, &y);
            prop_assert!(r.exact);
            prop_assert_eq!(r.statistic, u);
            prop_assert_eq!(r.p_value, p);
            let swapped = wilcoxon_rank_sum(&y, &x).unwrap();
            prop_assert_eq!(swapped.p_value, r.p_value);
        }
    }
}
