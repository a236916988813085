//! Paired significance tests for cross-method comparisons.
//!
//! Both tests are two-sided. The sign test is an exact binomial tail; the
//! Wilcoxon signed-rank test enumerates the exact null distribution of the
//! rank sums for up to 20 nonzero differences (by dynamic programming over
//! doubled mid-ranks, which are integers) and switches to the tie-corrected
//! normal approximation above that.

use crate::error::{Error, Result};

/// Two-sided exact sign test: probability under a fair coin of a split at
/// least as lopsided as `max(wins, losses)` out of `wins + losses`.
///
/// Ties must be dropped before calling. `wins + losses == 0` returns 1.0.
pub fn sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let k = wins.max(losses);
    let p = if n <= 64 {
        // Exact integer tail; the division by a power of two is lossless.
        let mut coeff: u128 = 1;
        let mut tail: u128 = 0;
        for i in 0..=n {
            if i >= k {
                tail += coeff;
            }
            if i < n {
                coeff = coeff * (n - i) as u128 / (i + 1) as u128;
            }
        }
        2.0 * tail as f64 / 2f64.powi(n as i32)
    } else {
        let ln2 = std::f64::consts::LN_2;
        let mut ln_pmf = -(n as f64) * ln2;
        let mut tail = 0.0;
        for i in 0..=n {
            if i >= k {
                tail += ln_pmf.exp();
            }
            if i < n {
                ln_pmf += ((n - i) as f64 / (i + 1) as f64).ln();
            }
        }
        2.0 * tail
    };
    p.min(1.0)
}

/// Largest number of nonzero differences handled by exact enumeration.
pub const WILCOXON_EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)` over the nonzero differences.
    pub w: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Nonzero differences used.
    pub m: usize,
    /// Whether the exact null distribution was enumerated.
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test over paired differences.
///
/// Zero differences are dropped; tied magnitudes receive mid-ranks. The
/// exact p-value is the null probability that `min(W+, W-)` is at most the
/// observed statistic.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult> {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let m = nonzero.len();
    if m == 0 {
        return Err(Error::InvalidConfig(
            "wilcoxon test needs at least one nonzero difference".into(),
        ));
    }

    // Mid-ranks of |d|, doubled so every rank is an integer.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| nonzero[a].abs().partial_cmp(&nonzero[b].abs()).unwrap());
    let mut rank2 = vec![0u64; m];
    let mut lo = 0;
    while lo < m {
        let mut hi = lo;
        while hi + 1 < m && nonzero[order[hi + 1]].abs() == nonzero[order[lo]].abs() {
            hi += 1;
        }
        // Positions lo..=hi (0-based) share the mid-rank (lo+1 + hi+1)/2.
        let doubled = (lo + 1 + hi + 1) as u64;
        for &idx in &order[lo..=hi] {
            rank2[idx] = doubled;
        }
        lo = hi + 1;
    }

    let total2: u64 = rank2.iter().sum();
    let w_plus2: u64 = (0..m).filter(|&i| nonzero[i] > 0.0).map(|i| rank2[i]).sum();
    let w_minus2 = total2 - w_plus2;
    let w_obs2 = w_plus2.min(w_minus2);
    let w = w_obs2 as f64 / 2.0;

    if m <= WILCOXON_EXACT_LIMIT {
        // counts[s] = number of sign patterns whose positive rank sum
        // (doubled) equals s.
        let mut counts = vec![0u64; total2 as usize + 1];
        counts[0] = 1;
        for &r in &rank2 {
            for s in (r as usize..counts.len()).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let favorable: u64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as u64).min(total2 - *s as u64) <= w_obs2)
            .map(|(_, &c)| c)
            .sum();
        let p = favorable as f64 / 2f64.powi(m as i32);
        Ok(WilcoxonResult {
            w,
            p_value: p,
            m,
            exact: true,
        })
    } else {
        let mf = m as f64;
        let mean = mf * (mf + 1.0) / 4.0;
        // Tie correction subtracts sum(t^3 - t)/48 over tied groups.
        let mut tie_term = 0.0;
        let mut lo = 0;
        while lo < m {
            let mut hi = lo;
            while hi + 1 < m && rank2[order[hi + 1]] == rank2[order[lo]] {
                hi += 1;
            }
            let t = (hi - lo + 1) as f64;
            tie_term += t * t * t - t;
            lo = hi + 1;
        }
        let variance = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w + 0.5 - mean) / variance.sqrt();
        let p = (2.0 * normal_cdf(z)).min(1.0);
        Ok(WilcoxonResult {
            w,
            p_value: p,
            m,
            exact: false,
        })
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Polynomial approximation of the error function, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Literal enumeration of all 2^m sign patterns, with its own O(m^2)
    /// mid-ranking, used as the oracle for the exact path.
    fn enumeration_oracle(differences: &[f64]) -> f64 {
        let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
        let m = nonzero.len();
        let ranks: Vec<f64> = (0..m)
            .map(|i| {
                let below = nonzero
                    .iter()
                    .filter(|d| d.abs() < nonzero[i].abs())
                    .count();
                let equal = nonzero
                    .iter()
                    .filter(|d| d.abs() == nonzero[i].abs())
                    .count();
                below as f64 + (equal as f64 + 1.0) / 2.0
            })
            .collect();
        let total: f64 = ranks.iter().sum();
        let observed_plus: f64 = (0..m)
            .filter(|&i| nonzero[i] > 0.0)
            .map(|i| ranks[i])
            .sum();
        let observed = observed_plus.min(total - observed_plus);
        let mut favorable = 0u64;
        for pattern in 0u64..(1 << m) {
            let plus: f64 = (0..m)
                .filter(|i| pattern & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            if plus.min(total - plus) <= observed + 1e-12 {
                favorable += 1;
            }
        }
        favorable as f64 / (1u64 << m) as f64
    }

    #[test]
    fn sign_test_nine_to_one_is_exact() {
        assert_eq!(sign_test(9, 1), 0.021484375);
    }

    #[test]
    fn sign_test_is_symmetric_and_capped() {
        assert_eq!(sign_test(5, 5), 1.0);
        assert_eq!(sign_test(1, 0), 1.0);
        assert_eq!(sign_test(0, 0), 1.0);
        for (w, l) in [(3, 7), (12, 4), (0, 6), (20, 20)] {
            let p = sign_test(w, l);
            assert_eq!(p, sign_test(l, w));
            assert!(p > 0.0 && p <= 1.0);
        }
    }

    #[test]
    fn sign_test_large_counts_use_a_stable_tail() {
        let p = sign_test(80, 20);
        assert!(p > 0.0 && p < 1e-6, "p = {p}");
        // Near the cutover the log-space tail agrees with the exact tail.
        let exact = sign_test(40, 24);
        let approx = sign_test(41, 24);
        assert!(exact > approx, "{exact} vs {approx}");
    }

    #[test]
    fn five_positive_distinct_differences_score_one_sixteenth() {
        let result = wilcoxon_signed_rank(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(result.w, 0.0);
        assert_eq!(result.p_value, 2.0 / 32.0);
        assert!(result.exact);
    }

    #[test]
    fn antisymmetric_differences_sit_at_the_median() {
        let result = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0]).unwrap();
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn zero_differences_are_dropped() {
        let with_zeros = wilcoxon_signed_rank(&[0.0, 1.0, 0.0, -2.0, 3.0]).unwrap();
        let without = wilcoxon_signed_rank(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(with_zeros, without);
    }

    #[test]
    fn all_zero_differences_are_rejected() {
        assert!(wilcoxon_signed_rank(&[0.0, 0.0]).is_err());
        assert!(wilcoxon_signed_rank(&[]).is_err());
    }

    #[test]
    fn exact_path_matches_enumeration_on_random_vectors() {
        let mut rng = StdRng::seed_from_u64(11);
        for m in 1..=8 {
            for _ in 0..20 {
                let diffs: Vec<f64> = (0..m)
                    .map(|_| {
                        // Half-integer magnitudes force plenty of ties.
                        let magnitude = (rng.gen_range(1..=6) as f64) / 2.0;
                        if rng.gen_bool(0.5) {
                            magnitude
                        } else {
                            -magnitude
                        }
                    })
                    .collect();
                let result = wilcoxon_signed_rank(&diffs).unwrap();
                let oracle = enumeration_oracle(&diffs);
                assert!(
                    (result.p_value - oracle).abs() <= 1e-12,
                    "m={m} diffs={diffs:?}: {} vs {}",
                    result.p_value,
                    oracle
                );
            }
        }
    }

    #[test]
    fn approximate_path_tracks_the_exact_tail() {
        // 21 nonzero differences force the normal approximation.
        let mut strong: Vec<f64> = (1..=21).map(|i| i as f64).collect();
        strong[0] = -1.0;
        let result = wilcoxon_signed_rank(&strong).unwrap();
        assert!(!result.exact);
        assert!(result.p_value < 1e-3, "p = {}", result.p_value);

        let balanced: Vec<f64> = (1..=22)
            .map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) })
            .collect();
        let result = wilcoxon_signed_rank(&balanced).unwrap();
        assert!(result.p_value > 0.5, "p = {}", result.p_value);
    }

    #[test]
    fn erf_matches_reference_values() {
        // erf(1) = 0.8427007929..., erf(2) = 0.9953222650...
        assert!((erf(1.0) - 0.8427007929).abs() < 2e-7);
        assert!((erf(2.0) - 0.9953222650).abs() < 2e-7);
        assert!((erf(-1.0) + erf(1.0)).abs() < 1e-15);
        assert!(erf(0.0).abs() < 1e-7);
    }
}
