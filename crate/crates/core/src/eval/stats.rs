//! Effect sizes and exact resampling statistics for paired comparisons.
//!
//! Everything here is deterministic: the permutation test enumerates all
//! sign patterns exhaustively whenever that is no more work than the
//! requested shuffle count (so small inputs get exact p-values), and the
//! sampled fallback draws its sign flips from a seeded stream cipher.

use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default shuffle count for the sampled permutation test.
pub const DEFAULT_SHUFFLES: usize = 10_000;

/// Cohen's h for a difference of two proportions:
/// `2*asin(sqrt(p1)) - 2*asin(sqrt(p2))`.
pub fn cohens_h(p1: f64, p2: f64) -> Result<f64> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::Invariant(format!(
                "proportion out of range for Cohen's h: {p}"
            )));
        }
    }
    Ok(2.0 * p1.sqrt().asin() - 2.0 * p2.sqrt().asin())
}

/// Cohen's d for paired differences: mean over the sample standard
/// deviation (n-1 denominator). Zero variance has no defined effect size
/// and comes back as `None`.
pub fn cohens_d(diffs: &[f64]) -> Result<Option<f64>> {
    if diffs.len() < 2 {
        return Err(Error::Invariant(format!(
            "Cohen's d needs at least 2 differences, got {}",
            diffs.len()
        )));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let variance = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if variance == 0.0 {
        return Ok(None);
    }
    Ok(Some(mean / variance.sqrt()))
}

/// Two-sided sign-flip permutation test on paired differences: the
/// p-value is the share of sign patterns whose |mean| reaches the
/// observed |mean|. When `2^n <= n_shuffles` every pattern is enumerated
/// and the p-value is exact; otherwise `n_shuffles` patterns are sampled
/// from a rng seeded with `seed` and the estimate carries plus-one
/// smoothing: `(count + 1) / (n_shuffles + 1)`.
pub fn permutation_test(diffs: &[f64], n_shuffles: usize, seed: u64) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::Invariant(
            "permutation test needs at least 1 difference".into(),
        ));
    }
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>().abs() / n as f64;

    let exhaustive = n < usize::BITS as usize && (1u128 << n) <= n_shuffles as u128;
    if exhaustive {
        let patterns = 1u64 << n;
        let mut count = 0u64;
        for mask in 0..patterns {
            let sum: f64 = diffs
                .iter()
                .enumerate()
                .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                .sum();
            if (sum / n as f64).abs() >= observed {
                count += 1;
            }
        }
        return Ok(count as f64 / patterns as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0u64;
    for _ in 0..n_shuffles {
        let sum: f64 = diffs
            .iter()
            .map(|d| if rng.gen::<bool>() { -d } else { *d })
            .sum();
        if (sum / n as f64).abs() >= observed {
            count += 1;
        }
    }
    Ok((count as f64 + 1.0) / (n_shuffles as f64 + 1.0))
}

/// McNemar's exact test on discordant win counts: a two-sided binomial
/// tail probability with null probability 0.5, capped at 1.
pub fn mcnemar(wins_a: u64, wins_b: u64) -> Result<f64> {
    let n = wins_a + wins_b;
    if n == 0 {
        return Err(Error::Invariant(
            "McNemar's test needs at least one discordant pair".into(),
        ));
    }
    let k = wins_a.min(wins_b);
    // Both tails of Binomial(n, 1/2): i <= k and i >= n - k. Terms are
    // accumulated with the multiplicative recurrence to stay exact in f64
    // without overflowing binomial coefficients.
    let mut term = 0.5f64.powi(n as i32); // C(n, 0) / 2^n
    let mut lower = 0.0;
    let mut terms = Vec::with_capacity(n as usize + 1);
    for i in 0..=n {
        terms.push(term);
        if i <= k {
            lower += term;
        }
        if i < n {
            term *= (n - i) as f64 / (i + 1) as f64;
        }
    }
    let upper: f64 = terms.iter().skip((n - k) as usize).sum();
    Ok((lower + upper).min(1.0))
}
