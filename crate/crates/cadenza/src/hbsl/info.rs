//! Scalar information measures over probability vectors, in bits.
//!
//! All sums are accumulated in a fixed canonical order (sorted by value) so
//! that relabeling a distribution's outcomes cannot perturb the result by a
//! rounding ulp; see [`stable_sum`].

use super::HbslError;

/// Sum `terms` independently of their original order.
///
/// Sorts by total order before accumulating, so any permutation of the same
/// multiset of values produces a bit-identical sum.
pub(crate) fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// Information content −log2(p) of an observed outcome.
///
/// Errors with `NonpositiveProbability` for p ≤ 0; p slightly above 1 (from
/// rounding) clamps to 0 bits.
pub fn information_content(p: f64) -> Result<f64, HbslError> {
    if !(p > 0.0) {
        return Err(HbslError::NonpositiveProbability(p));
    }
    Ok((-p.log2()).max(0.0))
}

/// Shannon entropy −Σ p·log2(p) of a probability vector, with 0·log2(0) = 0.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    let terms = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .collect();
    stable_sum(terms)
}

/// Kullback-Leibler divergence Σ p·log2(p/q) in bits.
///
/// `p` and `q` must be over the same alphabet, and `q[i] = 0` requires
/// `p[i] = 0` (absolute continuity). The result is clamped at 0 so that
/// P = Q yields exactly 0 even when individual terms round unevenly.
pub fn kl_divergence_bits(p: &[f64], q: &[f64]) -> Result<f64, HbslError> {
    if p.len() != q.len() {
        return Err(HbslError::AlphabetMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut terms = Vec::with_capacity(p.len());
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(HbslError::AbsoluteContinuityViolation { index: i });
        }
        terms.push(pi * (pi / qi).log2());
    }
    Ok(stable_sum(terms).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn information_content_reference_points() {
        assert_eq!(information_content(1.0).unwrap(), 0.0);
        assert_eq!(information_content(0.5).unwrap(), 1.0);
        assert_eq!(information_content(0.125).unwrap(), 3.0);
        assert!(information_content(0.0).is_err());
        assert!(information_content(-0.2).is_err());
    }

    #[test]
    fn entropy_reference_points() {
        assert_eq!(entropy_bits(&[0.25; 4]), 2.0);
        assert_eq!(entropy_bits(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(entropy_bits(&[0.5, 0.25, 0.25]), 1.5);
    }

    #[test]
    fn kl_reference_points() {
        assert_eq!(kl_divergence_bits(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        // 1/2·log2(3/4) + 1/2·log2(3/2) = log2(3) − 3/2
        let expected = 3f64.log2() - 1.5;
        let kl = kl_divergence_bits(&[0.5, 0.5], &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((kl - expected).abs() < 1e-15, "kl = {kl}");
        assert!((kl - 0.0850).abs() < 5e-5);
    }

    #[test]
    fn kl_error_cases() {
        assert!(matches!(
            kl_divergence_bits(&[0.5, 0.5], &[0.3, 0.3, 0.4]),
            Err(HbslError::AlphabetMismatch { .. })
        ));
        assert!(matches!(
            kl_divergence_bits(&[0.5, 0.5], &[1.0, 0.0]),
            Err(HbslError::AbsoluteContinuityViolation { index: 1 })
        ));
        // 0·log2(0/q) = 0: zero mass in P is allowed where Q has mass.
        assert_eq!(kl_divergence_bits(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0);
    }

    #[test]
    fn stable_sum_is_order_independent() {
        let a = vec![0.1, -0.7, 3.5e-3, 1.0 / 3.0, -2.2e8, 7.0];
        let mut b = a.clone();
        b.reverse();
        b.swap(1, 3);
        assert_eq!(stable_sum(a), stable_sum(b));
    }
}
