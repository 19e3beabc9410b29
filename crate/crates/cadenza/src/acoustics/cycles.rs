//! Envelope cycle analysis: trough detection and horizontal rates.
//!
//! Troughs mark cycle boundaries. For adjacent cycle lengths c1, c2 the
//! horizontal rate is c1/(c1+c2): 0.5 for a 1:1 relation, 1/3 for 1:2, and
//! 2/3 for 2:1.

use super::AcousticsError;

/// Histogram bin width for rate densities over (0, 1).
pub const RATE_BIN_WIDTH: f64 = 0.02;

const RATE_BINS: usize = 50;

/// Cycle statistics extracted from one envelope.
#[derive(Debug, Clone)]
pub struct CycleStats {
    pub trough_indices: Vec<usize>,
    /// Successive trough gaps in seconds.
    pub cycle_lengths: Vec<f64>,
    /// `c_k / (c_k + c_{k+1})` per adjacent cycle pair.
    pub rates: Vec<f64>,
    /// Normalized histogram of rates over (0, 1), bin width 0.02.
    pub density: Vec<f64>,
}

impl CycleStats {
    pub fn bin_centers() -> Vec<f64> {
        (0..RATE_BINS)
            .map(|b| (b as f64 + 0.5) * RATE_BIN_WIDTH)
            .collect()
    }

    /// Total density mass within `target ± tolerance`.
    pub fn mass_near(&self, target: f64, tolerance: f64) -> f64 {
        Self::bin_centers()
            .iter()
            .zip(&self.density)
            .filter(|(&center, _)| (center - target).abs() <= tolerance + RATE_BIN_WIDTH / 2.0)
            .map(|(_, &d)| d)
            .sum()
    }
}

/// Histogram a set of rates into the (0, 1) density grid.
pub fn rate_density(rates: &[f64]) -> Vec<f64> {
    let mut density = vec![0.0; RATE_BINS];
    let mut counted = 0usize;
    for &r in rates {
        if r > 0.0 && r < 1.0 {
            let bin = ((r / RATE_BIN_WIDTH) as usize).min(RATE_BINS - 1);
            density[bin] += 1.0;
            counted += 1;
        }
    }
    if counted > 0 {
        for d in &mut density {
            *d /= counted as f64;
        }
    }
    density
}

/// Indices of local envelope minima whose prominence is at least
/// `min_prominence_frac` of the envelope's total range.
///
/// The prominence of a trough is measured against the lower of the two
/// barriers it must climb before reaching a deeper sample (or the signal
/// edge), mirroring the usual peak-prominence construction upside down.
pub fn detect_troughs(envelope: &[f64], min_prominence_frac: f64) -> Vec<usize> {
    let n = envelope.len();
    if n < 3 {
        return Vec::new();
    }
    let max = envelope.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = envelope.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let range = max - min;
    if !(range > 0.0) {
        return Vec::new();
    }
    let threshold = min_prominence_frac * range;

    let mut troughs = Vec::new();
    for i in 1..n - 1 {
        // Strict drop from the left, non-increase to the right: one
        // candidate per plateau.
        if !(envelope[i] < envelope[i - 1] && envelope[i] <= envelope[i + 1]) {
            continue;
        }
        let v = envelope[i];

        let mut left_barrier = f64::NEG_INFINITY;
        for j in (0..i).rev() {
            if envelope[j] < v {
                break;
            }
            left_barrier = left_barrier.max(envelope[j]);
        }
        let mut right_barrier = f64::NEG_INFINITY;
        for j in i + 1..n {
            if envelope[j] < v {
                break;
            }
            right_barrier = right_barrier.max(envelope[j]);
        }

        if left_barrier.min(right_barrier) - v >= threshold {
            troughs.push(i);
        }
    }
    troughs
}

/// Cycle lengths and horizontal rates from trough positions.
pub fn horizontal_rates(troughs: &[usize], frame_rate: f64) -> Result<CycleStats, AcousticsError> {
    if troughs.len() < 3 {
        return Err(AcousticsError::TooFewCycles(troughs.len()));
    }
    let cycle_lengths: Vec<f64> = troughs
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / frame_rate)
        .collect();
    let rates: Vec<f64> = cycle_lengths
        .windows(2)
        .map(|w| w[0] / (w[0] + w[1]))
        .collect();
    let density = rate_density(&rates);
    Ok(CycleStats {
        trough_indices: troughs.to_vec(),
        cycle_lengths,
        rates,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_valleys_every_half_second() {
        // 1 − cos(2π·2t) over 2 s at 1 kHz: interior minima at 0.5 s steps.
        let rate = 1000.0;
        let env: Vec<f64> = (0..2001)
            .map(|i| 1.0 - (2.0 * std::f64::consts::PI * 2.0 * i as f64 / rate).cos())
            .collect();
        let troughs = detect_troughs(&env, 0.05);
        assert_eq!(troughs.len(), 3, "{troughs:?}");
        for (expected, &got) in [500, 1000, 1500].iter().zip(&troughs) {
            assert!((got as i64 - expected).abs() <= 1, "{troughs:?}");
        }
    }

    #[test]
    fn monotone_and_constant_envelopes_have_no_troughs() {
        let rising: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(detect_troughs(&rising, 0.05).is_empty());
        assert!(detect_troughs(&vec![1.0; 100], 0.05).is_empty());
    }

    #[test]
    fn ripple_below_prominence_threshold_is_ignored() {
        // Deep valley at 50 with a shallow ripple dip at 30.
        let env: Vec<f64> = (0..101)
            .map(|i| {
                let x = i as f64;
                let valley = ((x - 50.0) / 20.0).powi(2);
                let ripple = 0.01 * (x * 1.3).sin();
                valley + ripple
            })
            .collect();
        let troughs = detect_troughs(&env, 0.05);
        assert_eq!(troughs.len(), 1, "{troughs:?}");
        assert!((troughs[0] as i64 - 50).abs() <= 3);
    }

    #[test]
    fn rate_reference_points() {
        // Troughs at 0 ms, 500 ms, 1000 ms → cycles [0.5, 0.5] → rate 0.5.
        let stats = horizontal_rates(&[0, 500, 1000], 1000.0).unwrap();
        assert_eq!(stats.rates, vec![0.5]);

        // Cycles [250 ms, 500 ms] → 1/3; [600 ms, 300 ms] → 2/3.
        let stats = horizontal_rates(&[0, 250, 750], 1000.0).unwrap();
        assert!((stats.rates[0] - 1.0 / 3.0).abs() < 1e-12);
        let stats = horizontal_rates(&[0, 600, 900], 1000.0).unwrap();
        assert!((stats.rates[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_troughs_is_an_error() {
        assert!(matches!(
            horizontal_rates(&[10, 20], 100.0),
            Err(AcousticsError::TooFewCycles(2))
        ));
    }

    #[test]
    fn density_sums_to_one() {
        let stats = horizontal_rates(&[0, 100, 300, 400, 600], 1000.0).unwrap();
        let total: f64 = stats.density.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_near_covers_adjacent_bins() {
        let density = rate_density(&[0.49, 0.5, 0.51]);
        let stats = CycleStats {
            trough_indices: vec![],
            cycle_lengths: vec![],
            rates: vec![],
            density,
        };
        assert!((stats.mass_near(0.5, 0.02) - 1.0).abs() < 1e-12);
    }
}
