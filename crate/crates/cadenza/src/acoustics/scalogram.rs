//! Morlet continuous wavelet transform of amplitude envelopes.
//!
//! The filter bank is peak-normalized: each band's frequency response is a
//! Gaussian `exp(−(sω − ω0)²/2)` with unit gain at the band's center, so a
//! unit sinusoid at a band center produces the same band power at any
//! frequency. With the center-frequency parameter ω0 = 6 the response at
//! DC is exp(−18), which makes the small zero-mean correction term of the
//! analytic Morlet negligible.

use rustfft::{num_complex::Complex, FftPlanner};

use super::AcousticsError;

/// Band layout for the transform.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScalogramParams {
    pub bands: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    /// Morlet center-frequency parameter ω0.
    pub omega0: f64,
}

impl Default for ScalogramParams {
    fn default() -> Self {
        Self {
            bands: 24,
            low_hz: 0.1,
            high_hz: 40.0,
            omega0: 6.0,
        }
    }
}

impl ScalogramParams {
    /// Log-spaced band center frequencies, ascending.
    pub fn frequencies(&self) -> Vec<f64> {
        let ratio = self.high_hz / self.low_hz;
        (0..self.bands)
            .map(|b| {
                if self.bands == 1 {
                    self.low_hz
                } else {
                    self.low_hz * ratio.powf(b as f64 / (self.bands - 1) as f64)
                }
            })
            .collect()
    }
}

/// Time-frequency power of an envelope: `power[band][frame]`.
#[derive(Debug, Clone)]
pub struct Scalogram {
    pub frequencies: Vec<f64>,
    pub power: Vec<Vec<f64>>,
    pub frame_rate: f64,
}

impl Scalogram {
    /// Time-mean power per band.
    pub fn band_means(&self) -> Vec<f64> {
        self.power
            .iter()
            .map(|band| band.iter().sum::<f64>() / band.len().max(1) as f64)
            .collect()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().flatten().sum()
    }
}

/// Morlet scalogram of an envelope sampled at `frame_rate`.
///
/// The envelope must be at least one period of the lowest band long.
pub fn scalogram(
    envelope: &[f64],
    frame_rate: f64,
    params: &ScalogramParams,
) -> Result<Scalogram, AcousticsError> {
    let n = envelope.len();
    let needed = (frame_rate / params.low_hz).ceil() as usize;
    if n < needed {
        return Err(AcousticsError::TooShort { needed, got: n });
    }

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut spectrum: Vec<Complex<f64>> =
        envelope.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut spectrum);

    let frequencies = params.frequencies();
    let mut power = Vec::with_capacity(frequencies.len());
    let scale_norm = 1.0 / n as f64;

    for &freq in &frequencies {
        // Scale mapping the band center onto ω0.
        let s = params.omega0 * frame_rate / (2.0 * std::f64::consts::PI * freq);
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                if k == 0 || k > n / 2 {
                    // Analytic wavelet: no response at DC or negative
                    // frequencies.
                    return Complex::new(0.0, 0.0);
                }
                let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let x = s * omega - params.omega0;
                spectrum[k] * (-0.5 * x * x).exp()
            })
            .collect();
        inverse.process(&mut buf);
        power.push(
            buf.iter()
                .map(|c| {
                    let m = c.norm() * scale_norm;
                    m * m
                })
                .collect(),
        );
    }

    Ok(Scalogram {
        frequencies,
        power,
        frame_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modulated_envelope(hz: f64, seconds: f64, rate: f64) -> Vec<f64> {
        (0..(seconds * rate) as usize)
            .map(|i| 1.0 + 0.8 * (2.0 * std::f64::consts::PI * hz * i as f64 / rate).sin())
            .collect()
    }

    #[test]
    fn band_nearest_modulation_rate_dominates() {
        let rate = 200.0;
        let env = modulated_envelope(2.0, 12.0, rate);
        let params = ScalogramParams::default();
        let sg = scalogram(&env, rate, &params).unwrap();
        let means = sg.band_means();
        let argmax = (0..means.len())
            .max_by(|&a, &b| means[a].total_cmp(&means[b]))
            .unwrap();
        // 2 Hz falls between two band centers; the winner must be within
        // one grid step of it.
        let step = (params.high_hz / params.low_hz).powf(1.0 / (params.bands - 1) as f64);
        let ratio = sg.frequencies[argmax] / 2.0;
        assert!(
            ratio < step && ratio > 1.0 / step,
            "argmax band at {} Hz is not adjacent to 2 Hz",
            sg.frequencies[argmax]
        );
    }

    #[test]
    fn zero_envelope_has_zero_power() {
        let env = vec![0.0; 4000];
        let sg = scalogram(&env, 200.0, &ScalogramParams::default()).unwrap();
        assert_eq!(sg.total_power(), 0.0);
    }

    #[test]
    fn short_envelope_is_rejected() {
        // 10 samples at 100 Hz cannot hold one period of 0.1 Hz.
        let env = vec![1.0; 10];
        assert!(matches!(
            scalogram(&env, 100.0, &ScalogramParams::default()),
            Err(AcousticsError::TooShort { .. })
        ));
    }

    #[test]
    fn power_scales_quadratically_with_amplitude() {
        let rate = 200.0;
        let env = modulated_envelope(3.0, 12.0, rate);
        let doubled: Vec<f64> = env.iter().map(|v| v * 2.0).collect();
        let a = scalogram(&env, rate, &ScalogramParams::default()).unwrap();
        let b = scalogram(&doubled, rate, &ScalogramParams::default()).unwrap();
        let ratio = b.total_power() / a.total_power();
        assert!((ratio - 4.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn frequencies_are_log_spaced_and_increasing() {
        let params = ScalogramParams::default();
        let f = params.frequencies();
        assert_eq!(f.len(), 24);
        assert!((f[0] - 0.1).abs() < 1e-12);
        assert!((f[23] - 40.0).abs() < 1e-9);
        for w in f.windows(2) {
            assert!(w[1] > w[0]);
        }
        // Constant ratio between neighbors.
        let r0 = f[1] / f[0];
        for w in f.windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-9);
        }
    }
}
