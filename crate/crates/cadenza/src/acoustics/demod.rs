//! Amplitude demodulation into a slow non-negative envelope (modulator) and
//! a fast carrier.
//!
//! The demodulator is iterative: the envelope starts as the zero-phase
//! lowpassed magnitude of the analytic signal, then alternates clipping at
//! ε, re-lowpassing, and rescaling so the carrier `signal / max(env, ε)`
//! has unit RMS. Ten iterations, then a final clip so the returned envelope
//! is non-negative everywhere. The lowpass is a frequency-domain mask with
//! a raised-cosine rolloff ending at the cutoff, so the envelope carries no
//! filter-introduced energy above it.

use rustfft::{num_complex::Complex, FftPlanner};

use super::{AcousticsError, Waveform};

/// Floor for the envelope, both inside the iteration and as the divisor
/// guard when forming the carrier.
pub const ENVELOPE_EPSILON: f64 = 1e-6;

const ITERATIONS: usize = 10;

/// Envelope/carrier split of one signal.
#[derive(Debug, Clone)]
pub struct EnvelopeDecomposition {
    /// Non-negative modulator, band-limited below `cutoff_hz`.
    pub envelope: Vec<f64>,
    /// `signal / max(envelope, ε)`, scaled to unit RMS by construction.
    pub carrier: Vec<f64>,
    pub cutoff_hz: f64,
    pub sample_rate: f64,
}

impl EnvelopeDecomposition {
    /// Fraction of the envelope's non-DC spectral power that lies above the
    /// cutoff. The DC bin is excluded so the statistic measures where the
    /// envelope's *fluctuations* live.
    pub fn out_of_band_fraction(&self) -> f64 {
        let n = self.envelope.len();
        let mut buf = to_complex(&self.envelope);
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mut total = 0.0;
        let mut above = 0.0;
        for (k, value) in buf.iter().enumerate().skip(1) {
            let freq = bin_frequency(k, n, self.sample_rate).abs();
            let power = value.norm_sqr();
            total += power;
            if freq > self.cutoff_hz {
                above += power;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            above / total
        }
    }
}

/// Demodulate a z-scored signal at the given cutoff (default 40 Hz).
pub fn demodulate(signal: &Waveform, cutoff_hz: f64) -> Result<EnvelopeDecomposition, AcousticsError> {
    if signal.sample_rate <= 2.0 * cutoff_hz {
        return Err(AcousticsError::CutoffTooHigh {
            cutoff: cutoff_hz,
            sample_rate: signal.sample_rate,
        });
    }
    let n = signal.samples.len();
    if n < 4 {
        return Err(AcousticsError::TooFewSamples { needed: 4, got: n });
    }

    let magnitude = analytic_magnitude(&signal.samples);
    let mut envelope = lowpass(&magnitude, signal.sample_rate, cutoff_hz);

    for _ in 0..ITERATIONS {
        for v in &mut envelope {
            *v = v.max(ENVELOPE_EPSILON);
        }
        envelope = lowpass(&envelope, signal.sample_rate, cutoff_hz);
        let scale = carrier_rms(&signal.samples, &envelope);
        if scale > 0.0 {
            for v in &mut envelope {
                *v *= scale;
            }
        }
    }
    for v in &mut envelope {
        *v = v.max(ENVELOPE_EPSILON);
    }

    let carrier = signal
        .samples
        .iter()
        .zip(&envelope)
        .map(|(&s, &e)| s / e.max(ENVELOPE_EPSILON))
        .collect();

    Ok(EnvelopeDecomposition {
        envelope,
        carrier,
        cutoff_hz,
        sample_rate: signal.sample_rate,
    })
}

fn carrier_rms(signal: &[f64], envelope: &[f64]) -> f64 {
    let sum: f64 = signal
        .iter()
        .zip(envelope)
        .map(|(&s, &e)| {
            let c = s / e.max(ENVELOPE_EPSILON);
            c * c
        })
        .sum();
    (sum / signal.len() as f64).sqrt()
}

/// Decimate a band-limited envelope to roughly `target_rate` by taking
/// every k-th sample. Returns the samples and the actual frame rate.
pub fn decimate_envelope(envelope: &[f64], sample_rate: f64, target_rate: f64) -> (Vec<f64>, f64) {
    let factor = ((sample_rate / target_rate).floor() as usize).max(1);
    let samples = envelope.iter().copied().step_by(factor).collect();
    (samples, sample_rate / factor as f64)
}

/// Magnitude of the analytic signal (FFT-based Hilbert transform).
fn analytic_magnitude(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut planner = FftPlanner::new();
    let mut buf = to_complex(signal);
    planner.plan_fft_forward(n).process(&mut buf);

    // Zero the negative frequencies, double the positive ones, keep DC
    // (and Nyquist for even n).
    let half = n / 2;
    for (k, value) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            continue;
        } else if k < half || (n % 2 == 1 && k == half) {
            *value *= 2.0;
        } else {
            *value = Complex::new(0.0, 0.0);
        }
    }

    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}

/// Zero-phase lowpass: frequency-domain mask equal to 1 below 0.8·cutoff,
/// raised-cosine down to 0 at the cutoff, 0 above it.
fn lowpass(signal: &[f64], sample_rate: f64, cutoff_hz: f64) -> Vec<f64> {
    let n = signal.len();
    let mut planner = FftPlanner::new();
    let mut buf = to_complex(signal);
    planner.plan_fft_forward(n).process(&mut buf);

    let pass_edge = 0.8 * cutoff_hz;
    for (k, value) in buf.iter_mut().enumerate() {
        let freq = bin_frequency(k, n, sample_rate).abs();
        let gain = if freq <= pass_edge {
            1.0
        } else if freq < cutoff_hz {
            let x = (freq - pass_edge) / (cutoff_hz - pass_edge);
            0.5 * (1.0 + (std::f64::consts::PI * x).cos())
        } else {
            0.0
        };
        *value *= gain;
    }

    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

fn to_complex(signal: &[f64]) -> Vec<Complex<f64>> {
    signal.iter().map(|&v| Complex::new(v, 0.0)).collect()
}

fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    if k <= n / 2 {
        k as f64 * sample_rate / n as f64
    } else {
        (k as f64 - n as f64) * sample_rate / n as f64
    }
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    cov / (var_a * var_b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustics::zscore;

    fn am_tone(mod_hz: f64, depth: f64, carrier_hz: f64, seconds: f64, rate: f64) -> Waveform {
        let n = (seconds * rate) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                (1.0 + depth * (2.0 * std::f64::consts::PI * mod_hz * t).sin())
                    * (2.0 * std::f64::consts::PI * carrier_hz * t).sin()
            })
            .collect();
        Waveform::new(rate, samples)
    }

    #[test]
    fn recovers_known_modulator() {
        let wave = am_tone(2.0, 0.5, 440.0, 4.0, 16000.0);
        let z = zscore(&wave).unwrap();
        let decomp = demodulate(&z, 40.0).unwrap();
        let rate = wave.sample_rate;
        let truth: Vec<f64> = (0..wave.samples.len())
            .map(|i| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * 2.0 * i as f64 / rate).sin())
            .collect();
        let r = pearson(&decomp.envelope, &truth);
        assert!(r >= 0.95, "envelope-modulator correlation {r}");
    }

    #[test]
    fn constant_tone_has_flat_envelope() {
        let wave = am_tone(2.0, 0.0, 440.0, 2.0, 16000.0);
        let z = zscore(&wave).unwrap();
        let decomp = demodulate(&z, 40.0).unwrap();
        // Coefficient of variation over the interior (edges carry filter
        // transients).
        let n = decomp.envelope.len();
        let interior = &decomp.envelope[n / 10..n - n / 10];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let sd = (interior.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / interior.len() as f64)
            .sqrt();
        assert!(sd / mean <= 0.05, "cv = {}", sd / mean);
    }

    #[test]
    fn envelope_invariants_hold() {
        let wave = am_tone(3.0, 0.8, 500.0, 3.0, 8000.0);
        let z = zscore(&wave).unwrap();
        let decomp = demodulate(&z, 40.0).unwrap();
        assert!(decomp.envelope.iter().all(|&v| v >= 0.0));
        let oob = decomp.out_of_band_fraction();
        assert!(oob <= 0.05, "out-of-band fraction {oob}");
    }

    #[test]
    fn reconstruction_matches_signal() {
        let wave = am_tone(2.0, 0.5, 440.0, 2.0, 16000.0);
        let z = zscore(&wave).unwrap();
        let decomp = demodulate(&z, 40.0).unwrap();
        let product: Vec<f64> = decomp
            .envelope
            .iter()
            .zip(&decomp.carrier)
            .map(|(&e, &c)| e * c)
            .collect();
        assert!(pearson(&product, &z.samples) >= 0.9);
    }

    #[test]
    fn cutoff_above_nyquist_is_rejected() {
        let wave = am_tone(2.0, 0.5, 10.0, 1.0, 100.0);
        assert!(matches!(
            demodulate(&wave, 100.0),
            Err(AcousticsError::CutoffTooHigh { .. })
        ));
    }

    #[test]
    fn decimation_keeps_rate_consistent() {
        let env: Vec<f64> = (0..16000).map(|i| (i as f64 * 0.001).sin()).collect();
        let (dec, rate) = decimate_envelope(&env, 16000.0, 200.0);
        assert_eq!(rate, 200.0);
        assert_eq!(dec.len(), 200);
        assert_eq!(dec[1], env[80]);
    }
}
