//! Waveform synthesis and normalization.

use super::{AcousticsError, Waveform};
use crate::corpus::Piece;

/// Render a piece as a sum of sines.
///
/// Each note contributes a sine at its equal-temperament frequency
/// `440·2^((pitch−69)/12)`, shaped by a 10 ms linear attack and an
/// exponential decay with a 0.3 s time constant, truncated 50 ms after the
/// note's duration. The mix is peak-normalized to |s| ≤ 1.
pub fn synthesize(piece: &Piece, sample_rate: f64) -> Result<Waveform, AcousticsError> {
    const ATTACK: f64 = 0.010;
    const DECAY_TAU: f64 = 0.3;
    const RELEASE_TAIL: f64 = 0.050;

    if piece.events.is_empty() {
        return Err(AcousticsError::EmptyPiece);
    }
    let end = piece
        .events
        .iter()
        .map(|e| e.onset + e.duration + RELEASE_TAIL)
        .fold(0.0f64, f64::max);
    let total_samples = (end * sample_rate).ceil() as usize + 1;
    let mut samples = vec![0.0f64; total_samples];

    for event in &piece.events {
        let freq = 440.0 * ((event.pitch as f64 - 69.0) / 12.0).exp2();
        let start = (event.onset * sample_rate).round() as usize;
        let note_len = ((event.duration + RELEASE_TAIL) * sample_rate).round() as usize;
        for k in 0..note_len {
            let i = start + k;
            if i >= samples.len() {
                break;
            }
            let t = k as f64 / sample_rate;
            let amp = if t < ATTACK {
                t / ATTACK
            } else {
                (-(t - ATTACK) / DECAY_TAU).exp()
            };
            samples[i] += amp * (2.0 * std::f64::consts::PI * freq * t).sin();
        }
    }

    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut samples {
            *v /= peak;
        }
    }
    Ok(Waveform::new(sample_rate, samples))
}

/// Z-score a signal to mean 0 and population standard deviation 1.
pub fn zscore(signal: &Waveform) -> Result<Waveform, AcousticsError> {
    let n = signal.samples.len();
    if n < 2 {
        return Err(AcousticsError::TooFewSamples { needed: 2, got: n });
    }
    let mean = signal.samples.iter().sum::<f64>() / n as f64;
    let var = signal
        .samples
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n as f64;
    if var == 0.0 {
        return Err(AcousticsError::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(Waveform::new(
        signal.sample_rate,
        signal.samples.iter().map(|&v| (v - mean) / sd).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NoteEvent;

    fn single_note(pitch: u8, duration: f64) -> Piece {
        Piece::new(
            "p",
            vec![NoteEvent {
                onset: 0.0,
                duration,
                pitch,
                velocity: 64,
            }],
        )
    }

    fn dominant_frequency(wave: &Waveform) -> f64 {
        use rustfft::{num_complex::Complex, FftPlanner};
        let n = wave.samples.len();
        let mut buf: Vec<Complex<f64>> = wave
            .samples
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak_bin = (1..n / 2)
            .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
            .unwrap();
        peak_bin as f64 * wave.sample_rate / n as f64
    }

    #[test]
    fn concert_pitch_peaks_at_440() {
        let wave = synthesize(&single_note(69, 1.0), 16000.0).unwrap();
        let bin_width = wave.sample_rate / wave.samples.len() as f64;
        assert!((dominant_frequency(&wave) - 440.0).abs() <= bin_width);
    }

    #[test]
    fn octave_below_peaks_at_220() {
        let wave = synthesize(&single_note(57, 1.0), 16000.0).unwrap();
        let bin_width = wave.sample_rate / wave.samples.len() as f64;
        assert!((dominant_frequency(&wave) - 220.0).abs() <= bin_width);
    }

    #[test]
    fn empty_piece_is_rejected() {
        let piece = Piece::new("p", vec![]);
        assert!(matches!(
            synthesize(&piece, 16000.0),
            Err(AcousticsError::EmptyPiece)
        ));
    }

    #[test]
    fn output_is_peak_normalized() {
        let piece = Piece::new(
            "p",
            vec![
                NoteEvent { onset: 0.0, duration: 0.5, pitch: 60, velocity: 64 },
                NoteEvent { onset: 0.1, duration: 0.5, pitch: 64, velocity: 64 },
                NoteEvent { onset: 0.2, duration: 0.5, pitch: 67, velocity: 64 },
            ],
        );
        let wave = synthesize(&piece, 8000.0).unwrap();
        let peak = wave.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(peak <= 1.0 + 1e-12 && peak > 0.99);
    }

    #[test]
    fn zscore_reference_points() {
        let z = zscore(&Waveform::new(100.0, vec![1.0, -1.0])).unwrap();
        assert_eq!(z.samples, vec![1.0, -1.0]);
        let z = zscore(&Waveform::new(100.0, vec![0.0, 2.0])).unwrap();
        assert_eq!(z.samples, vec![-1.0, 1.0]);
    }

    #[test]
    fn zscore_normalizes_moments() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 3.0 + 5.0).collect();
        let z = zscore(&Waveform::new(100.0, samples)).unwrap();
        let n = z.samples.len() as f64;
        let mean = z.samples.iter().sum::<f64>() / n;
        let sd = (z.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_signal_has_zero_variance() {
        assert!(matches!(
            zscore(&Waveform::new(100.0, vec![2.5; 64])),
            Err(AcousticsError::ZeroVariance)
        ));
    }
}
