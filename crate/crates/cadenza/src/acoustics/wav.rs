//! Minimal mono WAV I/O: PCM 16-bit and IEEE float 32-bit.

use std::io::{Read, Write};

use super::{AcousticsError, Waveform};

/// Sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Write a mono waveform. Samples are clamped to [-1, 1] for PCM.
pub fn write_wav<W: Write>(
    writer: &mut W,
    wave: &Waveform,
    format: WavFormat,
) -> Result<(), AcousticsError> {
    let n = wave.samples.len() as u32;
    let sample_rate = wave.sample_rate.round() as u32;
    let (format_tag, bits): (u16, u16) = match format {
        WavFormat::Pcm16 => (1, 16),
        WavFormat::Float32 => (3, 32),
    };
    let block_align = bits / 8;
    let data_len = n * block_align as u32;

    writer.write_all(b"RIFF")?;
    writer.write_all(&(36 + data_len).to_le_bytes())?;
    writer.write_all(b"WAVE")?;
    writer.write_all(b"fmt ")?;
    writer.write_all(&16u32.to_le_bytes())?;
    writer.write_all(&format_tag.to_le_bytes())?;
    writer.write_all(&1u16.to_le_bytes())?;
    writer.write_all(&sample_rate.to_le_bytes())?;
    writer.write_all(&(sample_rate * block_align as u32).to_le_bytes())?;
    writer.write_all(&block_align.to_le_bytes())?;
    writer.write_all(&bits.to_le_bytes())?;
    writer.write_all(b"data")?;
    writer.write_all(&data_len.to_le_bytes())?;
    for &s in &wave.samples {
        match format {
            WavFormat::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_all(&v.to_le_bytes())?;
            }
            WavFormat::Float32 => {
                writer.write_all(&(s as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Read a mono WAV (PCM16 or float32); the sample rate comes from the
/// header.
pub fn read_wav<R: Read>(reader: &mut R) -> Result<Waveform, AcousticsError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let bad = |msg: &str| AcousticsError::BadWav(msg.to_string());

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }

    let mut format_tag = 0u16;
    let mut channels = 0u16;
    let mut sample_rate = 0u32;
    let mut bits = 0u16;
    let mut data: Option<&[u8]> = None;

    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let chunk_id = &bytes[pos..pos + 4];
        let chunk_len =
            u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + chunk_len > bytes.len() {
            return Err(bad("chunk overruns file"));
        }
        let body = &bytes[body_start..body_start + chunk_len];
        match chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                format_tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_start + chunk_len + (chunk_len & 1);
    }

    let data = data.ok_or_else(|| bad("no data chunk"))?;
    if channels != 1 {
        return Err(bad("only mono files are supported"));
    }
    if sample_rate == 0 {
        return Err(bad("zero sample rate"));
    }

    let samples = match (format_tag, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        (tag, bits) => {
            return Err(bad(&format!(
                "unsupported encoding (format {tag}, {bits} bits)"
            )))
        }
    };

    Ok(Waveform::new(sample_rate as f64, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_wave() -> Waveform {
        let samples = (0..200)
            .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / 200.0).sin() * 0.75)
            .collect();
        Waveform::new(8000.0, samples)
    }

    #[test]
    fn float32_round_trip_is_lossless_to_f32() {
        let wave = test_wave();
        let mut buf = Vec::new();
        write_wav(&mut buf, &wave, WavFormat::Float32).unwrap();
        let back = read_wav(&mut buf.as_slice()).unwrap();
        assert_eq!(back.sample_rate, 8000.0);
        for (&a, &b) in wave.samples.iter().zip(&back.samples) {
            assert_eq!(a as f32, b as f32);
        }
    }

    #[test]
    fn pcm16_round_trip_is_close() {
        let wave = test_wave();
        let mut buf = Vec::new();
        write_wav(&mut buf, &wave, WavFormat::Pcm16).unwrap();
        let back = read_wav(&mut buf.as_slice()).unwrap();
        for (&a, &b) in wave.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }

    #[test]
    fn garbage_is_a_typed_error() {
        assert!(matches!(
            read_wav(&mut &b"not a wav file"[..]),
            Err(AcousticsError::BadWav(_))
        ));
    }

    #[test]
    fn stereo_is_rejected() {
        let wave = test_wave();
        let mut buf = Vec::new();
        write_wav(&mut buf, &wave, WavFormat::Pcm16).unwrap();
        buf[22] = 2; // channel count
        assert!(matches!(
            read_wav(&mut buf.as_slice()),
            Err(AcousticsError::BadWav(_))
        ));
    }
}
