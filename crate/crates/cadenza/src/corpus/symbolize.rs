//! Symbolization of pieces into integer sequences.
//!
//! Rhythm symbols are tempo-invariant: each inter-onset interval is encoded
//! as `round(bins_per_octave · log2(ioi / median_ioi))`, clamped. Scaling
//! every onset by a constant scales the median identically, leaving the
//! symbols unchanged.

use super::{CorpusError, Domain, Piece, SymbolSequence, ONSET_MERGE_EPSILON};

/// Pitch symbol granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PitchMode {
    /// Full MIDI note number (octave-sensitive).
    #[default]
    MidiNumber,
    /// Pitch class, note number mod 12.
    PitchClass,
}

impl std::str::FromStr for PitchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midi_number" => Ok(PitchMode::MidiNumber),
            "pitch_class" => Ok(PitchMode::PitchClass),
            other => Err(format!("unknown pitch mode {other:?}")),
        }
    }
}

/// Rhythm binning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RhythmParams {
    /// Bins per doubling of the inter-onset interval.
    pub bins_per_octave: u32,
    /// Symbols are clamped to `[-clamp, clamp]`.
    pub clamp: u32,
}

impl Default for RhythmParams {
    fn default() -> Self {
        Self {
            bins_per_octave: 4,
            clamp: 8,
        }
    }
}

/// Distinct onsets of a piece, merging onsets closer than
/// [`ONSET_MERGE_EPSILON`]. Each group is represented by its first onset.
pub fn merged_onsets(piece: &Piece) -> Vec<f64> {
    let mut onsets = Vec::new();
    for event in &piece.events {
        match onsets.last() {
            Some(&last) if event.onset - last <= ONSET_MERGE_EPSILON => {}
            _ => onsets.push(event.onset),
        }
    }
    onsets
}

fn build_alphabet<T: Ord + Clone, F: Fn(&T) -> String>(
    values: &[T],
    label: F,
) -> (Vec<String>, impl Fn(&T) -> usize + '_) {
    let mut distinct: Vec<T> = values.to_vec();
    distinct.sort();
    distinct.dedup();
    let alphabet = distinct.iter().map(label).collect();
    let lookup = move |v: &T| distinct.binary_search(v).expect("value in alphabet");
    (alphabet, lookup)
}

/// Symbolize the pitch of every event.
pub fn symbolize_pitch(piece: &Piece, mode: PitchMode) -> Result<SymbolSequence, CorpusError> {
    if piece.events.is_empty() {
        return Err(CorpusError::EmptyPiece);
    }
    let values: Vec<u8> = piece.events.iter().map(|e| pitch_value(e.pitch, mode)).collect();
    Ok(pitch_sequence(&piece.id, &values))
}

/// Pitch sequence with one entry per distinct onset, using the lowest pitch
/// sounding at each onset. Equals [`symbolize_pitch`] for monophonic pieces;
/// used to align pitch with rhythm when building joint sequences.
pub fn symbolize_pitch_by_onset(
    piece: &Piece,
    mode: PitchMode,
) -> Result<SymbolSequence, CorpusError> {
    if piece.events.is_empty() {
        return Err(CorpusError::EmptyPiece);
    }
    let mut values = Vec::new();
    let mut last_onset = f64::NEG_INFINITY;
    for event in &piece.events {
        if event.onset - last_onset > ONSET_MERGE_EPSILON {
            // Events are sorted by (onset, pitch), so the first of a group
            // is its lowest pitch.
            values.push(pitch_value(event.pitch, mode));
            last_onset = event.onset;
        }
    }
    Ok(pitch_sequence(&piece.id, &values))
}

fn pitch_value(pitch: u8, mode: PitchMode) -> u8 {
    match mode {
        PitchMode::MidiNumber => pitch,
        PitchMode::PitchClass => pitch % 12,
    }
}

fn pitch_sequence(piece_id: &str, values: &[u8]) -> SymbolSequence {
    let (alphabet, lookup) = build_alphabet(values, |v| v.to_string());
    let symbols = values.iter().map(|v| lookup(v)).collect();
    SymbolSequence {
        piece_id: piece_id.to_string(),
        domain: Domain::Pitch,
        symbols,
        alphabet,
    }
}

/// Symbolize inter-onset intervals into log-ratio bins relative to the
/// piece's median interval.
pub fn symbolize_rhythm(piece: &Piece, params: RhythmParams) -> Result<SymbolSequence, CorpusError> {
    let onsets = merged_onsets(piece);
    if onsets.len() < 2 {
        return Err(CorpusError::TooFewEvents { needed: 2 });
    }
    let iois: Vec<f64> = onsets.windows(2).map(|w| w[1] - w[0]).collect();
    let med = median(&iois);
    let clamp = params.clamp as i64;
    let bins: Vec<i64> = iois
        .iter()
        .map(|&ioi| {
            let raw = (params.bins_per_octave as f64 * (ioi / med).log2()).round() as i64;
            raw.clamp(-clamp, clamp)
        })
        .collect();
    let (alphabet, lookup) = build_alphabet(&bins, |b| b.to_string());
    let symbols = bins.iter().map(|b| lookup(b)).collect();
    Ok(SymbolSequence {
        piece_id: piece.id.clone(),
        domain: Domain::Rhythm,
        symbols,
        alphabet,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Pair each note with the interval that precedes it: joint symbol `i`
/// combines pitch symbol `i + 1` with rhythm symbol `i`.
///
/// Both sequences must come from the same piece and describe the same onset
/// structure (`pitch.len() == rhythm.len() + 1`); for pieces with chords,
/// pass the per-onset pitch sequence from [`symbolize_pitch_by_onset`].
pub fn symbolize_joint(
    pitch: &SymbolSequence,
    rhythm: &SymbolSequence,
) -> Result<SymbolSequence, CorpusError> {
    if pitch.piece_id != rhythm.piece_id {
        return Err(CorpusError::PieceMismatch(
            pitch.piece_id.clone(),
            rhythm.piece_id.clone(),
        ));
    }
    if pitch.len() != rhythm.len() + 1 {
        return Err(CorpusError::PieceMismatch(
            format!("{} pitch symbols", pitch.len()),
            format!("{} rhythm symbols", rhythm.len()),
        ));
    }
    let pairs: Vec<(usize, usize)> = rhythm
        .symbols
        .iter()
        .enumerate()
        .map(|(i, &r)| (pitch.symbols[i + 1], r))
        .collect();
    let (alphabet, lookup) = build_alphabet(&pairs, |&(p, r)| {
        format!("{}:{}", pitch.alphabet[p], rhythm.alphabet[r])
    });
    let symbols = pairs.iter().map(|p| lookup(p)).collect();
    Ok(SymbolSequence {
        piece_id: pitch.piece_id.clone(),
        domain: Domain::PitchRhythm,
        symbols,
        alphabet,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NoteEvent;

    fn piece_with_onsets(onsets: &[f64], pitches: &[u8]) -> Piece {
        let events = onsets
            .iter()
            .zip(pitches)
            .map(|(&onset, &pitch)| NoteEvent {
                onset,
                duration: 0.2,
                pitch,
                velocity: 64,
            })
            .collect();
        Piece::new("p", events)
    }

    #[test]
    fn pitch_alphabet_from_observed_values() {
        let piece = piece_with_onsets(&[0.0, 0.5, 1.0], &[60, 62, 60]);
        let seq = symbolize_pitch(&piece, PitchMode::MidiNumber).unwrap();
        assert_eq!(seq.symbols, vec![0, 1, 0]);
        assert_eq!(seq.alphabet, vec!["60", "62"]);
    }

    #[test]
    fn pitch_class_folds_octaves() {
        let piece = piece_with_onsets(&[0.0, 0.5], &[60, 72]);
        let seq = symbolize_pitch(&piece, PitchMode::PitchClass).unwrap();
        assert_eq!(seq.symbols, vec![0, 0]);
        assert_eq!(seq.alphabet_size(), 1);
    }

    #[test]
    fn empty_piece_is_rejected() {
        let piece = Piece::new("p", vec![]);
        assert!(matches!(
            symbolize_pitch(&piece, PitchMode::MidiNumber),
            Err(CorpusError::EmptyPiece)
        ));
    }

    #[test]
    fn isochronous_onsets_map_to_zero_bin() {
        let piece = piece_with_onsets(&[0.0, 0.5, 1.0, 1.5], &[60; 4]);
        let seq = symbolize_rhythm(&piece, RhythmParams::default()).unwrap();
        assert_eq!(seq.alphabet, vec!["0"]);
        assert_eq!(seq.symbols, vec![0, 0, 0]);
    }

    #[test]
    fn halved_interval_lands_four_bins_down() {
        // IOIs [0.25, 0.5, 0.5], median 0.5 → bins [-4, 0, 0].
        let piece = piece_with_onsets(&[0.0, 0.25, 0.75, 1.25], &[60; 4]);
        let seq = symbolize_rhythm(&piece, RhythmParams::default()).unwrap();
        let bins: Vec<&str> = seq.symbols.iter().map(|&s| seq.label_of(s).unwrap()).collect();
        assert_eq!(bins, vec!["-4", "0", "0"]);
    }

    #[test]
    fn single_onset_is_too_few() {
        let piece = piece_with_onsets(&[0.0], &[60]);
        assert!(matches!(
            symbolize_rhythm(&piece, RhythmParams::default()),
            Err(CorpusError::TooFewEvents { needed: 2 })
        ));
        // Two events sharing one onset merge into a single onset.
        let piece = piece_with_onsets(&[0.0, 0.0005], &[60, 64]);
        assert!(symbolize_rhythm(&piece, RhythmParams::default()).is_err());
    }

    #[test]
    fn extreme_ratio_clamps() {
        // IOIs [0.002, 1, 1, 10000] around a median of 1 s.
        let piece = piece_with_onsets(&[0.0, 0.002, 1.002, 2.002, 10002.0], &[60; 5]);
        let params = RhythmParams::default();
        let seq = symbolize_rhythm(&piece, params).unwrap();
        let bins: Vec<i64> = seq
            .symbols
            .iter()
            .map(|&s| seq.label_of(s).unwrap().parse().unwrap())
            .collect();
        assert!(bins.iter().all(|b| b.unsigned_abs() <= params.clamp as u64));
        assert!(bins.contains(&-8) && bins.contains(&8));
    }

    #[test]
    fn joint_pairs_note_with_preceding_interval() {
        let piece = piece_with_onsets(&[0.0, 0.5, 1.0], &[60, 62, 60]);
        let pitch = symbolize_pitch(&piece, PitchMode::MidiNumber).unwrap();
        let rhythm = symbolize_rhythm(&piece, RhythmParams::default()).unwrap();
        let joint = symbolize_joint(&pitch, &rhythm).unwrap();
        assert_eq!(joint.len(), 2);
        assert_eq!(joint.alphabet_size(), 2);
        let labels: Vec<&str> = joint.symbols.iter().map(|&s| joint.label_of(s).unwrap()).collect();
        assert_eq!(labels, vec!["62:0", "60:0"]);
    }

    #[test]
    fn joint_rejects_different_pieces() {
        let a = piece_with_onsets(&[0.0, 0.5, 1.0], &[60, 62, 60]);
        let mut b = a.clone();
        b.id = "other".to_string();
        let pitch = symbolize_pitch(&a, PitchMode::MidiNumber).unwrap();
        let rhythm = symbolize_rhythm(&b, RhythmParams::default()).unwrap();
        assert!(matches!(
            symbolize_joint(&pitch, &rhythm),
            Err(CorpusError::PieceMismatch(..))
        ));
    }

    #[test]
    fn joint_distinguishes_rhythm_with_constant_pitch() {
        let piece = piece_with_onsets(&[0.0, 0.25, 1.25], &[60; 3]);
        let pitch = symbolize_pitch(&piece, PitchMode::MidiNumber).unwrap();
        let rhythm = symbolize_rhythm(&piece, RhythmParams::default()).unwrap();
        let joint = symbolize_joint(&pitch, &rhythm).unwrap();
        assert_eq!(joint.alphabet_size(), 2);
    }

    #[test]
    fn chordal_piece_aligns_via_onset_pitches() {
        let events = vec![
            NoteEvent { onset: 0.0, duration: 0.2, pitch: 60, velocity: 64 },
            NoteEvent { onset: 0.0, duration: 0.2, pitch: 64, velocity: 64 },
            NoteEvent { onset: 0.5, duration: 0.2, pitch: 62, velocity: 64 },
            NoteEvent { onset: 1.0, duration: 0.2, pitch: 65, velocity: 64 },
        ];
        let piece = Piece::new("p", events);
        let pitch = symbolize_pitch_by_onset(&piece, PitchMode::MidiNumber).unwrap();
        assert_eq!(pitch.len(), 3); // chord collapsed to its lowest note
        let rhythm = symbolize_rhythm(&piece, RhythmParams::default()).unwrap();
        let joint = symbolize_joint(&pitch, &rhythm).unwrap();
        assert_eq!(joint.len(), 2);
    }

    #[test]
    fn rhythm_symbols_are_tempo_invariant() {
        let onsets = [0.0, 0.3, 0.45, 1.05, 1.2, 1.8];
        let base = piece_with_onsets(&onsets, &[60; 6]);
        let scaled_onsets: Vec<f64> = onsets.iter().map(|&o| o * 3.7).collect();
        let scaled = piece_with_onsets(&scaled_onsets, &[60; 6]);
        let a = symbolize_rhythm(&base, RhythmParams::default()).unwrap();
        let b = symbolize_rhythm(&scaled, RhythmParams::default()).unwrap();
        assert_eq!(a.symbols, b.symbols);
        assert_eq!(a.alphabet, b.alphabet);
    }
}
