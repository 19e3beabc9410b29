//! Corpus ingestion: parsed performances and their symbolic encodings.
//!
//! A [`Piece`] is a metadata-annotated list of note events in seconds.
//! Pieces come from Standard MIDI Files ([`midi::parse_midi`]) or per-note
//! CSV exports ([`records::parse_corpus_csv`]), and are symbolized into
//! integer sequences over three domains: pitch, rhythm (inter-onset
//! intervals in tempo-invariant log-ratio bins), and the pitch-rhythm pair.

pub mod midi;
pub mod records;

mod symbolize;

pub use symbolize::{
    merged_onsets, symbolize_joint, symbolize_pitch, symbolize_pitch_by_onset, symbolize_rhythm,
    PitchMode, RhythmParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simultaneous-onset tolerance: events whose onsets differ by at most this
/// count as one onset for rhythm purposes.
pub const ONSET_MERGE_EPSILON: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed MIDI header: {0}")]
    MalformedHeader(String),
    #[error("SMPTE time division is not supported")]
    UnsupportedTimeDivision,
    #[error("truncated MIDI track: {0}")]
    TruncatedTrack(String),
    #[error("required column {0:?} not found in header")]
    MissingColumn(String),
    #[error("piece has no events")]
    EmptyPiece,
    #[error("piece has fewer than {needed} distinct onsets")]
    TooFewEvents { needed: usize },
    #[error("sequences disagree on piece or event structure: {0} vs {1}")]
    PieceMismatch(String, String),
    #[error("manifest entry {0:?} has an unsupported file extension")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One note of a performance. Onset and duration are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: f64,
    pub duration: f64,
    /// MIDI note number, 0–127.
    pub pitch: u8,
    pub velocity: u8,
}

impl NoteEvent {
    pub const DEFAULT_VELOCITY: u8 = 64;

    /// Check the per-event invariants: pitch in range, duration positive,
    /// onset non-negative, all finite.
    pub fn is_valid(&self) -> bool {
        self.pitch <= 127
            && self.onset.is_finite()
            && self.duration.is_finite()
            && self.onset >= 0.0
            && self.duration > 0.0
    }
}

/// A performance with corpus metadata. Events are kept sorted by onset,
/// ties broken by pitch ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub id: String,
    pub performer: String,
    /// Performance year; 0 when unknown.
    pub year: i32,
    pub style: String,
    pub instrument: String,
    pub events: Vec<NoteEvent>,
}

impl Piece {
    pub fn new(id: impl Into<String>, mut events: Vec<NoteEvent>) -> Self {
        sort_events(&mut events);
        Self {
            id: id.into(),
            performer: "unknown".to_string(),
            year: 0,
            style: "unknown".to_string(),
            instrument: "unknown".to_string(),
            events,
        }
    }

    /// Decade of the performance year: `floor(year / 10) · 10`.
    pub fn decade(&self) -> i32 {
        self.year - self.year.rem_euclid(10)
    }
}

/// Sort events by onset, ties by pitch ascending.
pub fn sort_events(events: &mut [NoteEvent]) {
    events.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then_with(|| a.pitch.cmp(&b.pitch))
    });
}

/// Symbolization domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Pitch,
    Rhythm,
    PitchRhythm,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Pitch, Domain::Rhythm, Domain::PitchRhythm];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Pitch => "pitch",
            Domain::Rhythm => "rhythm",
            Domain::PitchRhythm => "pitch_rhythm",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An integer-coded event stream in one domain.
///
/// `alphabet[i]` is the human-readable label of symbol id `i`; the map is
/// bijective and every symbol id is `< alphabet.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub piece_id: String,
    pub domain: Domain,
    pub symbols: Vec<usize>,
    pub alphabet: Vec<String>,
}

impl SymbolSequence {
    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn label_of(&self, symbol: usize) -> Option<&str> {
        self.alphabet.get(symbol).map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decade_is_floor_of_year() {
        let mut piece = Piece::new("p", vec![]);
        piece.year = 1957;
        assert_eq!(piece.decade(), 1950);
        piece.year = 1960;
        assert_eq!(piece.decade(), 1960);
        piece.year = 0;
        assert_eq!(piece.decade(), 0);
    }

    #[test]
    fn events_sort_by_onset_then_pitch() {
        let e = |onset: f64, pitch: u8| NoteEvent {
            onset,
            duration: 0.5,
            pitch,
            velocity: 64,
        };
        let piece = Piece::new("p", vec![e(1.0, 60), e(0.0, 72), e(0.0, 60)]);
        let got: Vec<(f64, u8)> = piece.events.iter().map(|e| (e.onset, e.pitch)).collect();
        assert_eq!(got, vec![(0.0, 60), (0.0, 72), (1.0, 60)]);
    }
}
