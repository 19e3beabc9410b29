//! Tabular corpus I/O: per-note CSV files, the canonical piece CSV, and the
//! corpus manifest binding files to metadata.
//!
//! Metadata comes from the manifest, not from MIDI meta-events. The
//! canonical piece CSV writes onsets and durations with Rust's shortest
//! round-trip float formatting so a write/parse cycle reproduces the piece
//! exactly.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{midi, sort_events, CorpusError, NoteEvent, Piece};

/// Column names for per-note CSV files. Onset, duration, and pitch are
/// required; the rest are optional.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CsvSchema {
    pub onset: String,
    pub duration: String,
    pub pitch: String,
    pub velocity: String,
    pub performer: String,
    pub year: String,
    pub style: String,
    pub instrument: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            onset: "onset_sec".into(),
            duration: "duration_sec".into(),
            pitch: "pitch".into(),
            velocity: "velocity".into(),
            performer: "performer".into(),
            year: "year".into(),
            style: "style".into(),
            instrument: "instrument".into(),
        }
    }
}

/// Parse a per-note CSV stream into one piece.
///
/// Rows failing to parse are skipped with a warning naming the 1-based data
/// row; the piece is returned as long as at least one row is valid.
pub fn parse_corpus_csv<R: Read>(
    reader: R,
    schema: &CsvSchema,
    piece_id: &str,
) -> Result<(Piece, Vec<String>), CorpusError> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| CorpusError::MissingColumn(name.into()));

    let onset_col = require(&schema.onset)?;
    let duration_col = require(&schema.duration)?;
    let pitch_col = require(&schema.pitch)?;
    let velocity_col = find(&schema.velocity);
    let performer_col = find(&schema.performer);
    let year_col = find(&schema.year);
    let style_col = find(&schema.style);
    let instrument_col = find(&schema.instrument);

    let mut warnings = Vec::new();
    let mut events = Vec::new();
    let mut piece = Piece::new(piece_id, vec![]);
    let mut saw_metadata = false;

    for (idx, row) in csv_reader.records().enumerate() {
        let row_no = idx + 1;
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("{piece_id}: row {row_no} unreadable ({e})"));
                continue;
            }
        };
        match parse_row(&record, onset_col, duration_col, pitch_col, velocity_col) {
            Ok(event) => events.push(event),
            Err(reason) => {
                warnings.push(format!("{piece_id}: row {row_no} skipped ({reason})"));
                continue;
            }
        }
        if !saw_metadata {
            saw_metadata = true;
            let field = |col: Option<usize>| {
                col.and_then(|c| record.get(c))
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
            };
            if let Some(v) = field(performer_col) {
                piece.performer = v.to_string();
            }
            if let Some(v) = field(style_col) {
                piece.style = v.to_string();
            }
            if let Some(v) = field(instrument_col) {
                piece.instrument = v.to_string();
            }
            if let Some(v) = field(year_col) {
                piece.year = v.parse().unwrap_or(0);
            }
        }
    }

    if events.is_empty() {
        return Err(CorpusError::EmptyPiece);
    }
    sort_events(&mut events);
    piece.events = events;
    Ok((piece, warnings))
}

fn parse_row(
    record: &csv::StringRecord,
    onset_col: usize,
    duration_col: usize,
    pitch_col: usize,
    velocity_col: Option<usize>,
) -> Result<NoteEvent, String> {
    let field = |col: usize, name: &str| {
        record
            .get(col)
            .map(str::trim)
            .ok_or_else(|| format!("missing {name} field"))
    };
    let onset: f64 = field(onset_col, "onset")?
        .parse()
        .map_err(|_| "unparsable onset".to_string())?;
    let duration: f64 = field(duration_col, "duration")?
        .parse()
        .map_err(|_| "unparsable duration".to_string())?;
    let pitch: u8 = field(pitch_col, "pitch")?
        .parse()
        .map_err(|_| "unparsable pitch".to_string())?;
    let velocity: u8 = match velocity_col.and_then(|c| record.get(c)).map(str::trim) {
        Some(v) if !v.is_empty() => v.parse().map_err(|_| "unparsable velocity".to_string())?,
        _ => NoteEvent::DEFAULT_VELOCITY,
    };
    let event = NoteEvent {
        onset,
        duration,
        pitch,
        velocity,
    };
    if !event.is_valid() {
        return Err("event violates invariants".to_string());
    }
    Ok(event)
}

/// Write the canonical piece CSV: `onset_sec,duration_sec,pitch,velocity`.
pub fn write_piece_csv<W: Write>(piece: &Piece, writer: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["onset_sec", "duration_sec", "pitch", "velocity"])?;
    for event in &piece.events {
        w.write_record([
            event.onset.to_string(),
            event.duration.to_string(),
            event.pitch.to_string(),
            event.velocity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One manifest row binding a piece file to its metadata.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub performer: String,
    pub year: i32,
    pub style: String,
    pub instrument: String,
}

/// Read the corpus manifest CSV (`id,path,performer,year,style,instrument`).
pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<ManifestEntry>, CorpusError> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_col = find("id").ok_or_else(|| CorpusError::MissingColumn("id".into()))?;
    let path_col = find("path").ok_or_else(|| CorpusError::MissingColumn("path".into()))?;
    let performer_col = find("performer");
    let year_col = find("year");
    let style_col = find("style");
    let instrument_col = find("instrument");

    let mut entries = Vec::new();
    for row in csv_reader.records() {
        let record = row?;
        let field = |col: Option<usize>| {
            col.and_then(|c| record.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
        };
        let id = field(Some(id_col)).unwrap_or_default().to_string();
        let path = field(Some(path_col)).unwrap_or_default().to_string();
        if id.is_empty() || path.is_empty() {
            continue;
        }
        entries.push(ManifestEntry {
            id,
            path: PathBuf::from(path),
            performer: field(performer_col).unwrap_or("unknown").to_string(),
            year: field(year_col).and_then(|v| v.parse().ok()).unwrap_or(0),
            style: field(style_col).unwrap_or("unknown").to_string(),
            instrument: field(instrument_col).unwrap_or("unknown").to_string(),
        });
    }
    Ok(entries)
}

/// Load the piece referenced by a manifest entry, resolving relative paths
/// against `base_dir` and attaching the entry's metadata.
pub fn load_piece(
    entry: &ManifestEntry,
    base_dir: &Path,
    schema: &CsvSchema,
) -> Result<(Piece, Vec<String>), CorpusError> {
    let path = if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        base_dir.join(&entry.path)
    };
    let extension = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();

    let (mut piece, warnings) = match extension.as_str() {
        "mid" | "midi" | "smf" => {
            let bytes = std::fs::read(&path)?;
            let events = midi::parse_midi(&bytes)?;
            if events.is_empty() {
                return Err(CorpusError::EmptyPiece);
            }
            (Piece::new(entry.id.clone(), events), Vec::new())
        }
        "csv" => {
            let file = std::fs::File::open(&path)?;
            parse_corpus_csv(file, schema, &entry.id)?
        }
        other => return Err(CorpusError::UnsupportedFormat(other.to_string())),
    };

    piece.id = entry.id.clone();
    piece.performer = entry.performer.clone();
    piece.year = entry.year;
    piece.style = entry.style.clone();
    piece.instrument = entry.instrument.clone();
    Ok((piece, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_parse_sorted() {
        let csv = "onset_sec,duration_sec,pitch,velocity\n1.0,0.5,62,80\n0.0,0.5,60,80\n2.0,0.5,64,80\n";
        let (piece, warnings) =
            parse_corpus_csv(csv.as_bytes(), &CsvSchema::default(), "p").unwrap();
        assert!(warnings.is_empty());
        let pitches: Vec<u8> = piece.events.iter().map(|e| e.pitch).collect();
        assert_eq!(pitches, vec![60, 62, 64]);
    }

    #[test]
    fn bad_row_is_skipped_with_warning() {
        let csv = "onset_sec,duration_sec,pitch\n0.0,0.5,60\n1.0,0.5,abc\n2.0,0.5,64\n";
        let (piece, warnings) =
            parse_corpus_csv(csv.as_bytes(), &CsvSchema::default(), "p").unwrap();
        assert_eq!(piece.events.len(), 2);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("row 2"), "{warnings:?}");
    }

    #[test]
    fn missing_required_column_errors() {
        let csv = "onset_sec,pitch\n0.0,60\n";
        assert!(matches!(
            parse_corpus_csv(csv.as_bytes(), &CsvSchema::default(), "p"),
            Err(CorpusError::MissingColumn(c)) if c == "duration_sec"
        ));
    }

    #[test]
    fn all_rows_bad_is_empty_piece() {
        let csv = "onset_sec,duration_sec,pitch\n0.0,0.5,200\n";
        assert!(matches!(
            parse_corpus_csv(csv.as_bytes(), &CsvSchema::default(), "p"),
            Err(CorpusError::EmptyPiece)
        ));
    }

    #[test]
    fn metadata_columns_fill_piece_fields() {
        let csv = "onset_sec,duration_sec,pitch,performer,year,style,instrument\n\
                   0.0,0.5,60,Art Tatum,1939,Swing,piano\n";
        let (piece, _) = parse_corpus_csv(csv.as_bytes(), &CsvSchema::default(), "p").unwrap();
        assert_eq!(piece.performer, "Art Tatum");
        assert_eq!(piece.year, 1939);
        assert_eq!(piece.decade(), 1930);
        assert_eq!(piece.style, "Swing");
    }

    #[test]
    fn canonical_csv_round_trips_exactly() {
        let events = vec![
            NoteEvent { onset: 0.0, duration: 1.0 / 3.0, pitch: 60, velocity: 64 },
            NoteEvent { onset: 0.1 + 0.2, duration: 0.123456789012345, pitch: 127, velocity: 1 },
        ];
        let piece = Piece::new("p", events);
        let mut buf = Vec::new();
        write_piece_csv(&piece, &mut buf).unwrap();
        let (parsed, warnings) =
            parse_corpus_csv(buf.as_slice(), &CsvSchema::default(), "p").unwrap();
        assert!(warnings.is_empty());
        assert_eq!(parsed.events, piece.events);
    }

    #[test]
    fn manifest_parses_and_defaults_metadata() {
        let csv = "id,path,performer,year,style,instrument\n\
                   a,pieces/a.mid,Miles Davis,1959,Cool,trumpet\n\
                   b,pieces/b.csv,,,,\n";
        let entries = read_manifest(csv.as_bytes()).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].year, 1959);
        assert_eq!(entries[1].performer, "unknown");
        assert_eq!(entries[1].year, 0);
    }
}
