//! Standard MIDI File parser (format 0 and 1, metrical time division).
//!
//! Produces note events with onsets and durations in seconds, converted
//! through the file's tempo map. Tempo meta-events from every track apply
//! globally (the format-1 convention); before the first tempo event the
//! default is 120 BPM (500000 µs per quarter note). Note-on with velocity 0
//! is treated as note-off, running status is honored, and notes still open
//! at end-of-track are closed at the track's final tick.
//!
//! The parser never panics: any input yields either events or a typed
//! [`CorpusError`].

use super::{sort_events, CorpusError, NoteEvent};

const DEFAULT_US_PER_QUARTER: u32 = 500_000;

/// Parse an SMF byte stream into note events (metadata comes from the
/// corpus manifest, not from the file).
pub fn parse_midi(bytes: &[u8]) -> Result<Vec<NoteEvent>, CorpusError> {
    let mut reader = Reader::new(bytes);

    let magic = reader
        .take(4)
        .map_err(|_| CorpusError::MalformedHeader("missing MThd chunk".into()))?;
    if magic != b"MThd" {
        return Err(CorpusError::MalformedHeader("bad magic".into()));
    }
    let header_len = reader
        .u32()
        .map_err(|_| CorpusError::MalformedHeader("missing header length".into()))?;
    if header_len != 6 {
        return Err(CorpusError::MalformedHeader(format!(
            "header length {header_len}, expected 6"
        )));
    }
    let format = reader
        .u16()
        .map_err(|_| CorpusError::MalformedHeader("missing format".into()))?;
    if format > 1 {
        return Err(CorpusError::MalformedHeader(format!(
            "unsupported SMF format {format}"
        )));
    }
    let declared_tracks = reader
        .u16()
        .map_err(|_| CorpusError::MalformedHeader("missing track count".into()))?;
    let division = reader
        .u16()
        .map_err(|_| CorpusError::MalformedHeader("missing time division".into()))?;
    if division & 0x8000 != 0 {
        return Err(CorpusError::UnsupportedTimeDivision);
    }
    let ppq = division & 0x7FFF;
    if ppq == 0 {
        return Err(CorpusError::MalformedHeader("zero pulses per quarter".into()));
    }

    let mut tracks = Vec::new();
    while tracks.len() < declared_tracks as usize && !reader.is_empty() {
        let chunk_type = reader
            .take(4)
            .map_err(|_| CorpusError::TruncatedTrack("chunk type cut short".into()))?
            .to_vec();
        let chunk_len = reader
            .u32()
            .map_err(|_| CorpusError::TruncatedTrack("chunk length cut short".into()))?
            as usize;
        if chunk_len > reader.remaining() {
            return Err(CorpusError::TruncatedTrack(format!(
                "chunk declares {chunk_len} bytes but only {} remain",
                reader.remaining()
            )));
        }
        let body = reader.take(chunk_len).expect("length checked");
        if chunk_type == *b"MTrk" {
            tracks.push(parse_track(body)?);
        }
        // Unknown chunk types are skipped, per the SMF alien-chunk rule.
    }

    // Tempo events from all tracks form one global map.
    let mut tempo_changes: Vec<(u64, u32)> = tracks
        .iter()
        .flat_map(|t| t.tempo_changes.iter().copied())
        .collect();
    tempo_changes.sort_by_key(|&(tick, _)| tick);
    let tempo_map = TempoMap::new(tempo_changes, ppq as u32);

    let mut events = Vec::new();
    for track in &tracks {
        for note in &track.notes {
            let onset = tempo_map.seconds_at(note.on_tick);
            let duration = tempo_map.seconds_at(note.off_tick) - onset;
            if duration > 0.0 {
                events.push(NoteEvent {
                    onset,
                    duration,
                    pitch: note.key,
                    velocity: note.velocity,
                });
            }
        }
    }
    sort_events(&mut events);
    Ok(events)
}

struct RawNote {
    on_tick: u64,
    off_tick: u64,
    key: u8,
    velocity: u8,
}

struct RawTrack {
    notes: Vec<RawNote>,
    tempo_changes: Vec<(u64, u32)>,
}

fn parse_track(body: &[u8]) -> Result<RawTrack, CorpusError> {
    let mut reader = Reader::new(body);
    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;
    let mut tempo_changes = Vec::new();
    let mut notes = Vec::new();
    // Open notes per (channel, key), FIFO so overlapping repeats pair
    // on-to-earliest-off.
    let mut open: Vec<(u8, u8, u64, u8)> = Vec::new();

    let truncated = |what: &str| CorpusError::TruncatedTrack(format!("bytes end in {what}"));

    while !reader.is_empty() {
        let delta = reader.varlen().map_err(|_| truncated("delta time"))?;
        tick += delta as u64;

        let first = reader.u8().map_err(|_| truncated("event status"))?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            reader.back_up();
            running_status
                .ok_or_else(|| CorpusError::TruncatedTrack("data byte without status".into()))?
        };

        match status & 0xF0 {
            0x80 | 0x90 => {
                running_status = Some(status);
                let key = reader.u8().map_err(|_| truncated("note key"))? & 0x7F;
                let vel = reader.u8().map_err(|_| truncated("note velocity"))? & 0x7F;
                let channel = status & 0x0F;
                let is_on = status & 0xF0 == 0x90 && vel > 0;
                if is_on {
                    open.push((channel, key, tick, vel));
                } else if let Some(at) = open
                    .iter()
                    .position(|&(ch, k, _, _)| ch == channel && k == key)
                {
                    let (_, _, on_tick, velocity) = open.remove(at);
                    notes.push(RawNote {
                        on_tick,
                        off_tick: tick,
                        key,
                        velocity,
                    });
                }
                // A note-off without a matching note-on is ignored.
            }
            0xA0 | 0xB0 | 0xE0 => {
                running_status = Some(status);
                reader.take(2).map_err(|_| truncated("channel message"))?;
            }
            0xC0 | 0xD0 => {
                running_status = Some(status);
                reader.take(1).map_err(|_| truncated("channel message"))?;
            }
            0xF0 => match status {
                0xFF => {
                    running_status = None;
                    let meta_type = reader.u8().map_err(|_| truncated("meta type"))?;
                    let len = reader.varlen().map_err(|_| truncated("meta length"))? as usize;
                    let data = reader.take(len).map_err(|_| truncated("meta data"))?;
                    if meta_type == 0x51 && len == 3 {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us > 0 {
                            tempo_changes.push((tick, us));
                        }
                    }
                    if meta_type == 0x2F {
                        break; // end of track
                    }
                }
                0xF0 | 0xF7 => {
                    running_status = None;
                    let len = reader.varlen().map_err(|_| truncated("sysex length"))? as usize;
                    reader.take(len).map_err(|_| truncated("sysex data"))?;
                }
                0xF1 | 0xF3 => {
                    running_status = None;
                    reader.take(1).map_err(|_| truncated("system message"))?;
                }
                0xF2 => {
                    running_status = None;
                    reader.take(2).map_err(|_| truncated("system message"))?;
                }
                // Remaining system common/realtime bytes carry no data.
                _ => {}
            },
            _ => unreachable!("status byte has high bit set"),
        }
    }

    // Close notes left hanging at the track's final tick.
    for (_, key, on_tick, velocity) in open {
        notes.push(RawNote {
            on_tick,
            off_tick: tick,
            key,
            velocity,
        });
    }

    Ok(RawTrack {
        notes,
        tempo_changes,
    })
}

/// Piecewise-constant tempo map with precomputed cumulative seconds.
struct TempoMap {
    /// (tick, µs per quarter, seconds at tick), sorted by tick.
    segments: Vec<(u64, u32, f64)>,
    ppq: u32,
}

impl TempoMap {
    fn new(changes: Vec<(u64, u32)>, ppq: u32) -> Self {
        let mut segments: Vec<(u64, u32, f64)> = vec![(0, DEFAULT_US_PER_QUARTER, 0.0)];
        for (tick, us) in changes {
            let seconds = Self::extend(&segments, tick, ppq);
            let last = segments.last_mut().expect("seeded with one segment");
            if last.0 == tick {
                // A tempo change at an existing boundary replaces it.
                last.1 = us;
            } else {
                segments.push((tick, us, seconds));
            }
        }
        Self { segments, ppq }
    }

    fn extend(segments: &[(u64, u32, f64)], tick: u64, ppq: u32) -> f64 {
        let &(seg_tick, us, seconds) = segments.last().expect("non-empty");
        seconds + (tick - seg_tick) as f64 * us as f64 / (ppq as f64 * 1e6)
    }

    fn seconds_at(&self, tick: u64) -> f64 {
        let at = self.segments.partition_point(|&(t, _, _)| t <= tick) - 1;
        let (seg_tick, us, seconds) = self.segments[at];
        seconds + (tick - seg_tick) as f64 * us as f64 / (self.ppq as f64 * 1e6)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

#[derive(Debug)]
struct OutOfBytes;

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn back_up(&mut self) {
        self.pos -= 1;
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], OutOfBytes> {
        if self.remaining() < n {
            return Err(OutOfBytes);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, OutOfBytes> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, OutOfBytes> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, OutOfBytes> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes per the SMF spec.
    fn varlen(&mut self) -> Result<u32, OutOfBytes> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let byte = self.u8()?;
            value = (value << 7) | (byte & 0x7F) as u32;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(OutOfBytes)
    }
}
