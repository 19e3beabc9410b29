//! Acoustic analysis of synthesized performances.
//!
//! The chain is: additive sine synthesis → z-score normalization →
//! amplitude demodulation into a sub-cutoff envelope (modulator) and a
//! carrier → Morlet scalogram of the decimated envelope → trough detection
//! and cycle-rate statistics (`c1/(c1+c2)` for adjacent cycles).

mod cycles;
mod demod;
mod scalogram;
mod synth;
pub mod wav;

pub use cycles::{detect_troughs, horizontal_rates, rate_density, CycleStats, RATE_BIN_WIDTH};
pub use demod::{decimate_envelope, demodulate, pearson, EnvelopeDecomposition, ENVELOPE_EPSILON};
pub use scalogram::{scalogram, Scalogram, ScalogramParams};
pub use synth::{synthesize, zscore};

use thiserror::Error;

use crate::dynamics::RowMetadata;

#[derive(Debug, Error)]
pub enum AcousticsError {
    #[error("cannot synthesize an empty piece")]
    EmptyPiece,
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("signal needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("cutoff {cutoff} Hz requires a sample rate above {} Hz, got {sample_rate}", 2.0 * cutoff)]
    CutoffTooHigh { cutoff: f64, sample_rate: f64 },
    #[error("envelope of {got} samples is shorter than one period of the lowest band ({needed} samples)")]
    TooShort { needed: usize, got: usize },
    #[error("need at least 3 troughs for cycle rates, got {0}")]
    TooFewCycles(usize),
    #[error("malformed WAV: {0}")]
    BadWav(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono audio buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            samples,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Metadata key for grouped acoustic reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Decade,
    Style,
    Instrument,
    Performer,
}

impl GroupKey {
    pub const ALL: [GroupKey; 4] = [
        GroupKey::Decade,
        GroupKey::Style,
        GroupKey::Instrument,
        GroupKey::Performer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Decade => "decade",
            GroupKey::Style => "style",
            GroupKey::Instrument => "instrument",
            GroupKey::Performer => "performer",
        }
    }

    /// The group label a row falls into.
    pub fn label_of(self, meta: &RowMetadata) -> String {
        match self {
            GroupKey::Decade => meta.decade.to_string(),
            GroupKey::Style => meta.style.clone(),
            GroupKey::Instrument => meta.instrument.clone(),
            GroupKey::Performer => meta.performer.clone(),
        }
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decade" => Ok(GroupKey::Decade),
            "style" => Ok(GroupKey::Style),
            "instrument" => Ok(GroupKey::Instrument),
            "performer" => Ok(GroupKey::Performer),
            other => Err(format!("unknown group key {other:?}")),
        }
    }
}

/// Per-group unweighted mean of per-piece band means.
///
/// Input rows pair each piece's metadata with its per-band time-mean power.
/// Groups that end up empty are dropped; the returned warnings name them.
pub fn mean_power_by_group(
    rows: &[(RowMetadata, Vec<f64>)],
    group_key: GroupKey,
) -> (std::collections::BTreeMap<String, Vec<f64>>, Vec<String>) {
    use std::collections::BTreeMap;
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (meta, bands) in rows {
        let label = group_key.label_of(meta);
        let entry = sums
            .entry(label)
            .or_insert_with(|| (vec![0.0; bands.len()], 0));
        for (acc, &v) in entry.0.iter_mut().zip(bands) {
            *acc += v;
        }
        entry.1 += 1;
    }
    let mut warnings = Vec::new();
    let mut means = BTreeMap::new();
    for (label, (sum, count)) in sums {
        if count == 0 || sum.is_empty() {
            warnings.push(format!("group {label:?} has no usable pieces, dropped"));
            continue;
        }
        means.insert(label, sum.iter().map(|v| v / count as f64).collect());
    }
    (means, warnings)
}
