//! Per-piece time series of surprise, Bayesian surprise, and entropy, and
//! their assembly into a fixed-width corpus feature matrix.
//!
//! Series lengths vary with piece length, so rows are length-normalized by
//! linear interpolation to the longest series in the selection before they
//! are stacked.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    symbolize_joint, symbolize_pitch, symbolize_pitch_by_onset, symbolize_rhythm, CorpusError,
    Domain, Piece, PitchMode, RhythmParams, SymbolSequence,
};
use crate::hbsl::{learn_hierarchy, EventRecord, HbslConfig, HbslError, LearnOutcome};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("cannot interpolate an empty series")]
    EmptyInput,
    #[error("piece {0:?} has too few events for dynamics (needs 2 distinct onsets)")]
    TooFewEvents(String),
    #[error("feature matrix needs at least 2 pieces, got {0}")]
    InsufficientPieces(usize),
    #[error("no series selected for domain {domain} and measure {measure}")]
    EmptySelection { domain: Domain, measure: Measure },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Hbsl(#[from] HbslError),
}

/// The three per-event measures, all in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Surprise,
    BayesianSurprise,
    Entropy,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Surprise, Measure::BayesianSurprise, Measure::Entropy];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Surprise => "surprise",
            Measure::BayesianSurprise => "bayesian_surprise",
            Measure::Entropy => "entropy",
        }
    }

    pub fn extract(self, record: &EventRecord) -> f64 {
        match self {
            Measure::Surprise => record.surprise_bits,
            Measure::BayesianSurprise => record.bayesian_surprise_bits,
            Measure::Entropy => record.entropy_bits,
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surprise" => Ok(Measure::Surprise),
            "bayesian_surprise" => Ok(Measure::BayesianSurprise),
            "entropy" => Ok(Measure::Entropy),
            other => Err(format!("unknown measure {other:?}")),
        }
    }
}

/// One per-event trajectory for one piece, domain, and measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsSeries {
    pub piece_id: String,
    pub domain: Domain,
    pub measure: Measure,
    pub values: Vec<f64>,
}

/// Symbolization and learning knobs for dynamics extraction.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub pitch_mode: PitchMode,
    pub rhythm: RhythmParams,
    pub hbsl: HbslConfig,
}

/// Linearly resample `values` to `target_len` points.
///
/// Sample `j` of the output reads position `j·(n−1)/(target_len−1)` of the
/// input; endpoints are preserved exactly and a single-point input
/// broadcasts. Resampling to the native length returns the input unchanged.
pub fn interpolate_series(values: &[f64], target_len: usize) -> Result<Vec<f64>, DynamicsError> {
    if values.is_empty() {
        return Err(DynamicsError::EmptyInput);
    }
    let n = values.len();
    if target_len == 1 {
        return Ok(vec![values[0]]);
    }
    if n == 1 {
        return Ok(vec![values[0]; target_len]);
    }
    let scale = (n - 1) as f64 / (target_len - 1) as f64;
    let mut out = Vec::with_capacity(target_len);
    for j in 0..target_len {
        let pos = j as f64 * scale;
        let idx = (pos.floor() as usize).min(n - 1);
        let frac = pos - idx as f64;
        let value = if frac == 0.0 || idx + 1 >= n {
            values[idx]
        } else {
            values[idx] + frac * (values[idx + 1] - values[idx])
        };
        out.push(value);
    }
    Ok(out)
}

/// The full learning output for one piece: models plus all 9 series
/// (3 domains × 3 measures).
#[derive(Debug)]
pub struct PieceDynamics {
    pub piece_id: String,
    pub series: Vec<DynamicsSeries>,
    pub outcomes: Vec<(Domain, LearnOutcome)>,
}

impl PieceDynamics {
    pub fn series_for(&self, domain: Domain, measure: Measure) -> Option<&DynamicsSeries> {
        self.series
            .iter()
            .find(|s| s.domain == domain && s.measure == measure)
    }
}

/// Symbolize a piece in one domain.
pub fn symbolize_domain(
    piece: &Piece,
    domain: Domain,
    config: &DynamicsConfig,
) -> Result<SymbolSequence, CorpusError> {
    match domain {
        Domain::Pitch => symbolize_pitch(piece, config.pitch_mode),
        Domain::Rhythm => symbolize_rhythm(piece, config.rhythm),
        Domain::PitchRhythm => {
            let pitch = symbolize_pitch_by_onset(piece, config.pitch_mode)?;
            let rhythm = symbolize_rhythm(piece, config.rhythm)?;
            symbolize_joint(&pitch, &rhythm)
        }
    }
}

/// Expand one domain's learning outcome into its three measure series.
pub fn series_from_outcome(
    piece_id: &str,
    domain: Domain,
    records: &[EventRecord],
) -> Vec<DynamicsSeries> {
    Measure::ALL
        .iter()
        .map(|&measure| DynamicsSeries {
            piece_id: piece_id.to_string(),
            domain,
            measure,
            values: records.iter().map(|r| measure.extract(r)).collect(),
        })
        .collect()
}

/// Learn all three domains for one piece with fresh models and return the
/// level-0 dynamics.
pub fn per_piece_dynamics(
    piece: &Piece,
    config: &DynamicsConfig,
) -> Result<PieceDynamics, DynamicsError> {
    let mut series = Vec::with_capacity(9);
    let mut outcomes = Vec::with_capacity(3);
    for domain in Domain::ALL {
        let seq = symbolize_domain(piece, domain, config).map_err(|e| match e {
            CorpusError::TooFewEvents { .. } | CorpusError::EmptyPiece => {
                DynamicsError::TooFewEvents(piece.id.clone())
            }
            other => DynamicsError::Corpus(other),
        })?;
        let outcome = learn_hierarchy(&seq.symbols, seq.alphabet_size(), config.hbsl.clone())?;
        series.extend(series_from_outcome(&piece.id, domain, &outcome.dynamics));
        outcomes.push((domain, outcome));
    }
    Ok(PieceDynamics {
        piece_id: piece.id.clone(),
        series,
        outcomes,
    })
}

/// Metadata carried along with each feature-matrix row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMetadata {
    pub piece_id: String,
    pub performer: String,
    pub year: i32,
    pub decade: i32,
    pub style: String,
    pub instrument: String,
}

impl RowMetadata {
    pub fn from_piece(piece: &Piece) -> Self {
        Self {
            piece_id: piece.id.clone(),
            performer: piece.performer.clone(),
            year: piece.year,
            decade: piece.decade(),
            style: piece.style.clone(),
            instrument: piece.instrument.clone(),
        }
    }
}

/// Fixed-width matrix of interpolated series, rows sorted by piece id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub domain: Domain,
    pub measure: Measure,
    pub row_length: usize,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<RowMetadata>,
}

/// Build the feature matrix for one (domain, measure) selection.
///
/// Every selected series is interpolated to the length of the longest one;
/// rows are ordered by piece id.
pub fn build_feature_matrix(
    dynamics: &[(RowMetadata, &PieceDynamics)],
    domain: Domain,
    measure: Measure,
) -> Result<FeatureMatrix, DynamicsError> {
    let mut selected: Vec<(&RowMetadata, &DynamicsSeries)> = dynamics
        .iter()
        .filter_map(|(meta, d)| d.series_for(domain, measure).map(|s| (meta, s)))
        .collect();
    if selected.len() < 2 {
        return Err(DynamicsError::InsufficientPieces(selected.len()));
    }
    selected.sort_by(|a, b| a.0.piece_id.cmp(&b.0.piece_id));
    let row_length = selected
        .iter()
        .map(|(_, s)| s.values.len())
        .max()
        .ok_or(DynamicsError::EmptySelection { domain, measure })?;
    let mut rows = Vec::with_capacity(selected.len());
    let mut metadata = Vec::with_capacity(selected.len());
    for (meta, s) in selected {
        rows.push(interpolate_series(&s.values, row_length)?);
        metadata.push(meta.clone());
    }
    Ok(FeatureMatrix {
        domain,
        measure,
        row_length,
        rows,
        metadata,
    })
}
