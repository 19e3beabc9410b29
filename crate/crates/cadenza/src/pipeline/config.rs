//! Run configuration: a TOML file with one table per subsystem.
//!
//! Parsing is strict: unknown keys are rejected by name, required keys are
//! reported by name, and every value is validated before a run starts. All
//! knobs default to the toolkit's standard analysis settings, so a minimal
//! config is just `manifest = "corpus/manifest.csv"`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Value;

use crate::acoustics::{GroupKey, ScalogramParams};
use crate::corpus::records::CsvSchema;
use crate::corpus::{PitchMode, RhythmParams};
use crate::dynamics::Measure;
use crate::embedding::TsneConfig;
use crate::hbsl::HbslConfig;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "CADENZA_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("missing required key {0:?}")]
    MissingRequired(String),
    #[error("bad value for {key:?}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("config is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pipeline stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Dynamics,
    Embed,
    Acoustics,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Dynamics,
        Stage::Embed,
        Stage::Acoustics,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Dynamics => "dynamics",
            Stage::Embed => "embed",
            Stage::Acoustics => "acoustics",
            Stage::Report => "report",
        }
    }

    fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Dynamics => &[Stage::Ingest],
            Stage::Embed => &[Stage::Dynamics],
            Stage::Acoustics => &[Stage::Ingest],
            Stage::Report => &[Stage::Embed, Stage::Acoustics],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ingest" => Ok(Stage::Ingest),
            "dynamics" => Ok(Stage::Dynamics),
            "embed" => Ok(Stage::Embed),
            "acoustics" => Ok(Stage::Acoustics),
            "report" => Ok(Stage::Report),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

/// Close a stage selection under dependencies, in canonical order.
pub fn stage_closure(requested: &[Stage]) -> Vec<Stage> {
    let mut selected = BTreeSet::new();
    let mut queue: Vec<Stage> = requested.to_vec();
    while let Some(stage) = queue.pop() {
        if selected.insert(stage) {
            queue.extend_from_slice(stage.dependencies());
        }
    }
    Stage::ALL
        .into_iter()
        .filter(|s| selected.contains(s))
        .collect()
}

/// Per-piece learning from a flat prior, or priming each piece with counts
/// accumulated from earlier-year pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningMode {
    #[default]
    PerPiece,
    CorpusPrimed,
}

impl std::str::FromStr for LearningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_piece" => Ok(LearningMode::PerPiece),
            "corpus_primed" => Ok(LearningMode::CorpusPrimed),
            other => Err(format!("unknown learning mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcousticsConfig {
    pub sample_rate: f64,
    pub cutoff_hz: f64,
    pub prominence: f64,
    pub envelope_frame_rate: f64,
    pub scalogram: ScalogramParams,
    pub write_scalograms: bool,
    pub write_debug_wav: bool,
}

impl Default for AcousticsConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000.0,
            cutoff_hz: 40.0,
            prominence: 0.05,
            envelope_frame_rate: 200.0,
            scalogram: ScalogramParams::default(),
            write_scalograms: true,
            write_debug_wav: false,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub stages: Vec<Stage>,
    pub hbsl: HbslConfig,
    pub learning_mode: LearningMode,
    pub pitch_mode: PitchMode,
    pub rhythm: RhythmParams,
    pub csv: CsvSchema,
    pub write_models: bool,
    pub tsne: TsneConfig,
    pub embed_measures: Vec<Measure>,
    pub zscore_rows: bool,
    pub acoustics: AcousticsConfig,
    pub report_keys: Vec<GroupKey>,
}

impl RunConfig {
    /// Stable digest of the canonicalized config.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate a config file.
pub fn validate_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    let config = parse_config(&text)?;
    Ok(config)
}

/// Parse and validate config text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: Value = text.parse()?;
    let root = value.as_table().expect("top-level TOML is a table");
    let mut reader = TableReader::new(String::new(), root);

    let manifest = PathBuf::from(reader.require_string("manifest")?);
    let out_dir = PathBuf::from(reader.string("out_dir", "out")?);
    let jobs = reader.usize("jobs", 0)?;
    let stage_names = reader.string_array("stages", &Stage::ALL.map(|s| s.as_str().to_string()))?;
    let mut stages = Vec::new();
    for name in &stage_names {
        stages.push(name.parse::<Stage>().map_err(|reason| ConfigError::BadValue {
            key: "stages".into(),
            reason,
        })?);
    }
    let stages = stage_closure(&stages);

    let mut hbsl = HbslConfig::default();
    let mut learning_mode = LearningMode::default();
    if let Some(mut section) = reader.section("hbsl")? {
        hbsl.alpha = section.f64("alpha", hbsl.alpha)?;
        hbsl.gate_constant = section.f64("gate_constant", hbsl.gate_constant)?;
        hbsl.max_levels = section.usize("max_levels", hbsl.max_levels)?;
        hbsl.order = section.usize("order", hbsl.order)?;
        learning_mode = section.parse_enum("learning_mode", learning_mode)?;
        section.finish()?;
    }

    let mut pitch_mode = PitchMode::default();
    if let Some(mut section) = reader.section("pitch")? {
        pitch_mode = section.parse_enum("mode", pitch_mode)?;
        section.finish()?;
    }

    let mut rhythm = RhythmParams::default();
    if let Some(mut section) = reader.section("rhythm")? {
        rhythm.bins_per_octave = section.usize("bins_per_octave", rhythm.bins_per_octave as usize)? as u32;
        rhythm.clamp = section.usize("clamp", rhythm.clamp as usize)? as u32;
        section.finish()?;
    }

    let mut csv = CsvSchema::default();
    if let Some(mut section) = reader.section("csv")? {
        csv.onset = section.string("onset", &csv.onset)?;
        csv.duration = section.string("duration", &csv.duration)?;
        csv.pitch = section.string("pitch", &csv.pitch)?;
        csv.velocity = section.string("velocity", &csv.velocity)?;
        csv.performer = section.string("performer", &csv.performer)?;
        csv.year = section.string("year", &csv.year)?;
        csv.style = section.string("style", &csv.style)?;
        csv.instrument = section.string("instrument", &csv.instrument)?;
        section.finish()?;
    }

    let mut write_models = false;
    if let Some(mut section) = reader.section("dynamics")? {
        write_models = section.bool("write_models", write_models)?;
        section.finish()?;
    }

    let mut tsne = TsneConfig::default();
    let mut embed_measures = vec![Measure::BayesianSurprise, Measure::Entropy];
    let mut zscore_rows = false;
    if let Some(mut section) = reader.section("tsne")? {
        tsne.perplexity = section.f64("perplexity", tsne.perplexity)?;
        tsne.early_exaggeration = section.f64("early_exaggeration", tsne.early_exaggeration)?;
        tsne.seed = section.usize("seed", tsne.seed as usize)? as u64;
        tsne.iterations = section.usize("iterations", tsne.iterations)?;
        tsne.exaggeration_iters = section.usize("exaggeration_iters", tsne.exaggeration_iters)?;
        tsne.learning_rate = section.f64("learning_rate", tsne.learning_rate)?;
        let names = section.string_array(
            "measures",
            &embed_measures.iter().map(|m| m.as_str().to_string()).collect::<Vec<_>>(),
        )?;
        embed_measures = Vec::new();
        for name in names {
            embed_measures.push(name.parse().map_err(|reason| ConfigError::BadValue {
                key: "tsne.measures".into(),
                reason,
            })?);
        }
        zscore_rows = section.bool("zscore_rows", zscore_rows)?;
        section.finish()?;
    }

    let mut acoustics = AcousticsConfig::default();
    if let Some(mut section) = reader.section("acoustics")? {
        acoustics.sample_rate = section.f64("sample_rate", acoustics.sample_rate)?;
        acoustics.cutoff_hz = section.f64("cutoff_hz", acoustics.cutoff_hz)?;
        acoustics.prominence = section.f64("prominence", acoustics.prominence)?;
        acoustics.envelope_frame_rate =
            section.f64("envelope_frame_rate", acoustics.envelope_frame_rate)?;
        acoustics.scalogram.bands = section.usize("bands", acoustics.scalogram.bands)?;
        acoustics.scalogram.low_hz = section.f64("band_low_hz", acoustics.scalogram.low_hz)?;
        acoustics.scalogram.high_hz = section.f64("band_high_hz", acoustics.scalogram.high_hz)?;
        acoustics.write_scalograms = section.bool("write_scalograms", acoustics.write_scalograms)?;
        acoustics.write_debug_wav = section.bool("write_debug_wav", acoustics.write_debug_wav)?;
        section.finish()?;
    }

    let mut report_keys = GroupKey::ALL.to_vec();
    if let Some(mut section) = reader.section("report")? {
        let names = section.string_array(
            "group_keys",
            &report_keys.iter().map(|k| k.as_str().to_string()).collect::<Vec<_>>(),
        )?;
        report_keys = Vec::new();
        for name in names {
            report_keys.push(name.parse().map_err(|reason| ConfigError::BadValue {
                key: "report.group_keys".into(),
                reason,
            })?);
        }
        section.finish()?;
    }

    reader.finish()?;

    let config = RunConfig {
        manifest,
        out_dir,
        jobs,
        stages,
        hbsl,
        learning_mode,
        pitch_mode,
        rhythm,
        csv,
        write_models,
        tsne,
        embed_measures,
        zscore_rows,
        acoustics,
        report_keys,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    let bad = |key: &str, reason: &str| {
        Err(ConfigError::BadValue {
            key: key.into(),
            reason: reason.into(),
        })
    };
    if !(config.hbsl.alpha > 0.0) {
        return bad("hbsl.alpha", "must be positive");
    }
    if !(config.hbsl.gate_constant > 0.0) {
        return bad("hbsl.gate_constant", "must be positive");
    }
    if config.hbsl.max_levels == 0 {
        return bad("hbsl.max_levels", "must be at least 1");
    }
    if config.hbsl.order == 0 {
        return bad("hbsl.order", "must be at least 1");
    }
    if config.rhythm.bins_per_octave == 0 {
        return bad("rhythm.bins_per_octave", "must be at least 1");
    }
    if !(config.tsne.perplexity > 0.0) {
        return bad("tsne.perplexity", "must be positive");
    }
    if !(config.tsne.early_exaggeration > 0.0) {
        return bad("tsne.early_exaggeration", "must be positive");
    }
    if !(config.tsne.learning_rate > 0.0) {
        return bad("tsne.learning_rate", "must be positive");
    }
    if config.tsne.iterations == 0 {
        return bad("tsne.iterations", "must be at least 1");
    }
    if config.embed_measures.is_empty() {
        return bad("tsne.measures", "must name at least one measure");
    }
    let ac = &config.acoustics;
    if !(ac.cutoff_hz > 0.0) {
        return bad("acoustics.cutoff_hz", "must be positive");
    }
    if ac.sample_rate <= 2.0 * ac.cutoff_hz {
        return bad("acoustics.sample_rate", "must exceed twice the cutoff");
    }
    if !(0.0..=1.0).contains(&ac.prominence) {
        return bad("acoustics.prominence", "must lie in [0, 1]");
    }
    if ac.envelope_frame_rate <= 2.0 * ac.scalogram.high_hz {
        return bad(
            "acoustics.envelope_frame_rate",
            "must exceed twice the highest scalogram band",
        );
    }
    if ac.scalogram.bands == 0 {
        return bad("acoustics.bands", "must be at least 1");
    }
    if !(ac.scalogram.low_hz > 0.0) || ac.scalogram.low_hz >= ac.scalogram.high_hz {
        return bad("acoustics.band_low_hz", "must be positive and below band_high_hz");
    }
    if config.report_keys.is_empty() {
        return bad("report.group_keys", "must name at least one key");
    }
    Ok(())
}

/// Tracks which keys of a TOML table were consumed so leftovers can be
/// reported as unknown, with their full dotted path.
struct TableReader<'a> {
    path: String,
    table: &'a toml::value::Table,
    used: BTreeSet<String>,
}

impl<'a> TableReader<'a> {
    fn new(path: String, table: &'a toml::value::Table) -> Self {
        Self {
            path,
            table,
            used: BTreeSet::new(),
        }
    }

    fn full_key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.table.get(key)
    }

    fn section(&mut self, key: &str) -> Result<Option<TableReader<'a>>, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(table)) => Ok(Some(TableReader::new(full, table))),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a table".into(),
            }),
        }
    }

    fn require_string(&mut self, key: &str) -> Result<String, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a string".into(),
            }),
            None => Err(ConfigError::MissingRequired(full)),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a string".into(),
            }),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(*v),
            Some(Value::Integer(v)) => Ok(*v as f64),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a number".into(),
            }),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a non-negative integer".into(),
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(v)) => Ok(*v),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a boolean".into(),
            }),
        }
    }

    fn string_array(&mut self, key: &str, default: &[String]) -> Result<Vec<String>, ConfigError> {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(items)) => items
                .iter()
                .map(|item| match item {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(ConfigError::BadValue {
                        key: full.clone(),
                        reason: "expected an array of strings".into(),
                    }),
                })
                .collect(),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected an array of strings".into(),
            }),
        }
    }

    fn parse_enum<T>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: std::str::FromStr<Err = String>,
    {
        let full = self.full_key(key);
        match self.get(key) {
            None => Ok(default),
            Some(Value::String(s)) => s.parse().map_err(|reason| ConfigError::BadValue {
                key: full,
                reason,
            }),
            Some(_) => Err(ConfigError::BadValue {
                key: full,
                reason: "expected a string".into(),
            }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        for key in self.table.keys() {
            if !self.used.contains(key) {
                return Err(ConfigError::UnknownKey(self.full_key(key)));
            }
        }
        Ok(())
    }
}
