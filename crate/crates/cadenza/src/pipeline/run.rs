//! Stage orchestration.
//!
//! Stages run in dependency order over an in-memory corpus. Per-piece
//! failures are isolated: the piece is dropped with a warning and every
//! other piece's numbers are unaffected. Cross-piece reductions (matrix
//! widths, group means, pooled densities) always run over piece-id-sorted
//! data, so results are independent of thread count.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{
    self, decimate_envelope, demodulate, detect_troughs, horizontal_rates, mean_power_by_group,
    rate_density, scalogram, synthesize, zscore, CycleStats, Scalogram,
};
use crate::corpus::records::{load_piece, read_manifest, write_piece_csv, ManifestEntry};
use crate::corpus::{Domain, Piece, SymbolSequence};
use crate::dynamics::{
    build_feature_matrix, per_piece_dynamics, series_from_outcome, DynamicsConfig, Measure,
    PieceDynamics, RowMetadata,
};
use crate::embedding::{tsne, EmbeddedPoint};
use crate::hbsl::{ContextToken, HbslModel, LearnOutcome, Symbol};

use super::config::{LearningMode, RunConfig, Stage, OUT_DIR_ENV};
use super::output::{csv_text, fmt_value, safe_name, OutputSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus manifest {0:?} lists no usable pieces")]
    EmptyCorpus(PathBuf),
    #[error("stage {stage} failed: {reason}")]
    StageFailed { stage: Stage, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot read manifest: {0}")]
    Manifest(#[from] crate::corpus::CorpusError),
}

/// Outcome summary of one run, persisted as `run_manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub version: String,
    pub stages: Vec<StageReport>,
    pub pieces_loaded: usize,
    pub piece_failures: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

impl RunReport {
    /// True when every requested stage completed but some pieces failed.
    pub fn is_partial(&self) -> bool {
        !self.piece_failures.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: String,
    pub detail: String,
}

/// Resolve the output directory: environment override, then config.
pub fn resolve_out_dir(config: &RunConfig) -> PathBuf {
    match std::env::var(OUT_DIR_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => config.out_dir.clone(),
    }
}

/// Execute the configured stages.
pub fn run(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    let out_root = resolve_out_dir(config);
    std::fs::create_dir_all(&out_root)?;
    let mut outputs = OutputSet::new(&out_root);
    let mut warnings: Vec<String> = Vec::new();
    let mut piece_failures: BTreeMap<String, String> = BTreeMap::new();
    let mut stage_reports = Vec::new();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::StageFailed {
            stage: Stage::Ingest,
            reason: format!("cannot build worker pool: {e}"),
        })?;

    let dynamics_config = DynamicsConfig {
        pitch_mode: config.pitch_mode,
        rhythm: config.rhythm,
        hbsl: config.hbsl.clone(),
    };

    // Ingest is a dependency of everything and always runs.
    let pieces = ingest(
        config,
        &pool,
        &mut outputs,
        &mut warnings,
        &mut piece_failures,
    )?;
    stage_reports.push(StageReport {
        stage: Stage::Ingest,
        status: "ok".into(),
        detail: format!("{} pieces", pieces.len()),
    });

    let mut dynamics_data: Vec<(RowMetadata, PieceDynamics)> = Vec::new();
    if config.stages.contains(&Stage::Dynamics) {
        dynamics_data = compute_dynamics(
            config,
            &dynamics_config,
            &pool,
            &pieces,
            &mut warnings,
            &mut piece_failures,
        );
        write_dynamics_outputs(config, &dynamics_data, &mut outputs)?;
        stage_reports.push(StageReport {
            stage: Stage::Dynamics,
            status: "ok".into(),
            detail: format!("{} pieces", dynamics_data.len()),
        });
    }

    if config.stages.contains(&Stage::Embed) {
        let embeddings = embed(config, &dynamics_data, &mut outputs)?;
        stage_reports.push(StageReport {
            stage: Stage::Embed,
            status: "ok".into(),
            detail: format!("{} measures", embeddings.len()),
        });
    }

    let mut acoustic_rows: Vec<PieceAcoustics> = Vec::new();
    if config.stages.contains(&Stage::Acoustics) {
        acoustic_rows = compute_acoustics(
            config,
            &pool,
            &pieces,
            &mut warnings,
            &mut piece_failures,
        );
        write_acoustics_outputs(config, &acoustic_rows, &mut outputs)?;
        stage_reports.push(StageReport {
            stage: Stage::Acoustics,
            status: "ok".into(),
            detail: format!("{} pieces", acoustic_rows.len()),
        });
    }

    if config.stages.contains(&Stage::Report) {
        group_report(config, &acoustic_rows, &mut outputs, &mut warnings)?;
        stage_reports.push(StageReport {
            stage: Stage::Report,
            status: "ok".into(),
            detail: format!("{} group keys", config.report_keys.len()),
        });
    }

    let mut inventory = outputs.inventory();
    inventory.push("run_manifest.json".to_string());
    inventory.sort();
    let report = RunReport {
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        stages: stage_reports,
        pieces_loaded: pieces.len(),
        piece_failures,
        warnings,
        outputs: inventory,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_json =
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    outputs.write("run_manifest.json", manifest_json.as_bytes())?;
    Ok(report)
}

fn ingest(
    config: &RunConfig,
    pool: &rayon::ThreadPool,
    outputs: &mut OutputSet,
    warnings: &mut Vec<String>,
    piece_failures: &mut BTreeMap<String, String>,
) -> Result<Vec<Piece>, PipelineError> {
    let manifest_file = std::fs::File::open(&config.manifest)?;
    let mut entries = read_manifest(manifest_file)?;
    // Manifest ids are unique; keep the first occurrence of a duplicate.
    let mut seen = std::collections::BTreeSet::new();
    entries.retain(|e| {
        let fresh = seen.insert(e.id.clone());
        if !fresh {
            warnings.push(format!("duplicate manifest id {:?} ignored", e.id));
        }
        fresh
    });
    if entries.is_empty() {
        return Err(PipelineError::EmptyCorpus(config.manifest.clone()));
    }

    let base_dir = config
        .manifest
        .parent()
        .map(PathBuf::from)
        .unwrap_or_default();
    let loaded: Vec<(ManifestEntry, Result<_, _>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let result = load_piece(entry, &base_dir, &config.csv);
                (entry.clone(), result)
            })
            .collect()
    });

    let mut pieces = Vec::new();
    for (entry, result) in loaded {
        match result {
            Ok((piece, piece_warnings)) => {
                warnings.extend(piece_warnings);
                pieces.push(piece);
            }
            Err(e) => {
                warnings.push(format!(
                    "piece {:?} ({}) skipped: {e}",
                    entry.id,
                    entry.path.display()
                ));
                piece_failures.insert(entry.id.clone(), e.to_string());
            }
        }
    }
    if pieces.is_empty() {
        return Err(PipelineError::EmptyCorpus(config.manifest.clone()));
    }
    pieces.sort_by(|a, b| a.id.cmp(&b.id));

    for piece in &pieces {
        let mut csv_bytes = Vec::new();
        write_piece_csv(piece, &mut csv_bytes).map_err(|e| PipelineError::StageFailed {
            stage: Stage::Ingest,
            reason: e.to_string(),
        })?;
        outputs.write(&format!("ingest/pieces/{}.csv", safe_name(&piece.id)), &csv_bytes)?;

        for domain in Domain::ALL {
            match crate::dynamics::symbolize_domain(piece, domain, &DynamicsConfig {
                pitch_mode: config.pitch_mode,
                rhythm: config.rhythm,
                hbsl: config.hbsl.clone(),
            }) {
                Ok(seq) => {
                    let json = symbol_sequence_json(&seq);
                    outputs.write(
                        &format!("ingest/symbols/{}_{}.json", safe_name(&piece.id), domain),
                        json.as_bytes(),
                    )?;
                }
                Err(e) => {
                    warnings.push(format!("piece {:?} not symbolized for {domain}: {e}", piece.id));
                }
            }
        }
    }
    Ok(pieces)
}

fn symbol_sequence_json(seq: &SymbolSequence) -> String {
    #[derive(Serialize)]
    struct SymbolDoc<'a> {
        piece_id: &'a str,
        domain: Domain,
        k: usize,
        alphabet: &'a [String],
        symbols: &'a [usize],
    }
    serde_json::to_string_pretty(&SymbolDoc {
        piece_id: &seq.piece_id,
        domain: seq.domain,
        k: seq.alphabet_size(),
        alphabet: &seq.alphabet,
        symbols: &seq.symbols,
    })
    .expect("sequence serializes")
        + "\n"
}

fn compute_dynamics(
    config: &RunConfig,
    dynamics_config: &DynamicsConfig,
    pool: &rayon::ThreadPool,
    pieces: &[Piece],
    warnings: &mut Vec<String>,
    piece_failures: &mut BTreeMap<String, String>,
) -> Vec<(RowMetadata, PieceDynamics)> {
    match config.learning_mode {
        LearningMode::PerPiece => {
            let results: Vec<_> = pool.install(|| {
                pieces
                    .par_iter()
                    .map(|piece| (piece, per_piece_dynamics(piece, dynamics_config)))
                    .collect()
            });
            let mut data = Vec::new();
            for (piece, result) in results {
                match result {
                    Ok(d) => data.push((RowMetadata::from_piece(piece), d)),
                    Err(e) => {
                        warnings.push(format!("dynamics skipped for {:?}: {e}", piece.id));
                        piece_failures.insert(piece.id.clone(), e.to_string());
                    }
                }
            }
            data
        }
        LearningMode::CorpusPrimed => {
            primed_dynamics(pieces, dynamics_config, warnings, piece_failures)
        }
    }
}

/// Corpus-primed learning: pieces are processed in (year, id) order over a
/// corpus-wide alphabet per domain, and each piece's level-0 model is
/// seeded with the transition counts of every earlier-year piece. Chunk
/// inventories still reset per piece.
fn primed_dynamics(
    pieces: &[Piece],
    config: &DynamicsConfig,
    warnings: &mut Vec<String>,
    piece_failures: &mut BTreeMap<String, String>,
) -> Vec<(RowMetadata, PieceDynamics)> {
    // Symbolize everything first; failures drop the piece up front.
    let mut symbolized: Vec<(&Piece, BTreeMap<Domain, SymbolSequence>)> = Vec::new();
    for piece in pieces {
        let mut by_domain = BTreeMap::new();
        let mut failed = None;
        for domain in Domain::ALL {
            match crate::dynamics::symbolize_domain(piece, domain, config) {
                Ok(seq) => {
                    by_domain.insert(domain, seq);
                }
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        match failed {
            None => symbolized.push((piece, by_domain)),
            Some(reason) => {
                warnings.push(format!("dynamics skipped for {:?}: {reason}", piece.id));
                piece_failures.insert(piece.id.clone(), reason);
            }
        }
    }

    // Corpus-wide label alphabets.
    let mut global: BTreeMap<Domain, Vec<String>> = BTreeMap::new();
    for domain in Domain::ALL {
        let mut labels: Vec<String> = symbolized
            .iter()
            .flat_map(|(_, by_domain)| by_domain[&domain].alphabet.iter().cloned())
            .collect();
        labels.sort();
        labels.dedup();
        global.insert(domain, labels);
    }

    let mut order: Vec<usize> = (0..symbolized.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (symbolized[a].0, symbolized[b].0);
        pa.year.cmp(&pb.year).then_with(|| pa.id.cmp(&pb.id))
    });

    // Accumulated level-0 transition counts per domain, keyed on global ids.
    let mut accumulated: BTreeMap<Domain, BTreeMap<(Vec<ContextToken>, Symbol), u64>> =
        BTreeMap::new();
    // Counts from the current year are withheld until the year completes so
    // same-year pieces do not prime each other.
    let mut pending_year: Vec<(Domain, Vec<(Vec<ContextToken>, Symbol)>)> = Vec::new();
    let mut current_year: Option<i32> = None;

    let mut data = Vec::new();
    for idx in order {
        let (piece, by_domain) = &symbolized[idx];
        if current_year != Some(piece.year) {
            for (domain, transitions) in pending_year.drain(..) {
                let acc = accumulated.entry(domain).or_default();
                for key in transitions {
                    *acc.entry(key).or_insert(0) += 1;
                }
            }
            current_year = Some(piece.year);
        }

        let mut series = Vec::with_capacity(9);
        let mut outcomes = Vec::with_capacity(3);
        let mut failed = None;
        for domain in Domain::ALL {
            let alphabet = &global[&domain];
            let symbols = recode_to_alphabet(&by_domain[&domain], alphabet);
            let mut model = HbslModel::new(alphabet.len(), config.hbsl.clone());
            if let Some(acc) = accumulated.get(&domain) {
                let primed = acc.iter().map(|((ctx, sym), &n)| (ctx.clone(), *sym, n));
                if let Err(e) = model.prime_level0(primed) {
                    failed = Some(e.to_string());
                    break;
                }
            }
            let mut records = Vec::with_capacity(symbols.len());
            let mut observe_failed = None;
            for &s in &symbols {
                match model.observe(s) {
                    Ok(r) => records.push(r),
                    Err(e) => {
                        observe_failed = Some(e.to_string());
                        break;
                    }
                }
            }
            if let Some(reason) = observe_failed {
                failed = Some(reason);
                break;
            }
            if let Err(e) = model.finish() {
                failed = Some(e.to_string());
                break;
            }
            pending_year.push((domain, transition_walk(&symbols, config.hbsl.order)));
            series.extend(series_from_outcome(&piece.id, domain, &records));
            outcomes.push((domain, LearnOutcome { model, dynamics: records }));
        }
        match failed {
            None => data.push((
                RowMetadata::from_piece(piece),
                PieceDynamics {
                    piece_id: piece.id.clone(),
                    series,
                    outcomes,
                },
            )),
            Some(reason) => {
                warnings.push(format!("dynamics skipped for {:?}: {reason}", piece.id));
                piece_failures.insert(piece.id.clone(), reason);
            }
        }
    }

    data.sort_by(|a, b| a.0.piece_id.cmp(&b.0.piece_id));
    data
}

/// Re-express a sequence's symbols as ids into a shared label alphabet.
fn recode_to_alphabet(seq: &SymbolSequence, alphabet: &[String]) -> Vec<Symbol> {
    seq.symbols
        .iter()
        .map(|&s| {
            let label = &seq.alphabet[s];
            alphabet
                .binary_search(label)
                .expect("global alphabet contains every piece label")
        })
        .collect()
}

/// The (context, symbol) transitions of a sequence under a given Markov
/// order, starting from the START context.
fn transition_walk(symbols: &[Symbol], order: usize) -> Vec<(Vec<ContextToken>, Symbol)> {
    let mut context = vec![ContextToken::Start; order];
    let mut walk = Vec::with_capacity(symbols.len());
    for &s in symbols {
        walk.push((context.clone(), s));
        context.remove(0);
        context.push(ContextToken::Sym(s));
    }
    walk
}

fn write_dynamics_outputs(
    config: &RunConfig,
    data: &[(RowMetadata, PieceDynamics)],
    outputs: &mut OutputSet,
) -> Result<(), PipelineError> {
    for domain in Domain::ALL {
        for measure in Measure::ALL {
            let mut rows = Vec::new();
            for (meta, dynamics) in data {
                if let Some(series) = dynamics.series_for(domain, measure) {
                    for (i, &v) in series.values.iter().enumerate() {
                        rows.push(vec![
                            meta.piece_id.clone(),
                            domain.to_string(),
                            measure.to_string(),
                            i.to_string(),
                            fmt_value(v),
                        ]);
                    }
                }
            }
            let text = csv_text(
                &["piece_id", "domain", "measure", "event_index", "value"],
                &rows,
            );
            outputs.write(
                &format!("dynamics/dynamics_{domain}_{measure}.csv"),
                text.as_bytes(),
            )?;
        }
    }

    if config.write_models {
        for (meta, dynamics) in data {
            for (domain, outcome) in &dynamics.outcomes {
                let snapshot = outcome.model.snapshot();
                let json = serde_json::to_string_pretty(&snapshot).expect("snapshot serializes");
                outputs.write(
                    &format!(
                        "dynamics/models/{}_{}.json",
                        safe_name(&meta.piece_id),
                        domain
                    ),
                    (json + "\n").as_bytes(),
                )?;
            }
        }
    }
    Ok(())
}

type MeasureEmbeddings = Vec<(Measure, Vec<(Domain, Vec<EmbeddedPoint>)>)>;

fn embed(
    config: &RunConfig,
    data: &[(RowMetadata, PieceDynamics)],
    outputs: &mut OutputSet,
) -> Result<MeasureEmbeddings, PipelineError> {
    let rows: Vec<(RowMetadata, &PieceDynamics)> = data
        .iter()
        .map(|(meta, d)| (meta.clone(), d))
        .collect();
    let mut all = Vec::new();
    for &measure in &config.embed_measures {
        let mut per_domain = Vec::new();
        for domain in Domain::ALL {
            let mut matrix = build_feature_matrix(&rows, domain, measure).map_err(|e| {
                PipelineError::StageFailed {
                    stage: Stage::Embed,
                    reason: e.to_string(),
                }
            })?;
            if config.zscore_rows {
                zscore_rows_in_place(&mut matrix.rows);
            }
            write_feature_matrix(&matrix, outputs)?;
            let points = tsne(&matrix, &config.tsne).map_err(|e| PipelineError::StageFailed {
                stage: Stage::Embed,
                reason: e.to_string(),
            })?;
            per_domain.push((domain, points));
        }
        write_embedding_csv(measure, &per_domain, outputs)?;
        all.push((measure, per_domain));
    }
    Ok(all)
}

fn zscore_rows_in_place(rows: &mut [Vec<f64>]) {
    for row in rows {
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 {
            let sd = var.sqrt();
            for v in row {
                *v = (*v - mean) / sd;
            }
        } else {
            for v in row {
                *v = 0.0;
            }
        }
    }
}

fn write_feature_matrix(
    matrix: &crate::dynamics::FeatureMatrix,
    outputs: &mut OutputSet,
) -> Result<(), PipelineError> {
    let mut header: Vec<String> = ["piece_id", "performer", "year", "decade", "style", "instrument"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..matrix.row_length).map(|i| format!("v{i}")));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();

    let rows: Vec<Vec<String>> = matrix
        .metadata
        .iter()
        .zip(&matrix.rows)
        .map(|(meta, row)| {
            let mut fields = vec![
                meta.piece_id.clone(),
                meta.performer.clone(),
                meta.year.to_string(),
                meta.decade.to_string(),
                meta.style.clone(),
                meta.instrument.clone(),
            ];
            fields.extend(row.iter().map(|&v| fmt_value(v)));
            fields
        })
        .collect();
    let text = csv_text(&header_refs, &rows);
    outputs.write(
        &format!(
            "embed/feature_matrix_{}_{}.csv",
            matrix.domain, matrix.measure
        ),
        text.as_bytes(),
    )?;
    Ok(())
}

fn write_embedding_csv(
    measure: Measure,
    per_domain: &[(Domain, Vec<EmbeddedPoint>)],
    outputs: &mut OutputSet,
) -> Result<(), PipelineError> {
    let mut rows = Vec::new();
    for (domain, points) in per_domain {
        for p in points {
            rows.push(vec![
                domain.to_string(),
                p.piece_id.clone(),
                fmt_value(p.x),
                fmt_value(p.y),
                p.metadata.decade.to_string(),
                p.metadata.performer.clone(),
                p.metadata.style.clone(),
                p.metadata.instrument.clone(),
            ]);
        }
    }
    let text = csv_text(
        &["domain", "piece_id", "x", "y", "decade", "performer", "style", "instrument"],
        &rows,
    );
    outputs.write(&format!("embed/embedding_{measure}.csv"), text.as_bytes())?;
    Ok(())
}

/// Per-piece acoustic results kept for reporting.
pub struct PieceAcoustics {
    pub meta: RowMetadata,
    pub band_frequencies: Vec<f64>,
    pub band_means: Vec<f64>,
    pub full_scalogram: Option<Scalogram>,
    pub stats: Option<CycleStats>,
    pub envelope: Option<(Vec<f64>, f64)>,
    pub carrier: Option<(Vec<f64>, f64)>,
}

fn compute_acoustics(
    config: &RunConfig,
    pool: &rayon::ThreadPool,
    pieces: &[Piece],
    warnings: &mut Vec<String>,
    piece_failures: &mut BTreeMap<String, String>,
) -> Vec<PieceAcoustics> {
    let results: Vec<(String, Result<(PieceAcoustics, Vec<String>), String>)> =
        pool.install(|| {
            pieces
                .par_iter()
                .map(|piece| (piece.id.clone(), acoustic_chain(piece, config)))
                .collect()
        });
    let mut rows = Vec::new();
    for (id, result) in results {
        match result {
            Ok((row, piece_warnings)) => {
                warnings.extend(piece_warnings);
                rows.push(row);
            }
            Err(reason) => {
                warnings.push(format!("acoustics skipped for {id:?}: {reason}"));
                piece_failures.insert(id, reason);
            }
        }
    }
    rows
}

fn acoustic_chain(
    piece: &Piece,
    config: &RunConfig,
) -> Result<(PieceAcoustics, Vec<String>), String> {
    let ac = &config.acoustics;
    let stringify = |e: acoustics::AcousticsError| e.to_string();
    let wave = synthesize(piece, ac.sample_rate).map_err(stringify)?;
    let z = zscore(&wave).map_err(stringify)?;
    let decomp = demodulate(&z, ac.cutoff_hz).map_err(stringify)?;

    // Contract checks on every decomposition.
    if decomp.envelope.iter().any(|&v| !(v >= 0.0)) {
        return Err("envelope non-negativity violated".to_string());
    }
    let out_of_band = decomp.out_of_band_fraction();
    if out_of_band > 0.05 {
        return Err(format!(
            "envelope out-of-band power fraction {out_of_band:.4} exceeds 0.05"
        ));
    }

    let (env, frame_rate) =
        decimate_envelope(&decomp.envelope, decomp.sample_rate, ac.envelope_frame_rate);
    let sg = scalogram(&env, frame_rate, &ac.scalogram).map_err(stringify)?;

    let mut piece_warnings = Vec::new();
    let troughs = detect_troughs(&env, ac.prominence);
    let stats = match horizontal_rates(&troughs, frame_rate) {
        Ok(stats) => Some(stats),
        Err(e) => {
            piece_warnings.push(format!("no cycle rates for {:?}: {e}", piece.id));
            None
        }
    };

    let row = PieceAcoustics {
        meta: RowMetadata::from_piece(piece),
        band_frequencies: sg.frequencies.clone(),
        band_means: sg.band_means(),
        stats,
        envelope: ac
            .write_debug_wav
            .then(|| (decomp.envelope.clone(), decomp.sample_rate)),
        carrier: ac
            .write_debug_wav
            .then(|| (decomp.carrier.clone(), decomp.sample_rate)),
        full_scalogram: ac.write_scalograms.then_some(sg),
    };
    Ok((row, piece_warnings))
}

fn write_acoustics_outputs(
    config: &RunConfig,
    rows: &[PieceAcoustics],
    outputs: &mut OutputSet,
) -> Result<(), PipelineError> {
    for row in rows {
        let name = safe_name(&row.meta.piece_id);
        if let Some(sg) = &row.full_scalogram {
            let frames = sg.power.first().map(|b| b.len()).unwrap_or(0);
            let mut header = vec!["band_hz".to_string()];
            header.extend((0..frames).map(|i| format!("t{i}")));
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let table: Vec<Vec<String>> = sg
                .frequencies
                .iter()
                .zip(&sg.power)
                .map(|(&f, band)| {
                    let mut fields = vec![fmt_value(f)];
                    fields.extend(band.iter().map(|&v| fmt_value(v)));
                    fields
                })
                .collect();
            outputs.write(
                &format!("acoustics/scalograms/{name}.csv"),
                csv_text(&header_refs, &table).as_bytes(),
            )?;
        }
        if let Some((env, rate)) = &row.envelope {
            let mut bytes = Vec::new();
            acoustics::wav::write_wav(
                &mut bytes,
                &acoustics::Waveform::new(*rate, env.clone()),
                acoustics::wav::WavFormat::Float32,
            )
            .map_err(|e| PipelineError::StageFailed {
                stage: Stage::Acoustics,
                reason: e.to_string(),
            })?;
            outputs.write(&format!("acoustics/envelopes/{name}.wav"), &bytes)?;
        }
        if let Some((carrier, rate)) = &row.carrier {
            let mut bytes = Vec::new();
            acoustics::wav::write_wav(
                &mut bytes,
                &acoustics::Waveform::new(*rate, carrier.clone()),
                acoustics::wav::WavFormat::Float32,
            )
            .map_err(|e| PipelineError::StageFailed {
                stage: Stage::Acoustics,
                reason: e.to_string(),
            })?;
            outputs.write(&format!("acoustics/carriers/{name}.wav"), &bytes)?;
        }
    }

    // Pooled rates and their density.
    let mut rate_rows = Vec::new();
    let mut pooled = Vec::new();
    for row in rows {
        if let Some(stats) = &row.stats {
            for &r in &stats.rates {
                rate_rows.push(vec![row.meta.piece_id.clone(), fmt_value(r)]);
                pooled.push(r);
            }
        }
    }
    outputs.write(
        "acoustics/rates.csv",
        csv_text(&["piece_id", "rate"], &rate_rows).as_bytes(),
    )?;

    let density = rate_density(&pooled);
    let centers = CycleStats::bin_centers();
    let density_rows: Vec<Vec<String>> = centers
        .iter()
        .zip(&density)
        .map(|(&c, &d)| vec![fmt_value(c), fmt_value(d)])
        .collect();
    outputs.write(
        "acoustics/density.csv",
        csv_text(&["bin_center", "probability"], &density_rows).as_bytes(),
    )?;
    let _ = config;
    Ok(())
}

fn group_report(
    config: &RunConfig,
    rows: &[PieceAcoustics],
    outputs: &mut OutputSet,
    warnings: &mut Vec<String>,
) -> Result<(), PipelineError> {
    let band_frequencies = rows
        .iter()
        .map(|r| r.band_frequencies.clone())
        .next()
        .unwrap_or_else(|| config.acoustics.scalogram.frequencies());

    let spectra: Vec<(RowMetadata, Vec<f64>)> = rows
        .iter()
        .map(|r| (r.meta.clone(), r.band_means.clone()))
        .collect();

    for &key in &config.report_keys {
        let (means, empty_warnings) = mean_power_by_group(&spectra, key);
        warnings.extend(empty_warnings);
        let mut table = Vec::new();
        for (group, bands) in &means {
            for (&freq, &power) in band_frequencies.iter().zip(bands) {
                table.push(vec![group.clone(), fmt_value(freq), fmt_value(power)]);
            }
        }
        outputs.write(
            &format!("report/mean_spectrum_by_{key}.csv"),
            csv_text(&["group", "band_hz", "mean_power"], &table).as_bytes(),
        )?;

        // Per-group pooled rate densities.
        let mut grouped_rates: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for row in rows {
            if let Some(stats) = &row.stats {
                grouped_rates
                    .entry(key.label_of(&row.meta))
                    .or_default()
                    .extend(&stats.rates);
            }
        }
        let centers = CycleStats::bin_centers();
        let mut table = Vec::new();
        for (group, rates) in &grouped_rates {
            let density = rate_density(rates);
            for (&c, &d) in centers.iter().zip(&density) {
                table.push(vec![group.clone(), fmt_value(c), fmt_value(d)]);
            }
        }
        outputs.write(
            &format!("report/rate_density_by_{key}.csv"),
            csv_text(&["group", "bin_center", "probability"], &table).as_bytes(),
        )?;
    }
    Ok(())
}
