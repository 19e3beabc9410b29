//! Online hierarchical Bayesian sequence learning.
//!
//! Each level is a Dirichlet-Markov model over an integer alphabet. As a
//! level accumulates evidence, transitions whose evidence-weighted
//! probability clears a gate constant are *chunked*: the pair is promoted to
//! a single new symbol, and the level's input stream — rewritten with all
//! promoted pairs — feeds the next level up. The cascade is forward-only:
//! chunk creation never rewrites history or resets lower levels.
//!
//! Per observed event the model emits three level-0 measures in bits:
//! surprise (information content of the event under the pre-update
//! predictive), Bayesian surprise (KL divergence from the pre- to the
//! post-update predictive), and entropy (of the pre-update predictive).

mod info;
mod level;

pub use info::{entropy_bits, information_content, kl_divergence_bits};
pub use level::{ContextToken, DirichletMarkovLevel, PredictiveDistribution, Symbol};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HbslError {
    #[error("symbol {symbol} is not in the alphabet of level {level}")]
    InvalidSymbol { symbol: Symbol, level: usize },
    #[error("probability {0} is not in (0, 1]")]
    NonpositiveProbability(f64),
    #[error("distributions have different alphabet sizes ({left} vs {right})")]
    AlphabetMismatch { left: usize, right: usize },
    #[error("Q assigns zero probability where P does not (index {index})")]
    AbsoluteContinuityViolation { index: usize },
    #[error("cannot learn from an empty sequence")]
    EmptySequence,
}

/// Learning hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HbslConfig {
    /// Dirichlet pseudo-count per transition cell.
    pub alpha: f64,
    /// Gate constant: a transition chunks when its normalized
    /// probability × normalized reliability exceeds this.
    pub gate_constant: f64,
    /// Maximum number of levels in the hierarchy (the top level never
    /// chunks).
    pub max_levels: usize,
    /// Markov order of every level.
    pub order: usize,
}

impl Default for HbslConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gate_constant: 5.0,
            max_levels: 3,
            order: 1,
        }
    }
}

/// A transition pair promoted to a single symbol at the next level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkNode {
    /// Id of the new symbol; never collides with base-alphabet ids.
    pub chunk_id: Symbol,
    /// The promoted (context symbol, next symbol) pair.
    pub children: (Symbol, Symbol),
    /// Level whose stream the pair was observed in.
    pub level_index: usize,
    /// Model event index (level-0 events) when the gate fired.
    pub created_at: u64,
}

/// Per-event measures emitted by [`HbslModel::observe`], all in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub surprise_bits: f64,
    pub bayesian_surprise_bits: f64,
    pub entropy_bits: f64,
}

/// Gate statistic for a just-observed transition.
///
/// Probability is normalized so a uniform predictive scores 1
/// (`alphabet_size × prob`); reliability is normalized by the running median
/// of every reliability recorded at this level, so a typical transition
/// scores ≈ 1. A transition with infinite reliability (zero posterior
/// variance, e.g. a singleton alphabet) always clears any finite gate.
pub fn chunk_gate_statistic(
    alphabet_size: usize,
    prob: f64,
    reliability: f64,
    median_reliability: f64,
) -> f64 {
    if reliability.is_infinite() {
        return f64::INFINITY;
    }
    alphabet_size as f64 * prob * (reliability / median_reliability)
}

/// One level plus its streaming state: the Markov context, the reliability
/// history backing the gate's median, the promoted pairs, and the pending
/// symbol of the greedy pair rewriter that feeds the next level.
#[derive(Debug, Clone)]
struct LevelState {
    level: DirichletMarkovLevel,
    context: Vec<ContextToken>,
    /// All reliabilities recorded at this level, kept sorted for median
    /// queries.
    reliability_log: Vec<f64>,
    /// Promoted pair → chunk id.
    chunk_map: BTreeMap<(Symbol, Symbol), Symbol>,
    /// Rewriter look-behind symbol.
    pending: Option<Symbol>,
}

impl LevelState {
    fn new(level: DirichletMarkovLevel) -> Self {
        let order = level.order();
        Self {
            level,
            context: vec![ContextToken::Start; order],
            reliability_log: Vec::new(),
            chunk_map: BTreeMap::new(),
            pending: None,
        }
    }

    fn record_reliability(&mut self, r: f64) -> f64 {
        let at = self.reliability_log.partition_point(|&x| x.total_cmp(&r).is_lt());
        self.reliability_log.insert(at, r);
        // Lower median keeps the statistic exact (no averaging).
        self.reliability_log[(self.reliability_log.len() - 1) / 2]
    }

    fn advance_context(&mut self, symbol: Symbol) {
        self.context.remove(0);
        self.context.push(ContextToken::Sym(symbol));
    }

    /// Push one symbol through the greedy left-to-right pair rewriter.
    /// Returns the symbol emitted towards the next level, if any.
    fn rewrite(&mut self, symbol: Symbol) -> Option<Symbol> {
        match self.pending {
            None => {
                self.pending = Some(symbol);
                None
            }
            Some(prev) => {
                if let Some(&chunk_id) = self.chunk_map.get(&(prev, symbol)) {
                    self.pending = None;
                    Some(chunk_id)
                } else {
                    self.pending = Some(symbol);
                    Some(prev)
                }
            }
        }
    }
}

/// The full multi-level model.
#[derive(Debug, Clone)]
pub struct HbslModel {
    config: HbslConfig,
    base_alphabet_size: usize,
    levels: Vec<LevelState>,
    chunks: Vec<ChunkNode>,
    observed_events: u64,
    next_symbol_id: Symbol,
}

impl HbslModel {
    /// Create a fresh model over a base alphabet `0..alphabet_size`.
    pub fn new(alphabet_size: usize, config: HbslConfig) -> Self {
        let level0 = DirichletMarkovLevel::new(0, 0..alphabet_size, config.alpha, config.order);
        Self {
            config,
            base_alphabet_size: alphabet_size,
            levels: vec![LevelState::new(level0)],
            chunks: Vec::new(),
            observed_events: 0,
            next_symbol_id: alphabet_size,
        }
    }

    pub fn config(&self) -> &HbslConfig {
        &self.config
    }

    pub fn observed_events(&self) -> u64 {
        self.observed_events
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, index: usize) -> Option<&DirichletMarkovLevel> {
        self.levels.get(index).map(|s| &s.level)
    }

    pub fn chunks(&self) -> &[ChunkNode] {
        &self.chunks
    }

    pub fn chunks_at_level(&self, level_index: usize) -> impl Iterator<Item = &ChunkNode> {
        self.chunks
            .iter()
            .filter(move |c| c.level_index == level_index)
    }

    /// Seed level-0 transition counts before any observation
    /// (corpus-primed learning). Primed counts shape the predictive
    /// distributions but carry no reliability history for the chunk gate.
    pub fn prime_level0<I>(&mut self, counts: I) -> Result<(), HbslError>
    where
        I: IntoIterator<Item = (Vec<ContextToken>, Symbol, u64)>,
    {
        for (context, symbol, n) in counts {
            self.levels[0].level.add_count(&context, symbol, n)?;
        }
        Ok(())
    }

    /// Observe the next base-alphabet symbol and return the level-0 record.
    ///
    /// An invalid symbol leaves the model untouched.
    pub fn observe(&mut self, symbol: Symbol) -> Result<EventRecord, HbslError> {
        if symbol >= self.base_alphabet_size {
            return Err(HbslError::InvalidSymbol { symbol, level: 0 });
        }
        self.observed_events += 1;
        self.feed(0, symbol)
    }

    /// Flush the pair rewriters at end of stream so trailing unpaired
    /// symbols still reach higher levels.
    pub fn finish(&mut self) -> Result<(), HbslError> {
        let mut lidx = 0;
        while lidx < self.levels.len() {
            if let Some(tok) = self.levels[lidx].pending.take() {
                if lidx + 1 < self.levels.len() {
                    self.feed(lidx + 1, tok)?;
                }
            }
            lidx += 1;
        }
        Ok(())
    }

    fn feed(&mut self, start_level: usize, start_symbol: Symbol) -> Result<EventRecord, HbslError> {
        let mut lidx = start_level;
        let mut symbol = start_symbol;
        let mut first: Option<EventRecord> = None;
        loop {
            let (record, emitted) = self.step_level(lidx, symbol)?;
            first.get_or_insert(record);
            match emitted {
                Some(tok) if lidx + 1 < self.levels.len() => {
                    lidx += 1;
                    symbol = tok;
                }
                _ => break,
            }
        }
        Ok(first.expect("at least one level stepped"))
    }

    fn step_level(
        &mut self,
        lidx: usize,
        symbol: Symbol,
    ) -> Result<(EventRecord, Option<Symbol>), HbslError> {
        let gate_constant = self.config.gate_constant;
        let may_chunk = lidx + 1 < self.config.max_levels;

        let state = &mut self.levels[lidx];
        if !state.level.contains(symbol) {
            return Err(HbslError::InvalidSymbol { symbol, level: lidx });
        }

        let before = state.level.predictive(&state.context)?;
        let prob = before
            .prob_of(symbol)
            .expect("observed symbol is in the alphabet");
        let surprise = information_content(prob)?;
        let entropy = before.entropy_bits();

        state.level.record(&state.context, symbol)?;
        let after = state.level.predictive(&state.context)?;
        let bayesian = kl_divergence_bits(&before.probs, &after.probs)?;

        let reliability = state.level.reliability(&state.context, symbol)?;
        let median = state.record_reliability(reliability);

        let mut new_chunk: Option<(Symbol, Symbol)> = None;
        if may_chunk {
            let prob_after = after
                .prob_of(symbol)
                .expect("observed symbol is in the alphabet");
            let gate = chunk_gate_statistic(
                state.level.alphabet_size(),
                prob_after,
                reliability,
                median,
            );
            if gate > gate_constant {
                if let Some(prev) = state.context.last().and_then(|t| t.symbol()) {
                    if !state.chunk_map.contains_key(&(prev, symbol)) {
                        new_chunk = Some((prev, symbol));
                    }
                }
            }
        }

        state.advance_context(symbol);

        if let Some(pair) = new_chunk {
            self.create_chunk(lidx, pair);
        }

        let emitted = self.levels[lidx].rewrite(symbol);
        let record = EventRecord {
            surprise_bits: surprise,
            bayesian_surprise_bits: bayesian,
            entropy_bits: entropy,
        };
        Ok((record, emitted))
    }

    fn create_chunk(&mut self, lidx: usize, pair: (Symbol, Symbol)) {
        let chunk_id = self.next_symbol_id;
        self.next_symbol_id += 1;
        self.levels[lidx].chunk_map.insert(pair, chunk_id);
        self.chunks.push(ChunkNode {
            chunk_id,
            children: pair,
            level_index: lidx,
            created_at: self.observed_events,
        });

        if lidx + 1 == self.levels.len() {
            // First chunk at the current top level activates the next one;
            // its alphabet is the creating level's alphabet plus the chunk.
            let alphabet: Vec<Symbol> = self.levels[lidx].level.alphabet().collect();
            let mut next = DirichletMarkovLevel::new(
                lidx + 1,
                alphabet,
                self.config.alpha,
                self.config.order,
            );
            next.admit_symbol(chunk_id);
            self.levels.push(LevelState::new(next));
        } else {
            // Every level above the creating one can see the new symbol.
            for upper in &mut self.levels[lidx + 1..] {
                upper.level.admit_symbol(chunk_id);
            }
        }
    }

    /// Deterministic, diffable snapshot of the full model state.
    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            config: self.config.clone(),
            base_alphabet_size: self.base_alphabet_size,
            observed_events: self.observed_events,
            levels: self
                .levels
                .iter()
                .map(|s| LevelSnapshot {
                    level_index: s.level.level_index(),
                    alphabet: s.level.alphabet().collect(),
                    counts: s
                        .level
                        .contexts()
                        .map(|(ctx, table)| {
                            let key = context_key(ctx);
                            let row = table.iter().map(|(&s, &n)| (s.to_string(), n)).collect();
                            (key, row)
                        })
                        .collect(),
                })
                .collect(),
            chunks: self.chunks.clone(),
        }
    }
}

fn context_key(context: &[ContextToken]) -> String {
    context
        .iter()
        .map(|t| match t {
            ContextToken::Start => "^".to_string(),
            ContextToken::Sym(s) => s.to_string(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// JSON-facing model snapshot with string context keys; `BTreeMap` fields
/// keep key order deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub config: HbslConfig,
    pub base_alphabet_size: usize,
    pub observed_events: u64,
    pub levels: Vec<LevelSnapshot>,
    pub chunks: Vec<ChunkNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSnapshot {
    pub level_index: usize,
    pub alphabet: Vec<Symbol>,
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Result of replaying one sequence through a fresh model.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub model: HbslModel,
    /// Level-0 record per input symbol, same length as the sequence.
    pub dynamics: Vec<EventRecord>,
}

/// Replay `symbols` (ids in `0..alphabet_size`) through a fresh model.
pub fn learn_hierarchy(
    symbols: &[Symbol],
    alphabet_size: usize,
    config: HbslConfig,
) -> Result<LearnOutcome, HbslError> {
    if symbols.is_empty() {
        return Err(HbslError::EmptySequence);
    }
    let mut model = HbslModel::new(alphabet_size, config);
    let mut dynamics = Vec::with_capacity(symbols.len());
    for &s in symbols {
        dynamics.push(model.observe(s)?);
    }
    model.finish()?;
    Ok(LearnOutcome { model, dynamics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_at(model: &HbslModel, level: usize) -> Vec<(Symbol, Symbol)> {
        model.chunks_at_level(level).map(|c| c.children).collect()
    }

    #[test]
    fn first_observation_from_uniform_prior() {
        let mut model = HbslModel::new(2, HbslConfig::default());
        let rec = model.observe(0).unwrap();
        assert_eq!(rec.surprise_bits, 1.0);
        assert_eq!(rec.entropy_bits, 1.0);
        let expected_kl = 3f64.log2() - 1.5;
        assert!((rec.bayesian_surprise_bits - expected_kl).abs() < 1e-15);
    }

    #[test]
    fn invalid_symbol_leaves_model_unchanged() {
        let mut model = HbslModel::new(2, HbslConfig::default());
        model.observe(0).unwrap();
        let snapshot = serde_json::to_string(&model.snapshot()).unwrap();
        assert!(matches!(
            model.observe(2),
            Err(HbslError::InvalidSymbol { symbol: 2, level: 0 })
        ));
        assert_eq!(serde_json::to_string(&model.snapshot()).unwrap(), snapshot);
    }

    #[test]
    fn alternating_pair_chunks_before_sixty_events() {
        let symbols: Vec<Symbol> = (0..60).map(|i| i % 2).collect();
        let outcome = learn_hierarchy(&symbols, 2, HbslConfig::default()).unwrap();
        let pairs = pairs_at(&outcome.model, 0);
        assert!(pairs.contains(&(0, 1)), "chunks: {pairs:?}");
        let node = outcome
            .model
            .chunks()
            .iter()
            .find(|c| c.children == (0, 1))
            .unwrap();
        assert!(node.created_at < 60);
    }

    #[test]
    fn repeated_symbol_chunks_self_transition() {
        let symbols = vec![0; 40];
        let outcome = learn_hierarchy(&symbols, 1, HbslConfig::default()).unwrap();
        assert!(pairs_at(&outcome.model, 0).contains(&(0, 0)));
    }

    #[test]
    fn four_cycle_builds_second_level_chunks() {
        let symbols: Vec<Symbol> = (0..80).map(|i| i % 4).collect();
        let outcome = learn_hierarchy(&symbols, 4, HbslConfig::default()).unwrap();
        let base = pairs_at(&outcome.model, 0);
        let allowed = [(0, 1), (1, 2), (2, 3), (3, 0)];
        assert!(!base.is_empty());
        assert!(base.iter().all(|p| allowed.contains(p)), "level 0: {base:?}");
        let upper = pairs_at(&outcome.model, 1);
        assert!(
            upper.iter().any(|&(a, b)| a >= 4 && b >= 4),
            "expected a chunk of chunks, got {upper:?}"
        );
    }

    #[test]
    fn chunked_pair_is_not_recreated() {
        let symbols: Vec<Symbol> = (0..200).map(|i| i % 2).collect();
        let outcome = learn_hierarchy(&symbols, 2, HbslConfig::default()).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for chunk in outcome.model.chunks() {
            assert!(
                seen.insert((chunk.level_index, chunk.children)),
                "pair {:?} chunked twice at level {}",
                chunk.children,
                chunk.level_index
            );
        }
    }

    #[test]
    fn uniform_random_binary_rarely_chunks() {
        // Small LCG, fixed seeds; the gate should stay quiet on noise.
        let mut fired = 0;
        for seed in 0..100u64 {
            let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            let symbols: Vec<Symbol> = (0..200)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) & 1) as Symbol
                })
                .collect();
            let outcome = learn_hierarchy(&symbols, 2, HbslConfig::default()).unwrap();
            if !outcome.model.chunks().is_empty() {
                fired += 1;
            }
        }
        assert!(fired <= 5, "{fired}/100 random sequences chunked");
    }

    #[test]
    fn length_one_sequence_has_uniform_surprise() {
        let outcome = learn_hierarchy(&[1], 3, HbslConfig::default()).unwrap();
        assert_eq!(outcome.dynamics.len(), 1);
        assert!((outcome.dynamics[0].surprise_bits - 3f64.log2()).abs() < 1e-12);
        assert!(outcome.model.chunks().is_empty());
    }

    #[test]
    fn empty_sequence_is_an_error() {
        assert!(matches!(
            learn_hierarchy(&[], 2, HbslConfig::default()),
            Err(HbslError::EmptySequence)
        ));
    }

    #[test]
    fn bayesian_surprise_decays_for_repeated_transition() {
        // The (0,1) transition repeats every second event of 0101…; its
        // emitted KL must strictly decrease with each repetition.
        let symbols: Vec<Symbol> = (0..44).map(|i| i % 2).collect();
        let outcome = learn_hierarchy(&symbols, 2, HbslConfig::default()).unwrap();
        let kls: Vec<f64> = outcome.dynamics[1..]
            .iter()
            .step_by(2)
            .map(|r| r.bayesian_surprise_bits)
            .collect();
        assert!(kls.len() >= 20);
        for w in kls.windows(2) {
            assert!(w[1] < w[0], "KL did not strictly decrease: {w:?}");
        }
    }

    #[test]
    fn snapshot_counts_match_observations() {
        let outcome = learn_hierarchy(&[0, 1, 0, 1, 0], 2, HbslConfig::default()).unwrap();
        let snap = outcome.model.snapshot();
        let level0 = &snap.levels[0];
        assert_eq!(level0.counts["^"]["0"], 1);
        assert_eq!(level0.counts["0"]["1"], 2);
        assert_eq!(level0.counts["1"]["0"], 2);
    }
}
