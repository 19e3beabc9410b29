//! A single Dirichlet-Markov level: transition counts under a symmetric
//! Dirichlet prior, posterior-predictive distributions, and the
//! inverse-variance reliability of individual transitions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{info, HbslError};

/// Integer symbol id. Base-alphabet ids and chunk ids share one id space.
pub type Symbol = usize;

/// One slot of a Markov context. `Start` is the distinguished token that
/// precedes every sequence; it may condition predictions but is never an
/// outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextToken {
    Start,
    Sym(Symbol),
}

impl ContextToken {
    pub fn symbol(self) -> Option<Symbol> {
        match self {
            ContextToken::Start => None,
            ContextToken::Sym(s) => Some(s),
        }
    }
}

/// Posterior-predictive distribution for one context.
///
/// `probs[i]` is the probability of `symbols[i]`; symbols are sorted
/// ascending and probabilities sum to 1 within 1e-9.
#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub symbols: Vec<Symbol>,
    pub probs: Vec<f64>,
    pub context: Vec<ContextToken>,
}

impl PredictiveDistribution {
    /// Probability assigned to `symbol`, or `None` if it is not in the
    /// distribution's alphabet.
    pub fn prob_of(&self, symbol: Symbol) -> Option<f64> {
        self.symbols
            .binary_search(&symbol)
            .ok()
            .map(|i| self.probs[i])
    }

    /// Shannon entropy of the distribution in bits.
    pub fn entropy_bits(&self) -> f64 {
        info::entropy_bits(&self.probs)
    }
}

/// Order-n Markov level with per-cell Dirichlet pseudo-count `alpha`.
///
/// The alphabet is an explicit id set rather than a contiguous range because
/// chunk ids promoted from lower levels interleave with base ids.
#[derive(Debug, Clone)]
pub struct DirichletMarkovLevel {
    level_index: usize,
    order: usize,
    alpha: f64,
    alphabet: BTreeSet<Symbol>,
    counts: BTreeMap<Vec<ContextToken>, BTreeMap<Symbol, u64>>,
}

impl DirichletMarkovLevel {
    pub fn new(
        level_index: usize,
        alphabet: impl IntoIterator<Item = Symbol>,
        alpha: f64,
        order: usize,
    ) -> Self {
        Self {
            level_index,
            order,
            alpha,
            alphabet: alphabet.into_iter().collect(),
            counts: BTreeMap::new(),
        }
    }

    pub fn level_index(&self) -> usize {
        self.level_index
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn alphabet(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.alphabet.iter().copied()
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        self.alphabet.contains(&symbol)
    }

    /// Admit a new symbol (a chunk id from the level below) to the alphabet.
    pub fn admit_symbol(&mut self, symbol: Symbol) {
        self.alphabet.insert(symbol);
    }

    pub fn contexts(&self) -> impl Iterator<Item = (&Vec<ContextToken>, &BTreeMap<Symbol, u64>)> {
        self.counts.iter()
    }

    /// Observed count for one transition cell.
    pub fn count(&self, context: &[ContextToken], symbol: Symbol) -> u64 {
        self.counts
            .get(context)
            .and_then(|t| t.get(&symbol))
            .copied()
            .unwrap_or(0)
    }

    /// Total observations recorded for one context.
    pub fn context_total(&self, context: &[ContextToken]) -> u64 {
        self.counts
            .get(context)
            .map(|t| t.values().sum())
            .unwrap_or(0)
    }

    fn validate_context(&self, context: &[ContextToken]) -> Result<(), HbslError> {
        for token in context {
            if let ContextToken::Sym(s) = token {
                if !self.contains(*s) {
                    return Err(HbslError::InvalidSymbol {
                        symbol: *s,
                        level: self.level_index,
                    });
                }
            }
        }
        Ok(())
    }

    fn validate_symbol(&self, symbol: Symbol) -> Result<(), HbslError> {
        if !self.contains(symbol) {
            return Err(HbslError::InvalidSymbol {
                symbol,
                level: self.level_index,
            });
        }
        Ok(())
    }

    /// Posterior-predictive distribution for `context`:
    /// `p(i) = (count(context, i) + alpha) / (total(context) + K·alpha)`.
    ///
    /// An unseen context therefore yields the uniform distribution 1/K.
    pub fn predictive(&self, context: &[ContextToken]) -> Result<PredictiveDistribution, HbslError> {
        self.validate_context(context)?;
        let k = self.alphabet.len() as f64;
        let table = self.counts.get(context);
        let total = table.map(|t| t.values().sum::<u64>()).unwrap_or(0) as f64;
        let denom = total + k * self.alpha;
        let mut symbols = Vec::with_capacity(self.alphabet.len());
        let mut probs = Vec::with_capacity(self.alphabet.len());
        for &s in &self.alphabet {
            let c = table.and_then(|t| t.get(&s)).copied().unwrap_or(0) as f64;
            symbols.push(s);
            probs.push((c + self.alpha) / denom);
        }
        Ok(PredictiveDistribution {
            symbols,
            probs,
            context: context.to_vec(),
        })
    }

    /// Record one observation of `symbol` after `context`.
    pub fn record(&mut self, context: &[ContextToken], symbol: Symbol) -> Result<(), HbslError> {
        self.add_count(context, symbol, 1)
    }

    /// Add `n` observations to one transition cell (prior seeding).
    pub fn add_count(
        &mut self,
        context: &[ContextToken],
        symbol: Symbol,
        n: u64,
    ) -> Result<(), HbslError> {
        self.validate_context(context)?;
        self.validate_symbol(symbol)?;
        *self
            .counts
            .entry(context.to_vec())
            .or_default()
            .entry(symbol)
            .or_insert(0) += n;
        Ok(())
    }

    /// Reliability of a transition: the inverse variance of the posterior
    /// Dirichlet marginal for `symbol` given `context`.
    ///
    /// With posterior parameters `α_i = count + alpha`, `α0 = Σ α_i`, the
    /// marginal variance is `ᾱ(1−ᾱ)/(α0+1)` for `ᾱ = α_i/α0`. A K = 1
    /// alphabet has zero variance, so reliability is `+∞` there.
    pub fn reliability(&self, context: &[ContextToken], symbol: Symbol) -> Result<f64, HbslError> {
        self.validate_context(context)?;
        self.validate_symbol(symbol)?;
        let k = self.alphabet.len() as f64;
        let total = self.context_total(context) as f64;
        let a_i = self.count(context, symbol) as f64 + self.alpha;
        let a0 = total + k * self.alpha;
        let mean = a_i / a0;
        let var = mean * (1.0 - mean) / (a0 + 1.0);
        if var == 0.0 {
            Ok(f64::INFINITY)
        } else {
            Ok(1.0 / var)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(tokens: &[ContextToken]) -> Vec<ContextToken> {
        tokens.to_vec()
    }

    #[test]
    fn unseen_context_is_uniform() {
        let level = DirichletMarkovLevel::new(0, 0..2, 1.0, 1);
        let dist = level.predictive(&ctx(&[ContextToken::Sym(0)])).unwrap();
        assert_eq!(dist.probs, vec![0.5, 0.5]);
        assert_eq!(dist.symbols, vec![0, 1]);
    }

    #[test]
    fn posterior_predictive_after_one_count() {
        let mut level = DirichletMarkovLevel::new(0, 0..2, 1.0, 1);
        let c = ctx(&[ContextToken::Sym(0)]);
        level.record(&c, 0).unwrap();
        let dist = level.predictive(&c).unwrap();
        assert_eq!(dist.probs, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(dist.prob_of(1), Some(1.0 / 3.0));
    }

    #[test]
    fn predictive_sums_to_one() {
        let mut level = DirichletMarkovLevel::new(0, 0..5, 0.7, 1);
        let c = ctx(&[ContextToken::Sym(3)]);
        for s in [0, 0, 3, 4, 1, 0] {
            level.record(&c, s).unwrap();
        }
        let dist = level.predictive(&c).unwrap();
        let total: f64 = dist.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_symbol_rejected() {
        let mut level = DirichletMarkovLevel::new(0, 0..2, 1.0, 1);
        let c = ctx(&[ContextToken::Sym(2)]);
        assert!(matches!(
            level.predictive(&c),
            Err(HbslError::InvalidSymbol { symbol: 2, .. })
        ));
        let c = ctx(&[ContextToken::Start]);
        assert!(level.record(&c, 2).is_err());
    }

    #[test]
    fn reliability_reference_points() {
        // K=2, alpha=1, no observations: Var = 0.25/3 → 12.
        let level = DirichletMarkovLevel::new(0, 0..2, 1.0, 1);
        let c = ctx(&[ContextToken::Start]);
        assert!((level.reliability(&c, 0).unwrap() - 12.0).abs() < 1e-12);

        // K=2, alpha=2: α0 = 4, Var = 0.25/5 → 20.
        let level = DirichletMarkovLevel::new(0, 0..2, 2.0, 1);
        assert!((level.reliability(&c, 0).unwrap() - 20.0).abs() < 1e-12);

        // K=4, alpha=1: Var = (0.25·0.75)/5 → 26.667.
        let level = DirichletMarkovLevel::new(0, 0..4, 1.0, 1);
        let r = level.reliability(&c, 0).unwrap();
        assert!((r - 1.0 / 0.0375).abs() < 1e-9, "r = {r}");
    }

    #[test]
    fn reliability_is_infinite_for_singleton_alphabet() {
        let level = DirichletMarkovLevel::new(0, 0..1, 1.0, 1);
        let c = ctx(&[ContextToken::Sym(0)]);
        assert!(level.reliability(&c, 0).unwrap().is_infinite());
    }

    #[test]
    fn reliability_of_modal_symbol_grows_with_repetition() {
        let mut level = DirichletMarkovLevel::new(0, 0..3, 1.0, 1);
        let c = ctx(&[ContextToken::Sym(1)]);
        let mut last = level.reliability(&c, 2).unwrap();
        for _ in 0..30 {
            level.record(&c, 2).unwrap();
            let r = level.reliability(&c, 2).unwrap();
            assert!(r >= last, "reliability decreased: {r} < {last}");
            last = r;
        }
    }
}
