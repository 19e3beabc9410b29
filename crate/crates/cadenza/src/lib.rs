//! Corpus analysis toolkit for symbolic music performances.
//!
//! The library is organized around one analysis chain:
//!
//! * [`corpus`] — parse Standard MIDI Files and per-note CSV exports into
//!   [`corpus::Piece`] records and symbolize them into pitch, rhythm, and
//!   pitch-rhythm integer sequences.
//! * [`hbsl`] — hierarchical Bayesian sequence learning: an online
//!   Dirichlet-Markov model with an evidence-gated chunking cascade that
//!   emits per-event surprise, Bayesian surprise, and entropy.
//! * [`dynamics`] — per-piece time series of those measures,
//!   length-normalized by linear interpolation into a corpus feature matrix.
//! * [`embedding`] — exact t-SNE mapping feature rows to 2D points.
//! * [`acoustics`] — waveform synthesis, sub-40 Hz amplitude demodulation,
//!   Morlet scalograms, and envelope cycle-rate statistics.
//! * [`pipeline`] — CLI-facing orchestration with deterministic CSV/JSON
//!   persistence.

pub mod acoustics;
pub mod corpus;
pub mod dynamics;
pub mod embedding;
pub mod hbsl;
pub mod pipeline;
