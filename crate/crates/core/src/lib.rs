//! Batch toolkit for LLM-driven time-series anomaly-detection data pipelines.
//!
//! The crate bundles four cooperating pipelines behind one CLI:
//!
//! * **analytics** ([`stats`], [`trend`], [`seasonality`], [`local`],
//!   [`measures`], [`compress`]) — deterministic time-series attribute
//!   extraction used by the evolution agents, the signal generator, and tests;
//! * **sgad** ([`sgad`]) — synthesis of labeled power-quality disturbance
//!   waveforms across 17 classes for contamination-free corpora;
//! * **tsevol** ([`tsevol`]) — the four-agent Consultant/Client/Intern/
//!   Supervisor loop that evolves single-turn anomaly-detection records into
//!   multi-turn reasoning transcripts, backed by [`backend`];
//! * **tkto** ([`tkto`]) and **eval** ([`eval`], [`parse`]) — preference
//!   scoring/loss math for RL-dataset preparation and the evaluation harness
//!   for model prediction dumps.
//!
//! All pipelines run fully offline against the scripted mock backend; the
//! HTTP backend targets any OpenAI-compatible chat endpoint.

pub mod backend;
pub mod compress;
pub mod config;
pub mod eval;
pub mod local;
pub mod measures;
pub mod parse;
pub mod seasonality;
pub mod series;
pub mod sgad;
pub mod stats;
pub mod tkto;
pub mod trend;
pub mod tsevol;

#[cfg(test)]
pub(crate) mod testdata;

pub use series::{AnalyticsError, TimeSeries};
