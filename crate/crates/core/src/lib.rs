//! Sound event recognition over query-labeled web audio.
//!
//! The crate covers the offline half of the system: labeled dataset
//! manifests and splits ([`dataset`]), audio decoding and segmentation
//! ([`audio`]), log-mel feature patches ([`features`]), a CNN trained from
//! scratch ([`cnn`]), query-driven corpus crawling ([`crawler`]),
//! Precision@K evaluation ([`evaluator`]) and human-vote aggregation
//! ([`feedback`]). [`pipeline`] wires the stages together and [`fixture`]
//! generates a small synthetic corpus.

pub mod audio;
pub mod cnn;
pub mod crawler;
pub mod dataset;
pub mod evaluator;
pub mod feedback;
pub mod features;
pub mod fixture;
pub mod pipeline;
pub mod rng;
