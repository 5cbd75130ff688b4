//! Gender-balanced pronoun resolution on GAP-style data.
//!
//! The crate covers the whole experiment: dataset ingestion and validation
//! ([`gap_data`]), contextual span embeddings ([`embedding_bank`]),
//! hand-crafted features ([`features`]), the frozen and fine-tuned
//! prediction paths ([`models`]), blending ([`ensemble`]) and per-gender
//! scoring ([`metrics`]). [`pipeline`] wires them into a single run.

pub mod embedding_bank;
pub mod ensemble;
pub mod features;
pub mod gap_data;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod text;
