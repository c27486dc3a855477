//! Joint modelling of indoor visitors' web queries and Wi-Fi trajectories.
//!
//! The pipeline runs roughly in module order: [`ingest`] turns association
//! and query logs into trajectories, [`spatial`] labels access points with
//! shop categories, [`knowledge`] expands category documents and query
//! contexts from a local knowledge graph, [`similarity`] scores the two
//! against each other, [`features`] and [`classify`] infer visit intent and
//! [`predict`] ranks the next locations. [`synth`] produces seeded synthetic
//! inputs for all of the above.

pub mod classify;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fixtures;
pub mod ingest;
pub mod knowledge;
pub mod metrics;
pub mod model;
pub mod predict;
pub mod similarity;
pub mod spatial;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
