//! Graph time-series demand forecasting on SupplyGraph-style data.
//!
//! The crate is self-contained: dense tensors with a reverse-mode tape
//! ([`numcore`]), CSV ingestion and cleaning ([`dataset`]), sliding windows
//! ([`windowing`]), MLP / identity-adjacency GNN / GCN forecasters
//! ([`models`]), Adam training ([`training`]), metrics and report tables
//! ([`evaluation`]) and a synthetic data generator ([`synthgen`]).

pub mod config;
pub mod dataset;
mod error;
pub mod evaluation;
pub mod models;
pub mod numcore;
pub mod synthgen;
pub mod training;
pub mod windowing;

pub use error::{Error, Result};
