//! Ingestion and cleaning of product-graph time-series data.
//!
//! Input layout: one CSV per temporal feature (`Product,<date1>,...`, one row
//! per product) plus an edge list (`node1,node2[,relation]`).

mod graph;
mod prepare;
mod temporal;
mod zscore;

pub use graph::{
    normalize_adjacency, parse_edges, Edge, NormalizedAdjacency, SupplyGraphTopology,
};
pub use prepare::{
    locate_inputs, parse_node_metadata, preprocess, CleanData, InputPaths, NodeMetadata,
    RawInputs, Removal, RemovalReason, RemovalReport,
};
pub use temporal::{
    dedup_rows, drop_missing, filter_low_quality, parse_temporal_csv, Feature, TemporalTable,
    DEFAULT_ZERO_FRACTION,
};
pub use zscore::{zscore_fit_apply, NormalizationStats, SeriesStats};
