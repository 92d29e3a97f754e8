//! Country-level exposure analysis of Internet routes.
//!
//! Router-level traceroutes and AS-level BGP paths are reduced to
//! [`CountryPath`]s, collected in a [`PathStore`], and analysed for how many
//! third countries can observe traffic between two countries.

pub mod country_graph;
pub mod country_mapping;
pub mod experiments;
pub mod ingest;
pub mod path_store;
pub mod pipeline;
pub mod synth;
pub mod trace_model;

pub use country_graph::{build_graph, centrality_scatter, CountryGraph};
pub use country_mapping::{AsRegistry, DiscardReason, GeoTable, Ipv4Prefix};
pub use ingest::{ErrorPolicy, IngestError, MonitorTable};
pub use path_store::{PathStore, StoreError};
pub use pipeline::{ingest_bgp, ingest_traces, IngestSummary};
pub use synth::{generate_corpus, Corpus, SynthConfig};
pub use trace_model::{CountryCode, CountryPath, DatasetKind, MonitorId};
