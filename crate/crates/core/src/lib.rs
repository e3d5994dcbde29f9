//! Geographically embedded AS topologies.
//!
//! An AS peering graph is grown with positive-feedback preference, every AS is
//! given a set of border-router locations drawn from a density grid and tightened
//! by a swap optimizer, the locations are joined into a border-router graph, and
//! end-to-end latencies come from hot-potato routing over that graph. The
//! [`metrics`] module compares modeled latencies with measured datasets.

pub mod asgraph;
pub mod bordergraph;
pub mod embedding;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod routing;

pub use asgraph::{generate_pfp, AsGraph, AsId, PfpParams};
pub use bordergraph::{build_border_graph, BorderGraph, EdgeKind};
pub use embedding::{
    compactness, initial_embedding, location_count, neighbor_cost, optimize_embedding,
    Embedding, EmbeddingParams, LocId, OptimizeStats,
};
pub use error::{Error, Result};
pub use geo::{great_circle_distance, DensityGrid, GeoPoint, EARTH_RADIUS_KM};
pub use metrics::{ks_statistic, tiv_severity, Ecdf, LatencyDataset, LatencyMatrix};
pub use routing::{
    distance_first_route, hot_potato_route, path_latency, EndDevice, LatencyModel, Model,
    RoutePath, RoutingMode, RoutingParams,
};
