//! Federated generative channel modeling.
//!
//! This crate simulates the full pipeline of a two-stage air-to-ground
//! mmWave channel model trained across distributed city datasets:
//!
//! 1. [`synth`] generates per-city link datasets from a parametric
//!    dual-slope ground-truth model (a stand-in for ray-traced data),
//! 2. [`link`] trains a per-city link-state classifier (LOS / NLOS / no
//!    link) on the 5-dim link condition,
//! 3. [`vae`] and [`gan`] are conditional generative path models that map
//!    a link condition to the 20x6 path-parameter matrix,
//! 4. [`fed`] trains either path model with synchronous sample-weighted
//!    federated averaging across cities,
//! 5. [`metrics`] compares generated and held-out path-loss distributions
//!    with histogram KL divergence and 1-D Wasserstein distance.
//!
//! Everything is `f64`, seeded, and single-threaded deterministic: the
//! same configuration and seed reproduce byte-identical datasets, weight
//! files, and reports.

pub mod fed;
pub mod gan;
pub mod link;
pub mod metrics;
pub mod nn;
pub mod seeds;
pub mod synth;
pub mod vae;

pub use fed::{aggregate_weighted, run_federation, FedClient, FedConfig, ModelKind, PathModel};
pub use gan::GanParams;
pub use link::LinkModel;
pub use metrics::{kl_divergence_hist, wasserstein1, EvalRow, MetricsReport};
pub use nn::{Activation, AdamState, LayerSpec, ModelWeights, TrainConfig};
pub use synth::{
    CityDataset, CityProfile, FeatureScaler, GnbType, LinkCondition, LinkRecord, LinkState,
    PathVector,
};
pub use vae::VaeParams;
