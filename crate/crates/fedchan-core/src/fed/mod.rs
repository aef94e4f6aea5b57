//! Synchronous federated training engine.
//!
//! Each round broadcasts the global parameters to every city client, runs
//! the model's local trainer for a fixed number of epochs, and aggregates
//! the post-training parameters with a sample-count-weighted average —
//! encoder and decoder vectors separately for the VAE, generator and
//! discriminator separately for the GAN. All clients participate every
//! round; a client failure aborts the round.

pub mod exchange;

use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gan::{self, GanParams};
use crate::link::LinkModel;
use crate::nn::{self, ModelWeights, TrainConfig};
use crate::seeds;
use crate::synth::{FeatureScaler, LinkCondition, LinkRecord, PathVector, SynthError};
use crate::vae::{self, VaeParams};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("no clients configured")]
    NoClients,
    #[error("no parameter updates to aggregate")]
    NoUpdates,
    #[error("update {index} has length {got}, expected {expected}")]
    UpdateLengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("client sample counts must be positive")]
    ZeroClientCount,
    #[error("client {id} failed: {source}")]
    ClientFailed {
        id: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("exchange protocol: {0}")]
    Protocol(String),
    #[error("payload is for round {got}, expected {expected}")]
    WrongRound { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FedError>;

/// Which generative path model the federation trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Vae,
    Gan,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Vae => "vae",
            ModelKind::Gan => "gan",
        }
    }
}

/// A path model of either kind, treated uniformly by the orchestrator.
#[derive(Debug, Clone, PartialEq)]
pub enum PathModel {
    Vae(VaeParams),
    Gan(GanParams),
}

impl PathModel {
    /// Seeded canonical model of the given kind.
    pub fn init(kind: ModelKind, seed: u64) -> PathModel {
        match kind {
            ModelKind::Vae => PathModel::Vae(VaeParams::standard(seed)),
            ModelKind::Gan => PathModel::Gan(GanParams::standard(seed)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            PathModel::Vae(_) => ModelKind::Vae,
            PathModel::Gan(_) => ModelKind::Gan,
        }
    }

    /// Names of the aggregated component networks, in aggregation order.
    pub fn component_names(&self) -> &'static [&'static str] {
        match self {
            PathModel::Vae(_) => &["encoder", "decoder"],
            PathModel::Gan(_) => &["generator", "discriminator"],
        }
    }

    fn component_weights(&self) -> Vec<&ModelWeights> {
        match self {
            PathModel::Vae(v) => vec![&v.encoder, &v.decoder],
            PathModel::Gan(g) => vec![&g.generator, &g.discriminator],
        }
    }

    /// Flattened parameter vector per component network.
    pub fn component_vectors(&self) -> Vec<Vec<f64>> {
        self.component_weights().iter().map(|w| w.flatten()).collect()
    }

    /// Rebuild this model's shape around replacement component vectors.
    pub fn with_component_vectors(&self, vectors: &[Vec<f64>]) -> Result<PathModel> {
        let names = self.component_names();
        if vectors.len() != names.len() {
            return Err(FedError::Protocol(format!(
                "expected {} components, got {}",
                names.len(),
                vectors.len()
            )));
        }
        match self {
            PathModel::Vae(v) => {
                let enc = ModelWeights::unflatten(&vectors[0], v.encoder_specs())?;
                let dec = ModelWeights::unflatten(&vectors[1], v.decoder_specs())?;
                let rebuilt = v
                    .with_weights(enc, dec)
                    .map_err(|e| FedError::Protocol(e.to_string()))?;
                Ok(PathModel::Vae(rebuilt))
            }
            PathModel::Gan(g) => {
                let generator = ModelWeights::unflatten(&vectors[0], g.generator_specs())?;
                let discriminator = ModelWeights::unflatten(&vectors[1], g.discriminator_specs())?;
                let rebuilt = g
                    .with_weights(generator, discriminator)
                    .map_err(|e| FedError::Protocol(e.to_string()))?;
                Ok(PathModel::Gan(rebuilt))
            }
        }
    }

    /// Run the model's local trainer; returns the trained copy and the mean
    /// local loss over the run.
    pub fn train_local(
        &self,
        records: &[LinkRecord],
        scaler: &FeatureScaler,
        cfg: &TrainConfig,
    ) -> std::result::Result<(PathModel, f64), Box<dyn std::error::Error + Send + Sync>> {
        match self {
            PathModel::Vae(v) => {
                let (trained, losses) = vae::train_local_vae(v, records, scaler, cfg)?;
                Ok((PathModel::Vae(trained), mean(&losses)))
            }
            PathModel::Gan(g) => {
                let (trained, losses) = gan::train_local_gan(g, records, scaler, cfg)?;
                Ok((PathModel::Gan(trained), mean(&losses)))
            }
        }
    }

    /// Generate one unscaled path matrix for a condition.
    pub fn sample_paths<R: rand::Rng>(
        &self,
        scaler: &FeatureScaler,
        condition: &LinkCondition,
        rng: &mut R,
    ) -> std::result::Result<PathVector, Box<dyn std::error::Error + Send + Sync>> {
        match self {
            PathModel::Vae(v) => Ok(vae::sample_paths_vae(v, scaler, condition, rng)?),
            PathModel::Gan(g) => Ok(gan::sample_paths_gan(g, scaler, condition, rng)?),
        }
    }

    /// SHA-256 over the little-endian bytes of every component vector.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for vector in self.component_vectors() {
            for v in vector {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// One federated city client: its eligible training records, feature
/// scaler, and (frozen, optional) link-state classifier.
#[derive(Debug, Clone)]
pub struct FedClient {
    pub id: String,
    pub records: Vec<LinkRecord>,
    pub scaler: FeatureScaler,
    pub link_model: Option<LinkModel>,
}

impl FedClient {
    pub fn sample_count(&self) -> usize {
        self.records.len()
    }
}

/// Federation hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct FedConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub model_kind: ModelKind,
    pub seed: u64,
}

/// Per-client result recorded for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundResult {
    pub client_id: String,
    pub mean_local_loss: f64,
}

/// History entry for one completed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub clients: Vec<ClientRoundResult>,
    /// Checksum of the aggregated global parameters after this round.
    pub global_checksum: String,
    pub wall_time_s: f64,
}

pub type RoundHistory = Vec<RoundRecord>;

/// Sample-count-weighted average of flattened parameter vectors:
/// `out[i] = sum_k (n_k / n) * updates[k][i]`.
///
/// Summation over clients is pairwise in fixed client order, so the result
/// is reproducible and permutation-stable to rounding error.
pub fn aggregate_weighted(updates: &[Vec<f64>], counts: &[usize]) -> Result<Vec<f64>> {
    if updates.is_empty() || updates.len() != counts.len() {
        return Err(FedError::NoUpdates);
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(FedError::ZeroClientCount);
    }
    let len = updates[0].len();
    for (k, u) in updates.iter().enumerate() {
        if u.len() != len {
            return Err(FedError::UpdateLengthMismatch {
                index: k,
                expected: len,
                got: u.len(),
            });
        }
    }
    let total: usize = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();

    // Pairwise reduction over the client axis.
    fn reduce(updates: &[Vec<f64>], weights: &[f64], lo: usize, hi: usize, i: usize) -> f64 {
        if hi - lo == 1 {
            weights[lo] * updates[lo][i]
        } else {
            let mid = lo + (hi - lo) / 2;
            reduce(updates, weights, lo, mid, i) + reduce(updates, weights, mid, hi, i)
        }
    }
    let k = updates.len();
    Ok((0..len)
        .map(|i| reduce(updates, &weights, 0, k, i))
        .collect())
}

/// One synchronous round: broadcast, local training, weighted aggregation.
/// When `exchange_dir` is set, every client payload and the aggregated
/// global model are also written under `round_<t>/`.
pub fn fed_round(
    global: &PathModel,
    clients: &[FedClient],
    cfg: &FedConfig,
    round: usize,
    exchange_dir: Option<&Path>,
) -> Result<(PathModel, RoundRecord)> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    let started = Instant::now();
    let mut per_component_updates: Vec<Vec<Vec<f64>>> =
        vec![Vec::with_capacity(clients.len()); global.component_names().len()];
    let mut counts = Vec::with_capacity(clients.len());
    let mut results = Vec::with_capacity(clients.len());
    for (idx, client) in clients.iter().enumerate() {
        // Every client starts from the identical broadcast parameters and
        // a freshly derived seed; Adam state is reset inside train_local.
        let local_cfg = TrainConfig {
            learning_rate: cfg.learning_rate,
            epochs: cfg.local_epochs,
            batch_size: cfg.batch_size,
            seed: seeds::client_round_seed(cfg.seed, idx, round),
        };
        let (trained, mean_loss) = global
            .train_local(&client.records, &client.scaler, &local_cfg)
            .map_err(|source| FedError::ClientFailed {
                id: client.id.clone(),
                source,
            })?;
        if let Some(dir) = exchange_dir {
            exchange::write_client_payload(
                dir,
                round,
                &client.id,
                client.sample_count() as u64,
                &trained,
            )?;
        }
        for (slot, vector) in per_component_updates
            .iter_mut()
            .zip(trained.component_vectors())
        {
            slot.push(vector);
        }
        counts.push(client.sample_count());
        results.push(ClientRoundResult {
            client_id: client.id.clone(),
            mean_local_loss: mean_loss,
        });
    }
    let aggregated: Vec<Vec<f64>> = per_component_updates
        .iter()
        .map(|vectors| aggregate_weighted(vectors, &counts))
        .collect::<Result<_>>()?;
    let new_global = global.with_component_vectors(&aggregated)?;
    if let Some(dir) = exchange_dir {
        let total: usize = counts.iter().sum();
        exchange::write_global_payload(dir, round, total as u64, &new_global)?;
    }
    let record = RoundRecord {
        round,
        clients: results,
        global_checksum: new_global.checksum(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((new_global, record))
}

/// Run `cfg.rounds` federated rounds from a seeded initial model.
pub fn run_federation(
    cfg: &FedConfig,
    clients: &[FedClient],
    exchange_dir: Option<&Path>,
) -> Result<(PathModel, RoundHistory)> {
    let initial = PathModel::init(
        cfg.model_kind,
        seeds::mix(cfg.seed, seeds::purpose::MODEL_INIT),
    );
    run_federation_from(initial, cfg, clients, exchange_dir)
}

/// Run the federation from an explicit initial model.
pub fn run_federation_from(
    initial: PathModel,
    cfg: &FedConfig,
    clients: &[FedClient],
    exchange_dir: Option<&Path>,
) -> Result<(PathModel, RoundHistory)> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    let mut global = initial;
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let (next, record) = fed_round(&global, clients, cfg, round, exchange_dir)?;
        global = next;
        history.push(record);
    }
    Ok((global, history))
}

/// Write the round history CSV: `round,client,mean_local_loss,checksum`.
/// The checksum column carries the aggregated global checksum of the round.
pub fn write_history(history: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["round", "client", "mean_local_loss", "checksum"])?;
    for record in history {
        for client in &record.clients {
            w.write_record([
                record.round.to_string(),
                client.client_id.clone(),
                format!("{}", client.mean_local_loss),
                record.global_checksum.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

impl From<SynthError> for FedError {
    fn from(e: SynthError) -> Self {
        FedError::Protocol(e.to_string())
    }
}
