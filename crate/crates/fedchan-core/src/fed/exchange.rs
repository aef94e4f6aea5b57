//! Directory-based parameter exchange.
//!
//! Layout: `<dir>/round_<t>/client_<id>.fcw` for per-client updates plus
//! `<dir>/round_<t>/global.fcw` for the aggregated model. A payload wraps
//! the component weight files with the round number, the sender id, and
//! the sender's sample count, so a reader can validate all three.

use std::fs;
use std::path::{Path, PathBuf};

use super::{FedError, PathModel, Result};
use crate::nn;

const PAYLOAD_MAGIC: &[u8; 4] = b"FCX1";

pub fn round_dir(base: &Path, round: usize) -> PathBuf {
    base.join(format!("round_{round}"))
}

pub fn client_payload_path(base: &Path, round: usize, client_id: &str) -> PathBuf {
    round_dir(base, round).join(format!("client_{client_id}.fcw"))
}

pub fn global_payload_path(base: &Path, round: usize) -> PathBuf {
    round_dir(base, round).join("global.fcw")
}

/// A decoded exchange payload.
#[derive(Debug, Clone)]
pub struct Payload {
    pub round: usize,
    pub sender_id: String,
    pub sample_count: u64,
    pub model: PathModel,
}

/// Serialize a payload: magic, round, sender, sample count, then one
/// length-prefixed embedded weight file per model component.
pub fn encode_payload(
    round: usize,
    sender_id: &str,
    sample_count: u64,
    model: &PathModel,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(PAYLOAD_MAGIC);
    out.extend_from_slice(&(round as u32).to_le_bytes());
    let id = sender_id.as_bytes();
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&sample_count.to_le_bytes());
    let names = model.component_names();
    out.push(names.len() as u8);
    let weights = match model {
        PathModel::Vae(v) => vec![
            nn::encode_weights(names[0], v.encoder_specs(), &v.encoder)?,
            nn::encode_weights(names[1], v.decoder_specs(), &v.decoder)?,
        ],
        PathModel::Gan(g) => vec![
            nn::encode_weights(names[0], g.generator_specs(), &g.generator)?,
            nn::encode_weights(names[1], g.discriminator_specs(), &g.discriminator)?,
        ],
    };
    for blob in weights {
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    Ok(out)
}

/// Parse and validate a payload against the expected round and a template
/// model that pins the component count, names, and layer shapes.
pub fn decode_payload(
    bytes: &[u8],
    expected_round: usize,
    template: &PathModel,
    origin: &str,
) -> Result<Payload> {
    let err = |msg: String| FedError::Protocol(format!("{origin}: {msg}"));
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8]> {
        if *at + n > bytes.len() {
            return Err(FedError::Protocol(format!(
                "{origin}: truncated at byte {at}",
                at = *at
            )));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    if take(&mut at, 4)? != PAYLOAD_MAGIC {
        return Err(err("bad magic, not an exchange payload".into()));
    }
    let round = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    if round != expected_round {
        return Err(FedError::WrongRound {
            expected: expected_round,
            got: round,
        });
    }
    let id_len = u16::from_le_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
    let sender_id = std::str::from_utf8(take(&mut at, id_len)?)
        .map_err(|_| err("sender id is not UTF-8".into()))?
        .to_string();
    let sample_count = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
    let count = take(&mut at, 1)?[0] as usize;
    let names = template.component_names();
    if count != names.len() {
        return Err(err(format!(
            "payload has {count} components, expected {}",
            names.len()
        )));
    }
    let mut vectors = Vec::with_capacity(count);
    let template_weights = template.component_vectors();
    for (i, name) in names.iter().enumerate() {
        let blob_len = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
        let blob = take(&mut at, blob_len)?;
        let file = nn::decode_weights(blob, origin)?;
        if file.name != *name {
            return Err(err(format!(
                "component {i} is named {:?}, expected {name:?}",
                file.name
            )));
        }
        let flat = file.weights.flatten();
        if flat.len() != template_weights[i].len() {
            return Err(err(format!(
                "component {name} has {} parameters, expected {}",
                flat.len(),
                template_weights[i].len()
            )));
        }
        vectors.push(flat);
    }
    if at != bytes.len() {
        return Err(err(format!("{} trailing bytes", bytes.len() - at)));
    }
    let model = template.with_component_vectors(&vectors)?;
    Ok(Payload {
        round,
        sender_id,
        sample_count,
        model,
    })
}

/// Write one client's post-training payload for a round.
pub fn write_client_payload(
    base: &Path,
    round: usize,
    client_id: &str,
    sample_count: u64,
    model: &PathModel,
) -> Result<()> {
    let dir = round_dir(base, round);
    fs::create_dir_all(&dir)?;
    let bytes = encode_payload(round, client_id, sample_count, model)?;
    fs::write(client_payload_path(base, round, client_id), bytes)?;
    Ok(())
}

/// Write the aggregated global payload for a round.
pub fn write_global_payload(
    base: &Path,
    round: usize,
    total_samples: u64,
    model: &PathModel,
) -> Result<()> {
    let dir = round_dir(base, round);
    fs::create_dir_all(&dir)?;
    let bytes = encode_payload(round, "global", total_samples, model)?;
    fs::write(global_payload_path(base, round), bytes)?;
    Ok(())
}

/// Read and validate one payload file.
pub fn read_payload(path: &Path, expected_round: usize, template: &PathModel) -> Result<Payload> {
    let bytes = fs::read(path)?;
    decode_payload(&bytes, expected_round, template, &path.display().to_string())
}
