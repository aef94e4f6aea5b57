//! Binary weight-file format.
//!
//! Layout: magic `"FCW1"`, length-prefixed UTF-8 model name, layer count,
//! per-layer `(input_dim: u32, output_dim: u32, activation: u8)`, a
//! redundant `u64` parameter count, then the flattened parameters as
//! little-endian `f64` values.

use std::fs;
use std::path::Path;

use super::{param_count, validate_specs, Activation, LayerSpec, ModelWeights, NnError, Result};

pub const WEIGHT_MAGIC: &[u8; 4] = b"FCW1";

/// A parsed weight file.
#[derive(Debug, Clone)]
pub struct WeightFile {
    pub name: String,
    pub specs: Vec<LayerSpec>,
    pub weights: ModelWeights,
}

/// Serialize a weight file to bytes.
pub fn encode_weights(name: &str, specs: &[LayerSpec], weights: &ModelWeights) -> Result<Vec<u8>> {
    validate_specs(specs)?;
    let flat = weights.flatten();
    if flat.len() != param_count(specs) {
        return Err(NnError::LengthMismatch {
            expected: param_count(specs),
            got: flat.len(),
        });
    }
    let mut out = Vec::with_capacity(32 + name.len() + specs.len() * 9 + flat.len() * 8);
    out.extend_from_slice(WEIGHT_MAGIC);
    let name_bytes = name.as_bytes();
    out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(name_bytes);
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for s in specs {
        out.extend_from_slice(&(s.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(s.output_dim as u32).to_le_bytes());
        out.push(s.activation.code());
    }
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(NnError::BadWeightFile {
                path: self.path.clone(),
                msg: format!("truncated at byte {}", self.at),
            });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bad(&self, msg: impl Into<String>) -> NnError {
        NnError::BadWeightFile {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }
}

/// Parse a weight file from bytes; `origin` names the source in errors.
pub fn decode_weights(bytes: &[u8], origin: &str) -> Result<WeightFile> {
    let mut r = Reader {
        buf: bytes,
        at: 0,
        path: origin.to_string(),
    };
    if r.take(4)? != WEIGHT_MAGIC {
        return Err(r.bad("bad magic, not a weight file"));
    }
    let name_len = r.u16()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| r.bad("model name is not UTF-8"))?
        .to_string();
    let layer_count = r.u32()? as usize;
    let mut specs = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let input_dim = r.u32()? as usize;
        let output_dim = r.u32()? as usize;
        let code = r.take(1)?[0];
        let activation = Activation::from_code(code)
            .ok_or_else(|| r.bad(format!("layer {i}: unknown activation code {code}")))?;
        specs.push(LayerSpec::new(input_dim, output_dim, activation));
    }
    validate_specs(&specs).map_err(|e| r.bad(format!("invalid specs: {e}")))?;
    let declared = r.u64()? as usize;
    let expected = param_count(&specs);
    if declared != expected {
        return Err(r.bad(format!(
            "declared parameter count {declared} does not match specs ({expected})"
        )));
    }
    let mut flat = Vec::with_capacity(declared);
    for _ in 0..declared {
        flat.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
    }
    if r.at != bytes.len() {
        return Err(r.bad(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    let weights = ModelWeights::unflatten(&flat, &specs)?;
    Ok(WeightFile { name, specs, weights })
}

/// Write a weight file to disk.
pub fn write_weights(
    path: impl AsRef<Path>,
    name: &str,
    specs: &[LayerSpec],
    weights: &ModelWeights,
) -> Result<()> {
    let bytes = encode_weights(name, specs, weights)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a weight file from disk.
pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightFile> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_weights(&bytes, &path.display().to_string())
}
