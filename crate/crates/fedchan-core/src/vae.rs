//! Conditional VAE path model.
//!
//! The encoder maps a scaled (path matrix, condition) pair to the mean and
//! log-variance of a 20-dim Gaussian latent; the decoder maps (latent,
//! condition) back to per-dimension output means and log-variances. The
//! local objective is Gaussian reconstruction negative log-likelihood plus
//! the KL divergence of the latent posterior from the unit prior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::nn::{
    self, dense_specs, gaussian_kl, Activation, AdamState, LayerSpec, Mat, ModelWeights,
    TrainConfig,
};
use crate::synth::{
    FeatureScaler, LinkCondition, LinkRecord, PathVector, ScaledBatch, SynthError, COND_DIM,
    MAX_PATH_LOSS_DB, PARAMS_PER_PATH, PATH_DIM,
};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model dims {data}x{cond} are not the canonical path-model dims")]
    NotCanonical { data: usize, cond: usize },
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T> = std::result::Result<T, VaeError>;

/// Output log-variances are clamped to this band to keep the Gaussian
/// likelihood finite early in training.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Latent width of the canonical model.
pub const LATENT_DIM: usize = 20;

const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Encoder/decoder parameter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub encoder: ModelWeights,
    pub decoder: ModelWeights,
    enc_specs: Vec<LayerSpec>,
    dec_specs: Vec<LayerSpec>,
    data_dim: usize,
    cond_dim: usize,
    latent_dim: usize,
}

impl VaeParams {
    /// Build a VAE with the given widths; asserts the dimension contract
    /// (encoder in = data + cond, encoder out = 2 * latent, decoder in =
    /// latent + cond, decoder out = 2 * data) at construction.
    pub fn with_dims(
        data_dim: usize,
        cond_dim: usize,
        latent_dim: usize,
        enc_hidden: &[usize],
        dec_hidden: &[usize],
        seed: u64,
    ) -> VaeParams {
        let enc_specs = dense_specs(data_dim + cond_dim, enc_hidden, 2 * latent_dim, Activation::Linear);
        let dec_specs = dense_specs(latent_dim + cond_dim, dec_hidden, 2 * data_dim, Activation::Linear);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = ModelWeights::he_uniform(&enc_specs, &mut rng);
        let decoder = ModelWeights::he_uniform(&dec_specs, &mut rng);
        VaeParams {
            encoder,
            decoder,
            enc_specs,
            dec_specs,
            data_dim,
            cond_dim,
            latent_dim,
        }
    }

    /// Canonical path model: encoder 125 -> [200, 80] -> 40, decoder
    /// 25 -> [80, 200] -> 240, latent width 20.
    pub fn standard(seed: u64) -> VaeParams {
        VaeParams::with_dims(PATH_DIM, COND_DIM, LATENT_DIM, &[200, 80], &[80, 200], seed)
    }

    pub fn encoder_specs(&self) -> &[LayerSpec] {
        &self.enc_specs
    }

    pub fn decoder_specs(&self) -> &[LayerSpec] {
        &self.dec_specs
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn param_counts(&self) -> (usize, usize) {
        (self.encoder.param_count(), self.decoder.param_count())
    }

    /// Rebuild with replacement weights (shapes must match).
    pub fn with_weights(&self, encoder: ModelWeights, decoder: ModelWeights) -> Result<VaeParams> {
        let mut out = self.clone();
        if encoder.param_count() != self.encoder.param_count()
            || decoder.param_count() != self.decoder.param_count()
        {
            return Err(VaeError::DimensionMismatch {
                expected: self.encoder.param_count() + self.decoder.param_count(),
                got: encoder.param_count() + decoder.param_count(),
            });
        }
        out.encoder = encoder;
        out.decoder = decoder;
        Ok(out)
    }

    /// Encode one scaled (path, condition) pair into latent statistics.
    pub fn encode(&self, path_scaled: &[f64], cond_scaled: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if path_scaled.len() != self.data_dim {
            return Err(VaeError::DimensionMismatch {
                expected: self.data_dim,
                got: path_scaled.len(),
            });
        }
        if cond_scaled.len() != self.cond_dim {
            return Err(VaeError::DimensionMismatch {
                expected: self.cond_dim,
                got: cond_scaled.len(),
            });
        }
        let mut input = Vec::with_capacity(self.data_dim + self.cond_dim);
        input.extend_from_slice(path_scaled);
        input.extend_from_slice(cond_scaled);
        let out = nn::forward(&self.encoder, &self.enc_specs, &input)?;
        Ok((
            out[..self.latent_dim].to_vec(),
            out[self.latent_dim..].to_vec(),
        ))
    }

    /// Decode a latent plus condition into per-dimension output statistics;
    /// the returned log-variances are clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]`.
    pub fn decode(&self, z: &[f64], cond_scaled: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if z.len() != self.latent_dim {
            return Err(VaeError::DimensionMismatch {
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        if cond_scaled.len() != self.cond_dim {
            return Err(VaeError::DimensionMismatch {
                expected: self.cond_dim,
                got: cond_scaled.len(),
            });
        }
        let mut input = Vec::with_capacity(self.latent_dim + self.cond_dim);
        input.extend_from_slice(z);
        input.extend_from_slice(cond_scaled);
        let out = nn::forward(&self.decoder, &self.dec_specs, &input)?;
        let out_mu = out[..self.data_dim].to_vec();
        let out_logvar = out[self.data_dim..]
            .iter()
            .map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))
            .collect();
        Ok((out_mu, out_logvar))
    }
}

/// `z = mu + exp(0.5 * logvar) * noise`, element-wise.
pub fn reparameterize(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Vec<f64> {
    assert_eq!(mu.len(), logvar.len());
    assert_eq!(mu.len(), noise.len());
    mu.iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect()
}

/// Gradients of the batch loss for both networks.
pub struct VaeGradients {
    pub encoder: ModelWeights,
    pub decoder: ModelWeights,
}

/// Loss split into reconstruction and KL parts (both batch means).
#[derive(Debug, Clone, Copy)]
pub struct VaeLossParts {
    pub reconstruction: f64,
    pub kl: f64,
}

impl VaeLossParts {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.kl
    }
}

struct VaeForward {
    enc_trace: nn::BatchTrace,
    dec_trace: nn::BatchTrace,
    mu: Mat,
    logvar: Mat,
    noise: Mat,
    out_mu: Mat,
    out_logvar_raw: Mat,
    parts: VaeLossParts,
}

fn vae_forward(params: &VaeParams, batch: &ScaledBatch, noise: &Mat) -> Result<VaeForward> {
    let m = batch.len();
    if m == 0 {
        return Err(VaeError::EmptyBatch);
    }
    assert_eq!(noise.rows(), m, "noise rows must match batch");
    assert_eq!(noise.cols(), params.latent_dim, "noise width must match latent");
    let enc_in = batch.paths.hconcat(&batch.conds);
    let (enc_out, enc_trace) = nn::forward_batch(&params.encoder, &params.enc_specs, &enc_in)?;
    let mu = enc_out.slice_cols(0, params.latent_dim);
    let logvar = enc_out.slice_cols(params.latent_dim, 2 * params.latent_dim);

    let mut z = Mat::zeros(m, params.latent_dim);
    for i in 0..m {
        let zr = z.row_mut(i);
        for (j, v) in zr.iter_mut().enumerate() {
            *v = mu.row(i)[j] + (0.5 * logvar.row(i)[j]).exp() * noise.row(i)[j];
        }
    }

    let dec_in = z.hconcat(&batch.conds);
    let (dec_out, dec_trace) = nn::forward_batch(&params.decoder, &params.dec_specs, &dec_in)?;
    let out_mu = dec_out.slice_cols(0, params.data_dim);
    let out_logvar_raw = dec_out.slice_cols(params.data_dim, 2 * params.data_dim);

    let mut nll_sum = 0.0;
    for i in 0..m {
        let x = batch.paths.row(i);
        let mu_r = out_mu.row(i);
        let lv_r = out_logvar_raw.row(i);
        for d in 0..params.data_dim {
            let lv = lv_r[d].clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
            let resid = x[d] - mu_r[d];
            nll_sum += 0.5 * (LN_2PI + lv + resid * resid * (-lv).exp());
        }
    }
    let mut kl_sum = 0.0;
    for i in 0..m {
        kl_sum += gaussian_kl(mu.row(i), logvar.row(i))?;
    }
    let parts = VaeLossParts {
        reconstruction: nll_sum / m as f64,
        kl: kl_sum / m as f64,
    };
    Ok(VaeForward {
        enc_trace,
        dec_trace,
        mu,
        logvar,
        noise: noise.clone(),
        out_mu,
        out_logvar_raw,
        parts,
    })
}

/// Batch loss with explicit reparameterization noise (one row per sample).
pub fn vae_loss_with_noise(params: &VaeParams, batch: &ScaledBatch, noise: &Mat) -> Result<f64> {
    Ok(vae_forward(params, batch, noise)?.parts.total())
}

/// Loss decomposition with explicit noise.
pub fn vae_loss_parts(params: &VaeParams, batch: &ScaledBatch, noise: &Mat) -> Result<VaeLossParts> {
    Ok(vae_forward(params, batch, noise)?.parts)
}

fn draw_noise<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let mut noise = Mat::zeros(rows, cols);
    for i in 0..rows {
        for v in noise.row_mut(i) {
            *v = rng.sample(StandardNormal);
        }
    }
    noise
}

/// Batch loss with noise drawn from `rng`.
pub fn vae_loss<R: Rng>(params: &VaeParams, batch: &ScaledBatch, rng: &mut R) -> Result<f64> {
    let noise = draw_noise(batch.len(), params.latent_dim(), rng);
    vae_loss_with_noise(params, batch, &noise)
}

/// Loss plus gradients for both networks, with frozen noise.
pub fn vae_loss_and_grads(
    params: &VaeParams,
    batch: &ScaledBatch,
    noise: &Mat,
) -> Result<(f64, VaeGradients)> {
    let fwd = vae_forward(params, batch, noise)?;
    let m = batch.len();
    let m_f = m as f64;
    let ddim = params.data_dim;
    let ldim = params.latent_dim;

    // d(mean NLL) / d(decoder outputs).
    let mut dout_dec = Mat::zeros(m, 2 * ddim);
    for i in 0..m {
        let x = batch.paths.row(i);
        let mu_r = fwd.out_mu.row(i);
        let lv_raw = fwd.out_logvar_raw.row(i);
        let drow = dout_dec.row_mut(i);
        for d in 0..ddim {
            let clamped = lv_raw[d].abs() >= LOGVAR_CLAMP;
            let lv = lv_raw[d].clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
            let inv_var = (-lv).exp();
            let resid = mu_r[d] - x[d];
            drow[d] = resid * inv_var / m_f;
            drow[ddim + d] = if clamped {
                0.0
            } else {
                0.5 * (1.0 - resid * resid * inv_var) / m_f
            };
        }
    }
    let dec_grads = nn::backward_batch(&params.decoder, &params.dec_specs, &fwd.dec_trace, &dout_dec)?;
    let dz = dec_grads.input.slice_cols(0, ldim);

    // d loss / d(encoder outputs): reparameterization path plus KL term.
    let mut dout_enc = Mat::zeros(m, 2 * ldim);
    for i in 0..m {
        let drow = dout_enc.row_mut(i);
        let dz_r = dz.row(i);
        let mu_r = fwd.mu.row(i);
        let lv_r = fwd.logvar.row(i);
        let noise_r = fwd.noise.row(i);
        for l in 0..ldim {
            let sigma = (0.5 * lv_r[l]).exp();
            drow[l] = dz_r[l] + mu_r[l] / m_f;
            drow[ldim + l] =
                dz_r[l] * noise_r[l] * 0.5 * sigma - 0.5 * (1.0 - lv_r[l].exp()) / m_f;
        }
    }
    let enc_grads = nn::backward_batch(&params.encoder, &params.enc_specs, &fwd.enc_trace, &dout_enc)?;

    Ok((
        fwd.parts.total(),
        VaeGradients {
            encoder: enc_grads.weights,
            decoder: dec_grads.weights,
        },
    ))
}

/// Minibatch Adam over `cfg.epochs` epochs; deterministic under `cfg.seed`.
/// Returns the updated parameters and per-epoch mean losses.
pub fn train_local_vae(
    params: &VaeParams,
    records: &[LinkRecord],
    scaler: &FeatureScaler,
    cfg: &TrainConfig,
) -> Result<(VaeParams, Vec<f64>)> {
    if records.is_empty() {
        return Err(VaeError::EmptyTrainingSet);
    }
    let all = ScaledBatch::from_records(scaler, records)?;
    let mut out = params.clone();
    train_scaled_vae(&mut out, &all, cfg).map(|losses| (out, losses))
}

/// Training core over a pre-scaled dataset; used by both the record-level
/// entry point and tests that construct batches directly.
pub fn train_scaled_vae(
    params: &mut VaeParams,
    data: &ScaledBatch,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(VaeError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam_enc = AdamState::for_model(&params.encoder);
    let mut adam_dec = AdamState::for_model(&params.decoder);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut acc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let noise = draw_noise(batch.len(), params.latent_dim(), &mut rng);
            let (loss, grads) = vae_loss_and_grads(params, &batch, &noise)?;
            acc += loss * batch.len() as f64;
            nn::adam_step(&mut params.encoder, &grads.encoder, &mut adam_enc, cfg.learning_rate)?;
            nn::adam_step(&mut params.decoder, &grads.decoder, &mut adam_dec, cfg.learning_rate)?;
        }
        epoch_losses.push(acc / n as f64);
    }
    Ok(epoch_losses)
}

/// Draw one scaled output vector: `z ~ N(0, I)`, decode, then sample
/// `x ~ N(out_mu, exp(out_logvar))`.
pub fn sample_scaled<R: Rng>(
    params: &VaeParams,
    cond_scaled: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let z: Vec<f64> = (0..params.latent_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let (out_mu, out_logvar) = params.decode(&z, cond_scaled)?;
    Ok(out_mu
        .iter()
        .zip(&out_logvar)
        .map(|(m, lv)| m + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Generate one unscaled path matrix for a condition, clamping every path
/// loss to the 200 dB ceiling. Requires the canonical model dims.
pub fn sample_paths_vae<R: Rng>(
    params: &VaeParams,
    scaler: &FeatureScaler,
    condition: &LinkCondition,
    rng: &mut R,
) -> Result<PathVector> {
    if params.data_dim != PATH_DIM || params.cond_dim != COND_DIM {
        return Err(VaeError::NotCanonical {
            data: params.data_dim,
            cond: params.cond_dim,
        });
    }
    let cond_scaled = scaler.apply_condition(condition);
    let scaled = sample_scaled(params, &cond_scaled, rng)?;
    let mut raw = scaler.invert_paths(&scaled);
    for p in 0..crate::synth::NUM_PATHS {
        let o = p * PARAMS_PER_PATH;
        raw[o] = raw[o].min(MAX_PATH_LOSS_DB);
    }
    Ok(PathVector(raw))
}
