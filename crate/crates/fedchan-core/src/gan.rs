//! Conditional GAN path model.
//!
//! The generator maps (noise, condition) to per-dimension output means and
//! log-variances, exactly like the VAE decoder head, so sampling stays
//! stochastic. The discriminator scores scaled (path, condition) pairs
//! with a scalar sigmoid head. Training alternates one discriminator step
//! and one generator step per minibatch; the generator uses the
//! non-saturating objective `-log D(fake)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::nn::{
    self, dense_specs, Activation, AdamState, LayerSpec, Mat, ModelWeights, TrainConfig,
    PROB_FLOOR,
};
use crate::synth::{
    FeatureScaler, LinkCondition, LinkRecord, PathVector, ScaledBatch, SynthError, COND_DIM,
    MAX_PATH_LOSS_DB, PARAMS_PER_PATH, PATH_DIM,
};
use crate::vae::LOGVAR_CLAMP;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("real and noise batches have different sizes: {real} vs {noise}")]
    BatchSizeMismatch { real: usize, noise: usize },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model dims {data}x{cond} are not the canonical path-model dims")]
    NotCanonical { data: usize, cond: usize },
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T> = std::result::Result<T, GanError>;

/// Noise width of the canonical generator.
pub const NOISE_DIM: usize = 20;

/// Generator/discriminator parameter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GanParams {
    pub generator: ModelWeights,
    pub discriminator: ModelWeights,
    gen_specs: Vec<LayerSpec>,
    disc_specs: Vec<LayerSpec>,
    noise_dim: usize,
    cond_dim: usize,
    data_dim: usize,
}

impl GanParams {
    /// Build a GAN with the given widths; the generator emits `2 * data_dim`
    /// outputs (mean, log-variance), the discriminator a scalar sigmoid.
    pub fn with_dims(
        data_dim: usize,
        cond_dim: usize,
        noise_dim: usize,
        gen_hidden: &[usize],
        disc_hidden: &[usize],
        seed: u64,
    ) -> GanParams {
        let gen_specs = dense_specs(noise_dim + cond_dim, gen_hidden, 2 * data_dim, Activation::Linear);
        let disc_specs = dense_specs(data_dim + cond_dim, disc_hidden, 1, Activation::Sigmoid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = ModelWeights::he_uniform(&gen_specs, &mut rng);
        let discriminator = ModelWeights::he_uniform(&disc_specs, &mut rng);
        GanParams {
            generator,
            discriminator,
            gen_specs,
            disc_specs,
            noise_dim,
            cond_dim,
            data_dim,
        }
    }

    /// Canonical path model: generator 25 -> [280, 560, 1120] -> 240,
    /// discriminator 125 -> [1120, 560, 280] -> 1 (sigmoid).
    pub fn standard(seed: u64) -> GanParams {
        GanParams::with_dims(
            PATH_DIM,
            COND_DIM,
            NOISE_DIM,
            &[280, 560, 1120],
            &[1120, 560, 280],
            seed,
        )
    }

    pub fn generator_specs(&self) -> &[LayerSpec] {
        &self.gen_specs
    }

    pub fn discriminator_specs(&self) -> &[LayerSpec] {
        &self.disc_specs
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Rebuild with replacement weights (shapes must match).
    pub fn with_weights(
        &self,
        generator: ModelWeights,
        discriminator: ModelWeights,
    ) -> Result<GanParams> {
        if generator.param_count() != self.generator.param_count()
            || discriminator.param_count() != self.discriminator.param_count()
        {
            return Err(GanError::DimensionMismatch {
                expected: self.generator.param_count() + self.discriminator.param_count(),
                got: generator.param_count() + discriminator.param_count(),
            });
        }
        let mut out = self.clone();
        out.generator = generator;
        out.discriminator = discriminator;
        Ok(out)
    }

    /// Generator output statistics for one noise/condition pair; the
    /// log-variance half is clamped like the VAE decoder's.
    pub fn generator_forward(&self, noise: &[f64], cond_scaled: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if noise.len() != self.noise_dim {
            return Err(GanError::DimensionMismatch {
                expected: self.noise_dim,
                got: noise.len(),
            });
        }
        if cond_scaled.len() != self.cond_dim {
            return Err(GanError::DimensionMismatch {
                expected: self.cond_dim,
                got: cond_scaled.len(),
            });
        }
        let mut input = Vec::with_capacity(self.noise_dim + self.cond_dim);
        input.extend_from_slice(noise);
        input.extend_from_slice(cond_scaled);
        let out = nn::forward(&self.generator, &self.gen_specs, &input)?;
        let out_mu = out[..self.data_dim].to_vec();
        let out_logvar = out[self.data_dim..]
            .iter()
            .map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))
            .collect();
        Ok((out_mu, out_logvar))
    }

    /// Discriminator probability that a scaled (path, condition) pair is
    /// real; a sigmoid head keeps it inside (0, 1).
    pub fn discriminator_forward(&self, path_scaled: &[f64], cond_scaled: &[f64]) -> Result<f64> {
        if path_scaled.len() != self.data_dim {
            return Err(GanError::DimensionMismatch {
                expected: self.data_dim,
                got: path_scaled.len(),
            });
        }
        if cond_scaled.len() != self.cond_dim {
            return Err(GanError::DimensionMismatch {
                expected: self.cond_dim,
                got: cond_scaled.len(),
            });
        }
        let mut input = Vec::with_capacity(self.data_dim + self.cond_dim);
        input.extend_from_slice(path_scaled);
        input.extend_from_slice(cond_scaled);
        Ok(nn::forward(&self.discriminator, &self.disc_specs, &input)?[0])
    }
}

/// Generator forward over a batch, returning samples via reparameterized
/// output noise plus everything backward needs.
struct GenForward {
    trace: nn::BatchTrace,
    out_logvar_raw: Mat,
    fake: Mat,
}

fn generator_batch(params: &GanParams, noise: &Mat, conds: &Mat, eps: &Mat) -> Result<GenForward> {
    let m = noise.rows();
    let gen_in = noise.hconcat(conds);
    let (gen_out, trace) = nn::forward_batch(&params.generator, &params.gen_specs, &gen_in)?;
    let out_mu = gen_out.slice_cols(0, params.data_dim);
    let out_logvar_raw = gen_out.slice_cols(params.data_dim, 2 * params.data_dim);
    let mut fake = Mat::zeros(m, params.data_dim);
    for i in 0..m {
        let mu_r = out_mu.row(i);
        let lv_r = out_logvar_raw.row(i);
        let e_r = eps.row(i);
        for (d, v) in fake.row_mut(i).iter_mut().enumerate() {
            let lv = lv_r[d].clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
            *v = mu_r[d] + (0.5 * lv).exp() * e_r[d];
        }
    }
    Ok(GenForward {
        trace,
        out_logvar_raw,
        fake,
    })
}

fn check_batch(params: &GanParams, real: &ScaledBatch, noise: &Mat, eps: &Mat) -> Result<()> {
    if real.is_empty() {
        return Err(GanError::EmptyBatch);
    }
    if noise.rows() != real.len() || eps.rows() != real.len() {
        return Err(GanError::BatchSizeMismatch {
            real: real.len(),
            noise: noise.rows(),
        });
    }
    if noise.cols() != params.noise_dim || eps.cols() != params.data_dim {
        return Err(GanError::DimensionMismatch {
            expected: params.noise_dim,
            got: noise.cols(),
        });
    }
    Ok(())
}

/// Both adversarial losses for one real batch and one noise batch:
/// `loss_d = -mean ln D(real) - mean ln(1 - D(fake))` and the
/// non-saturating `loss_g = -mean ln D(fake)`, with probabilities clamped
/// before every log. Both are non-negative.
pub fn gan_losses(
    params: &GanParams,
    real: &ScaledBatch,
    noise: &Mat,
    eps: &Mat,
) -> Result<(f64, f64)> {
    check_batch(params, real, noise, eps)?;
    let m = real.len();
    let gen = generator_batch(params, noise, &real.conds, eps)?;
    let real_in = real.paths.hconcat(&real.conds);
    let fake_in = gen.fake.hconcat(&real.conds);
    let (p_real, _) = nn::forward_batch(&params.discriminator, &params.disc_specs, &real_in)?;
    let (p_fake, _) = nn::forward_batch(&params.discriminator, &params.disc_specs, &fake_in)?;
    let mut loss_d = 0.0;
    let mut loss_g = 0.0;
    for i in 0..m {
        let pr = p_real.row(i)[0];
        let pf = p_fake.row(i)[0];
        loss_d += -pr.max(PROB_FLOOR).ln() - (1.0 - pf).max(PROB_FLOOR).ln();
        loss_g += -pf.max(PROB_FLOOR).ln();
    }
    Ok((loss_d / m as f64, loss_g / m as f64))
}

/// Discriminator loss and gradients for one minibatch; the generator is
/// treated as a constant.
pub fn discriminator_grads(
    params: &GanParams,
    real: &ScaledBatch,
    noise: &Mat,
    eps: &Mat,
) -> Result<(f64, ModelWeights)> {
    check_batch(params, real, noise, eps)?;
    let m = real.len();
    let m_f = m as f64;
    let gen = generator_batch(params, noise, &real.conds, eps)?;
    // One stacked pass: rows 0..m are real, m..2m are fake.
    let stacked = real
        .paths
        .hconcat(&real.conds)
        .vconcat(&gen.fake.hconcat(&real.conds));
    let (probs, trace) = nn::forward_batch(&params.discriminator, &params.disc_specs, &stacked)?;
    let mut dout = Mat::zeros(2 * m, 1);
    let mut loss = 0.0;
    for i in 0..m {
        let pr = probs.row(i)[0];
        loss += -pr.max(PROB_FLOOR).ln();
        dout.row_mut(i)[0] = -1.0 / (m_f * pr.max(PROB_FLOOR));
    }
    for i in 0..m {
        let pf = probs.row(m + i)[0];
        loss += -(1.0 - pf).max(PROB_FLOOR).ln();
        dout.row_mut(m + i)[0] = 1.0 / (m_f * (1.0 - pf).max(PROB_FLOOR));
    }
    let grads = nn::backward_batch(&params.discriminator, &params.disc_specs, &trace, &dout)?;
    Ok((loss / m_f, grads.weights))
}

/// Generator loss and gradients for one minibatch; gradients flow through
/// the frozen discriminator into the generator.
pub fn generator_grads(
    params: &GanParams,
    real: &ScaledBatch,
    noise: &Mat,
    eps: &Mat,
) -> Result<(f64, ModelWeights)> {
    check_batch(params, real, noise, eps)?;
    let m = real.len();
    let m_f = m as f64;
    let gen = generator_batch(params, noise, &real.conds, eps)?;
    let fake_in = gen.fake.hconcat(&real.conds);
    let (probs, disc_trace) =
        nn::forward_batch(&params.discriminator, &params.disc_specs, &fake_in)?;
    let mut dout = Mat::zeros(m, 1);
    let mut loss = 0.0;
    for i in 0..m {
        let pf = probs.row(i)[0];
        loss += -pf.max(PROB_FLOOR).ln();
        dout.row_mut(i)[0] = -1.0 / (m_f * pf.max(PROB_FLOOR));
    }
    let dinput =
        nn::backward_batch_input_only(&params.discriminator, &params.disc_specs, &disc_trace, &dout)?;
    let dfake = dinput.slice_cols(0, params.data_dim);
    // Through the output reparameterization: d fake / d mu = 1,
    // d fake / d logvar = 0.5 * sigma * eps (zero where clamped).
    let mut dgen_out = Mat::zeros(m, 2 * params.data_dim);
    for i in 0..m {
        let df = dfake.row(i);
        let lv_raw = gen.out_logvar_raw.row(i);
        let e_r = eps.row(i);
        let drow = dgen_out.row_mut(i);
        for d in 0..params.data_dim {
            drow[d] = df[d];
            let clamped = lv_raw[d].abs() >= LOGVAR_CLAMP;
            drow[params.data_dim + d] = if clamped {
                0.0
            } else {
                df[d] * e_r[d] * 0.5 * (0.5 * lv_raw[d]).exp()
            };
        }
    }
    let grads = nn::backward_batch(&params.generator, &params.gen_specs, &gen.trace, &dgen_out)?;
    Ok((loss / m_f, grads.weights))
}

fn draw_normal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for v in m.row_mut(i) {
            *v = rng.sample(StandardNormal);
        }
    }
    m
}

/// Alternating minibatch training: one discriminator Adam step then one
/// generator Adam step per batch, for `cfg.epochs` epochs. Deterministic
/// under `cfg.seed`; returns per-epoch mean of `(loss_d + loss_g) / 2`.
pub fn train_local_gan(
    params: &GanParams,
    records: &[LinkRecord],
    scaler: &FeatureScaler,
    cfg: &TrainConfig,
) -> Result<(GanParams, Vec<f64>)> {
    if records.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    let all = ScaledBatch::from_records(scaler, records)?;
    let mut out = params.clone();
    train_scaled_gan(&mut out, &all, cfg).map(|losses| (out, losses))
}

/// Training core over a pre-scaled dataset.
pub fn train_scaled_gan(params: &mut GanParams, data: &ScaledBatch, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(GanError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam_d = AdamState::for_model(&params.discriminator);
    let mut adam_g = AdamState::for_model(&params.generator);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut acc = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let m = batch.len();
            // Discriminator step.
            let z_d = draw_normal(m, params.noise_dim, &mut rng);
            let e_d = draw_normal(m, params.data_dim, &mut rng);
            let (loss_d, dgrads) = discriminator_grads(params, &batch, &z_d, &e_d)?;
            nn::adam_step(&mut params.discriminator, &dgrads, &mut adam_d, cfg.learning_rate)?;
            // Generator step with fresh noise.
            let z_g = draw_normal(m, params.noise_dim, &mut rng);
            let e_g = draw_normal(m, params.data_dim, &mut rng);
            let (loss_g, ggrads) = generator_grads(params, &batch, &z_g, &e_g)?;
            nn::adam_step(&mut params.generator, &ggrads, &mut adam_g, cfg.learning_rate)?;
            acc += 0.5 * (loss_d + loss_g);
            batches += 1;
        }
        epoch_losses.push(acc / batches as f64);
    }
    Ok(epoch_losses)
}

/// Draw one scaled output vector from the generator, sampling the output
/// Gaussian exactly like the VAE sampler.
pub fn sample_scaled<R: Rng>(params: &GanParams, cond_scaled: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let z: Vec<f64> = (0..params.noise_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let (out_mu, out_logvar) = params.generator_forward(&z, cond_scaled)?;
    Ok(out_mu
        .iter()
        .zip(&out_logvar)
        .map(|(m, lv)| m + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Generate one unscaled path matrix for a condition; identical sampling
/// contract to the VAE path sampler, including the 200 dB clamp.
pub fn sample_paths_gan<R: Rng>(
    params: &GanParams,
    scaler: &FeatureScaler,
    condition: &LinkCondition,
    rng: &mut R,
) -> Result<PathVector> {
    if params.data_dim != PATH_DIM || params.cond_dim != COND_DIM {
        return Err(GanError::NotCanonical {
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

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GanParams {
        GanParams::with_dims(1, 1, 2, &[16], &[16], 3)
    }

    fn batch_from(values: &[f64], cond: f64) -> ScaledBatch {
        let n = values.len();
        let mut paths = Mat::zeros(n, 1);
        let mut conds = Mat::zeros(n, 1);
        for i in 0..n {
            paths.row_mut(i)[0] = values[i];
            conds.row_mut(i)[0] = cond;
        }
        ScaledBatch { paths, conds }
    }

    #[test]
    fn standard_dims_match_canonical_architecture() {
        let g = GanParams::standard(1);
        assert_eq!(g.generator_specs()[0].input_dim, 25);
        assert_eq!(g.generator_specs().last().unwrap().output_dim, 240);
        assert_eq!(g.discriminator_specs()[0].input_dim, 125);
        assert_eq!(g.discriminator_specs().last().unwrap().output_dim, 1);
        assert_eq!(
            g.discriminator_specs().last().unwrap().activation,
            Activation::Sigmoid
        );
    }

    #[test]
    fn zero_weight_generator_outputs_zero_and_is_deterministic() {
        let g = tiny();
        let zeroed = g
            .with_weights(
                ModelWeights::zeros(g.generator_specs()),
                ModelWeights::zeros(g.discriminator_specs()),
            )
            .unwrap();
        let (mu, _) = zeroed.generator_forward(&[0.4, -0.3], &[0.2]).unwrap();
        assert_eq!(mu, vec![0.0]);
        let a = g.generator_forward(&[0.4, -0.3], &[0.2]).unwrap();
        let b = g.generator_forward(&[0.4, -0.3], &[0.2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weight_discriminator_outputs_half() {
        let g = tiny();
        let zeroed = g
            .with_weights(
                ModelWeights::zeros(g.generator_specs()),
                ModelWeights::zeros(g.discriminator_specs()),
            )
            .unwrap();
        assert_eq!(zeroed.discriminator_forward(&[0.5], &[0.1]).unwrap(), 0.5);
    }

    #[test]
    fn discriminator_output_stays_in_unit_interval() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let p = g
                .discriminator_forward(&[rng.random_range(-3.0..3.0)], &[rng.random_range(-1.0..1.0)])
                .unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn forward_rejects_wrong_widths() {
        let g = tiny();
        assert!(g.generator_forward(&[0.0], &[0.0]).is_err());
        assert!(g.discriminator_forward(&[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn constant_half_discriminator_gives_known_losses() {
        // Zero discriminator outputs 0.5 everywhere:
        // loss_d = 2 ln 2, loss_g = ln 2.
        let g = tiny();
        let zeroed = g
            .with_weights(
                g.generator.clone(),
                ModelWeights::zeros(g.discriminator_specs()),
            )
            .unwrap();
        let real = batch_from(&[0.1, 0.2, -0.3, 0.4], 0.0);
        let noise = Mat::zeros(4, 2);
        let eps = Mat::zeros(4, 1);
        let (ld, lg) = gan_losses(&zeroed, &real, &noise, &eps).unwrap();
        assert!((ld - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((lg - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn losses_are_nonnegative_and_finite() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let real = batch_from(
            &(0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
            0.3,
        );
        let noise = draw_normal(16, 2, &mut rng);
        let eps = draw_normal(16, 1, &mut rng);
        let (ld, lg) = gan_losses(&g, &real, &noise, &eps).unwrap();
        assert!(ld >= 0.0 && ld.is_finite());
        assert!(lg >= 0.0 && lg.is_finite());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let g = tiny();
        let real = ScaledBatch {
            paths: Mat::zeros(0, 1),
            conds: Mat::zeros(0, 1),
        };
        assert!(matches!(
            gan_losses(&g, &real, &Mat::zeros(0, 2), &Mat::zeros(0, 1)),
            Err(GanError::EmptyBatch)
        ));
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let real = batch_from(
            &(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
            -0.2,
        );
        let noise = draw_normal(8, 2, &mut rng);
        let eps = draw_normal(8, 1, &mut rng);
        let (_, grads) = discriminator_grads(&g, &real, &noise, &eps).unwrap();
        let flat = grads.flatten();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..80 {
            let i = rng.random_range(0..flat.len());
            let loss_at = |delta: f64| -> f64 {
                let mut d = g.discriminator.flatten();
                d[i] += delta;
                let p = g
                    .with_weights(
                        g.generator.clone(),
                        ModelWeights::unflatten(&d, g.discriminator_specs()).unwrap(),
                    )
                    .unwrap();
                gan_losses(&p, &real, &noise, &eps).unwrap().0
            };
            let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let a = flat[i];
            let denom = a.abs().max(fd.abs()).max(1e-6);
            assert!(
                (a - fd).abs() / denom < 1e-4,
                "coord {i}: analytic {a} vs fd {fd}"
            );
        }
    }

    #[test]
    fn generator_gradients_through_discriminator_match_finite_differences() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let real = batch_from(
            &(0..8).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
            0.1,
        );
        let noise = draw_normal(8, 2, &mut rng);
        let eps = draw_normal(8, 1, &mut rng);
        let (_, grads) = generator_grads(&g, &real, &noise, &eps).unwrap();
        let flat = grads.flatten();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..80 {
            let i = rng.random_range(0..flat.len());
            let loss_at = |delta: f64| -> f64 {
                let mut gw = g.generator.flatten();
                gw[i] += delta;
                let p = g
                    .with_weights(
                        ModelWeights::unflatten(&gw, g.generator_specs()).unwrap(),
                        g.discriminator.clone(),
                    )
                    .unwrap();
                gan_losses(&p, &real, &noise, &eps).unwrap().1
            };
            let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let a = flat[i];
            let denom = a.abs().max(fd.abs()).max(1e-6);
            assert!(
                (a - fd).abs() / denom < 1e-4,
                "coord {i}: analytic {a} vs fd {fd}"
            );
        }
    }

    #[test]
    fn alternating_steps_touch_only_their_own_network() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let real = batch_from(&[0.5, -0.5, 0.25, 0.0], 0.0);
        let noise = draw_normal(4, 2, &mut rng);
        let eps = draw_normal(4, 1, &mut rng);
        // A discriminator step must not change the generator and vice versa.
        let mut p = g.clone();
        let (_, dgrads) = discriminator_grads(&p, &real, &noise, &eps).unwrap();
        let mut adam_d = AdamState::for_model(&p.discriminator);
        nn::adam_step(&mut p.discriminator, &dgrads, &mut adam_d, 1e-3).unwrap();
        assert_eq!(p.generator, g.generator);
        assert_ne!(p.discriminator, g.discriminator);

        let mut p = g.clone();
        let (_, ggrads) = generator_grads(&p, &real, &noise, &eps).unwrap();
        let mut adam_g = AdamState::for_model(&p.generator);
        nn::adam_step(&mut p.generator, &ggrads, &mut adam_g, 1e-3).unwrap();
        assert_eq!(p.discriminator, g.discriminator);
        assert_ne!(p.generator, g.generator);
    }

    #[test]
    fn toy_one_dimensional_target_is_learned() {
        // Real data ~ N(3, 1); after 200 alternating steps the generated
        // sample mean lands in (2, 4).
        let g = GanParams::with_dims(1, 1, 2, &[24], &[24], 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let real: Vec<f64> = (0..128)
            .map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data = batch_from(&real, 0.0);
        let mut trained = g.clone();
        let cfg = TrainConfig::new(5e-3, 200, 128, 15);
        train_scaled_gan(&mut trained, &data, &cfg).unwrap();
        let mut acc = 0.0;
        let n = 4000;
        for _ in 0..n {
            acc += sample_scaled(&trained, &[0.0], &mut rng).unwrap()[0];
        }
        let mean = acc / n as f64;
        assert!((2.0..4.0).contains(&mean), "generated mean {mean}");
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let real: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = batch_from(&real, 0.2);
        let cfg = TrainConfig::new(1e-3, 3, 16, 77);
        let mut a = g.clone();
        let la = train_scaled_gan(&mut a, &data, &cfg).unwrap();
        let mut b = g.clone();
        let lb = train_scaled_gan(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn sampling_is_reproducible_under_fixed_rng() {
        let g = tiny();
        let mut r1 = ChaCha8Rng::seed_from_u64(20);
        let mut r2 = ChaCha8Rng::seed_from_u64(20);
        assert_eq!(
            sample_scaled(&g, &[0.3], &mut r1).unwrap(),
            sample_scaled(&g, &[0.3], &mut r2).unwrap()
        );
    }
}
