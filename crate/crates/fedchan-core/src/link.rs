//! First-stage link-state classifier.
//!
//! A small dense softmax network (5 -> 25 -> 10 -> 3) that predicts
//! no-link / LOS / NLOS from the link condition. Trained standalone per
//! city and then frozen; it is never federated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{
    self, cross_entropy, dense_specs, Activation, AdamState, LayerSpec, Mat, ModelWeights,
    TrainConfig, PROB_FLOOR,
};
use crate::synth::{LinkCondition, LinkRecord, LinkState, COND_DIM};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("link state {0:?} is absent from the training set; classifier would be degenerate")]
    MissingClass(LinkState),
    #[error("condition has {got} dims, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] nn::NnError),
}

pub type Result<T> = std::result::Result<T, LinkError>;

/// Horizontal-offset normalization applied before the network, meters.
const HORIZONTAL_NORM_M: f64 = 1000.0;
/// Vertical-offset normalization, meters.
const VERTICAL_NORM_M: f64 = 100.0;

/// Canonical classifier shape: 5 inputs, hidden [25, 10], 3-way softmax.
pub fn link_model_specs() -> Vec<LayerSpec> {
    dense_specs(COND_DIM, &[25, 10], 3, Activation::Softmax)
}

/// A trained link-state classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub weights: ModelWeights,
}

impl LinkModel {
    pub fn new(weights: ModelWeights) -> LinkModel {
        LinkModel { weights }
    }

    /// Seeded random-init model (useful as an untrained baseline).
    pub fn init(seed: u64) -> LinkModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LinkModel {
            weights: ModelWeights::he_uniform(&link_model_specs(), &mut rng),
        }
    }
}

fn features(condition: &LinkCondition) -> [f64; COND_DIM] {
    let raw = condition.to_vec();
    [
        raw[0] / HORIZONTAL_NORM_M,
        raw[1] / HORIZONTAL_NORM_M,
        raw[2] / VERTICAL_NORM_M,
        raw[3],
        raw[4],
    ]
}

/// State probabilities `[P(NoLink), P(LOS), P(NLOS)]` for one condition.
pub fn predict_link_state(model: &LinkModel, condition: &LinkCondition) -> Result<[f64; 3]> {
    let out = nn::forward(&model.weights, &link_model_specs(), &features(condition))?;
    Ok([out[0], out[1], out[2]])
}

/// Most probable state for one condition.
pub fn predict_state_argmax(model: &LinkModel, condition: &LinkCondition) -> Result<LinkState> {
    let probs = predict_link_state(model, condition)?;
    let mut best = 0;
    for i in 1..3 {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    Ok(LinkState::from_code(best as u8).unwrap())
}

/// Fraction of records whose argmax prediction matches the recorded state.
pub fn accuracy(model: &LinkModel, records: &[LinkRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(LinkError::EmptyDataset);
    }
    let mut hits = 0usize;
    for r in records {
        if predict_state_argmax(model, &r.condition)? == r.state {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Mean cross-entropy of the model over `records`.
pub fn mean_cross_entropy(model: &LinkModel, records: &[LinkRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(LinkError::EmptyDataset);
    }
    let mut acc = 0.0;
    for r in records {
        let probs = predict_link_state(model, &r.condition)?;
        acc += cross_entropy(&probs, r.state.index())?;
    }
    Ok(acc / records.len() as f64)
}

/// Train a classifier with minibatch Adam on cross-entropy.
///
/// Returns the model plus the per-epoch mean training loss. Errors if any
/// of the three states is missing from the training set.
pub fn train_link_model(
    train: &[LinkRecord],
    cfg: &TrainConfig,
) -> Result<(LinkModel, Vec<f64>)> {
    if train.is_empty() {
        return Err(LinkError::EmptyDataset);
    }
    for state in LinkState::ALL {
        if !train.iter().any(|r| r.state == state) {
            return Err(LinkError::MissingClass(state));
        }
    }
    let specs = link_model_specs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weights = ModelWeights::he_uniform(&specs, &mut rng);
    let mut adam = AdamState::for_model(&weights);

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let m = chunk.len();
            let mut x = Mat::zeros(m, COND_DIM);
            for (row, &idx) in chunk.iter().enumerate() {
                x.row_mut(row).copy_from_slice(&features(&train[idx].condition));
            }
            let (probs, trace) = nn::forward_batch(&weights, &specs, &x)?;
            // d(mean CE)/d(probs): -1 / (m * p_label) at the label slot.
            let mut dout = Mat::zeros(m, 3);
            let mut batch_loss = 0.0;
            for (row, &idx) in chunk.iter().enumerate() {
                let label = train[idx].state.index();
                let p = probs.row(row)[label].max(PROB_FLOOR);
                batch_loss += -p.ln();
                dout.row_mut(row)[label] = -1.0 / (m as f64 * p);
            }
            epoch_loss += batch_loss;
            let grads = nn::backward_batch(&weights, &specs, &trace, &dout)?;
            nn::adam_step(&mut weights, &grads.weights, &mut adam, cfg.learning_rate)?;
        }
        epoch_losses.push(epoch_loss / n as f64);
    }
    Ok((LinkModel { weights }, epoch_losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use crate::synth::{
        generate_city, CityProfile, GnbType, PathVector, StateMode, UAV_HEIGHTS_M,
    };

    fn toy_condition(dx: f64, dy: f64) -> LinkCondition {
        LinkCondition {
            dx,
            dy,
            dz: 50.0,
            gnb_type: GnbType::Terrestrial,
        }
    }

    /// Separable toy set: state determined by hard horizontal-distance
    /// thresholds.
    fn separable_records(n: usize, seed: u64) -> Vec<LinkRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let r = rng.random_range(0.0..1500.0f64);
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let cond = toy_condition(r * theta.cos(), r * theta.sin());
                let state = if r < 400.0 {
                    LinkState::Los
                } else if r < 1000.0 {
                    LinkState::Nlos
                } else {
                    LinkState::NoLink
                };
                LinkRecord {
                    condition: cond,
                    state,
                    paths: PathVector::sentinel(),
                }
            })
            .collect()
    }

    #[test]
    fn specs_have_expected_shape() {
        let specs = link_model_specs();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].input_dim, 5);
        assert_eq!(specs[2].output_dim, 3);
        assert_eq!(specs[2].activation, Activation::Softmax);
    }

    #[test]
    fn prediction_is_a_simplex_and_pure() {
        let model = LinkModel::init(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let cond = toy_condition(rng.random_range(-2000.0..2000.0), rng.random_range(-2000.0..2000.0));
            let p = predict_link_state(&model, &cond).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert_eq!(p, predict_link_state(&model, &cond).unwrap());
        }
    }

    #[test]
    fn zero_input_prediction_is_near_uniform_at_init() {
        // He-init weights, zero biases: a zero input keeps every softmax
        // logit at 0, so the output is exactly uniform.
        let model = LinkModel::init(1);
        let cond = LinkCondition {
            dx: 0.0,
            dy: 0.0,
            dz: 0.0,
            gnb_type: GnbType::Terrestrial,
        };
        // dz = 0 but the one-hot is non-zero; allow the stated band.
        let p = predict_link_state(&model, &cond).unwrap();
        for v in p {
            assert!((0.2..=0.5).contains(&v), "probs {p:?}");
        }
    }

    #[test]
    fn training_reduces_loss_and_separable_set_reaches_99() {
        let records = separable_records(2000, 10);
        let cfg = TrainConfig::new(3e-3, 200, 100, 42);
        let (model, losses) = train_link_model(&records, &cfg).unwrap();
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(losses.last().unwrap() < losses.first().unwrap());
        let acc = accuracy(&model, &records).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic_under_fixed_seed() {
        let records = separable_records(300, 11);
        let cfg = TrainConfig::new(1e-3, 5, 100, 7);
        let (a, la) = train_link_model(&records, &cfg).unwrap();
        let (b, lb) = train_link_model(&records, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(la, lb);
    }

    #[test]
    fn single_class_dataset_is_rejected() {
        let mut records = separable_records(100, 12);
        for r in &mut records {
            r.state = LinkState::Los;
        }
        match train_link_model(&records, &TrainConfig::new(1e-3, 1, 10, 1)) {
            Err(LinkError::MissingClass(_)) => {}
            other => panic!("expected missing class error, got {other:?}"),
        }
    }

    #[test]
    fn trained_model_sees_more_nolink_far_away() {
        let profile = CityProfile {
            city_id: "t".into(),
            pl0: 61.4,
            slope1: 2.0,
            slope2: 3.6,
            d_break: 300.0,
            shadow_sigma: 0.0,
            los_decay: 0.006,
            nolink_range: 700.0,
            seed: 21,
            state_mode: StateMode::Probabilistic,
        };
        let ds = generate_city(&profile, 3000, &UAV_HEIGHTS_M).unwrap();
        let cfg = TrainConfig::new(1e-3, 30, 100, seeds::mix(21, seeds::purpose::LINK_TRAIN));
        let (model, _) = train_link_model(&ds.records, &cfg).unwrap();
        let near = predict_link_state(&model, &toy_condition(0.1 * profile.nolink_range, 0.0)).unwrap();
        let far = predict_link_state(&model, &toy_condition(10.0 * profile.nolink_range, 0.0)).unwrap();
        assert!(
            far[LinkState::NoLink.index()] > near[LinkState::NoLink.index()],
            "near {near:?} far {far:?}"
        );
    }
}
