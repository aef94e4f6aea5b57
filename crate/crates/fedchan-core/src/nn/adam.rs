//! Adam optimizer over flattened parameter order.

use super::{ModelWeights, NnError, Result};

/// Adam moment state; moment vectors run in the network's flatten order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Default coefficients: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(param_count: usize) -> AdamState {
        AdamState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_model(weights: &ModelWeights) -> AdamState {
        AdamState::new(weights.param_count())
    }
}

/// One Adam update with bias correction; mutates `weights` and `state`.
pub fn adam_step(
    weights: &mut ModelWeights,
    grads: &ModelWeights,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    let n = weights.param_count();
    if grads.param_count() != n || state.first_moment.len() != n {
        return Err(NnError::LengthMismatch {
            expected: n,
            got: grads.param_count(),
        });
    }
    for (layer_idx, g) in grads.layers.iter().enumerate() {
        if g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient { layer: layer_idx });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (beta1, beta2, eps) = (state.beta1, state.beta2, state.epsilon);
    let update = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..w.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            w[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    };
    let mut at = 0;
    for (wl, gl) in weights.layers.iter_mut().zip(&grads.layers) {
        let nw = wl.weights.len();
        update(
            &mut wl.weights,
            &gl.weights,
            &mut state.first_moment[at..at + nw],
            &mut state.second_moment[at..at + nw],
        );
        at += nw;
        let nb = wl.bias.len();
        update(
            &mut wl.bias,
            &gl.bias,
            &mut state.first_moment[at..at + nb],
            &mut state.second_moment[at..at + nb],
        );
        at += nb;
    }
    Ok(())
}

/// Plain gradient-descent step; used by tests that compare against
/// hand-computed updates.
pub fn sgd_step(weights: &mut ModelWeights, grads: &ModelWeights, learning_rate: f64) {
    for (wl, gl) in weights.layers.iter_mut().zip(&grads.layers) {
        for (w, g) in wl
            .weights
            .iter_mut()
            .chain(wl.bias.iter_mut())
            .zip(gl.weights.iter().chain(gl.bias.iter()))
        {
            *w -= learning_rate * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn scalar_model(w0: f64) -> (ModelWeights, Vec<LayerSpec>) {
        let specs = vec![LayerSpec::new(1, 1, Activation::Linear)];
        let mut w = ModelWeights::zeros(&specs);
        w.layers[0].weights[0] = w0;
        (w, specs)
    }

    fn grad_of(value_w: f64, value_b: f64) -> ModelWeights {
        let specs = vec![LayerSpec::new(1, 1, Activation::Linear)];
        let mut g = ModelWeights::zeros(&specs);
        g.layers[0].weights[0] = value_w;
        g.layers[0].bias[0] = value_b;
        g
    }

    #[test]
    fn first_step_moves_by_roughly_learning_rate() {
        // Hand-computed first Adam step with g = 1, lr = 0.01:
        // m_hat = 1, v_hat = 1, delta = -0.01 / (1 + 1e-8).
        let (mut w, _) = scalar_model(0.5);
        let mut st = AdamState::for_model(&w);
        adam_step(&mut w, &grad_of(1.0, 0.0), &mut st, 0.01).unwrap();
        let delta = w.layers[0].weights[0] - 0.5;
        assert!((delta + 0.01).abs() < 1e-9, "delta = {delta}");
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_weights_unchanged() {
        let (mut w, _) = scalar_model(0.25);
        let mut st = AdamState::for_model(&w);
        adam_step(&mut w, &grad_of(0.0, 0.0), &mut st, 0.1).unwrap();
        assert_eq!(w.layers[0].weights[0], 0.25);
        assert_eq!(w.layers[0].bias[0], 0.0);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn second_identical_step_is_not_larger() {
        // Hand-traced two-step Adam with constant gradient: bias correction
        // keeps both steps at essentially lr * sign(g).
        let (mut w, _) = scalar_model(0.0);
        let mut st = AdamState::for_model(&w);
        adam_step(&mut w, &grad_of(2.0, 0.0), &mut st, 0.01).unwrap();
        let d1 = w.layers[0].weights[0].abs();
        let before = w.layers[0].weights[0];
        adam_step(&mut w, &grad_of(2.0, 0.0), &mut st, 0.01).unwrap();
        let d2 = (w.layers[0].weights[0] - before).abs();
        assert!(d2 <= d1 * 1.01, "d1 = {d1}, d2 = {d2}");
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_layer_index() {
        let (mut w, _) = scalar_model(0.0);
        let mut st = AdamState::for_model(&w);
        match adam_step(&mut w, &grad_of(f64::NAN, 0.0), &mut st, 0.01) {
            Err(NnError::NonFiniteGradient { layer: 0 }) => {}
            other => panic!("expected non-finite gradient error, got {other:?}"),
        }
    }

    #[test]
    fn sgd_step_matches_hand_computed_update() {
        let (mut w, _) = scalar_model(1.0);
        sgd_step(&mut w, &grad_of(0.5, -2.0), 0.1);
        assert!((w.layers[0].weights[0] - 0.95).abs() < 1e-15);
        assert!((w.layers[0].bias[0] - 0.2).abs() < 1e-15);
    }
}
