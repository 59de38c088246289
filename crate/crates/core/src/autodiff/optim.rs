use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{AutodiffError, GradBuffer, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Self::with_config(store, AdamConfig::default())
    }

    pub fn with_config(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        AdamState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn first_moment(&self, idx: usize) -> &[T] {
        &self.first[idx]
    }

    pub fn second_moment(&self, idx: usize) -> &[T] {
        &self.second[idx]
    }
}

/// One bias-corrected Adam update of `store` from `grads`.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &GradBuffer<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<(), AutodiffError> {
    if state.first.len() != store.len() {
        return Err(AutodiffError::Optimizer(format!(
            "optimizer tracks {} tensors, store has {}",
            state.first.len(),
            store.len()
        )));
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (((param, g), m), v) in store
        .iter_mut()
        .map(|(_, t)| t)
        .zip(grads.iter())
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        if g.len() != param.len() {
            return Err(AutodiffError::Shape {
                op: "adam_step",
                left: param.shape().to_vec(),
                right: vec![g.len()],
            });
        }
        for (i, p) in param.data_mut().iter_mut().enumerate() {
            let gi = g[i].f64();
            let mi = beta1 * m[i].f64() + (1.0 - beta1) * gi;
            let vi = beta2 * v[i].f64() + (1.0 - beta2) * gi * gi;
            m[i] = T::of(mi);
            v[i] = T::of(vi);
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
            *p = T::of(p.f64() - update);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut GradBuffer<T>, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(T::of(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn store(values: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![values.len()], values).unwrap());
        s
    }

    fn grads(store: &ParamStore<f64>, g: &[f64]) -> GradBuffer<f64> {
        let mut b = GradBuffer::zeros_like(store);
        b.slices_mut().next().unwrap().copy_from_slice(g);
        b
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store(vec![0.5, -1.0]);
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let g = grads(&s, &[0.0, 0.0]);
        adam_step(&mut s, &g, &mut st, 1e-3).unwrap();
        assert_eq!(s.get(crate::autodiff::ParamId(0)).data(), before.get(crate::autodiff::ParamId(0)).data());
        assert!(st.first_moment(0).iter().all(|v| *v == 0.0));
        assert!(st.second_moment(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 after bias correction, so Δ = -lr / (1 + eps).
        let mut s = store(vec![0.0]);
        let mut st = AdamState::new(&s);
        let g = grads(&s, &[1.0]);
        adam_step(&mut s, &g, &mut st, 1e-3).unwrap();
        let delta = s.get(crate::autodiff::ParamId(0)).data()[0];
        assert!((delta - (-1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut s = store(vec![0.0, 0.0]);
        let mut st = AdamState::new(&s);
        let g = grads(&s, &[2.0, -0.5]);
        for _ in 0..50 {
            adam_step(&mut s, &g, &mut st, 1e-2).unwrap();
        }
        let w = s.get(crate::autodiff::ParamId(0)).data();
        assert!(w[0] < 0.0 && w[1] > 0.0);
    }

    #[test]
    fn mismatched_state_is_an_error() {
        let mut s = store(vec![0.0]);
        let mut st = AdamState::new(&ParamStore::<f64>::new());
        let g = grads(&s, &[1.0]);
        assert!(adam_step(&mut s, &g, &mut st, 1e-3).is_err());
    }

    #[test]
    fn clipping() {
        let s = store(vec![0.0, 0.0]);
        let mut g = grads(&s, &[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        let v = g.get(crate::autodiff::ParamId(0));
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);

        let mut small = grads(&s, &[0.3, 0.4]);
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small.get(crate::autodiff::ParamId(0)), &[0.3, 0.4]);

        let mut zero = grads(&s, &[0.0, 0.0]);
        clip_global_norm(&mut zero, 1.0);
        assert_eq!(zero.get(crate::autodiff::ParamId(0)), &[0.0, 0.0]);
    }
}
