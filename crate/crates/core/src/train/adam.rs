//! Adam with bias correction and decoupled weight decay.

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

/// First/second moment estimates per parameter (store order) and the step
/// counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore<f32>) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect();
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }
}

/// One Adam update of a single tensor at step `t` (1-based). When `decay`
/// is set, the parameter is first multiplied by `1 − lr·wd`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut Tensor<f32>,
    grad: &Tensor<f32>,
    m: &mut Tensor<f32>,
    v: &mut Tensor<f32>,
    t: u64,
    lr: f32,
    weight_decay: f32,
    decay: bool,
) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != m.shape() || param.shape() != v.shape() {
        return Err(Error::Contract(format!(
            "adam: parameter {:?}, gradient {:?}, moments {:?}/{:?} disagree",
            param.shape(),
            grad.shape(),
            m.shape(),
            v.shape()
        )));
    }
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    let shrink = 1.0 - lr * weight_decay;
    let moments = m.data_mut().iter_mut().zip(v.data_mut());
    for ((p, &g), (mi, vi)) in param.data_mut().iter_mut().zip(grad.data()).zip(moments) {
        if decay {
            *p *= shrink;
        }
        *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
        *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Applies one step to every trainable parameter using its gradient slot.
/// Weight decay touches only parameters whose kind decays.
pub fn adam_step(store: &mut ParamStore<f32>, state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Contract(format!("adam state covers {} parameters, store has {}", state.m.len(), store.len())));
    }
    state.t += 1;
    for (i, p) in store.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let decay = p.kind.decays();
        adam_update(&mut p.tensor, &p.grad, &mut state.m[i], &mut state.v[i], state.t, lr as f32, weight_decay as f32, decay)
            .map_err(|e| Error::Contract(format!("parameter `{}`: {e}", p.name)))?;
    }
    Ok(())
}

/// Rescales all trainable gradients so their global L2 norm is at most
/// `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore<f32>, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(_, p)| p.grad.data().iter())
        .map(|&g| g as f64 * g as f64)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = (max_norm / norm) as f32;
        for p in store.iter_mut().filter(|p| p.trainable) {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamKind;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::full(&[2, 2], 0.5), ParamKind::Weight).unwrap();
        s.add("a.bias", Tensor::full(&[2], 0.5), ParamKind::Bias).unwrap();
        s.add("n.gamma", Tensor::full(&[2], 0.5), ParamKind::Norm).unwrap();
        s.add("r.rel_bias", Tensor::full(&[1, 3], 0.5), ParamKind::RelativeBias).unwrap();
        s
    }

    #[test]
    fn zero_grads_without_decay_leave_params() {
        let mut s = store();
        let before = s.clone();
        let mut st = AdamState::new(&s);
        for _ in 0..5 {
            adam_step(&mut s, &mut st, 1e-2, 0.0).unwrap();
        }
        for ((_, a), (_, b)) in s.iter().zip(before.iter()) {
            assert_eq!(a.tensor, b.tensor);
        }
    }

    #[test]
    fn decay_scales_weights_only_by_closed_form() {
        let mut s = store();
        let mut st = AdamState::new(&s);
        let (lr, wd) = (1e-2f64, 0.04f64);
        let factor = 1.0 - lr as f32 * wd as f32;
        let mut expect = 0.5f32;
        for _ in 0..10 {
            adam_step(&mut s, &mut st, lr, wd).unwrap();
            expect *= factor;
        }
        let changed: Vec<_> = s.iter().filter(|(_, p)| p.tensor.data()[0] != 0.5).map(|(_, p)| p.name.clone()).collect();
        assert_eq!(changed, vec!["a.weight".to_string()]);
        assert!(s.by_name("a.weight").unwrap().tensor.data().iter().all(|&w| w == expect));
    }

    #[test]
    fn quadratic_converges() {
        let mut w = Tensor::scalar(0.0f32);
        let (mut m, mut v) = (Tensor::scalar(0.0), Tensor::scalar(0.0));
        for t in 1..=2000 {
            let g = Tensor::scalar(w.data()[0] - 3.0);
            adam_update(&mut w, &g, &mut m, &mut v, t, 1e-2, 0.0, false).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 1e-3, "w = {}", w.data()[0]);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut w = Tensor::zeros(&[2]);
        let (mut m, mut v) = (Tensor::zeros(&[2]), Tensor::zeros(&[2]));
        let r = adam_update(&mut w, &Tensor::zeros(&[3]), &mut m, &mut v, 1, 1e-3, 0.0, false);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut s = store();
        for p in s.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 3.0);
        }
        let before = clip_grad_norm(&mut s, 5.0);
        assert!((before - (11.0f64 * 9.0).sqrt()).abs() < 1e-9);
        let after = clip_grad_norm(&mut s, 5.0);
        assert!((after - 5.0).abs() < 1e-5);
    }
}
