//! Central-difference gradient checker (64-bit only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{NodeId, Tape};
use crate::error::Result;
use crate::param::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates sampled per parameter tensor; smaller tensors are checked fully.
    pub coords_per_param: usize,
    pub seed: u64,
    /// Multiplies the analytic gradient before comparison. Anything other
    /// than 1.0 is a deliberate fault used to test the checker itself.
    pub analytic_scale: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-6, coords_per_param: 16, seed: 0, analytic_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic - numeric| / max(1, |numeric|) over checked coordinates.
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares analytic parameter gradients of the scalar built by `build`
/// with central differences. The store's tensors are restored on return.
pub fn grad_check<F>(store: &mut ParamStore<f64>, build: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    tape.backward_into(loss, store)?;
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coords_checked: 0,
    };
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let len = store.get(id).tensor.len();
        let coords: Vec<usize> = if len <= opts.coords_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let analytic = store.get(id).grad.data()[i] * opts.analytic_scale;
            let orig = store.tensor(id).data()[i];
            store.tensor_mut(id).data_mut()[i] = orig + opts.eps;
            let plus = eval(store);
            store.tensor_mut(id).data_mut()[i] = orig - opts.eps;
            let minus = eval(store);
            store.tensor_mut(id).data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.eps);
            let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
            report.coords_checked += 1;
            if report.coords_checked == 1 || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

/// `sum(out ⊙ R)` for a fixed pseudo-random `R` in [-1, 1): a scalar whose
/// gradient exercises every output coordinate with distinct weights.
pub fn projection_loss(tape: &mut Tape<f64>, out: NodeId, seed: u64) -> Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = Tensor::rand_uniform(tape.shape(out), -1.0, 1.0, &mut rng);
    let r = tape.input(r)?;
    let prod = tape.mul(out, r)?;
    tape.sum(prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamKind;

    fn linear_case() -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        s.add("x", Tensor::randn(&[3, 5], 1.0, &mut rng), ParamKind::Weight).unwrap();
        s.add("w", Tensor::randn(&[4, 5], 1.0, &mut rng), ParamKind::Weight).unwrap();
        s.add("b", Tensor::randn(&[4], 1.0, &mut rng), ParamKind::Bias).unwrap();
        s
    }

    fn build_linear(t: &mut Tape<f64>, s: &ParamStore<f64>) -> Result<NodeId> {
        let x = t.param(s, s.id("x").unwrap())?;
        let w = t.param(s, s.id("w").unwrap())?;
        let b = t.param(s, s.id("b").unwrap())?;
        let y = t.linear(x, w, Some(b))?;
        projection_loss(t, y, 1)
    }

    #[test]
    fn linear_layer_passes_tightly() {
        let mut s = linear_case();
        let opts = GradCheckOptions { coords_per_param: 32, ..Default::default() };
        let r = grad_check(&mut s, build_linear, opts).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.coords_checked, 15 + 20 + 4);
    }

    #[test]
    fn halved_gradient_is_flagged() {
        let mut s = linear_case();
        let opts = GradCheckOptions { analytic_scale: 0.5, ..Default::default() };
        let r = grad_check(&mut s, build_linear, opts).unwrap();
        assert!(!r.passed(1e-4));
        assert!(r.max_rel_error > 0.25 && r.max_rel_error <= 0.5 + 1e-6, "{r:?}");
    }

    #[test]
    fn store_is_restored() {
        let mut s = linear_case();
        let before: Vec<_> = s.iter().map(|(_, p)| p.tensor.clone()).collect();
        grad_check(&mut s, build_linear, GradCheckOptions::default()).unwrap();
        let after: Vec<_> = s.iter().map(|(_, p)| p.tensor.clone()).collect();
        assert_eq!(before, after);
    }
}
