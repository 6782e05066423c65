//! Central finite-difference verification of reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::{NnError, Result, Tensor};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// When set, check at most this many entries per parameter tensor
    /// (sampled with the given seed); otherwise check every entry.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, max_entries_per_param: None, seed: 0 }
    }
}

/// Compare reverse-mode gradients of a scalar loss against central finite
/// differences, parameter by parameter. `run` must return the loss and the
/// analytic gradient per parameter (in store order). Returns the maximum
/// relative error `|a - f| / max(1, |a|, |f|)`.
pub fn grad_check<F>(store: &mut ParamStore, run: F, opts: &GradCheckOptions) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(f64, Vec<Tensor>)>,
{
    if !(1e-7..=1e-4).contains(&opts.eps) {
        return Err(NnError::InvalidParameter(format!("eps {} outside [1e-7, 1e-4]", opts.eps)));
    }
    let (_, analytic) = run(store)?;
    if analytic.len() != store.len() {
        return Err(NnError::InvalidParameter(
            "run must return one gradient tensor per parameter".into(),
        ));
    }
    for (id, g) in store.ids().zip(&analytic) {
        if !g.all_finite() {
            return Err(NnError::ContractViolation(format!(
                "non-finite gradient in {}",
                store.name(id)
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut max_rel = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let n = store.value(id).numel();
        let indices: Vec<usize> = match opts.max_entries_per_param {
            Some(cap) if n > cap => rand::seq::index::sample(&mut rng, n, cap).into_vec(),
            _ => (0..n).collect(),
        };
        for idx in indices {
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + opts.eps;
            let (lp, _) = run(store)?;
            store.value_mut(id).data_mut()[idx] = orig - opts.eps;
            let (lm, _) = run(store)?;
            store.value_mut(id).data_mut()[idx] = orig;
            let fd = (lp - lm) / (2.0 * opts.eps);
            let a = analytic[pi].data()[idx];
            let rel = (a - fd).abs() / f64::max(1.0, f64::max(a.abs(), fd.abs()));
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Convenience: run a tape-building closure, backward it and collect the
/// per-parameter gradients in store order.
pub fn loss_and_param_grads<F>(store: &ParamStore, build: F) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&crate::Tape, &ParamStore) -> Result<crate::Var>,
{
    let tape = crate::Tape::new();
    let loss = build(&tape, store)?;
    let loss_val = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let mut out: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.value(id).shape())).collect();
    let mut acc = store.clone();
    acc.zero_grads();
    tape.accumulate_param_grads(&grads, &mut acc);
    for (slot, id) in out.iter_mut().zip(store.ids()) {
        *slot = acc.grad(id).clone();
    }
    Ok((loss_val, out))
}
