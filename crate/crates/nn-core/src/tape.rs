//! Dynamic computation tape. Ops push nodes holding the forward value, the
//! parent indices and a backward rule; [`Tape::backward`] replays the rules
//! in reverse creation order, which is a valid topological order because
//! parents always precede children.

use std::cell::{Ref, RefCell};

use crate::params::{ParamId, ParamStore};
use crate::{NnError, Result, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct BackCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: &'a [&'a Tensor],
    pub output: &'a Tensor,
}

type BackwardFn = Box<dyn Fn(&BackCtx) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bindings: RefCell<Vec<(usize, ParamId)>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an input value with no backward rule.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, vec![], None)
    }

    /// Insert a parameter value and remember the binding so its gradient
    /// can be accumulated back into the store after `backward`.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone());
        self.bindings.borrow_mut().push((v.0, id));
        v
    }

    pub(crate) fn push(&self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, parents, backward });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn value_cloned(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reverse-mode sweep from a scalar loss. Returns per-node gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if !nodes[loss.0].value.is_scalar() {
            return Err(NnError::InvalidParameter(
                "backward requires a scalar loss".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].clone() else { continue };
            let node = &nodes[id];
            let Some(backward) = &node.backward else { continue };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &nodes[p].value).collect();
            let ctx = BackCtx { grad: &grad, inputs: &inputs, output: &node.value };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                match &mut grads[*p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Add the tape's parameter gradients into the store (after `backward`).
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (var, pid) in self.bindings.borrow().iter() {
            if let Some(g) = grads.grads.get(*var).and_then(|g| g.as_ref()) {
                store.grad_mut(*pid).add_assign(g);
            }
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
