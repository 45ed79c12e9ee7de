use std::cell::RefCell;
use std::rc::Rc;

use crate::param::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Real> {
    value: Rc<Tensor<T>>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
}

/// What a backward closure sees: the incoming gradient, its own output, the
/// parent values, and which parents actually need a gradient.
pub struct BackwardCtx<'a, T: Real> {
    pub grad: &'a Tensor<T>,
    pub output: &'a Tensor<T>,
    inputs: Vec<Rc<Tensor<T>>>,
    needs: Vec<bool>,
}

impl<T: Real> BackwardCtx<'_, T> {
    pub fn input(&self, i: usize) -> &Tensor<T> {
        &self.inputs[i]
    }

    pub fn needs(&self, i: usize) -> bool {
        self.needs[i]
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }
}

/// Define-by-run tape. Every op appends a node; [`Graph::backward`] walks
/// the tape in reverse. A graph is single-use per forward pass.
pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    param_leaves: RefCell<Vec<(usize, ParamId)>>,
    buffer_updates: RefCell<Vec<(ParamId, Tensor<T>)>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Real> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: usize,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            param_leaves: RefCell::new(Vec::new()),
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, value: Tensor<T>, requires_grad: bool, parents: Vec<usize>, backward: Option<BackwardFn<T>>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), requires_grad, parents, backward });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, false, Vec::new(), None)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, true, Vec::new(), None)
    }

    /// Loads a stored parameter; trainable entries become gradient leaves.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        let entry = store.entry(id);
        let v = self.push(entry.value.clone(), entry.trainable, Vec::new(), None);
        if entry.trainable {
            self.param_leaves.borrow_mut().push((v.id, id));
        }
        v
    }

    /// Records an op. The closure is kept only if some parent needs a
    /// gradient, so inference builds no backward state.
    pub fn op<'g>(
        &'g self,
        value: Tensor<T>,
        parents: &[Var<'g, T>],
        backward: impl Fn(&BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'g, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        if requires_grad {
            self.push(value, true, parents.iter().map(|p| p.id).collect(), Some(Box::new(backward)))
        } else {
            self.push(value, false, Vec::new(), None)
        }
    }

    /// Queues a non-trainable state update (batch-norm running statistics).
    pub fn record_buffer_update(&self, id: ParamId, value: Tensor<T>) {
        self.buffer_updates.borrow_mut().push((id, value));
    }

    pub fn take_buffer_updates(&self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut *self.buffer_updates.borrow_mut())
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse-mode sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Grads<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.id].value.numel(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape().to_vec()));
        }
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else { continue };
            let Some(grad) = grads[id].take() else { continue };
            let ctx = BackwardCtx {
                grad: &grad,
                output: &node.value,
                inputs: node.parents.iter().map(|&p| Rc::clone(&nodes[p].value)).collect(),
                needs: node.parents.iter().map(|&p| nodes[p].requires_grad).collect(),
            };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[p].value.shape(), "gradient shape mismatch");
                match grads[p].as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grads[p] = Some(g),
                }
            }
        }
        Grads { grads }
    }

    /// Gradients of every trainable parameter loaded on this graph, summed
    /// over repeated loads, ordered by parameter id.
    pub fn param_grads(&self, grads: &Grads<T>) -> Vec<(ParamId, Tensor<T>)> {
        let mut out: Vec<(ParamId, Tensor<T>)> = Vec::new();
        for &(node, pid) in self.param_leaves.borrow().iter() {
            let Some(g) = grads.grads.get(node).and_then(|g| g.as_ref()) else { continue };
            match out.iter_mut().find(|(id, _)| *id == pid) {
                Some((_, acc)) => acc.add_assign(g),
                None => out.push((pid, g.clone())),
            }
        }
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

/// Result of [`Graph::backward`]: gradients for leaves.
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }
}

impl<'g, T: Real> Var<'g, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad(self.id)
    }
}
