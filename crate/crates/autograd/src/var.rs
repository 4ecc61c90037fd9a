//! Reverse-mode automatic differentiation.
//!
//! A [`Var`] is an immutable node in a computation graph. Backward rules are
//! themselves written in terms of `Var` operations, so running
//! [`backward`] with `create_graph = true` records the gradient computation
//! and the resulting gradients can be differentiated again (gradient
//! penalties need this).

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::element::Element;
use crate::tensor::Tensor;

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Runs `f` with graph recording set to `enabled`, restoring the previous
/// mode afterwards (also on unwind).
pub fn with_grad_mode<R>(enabled: bool, f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(enabled)));
    f()
}

/// Runs `f` without recording any graph.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    with_grad_mode(false, f)
}

/// Backward rule of an operation.
///
/// `out` is the node the rule belongs to, `grad` the cotangent flowing into
/// it. Returns one optional cotangent per parent, in parent order.
pub trait Backward<T: Element>: Send + Sync {
    fn backward(&self, out: &Var<T>, grad: &Var<T>, parents: &[Var<T>]) -> Vec<Option<Var<T>>>;

    fn name(&self) -> &'static str;
}

struct GradFn<T: Element> {
    parents: Vec<Var<T>>,
    op: Box<dyn Backward<T>>,
}

struct Node<T: Element> {
    id: usize,
    value: Tensor<T>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// Differentiable tensor handle. Cloning is cheap and shares the node.
pub struct Var<T: Element>(Arc<Node<T>>);

impl<T: Element> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Arc::clone(&self.0))
    }
}

impl<T: Element> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("op", &self.0.grad_fn.as_ref().map(|g| g.op.name()))
            .field("requires_grad", &self.0.requires_grad)
            .field("value", &self.0.value)
            .finish()
    }
}

impl<T: Element> Var<T> {
    fn from_node(value: Tensor<T>, requires_grad: bool, grad_fn: Option<GradFn<T>>) -> Self {
        Var(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            grad_fn,
        }))
    }

    /// A value that never receives gradients.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::from_node(value, false, None)
    }

    /// A leaf that collects gradients in [`backward`].
    pub fn leaf(value: Tensor<T>) -> Self {
        Self::from_node(value, true, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::constant(Tensor::scalar(value))
    }

    /// Records an operation result. Parents are only retained when the
    /// graph is being recorded and at least one of them needs a gradient.
    pub fn from_op(value: Tensor<T>, parents: Vec<Var<T>>, op: impl Backward<T> + 'static) -> Self {
        if is_grad_enabled() && parents.iter().any(Var::requires_grad) {
            Self::from_node(value, true, Some(GradFn { parents, op: Box::new(op) }))
        } else {
            Self::constant(value)
        }
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }

    pub fn item(&self) -> T {
        self.0.value.item()
    }

    pub fn ptr_eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Gradients of a scalar with respect to the leaves it depends on.
pub struct Gradients<T: Element> {
    by_id: HashMap<usize, Var<T>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, leaf: &Var<T>) -> Option<&Var<T>> {
        self.by_id.get(&leaf.id())
    }

    /// Gradient value, or zeros shaped like `leaf` when it did not
    /// influence the output.
    pub fn tensor_or_zeros(&self, leaf: &Var<T>) -> Tensor<T> {
        self.get(leaf)
            .map(|g| g.value().clone())
            .unwrap_or_else(|| Tensor::zeros(leaf.shape()))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

fn topo_order<T: Element>(root: &Var<T>) -> Vec<Var<T>> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    // (node, children pushed?)
    let mut stack = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        if let Some(gf) = &v.0.grad_fn {
            for p in &gf.parents {
                if p.requires_grad() && !seen.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

/// Differentiates the single-element `root` with respect to every leaf it
/// depends on.
///
/// With `create_graph` the returned gradients are themselves recorded
/// `Var`s and can be differentiated again; otherwise they are constants.
pub fn backward<T: Element>(root: &Var<T>, create_graph: bool) -> Gradients<T> {
    assert_eq!(root.value().numel(), 1, "backward needs a scalar root, got {:?}", root.shape());
    let seed = Var::constant(Tensor::ones(root.shape()));
    backward_with(root, seed, create_graph)
}

/// Vector-Jacobian product: propagates `seed` (shaped like `root`) back to
/// the leaves.
pub fn backward_with<T: Element>(root: &Var<T>, seed: Var<T>, create_graph: bool) -> Gradients<T> {
    assert_eq!(seed.shape(), root.shape(), "seed shape must match root");
    let mut leaves = HashMap::new();
    if !root.requires_grad() {
        return Gradients { by_id: leaves };
    }
    let order = topo_order(root);
    let mut pending: HashMap<usize, Var<T>> = HashMap::new();
    pending.insert(root.id(), seed);
    with_grad_mode(create_graph, || {
        for node in order.iter().rev() {
            let Some(grad) = pending.remove(&node.id()) else { continue };
            let Some(gf) = &node.0.grad_fn else {
                leaves.insert(node.id(), grad);
                continue;
            };
            let parent_grads = gf.op.backward(node, &grad, &gf.parents);
            debug_assert_eq!(parent_grads.len(), gf.parents.len(), "{}", gf.op.name());
            for (p, g) in gf.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !p.requires_grad() {
                    continue;
                }
                debug_assert_eq!(g.shape(), p.shape(), "{} gradient shape", gf.op.name());
                let acc = match pending.remove(&p.id()) {
                    Some(prev) => prev.add(&g),
                    None => g,
                };
                pending.insert(p.id(), acc);
            }
        }
    });
    Gradients { by_id: leaves }
}
