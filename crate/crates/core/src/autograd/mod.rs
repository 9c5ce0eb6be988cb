//! Minimal reverse-mode automatic differentiation over `f64` n-d arrays.
//!
//! Every backward rule is written in terms of the same recorded operations,
//! so a gradient computed with `create_graph = true` is itself differentiable.
//! The gradient penalty of the critic relies on this: it differentiates the
//! norm of an input gradient with respect to the critic parameters.

mod conv;
mod ops;

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

pub use conv::ConvGeom;
pub use ops::*;

pub type Array = ArrayD<f64>;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Runs `f` with graph recording switched to `enabled`, restoring the
/// previous mode afterwards.
pub fn with_grad_mode<T>(enabled: bool, f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|c| c.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|c| c.replace(enabled));
    let _restore = Restore(prev);
    f()
}

pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    with_grad_mode(false, f)
}

struct Node {
    id: u64,
    value: Array,
    requires_grad: bool,
    op: Option<Op>,
    inputs: Vec<Var>,
}

/// A node in the computation graph. Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    /// A leaf that does not take part in differentiation.
    pub fn constant(value: Array) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: false,
            op: None,
            inputs: Vec::new(),
        }))
    }

    /// A leaf whose gradient can be requested.
    pub fn param(value: Array) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad: true,
            op: None,
            inputs: Vec::new(),
        }))
    }

    pub fn scalar(v: f64) -> Var {
        Var::constant(Array::from_elem(IxDyn(&[]), v))
    }

    pub(crate) fn from_op(value: Array, op: Op, inputs: Vec<Var>) -> Var {
        let track = is_grad_enabled() && inputs.iter().any(|v| v.0.requires_grad);
        if track {
            Var(Rc::new(Node {
                id: next_id(),
                value,
                requires_grad: true,
                op: Some(op),
                inputs,
            }))
        } else {
            Var::constant(value)
        }
    }

    pub fn value(&self) -> &Array {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.0.value.len(), 1, "item() on non-scalar of shape {:?}", self.shape());
        *self.0.value.iter().next().unwrap()
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }
}

/// Gradients of a scalar `output` with respect to each of `wrt`.
///
/// With `create_graph` the returned gradients are recorded in the graph and
/// can be differentiated again. Inputs that `output` does not depend on get
/// `None`.
pub fn grad(output: &Var, wrt: &[&Var], create_graph: bool) -> Vec<Option<Var>> {
    assert_eq!(output.value().len(), 1, "grad() needs a scalar output");
    if !output.requires_grad() {
        return vec![None; wrt.len()];
    }
    let order = topo_order(output);
    // Only propagate along paths that reach one of the requested inputs.
    let mut needed: std::collections::HashSet<u64> = wrt.iter().map(|v| v.id()).collect();
    for node in &order {
        if node.0.inputs.iter().any(|i| needed.contains(&i.id())) {
            needed.insert(node.id());
        }
    }
    with_grad_mode(create_graph, || {
        let mut grads: HashMap<u64, Var> = HashMap::new();
        grads.insert(output.id(), Var::constant(Array::ones(output.value().raw_dim())));
        for node in order.iter().rev() {
            let Some(op) = node.0.op.as_ref() else { continue };
            if !needed.contains(&node.id()) {
                continue;
            }
            let Some(g) = grads.get(&node.id()).cloned() else { continue };
            let needs: Vec<bool> = node
                .0
                .inputs
                .iter()
                .map(|i| i.requires_grad() && needed.contains(&i.id()))
                .collect();
            let input_grads = op.backward(&node.0.inputs, node, &g, &needs);
            for ((input, ig), need) in node.0.inputs.iter().zip(input_grads).zip(needs) {
                let Some(ig) = ig else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(ig.shape(), input.shape(), "gradient shape for {:?}", op);
                let acc = match grads.remove(&input.id()) {
                    Some(prev) => add(&prev, &ig),
                    None => ig,
                };
                grads.insert(input.id(), acc);
            }
        }
        wrt.iter().map(|v| grads.get(&v.id()).cloned()).collect()
    })
}

fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    let mut visited = std::collections::HashSet::new();
    // (node, children_pushed)
    let mut stack = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !visited.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        for input in &v.0.inputs {
            if input.requires_grad() && !visited.contains(&input.id()) {
                stack.push((input.clone(), false));
            }
        }
    }
    order
}
