//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every op applied to its [`Var`]s in append order.
//! [`Tape::backward`] walks the records once, in strict reverse order,
//! accumulating vector-Jacobian products into the leaves that asked for a
//! gradient. Fan-out is handled by summing contributions.
//!
//! An inference tape ([`Tape::inference`]) records nothing; intermediate
//! values are then freed as soon as the last [`Var`] referencing them drops.

mod ops;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

use ops::Op;
pub use ops::UnaryOp;

struct Node<T: Scalar> {
    op: Op<T>,
    value: Rc<Tensor<T>>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar = f32> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
    consumed: Cell<bool>,
    conv_macs: Cell<u64>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            consumed: Cell::new(false),
            conv_macs: Cell::new(0),
        }
    }

    /// A tape that never records; every [`Var`] is a constant.
    pub fn inference() -> Self {
        Tape {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply-accumulates performed by convolutions evaluated on this tape.
    pub fn conv_macs(&self) -> u64 {
        self.conv_macs.get()
    }

    pub(crate) fn add_macs(&self, macs: u64) {
        self.conv_macs.set(self.conv_macs.get() + macs);
    }

    /// Registers a leaf that accumulates a gradient.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, self.recording)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub(crate) fn push(&self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let value = Rc::new(value);
        if !self.recording {
            return Var {
                tape: self,
                id: None,
                value,
                requires_grad: false,
            };
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        // Nodes that no gradient flows through do not need to keep their inputs.
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            op,
            value: value.clone(),
            requires_grad,
        });
        Var {
            tape: self,
            id: Some(id),
            value,
            requires_grad,
        }
    }

    /// Back-propagates from a scalar `loss`. A tape can be consumed once.
    pub fn backward(&self, loss: &Var<'_, T>) -> Result<Gradients<T>> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::ForeignVariable);
        }
        if loss.value.shape() != Shape::SCALAR {
            return Err(Error::NonScalarLoss(loss.value.shape()));
        }
        if self.consumed.replace(true) {
            return Err(Error::TapeConsumed);
        }
        let mut grads = Gradients {
            by_id: HashMap::new(),
        };
        let Some(root) = loss.id.filter(|_| loss.requires_grad) else {
            return Ok(grads);
        };
        let nodes = self.nodes.borrow();
        let mut pending: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        pending[root] = Some(Tensor::scalar(T::one()));
        for id in (0..=root).rev() {
            let Some(g) = pending[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                grads.by_id.insert(id, g);
                continue;
            }
            let value_of = |i: usize| nodes[i].value.clone();
            let wants = |i: usize| nodes[i].requires_grad;
            for (input, gi) in node.op.vjp(&g, &node.value, &value_of, &wants) {
                match &mut pending[input] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(grads)
    }
}

/// A tensor value living on a tape.
#[derive(Clone)]
pub struct Var<'t, T: Scalar = f32> {
    tape: &'t Tape<T>,
    id: Option<usize>,
    value: Rc<Tensor<T>>,
    requires_grad: bool,
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn id(&self) -> Option<usize> {
        self.id
    }
}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("requires_grad", &self.requires_grad)
            .field("value", &self.value)
            .finish()
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T: Scalar> {
    by_id: HashMap<usize, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf. Leaves the loss does not depend on get zeros.
    pub fn get(&self, var: &Var<'_, T>) -> Option<Tensor<T>> {
        if !var.requires_grad {
            return None;
        }
        let id = var.id?;
        Some(
            self.by_id
                .get(&id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(var.shape())),
        )
    }
}
