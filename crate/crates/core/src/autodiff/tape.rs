use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::autodiff::tensor::{NodeRef, Tensor};
use crate::error::{Error, Result};

/// Gradient accumulator indexed by tape node id.
///
/// Slots are allocated lazily (zero-filled) so untouched branches cost
/// nothing; finished intermediate slots are dropped as the reverse sweep
/// consumes them.
pub(crate) struct GradTable {
    slots: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl GradTable {
    fn new(lens: Vec<usize>) -> Self {
        GradTable {
            slots: (0..lens.len()).map(|_| None).collect(),
            lens,
        }
    }

    /// Mutable access to a node's gradient, allocating zeros on first touch.
    pub fn slot_mut(&mut self, id: usize) -> &mut [f64] {
        if self.slots[id].is_none() {
            self.slots[id] = Some(vec![0.0; self.lens[id]]);
        }
        self.slots[id].as_mut().unwrap()
    }

    fn take(&mut self, id: usize) -> Option<Vec<f64>> {
        self.slots[id].take()
    }
}

type BackwardFn = Box<dyn Fn(&[f64], &mut GradTable)>;

struct NodeRecord {
    len: usize,
    /// None for leaves; leaves keep their accumulated gradient as a result.
    backward: Option<BackwardFn>,
}

/// Record of differentiable operations for one forward pass.
///
/// Nodes are appended in execution order, which is a topological order of
/// the computation graph, so the reverse sweep visits each node exactly
/// once. A tape is single-threaded by construction (`Rc` interior).
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<Vec<NodeRecord>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.borrow().is_empty()
    }

    pub(crate) fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn record(&self, len: usize, backward: Option<BackwardFn>) -> usize {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(NodeRecord { len, backward });
        nodes.len() - 1
    }

    /// Gradient-tracked leaf holding a copy of `values`.
    pub fn leaf(&self, shape: Vec<usize>, values: &[f64]) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::shape(
                "leaf",
                format!("shape {:?} wants {} values, got {}", shape, expected, values.len()),
            ));
        }
        let id = self.record(values.len(), None);
        Ok(Tensor::from_parts(
            shape,
            Rc::new(values.to_vec()),
            Some(NodeRef {
                tape: self.clone(),
                id,
            }),
        ))
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Returns gradients for every leaf that influenced the loss and leaves
    /// the tape empty, ready for the next forward pass.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let loss_node = loss.node().ok_or_else(|| {
            Error::Contract("backward on a loss that does not require gradients".into())
        })?;
        if !self.same_tape(&loss_node.tape) {
            return Err(Error::Contract("loss was recorded on a different tape".into()));
        }
        let nodes = std::mem::take(&mut *self.inner.borrow_mut());
        if nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }

        let mut table = GradTable::new(nodes.iter().map(|n| n.len).collect());
        table.slot_mut(loss_node.id)[0] = 1.0;

        let mut leaf_grads = HashMap::new();
        for id in (0..=loss_node.id).rev() {
            let Some(grad) = table.take(id) else { continue };
            match &nodes[id].backward {
                Some(back) => back(&grad, &mut table),
                None => {
                    leaf_grads.insert(id, grad);
                }
            }
        }
        Ok(Gradients { by_node: leaf_grads })
    }
}

/// Result of [`Tape::backward`]: per-leaf gradients keyed by node id.
pub struct Gradients {
    by_node: HashMap<usize, Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `leaf`, if it was reached.
    pub fn get(&self, leaf: &Tensor) -> Option<&[f64]> {
        leaf.node()
            .and_then(|n| self.by_node.get(&n.id))
            .map(|v| v.as_slice())
    }

    pub fn take(&mut self, leaf: &Tensor) -> Option<Vec<f64>> {
        leaf.node().and_then(|n| self.by_node.remove(&n.id))
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}
