use std::cell::RefCell;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};

/// Per-parent gradient contributions; `needs[i]` says whether parent `i`
/// wants one.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Records operations in creation order. Replaying it backwards from a scalar
/// yields gradients for every reachable leaf that requires them.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf that accumulates a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let shape = value.shape().to_vec();
        self.push(Node {
            shape,
            data: Rc::new(value.into_data()),
            parents: vec![],
            backward: None,
            requires_grad,
        })
    }

    pub(crate) fn op(
        &self,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: &[Var<'_>],
        backward: BackwardFn,
    ) -> Var<'_> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        self.push(Node {
            shape,
            data: Rc::new(data),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    pub(crate) fn data_of(&self, id: usize) -> Rc<Vec<f64>> {
        Rc::clone(&self.nodes.borrow()[id].data)
    }

    pub(crate) fn shape_of(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].shape.clone()
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients from repeated calls
    /// accumulate.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.data.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        if !root.data[0].is_finite() {
            return Err(Error::NonFinite(format!("loss is {}", root.data[0])));
        }
        let mut grads = self.grads.borrow_mut();
        grads.resize(nodes.len(), None);
        if !root.requires_grad {
            return Ok(());
        }
        // Local buffer so repeated backward calls accumulate cleanly.
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        local[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = local[id].take() else { continue };
            let node = &nodes[id];
            if let Some(backward) = &node.backward {
                let needs: Vec<bool> = node
                    .parents
                    .iter()
                    .map(|&p| nodes[p].requires_grad)
                    .collect();
                let contribs = backward(&g, &needs);
                for (&p, c) in node.parents.iter().zip(contribs) {
                    if let Some(c) = c {
                        match &mut local[p] {
                            Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, v)| *a += v),
                            slot @ None => *slot = Some(c),
                        }
                    }
                }
            } else if node.requires_grad {
                match &mut grads[id] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Gradient accumulated on a leaf, if any reached it.
    pub fn grad(&self, var: Var<'_>) -> Option<Tensor> {
        let grads = self.grads.borrow();
        grads.get(var.id).and_then(|g| g.clone()).map(|g| {
            Tensor::new(self.shape_of(var.id), g).expect("gradient matches its node")
        })
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.id)
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes.borrow()[self.id].data.len()
    }

    pub fn data(&self) -> Rc<Vec<f64>> {
        self.tape.data_of(self.id)
    }

    pub fn value(&self) -> Tensor {
        Tensor::new(self.shape(), self.data().as_ref().clone()).expect("node is consistent")
    }

    pub fn item(&self) -> f64 {
        self.data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value as a gradient-free constant.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant(self.value())
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }
}
