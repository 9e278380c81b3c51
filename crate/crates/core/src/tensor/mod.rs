//! Dense tensor engine with tape-based reverse-mode autodiff.
//!
//! Tensors are immutable row-major buffers once created; the only sanctioned
//! mutations are gradient accumulation during `backward` and in-place
//! parameter updates by the optimizer. The op graph is rebuilt every step and
//! dropped when the step's tensors go out of scope.
//!
//! Training runs in `f32`; every op is generic over [`Scalar`] so the same
//! graph can be instantiated in `f64` for finite-difference gradient checks.

mod ops;
pub mod gradcheck;

pub use ops::{sinusoidal_position_encoding, sinusoidal_positions, sinusoidal_time_embedding};

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Element type for tensors: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Copy
    + 'static
{
    /// Lift an `f64` constant into the scalar type.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant conversion")
    }
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn as_f64(self) -> f64 {
        self
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Run `f` with graph recording disabled (inference / sampling paths).
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Backward function: receives the output gradient, the output node (for
/// saved forward values) and the parent tensors to accumulate into.
pub(crate) type BackFn<S> = Box<dyn Fn(&[S], &Node<S>, &[Tensor<S>])>;

pub(crate) struct Node<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<S>>,
    grad: RefCell<Option<Vec<S>>>,
    /// True when gradients must flow to or through this node.
    requires_grad: bool,
    parents: Vec<Tensor<S>>,
    backward_fn: Option<BackFn<S>>,
}

/// Dense n-dimensional array with optional gradient tape.
///
/// Cloning is cheap (shared node). `Tensor` is not `Send`: the op graph is
/// single-threaded by design.
pub struct Tensor<S: Scalar> {
    node: Rc<Node<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.node.shape, self.node.requires_grad
        )
    }
}

fn check_shape_data(shape: &[usize], len: usize) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::contract("tensor", format!("zero dim in {shape:?}")));
    }
    let numel: usize = shape.iter().product();
    if numel != len {
        return Err(Error::contract(
            "tensor",
            format!("shape {shape:?} implies {numel} elements, got {len}"),
        ));
    }
    Ok(())
}

impl<S: Scalar> Tensor<S> {
    fn new_node(
        data: Vec<S>,
        shape: Vec<usize>,
        requires_grad: bool,
        parents: Vec<Tensor<S>>,
        backward_fn: Option<BackFn<S>>,
    ) -> Self {
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward_fn,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        check_shape_data(shape, data.len())?;
        Ok(Self::new_node(data, shape.to_vec(), false, vec![], None))
    }

    /// Trainable leaf tensor; receives a gradient buffer on `backward`.
    pub fn param(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        check_shape_data(shape, data.len())?;
        Ok(Self::new_node(data, shape.to_vec(), true, vec![], None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new_node(vec![S::zero(); n], shape.to_vec(), false, vec![], None)
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        let n = shape.iter().product();
        Self::new_node(vec![v; n], shape.to_vec(), false, vec![], None)
    }

    pub fn scalar(v: S) -> Self {
        Self::new_node(vec![v], vec![1], false, vec![], None)
    }

    /// Output of a recorded op. Falls back to a constant when grads are
    /// globally disabled or no parent tracks gradients.
    pub(crate) fn from_op(
        data: Vec<S>,
        shape: Vec<usize>,
        parents: Vec<Tensor<S>>,
        backward_fn: BackFn<S>,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.node.requires_grad);
        if track {
            Self::new_node(data, shape, true, parents, Some(backward_fn))
        } else {
            Self::new_node(data, shape, false, vec![], None)
        }
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Borrow the underlying buffer.
    pub fn data(&self) -> std::cell::Ref<'_, Vec<S>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.node.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(Error::contract(
                "item",
                format!("expected scalar, got shape {:?}", self.shape()),
            ));
        }
        Ok(self.node.data.borrow()[0])
    }

    /// In-place data mutation. Only sanctioned for leaf parameters (optimizer
    /// updates, checkpoint loads, finite-difference perturbation).
    pub fn with_data_mut(&self, f: impl FnOnce(&mut [S])) {
        f(&mut self.node.data.borrow_mut());
    }

    pub fn grad(&self) -> Option<Vec<S>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[S]) {
        debug_assert_eq!(contrib.len(), self.numel(), "gradient shape mismatch");
        let mut g = self.node.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (b, c) in buf.iter_mut().zip(contrib) {
                    *b = *b + *c;
                }
            }
            None => *g = Some(contrib.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Every tracked leaf reachable
    /// from the loss receives `d loss / d leaf` in its grad buffer. Repeated
    /// calls without `zero_grad` accumulate.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape()),
            ));
        }
        if !self.node.requires_grad {
            return Ok(()); // constant loss: nothing to do
        }

        // Iterative postorder topological sort over grad-tracking parents.
        enum Visit<S: Scalar> {
            Enter(Tensor<S>),
            Exit(Tensor<S>),
        }
        let mut topo: Vec<Tensor<S>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![Visit::Enter(self.clone())];
        while let Some(v) = stack.pop() {
            match v {
                Visit::Enter(t) => {
                    if !seen.insert(t.node.id) {
                        continue;
                    }
                    stack.push(Visit::Exit(t.clone()));
                    for p in &t.node.parents {
                        if p.node.requires_grad && !seen.contains(&p.node.id) {
                            stack.push(Visit::Enter(p.clone()));
                        }
                    }
                }
                Visit::Exit(t) => topo.push(t),
            }
        }

        // Leaf grads persist (and so accumulate across sweeps); grads of op
        // outputs are transient per-sweep flow buffers.
        for t in &topo {
            if t.node.backward_fn.is_some() {
                *t.node.grad.borrow_mut() = None;
            }
        }
        self.accumulate_grad(&[S::one()]);
        for t in topo.iter().rev() {
            if let Some(back) = &t.node.backward_fn {
                let g = t.node.grad.borrow().clone();
                if let Some(g) = g {
                    back(&g, &t.node, &t.node.parents);
                }
            }
        }
        Ok(())
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.node.data.borrow().iter().all(|v| v.is_finite())
    }

    /// Debug-build finiteness assertion. Forward ops on finite inputs must
    /// produce finite outputs; sprinkle this where that property matters.
    pub fn debug_assert_finite(&self, what: &str) {
        debug_assert!(self.all_finite(), "non-finite value in {what}");
    }
}

impl<S: Scalar> Node<S> {
    pub(crate) fn data(&self) -> std::cell::Ref<'_, Vec<S>> {
        self.data.borrow()
    }
}

/// Per-op record of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub op: String,
    pub max_rel_err: f64,
    /// `(analytic, numeric)` pairs, one per checked element.
    pub entries: Vec<(f64, f64)>,
}

impl GradReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_mismatch_rejected() {
        assert!(Tensor::<f32>::from_vec(vec![1.0, 2.0], &[3]).is_err());
        assert!(Tensor::<f32>::from_vec(vec![1.0, 2.0], &[0]).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let x = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(x.backward().is_err());
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let x = Tensor::<f64>::param(vec![1.0, -2.0, 3.0, 0.5], &[2, 2]).unwrap();
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn grad_of_half_square_sum_is_x() {
        let x = Tensor::<f64>::param(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let loss = x.mul(&x).unwrap().sum_all().unwrap().mul_scalar(0.5).unwrap();
        loss.backward().unwrap();
        let g = x.grad().unwrap();
        for (gi, xi) in g.iter().zip(x.to_vec()) {
            assert!((gi - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::<f64>::param(vec![2.0], &[1]).unwrap();
        let loss = x.mul(&x).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        // d(x^2)/dx = 4 at x=2, doubled by the second sweep.
        assert!((x.grad().unwrap()[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn no_grad_suppresses_tape() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        let y = no_grad(|| x.mul(&x).unwrap());
        assert!(!y.requires_grad());
    }
}
