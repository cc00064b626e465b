//! Minimal reverse-mode automatic differentiation: a Wengert tape over flat
//! tensors, with exactly the primitives the downsampler, the resamplers, the
//! losses and the rate proxy need. No broadcasting beyond scalar-vs-tensor,
//! no views, stride-1 convolutions only.

mod adam;
mod conv;
pub mod gradcheck;
mod scalar;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tape::{Gradients, LinearOp, NodeId, Tape};

use std::sync::Arc;

/// Tensor shape. Images use N,C,H,W order; scalars are `[1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// (n, c, h, w) accessor; panics unless rank 4.
    pub fn nchw(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.0.len(), 4, "expected NCHW tensor, got shape {:?}", self.0);
        (self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl From<Vec<usize>> for Shape {
    fn from(dims: Vec<usize>) -> Self {
        Shape(dims)
    }
}

impl From<&[usize]> for Shape {
    fn from(dims: &[usize]) -> Self {
        Shape(dims.to_vec())
    }
}

/// A shaped numeric array, optionally tracked on a [`Tape`].
///
/// Cheap to clone: the payload is shared. A tensor with `node == None` is a
/// constant and never accumulates gradient.
#[derive(Clone, Debug)]
pub struct Tensor<T: Scalar> {
    shape: Shape,
    data: Arc<Vec<T>>,
    node: Option<NodeId>,
}

impl<T: Scalar> Tensor<T> {
    /// Constant (untracked) tensor.
    pub fn constant(data: Vec<T>, shape: impl Into<Shape>) -> Self {
        let shape = shape.into();
        assert_eq!(
            data.len(),
            shape.numel(),
            "data length {} does not match shape {:?}",
            data.len(),
            shape.dims()
        );
        Tensor {
            shape,
            data: Arc::new(data),
            node: None,
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor::constant(vec![value], Shape::scalar())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    /// Single element of a scalar tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    pub(crate) fn from_parts(shape: Shape, data: Arc<Vec<T>>, node: Option<NodeId>) -> Self {
        Tensor { shape, data, node }
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }
}
