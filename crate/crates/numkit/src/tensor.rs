//! Contiguous row-major tensors.

use crate::error::{NumError, Result};
use crate::scalar::Scalar;

/// A dense tensor: a shape plus contiguous row-major data.
///
/// Tensors are plain values — cloning copies the data, and all graph
/// operations treat their inputs as immutable. The `requires_grad` flag only
/// matters when a tensor is installed as a graph leaf: it marks the leaf as
/// a parameter whose gradient should be produced by `backward`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
}

impl<S: Scalar> Tensor<S> {
    /// A tensor of zeros.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
            requires_grad: false,
        }
    }

    /// A tensor with every element set to `v`.
    pub fn filled(shape: &[usize], v: S) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
            requires_grad: false,
        }
    }

    /// Wrap existing data; `len(data)` must equal the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NumError::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {:?} wants {} values, got {}", shape, n, data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        })
    }

    /// A single-element tensor (shape `[1]`).
    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
        }
    }

    /// Mark this tensor as a trainable parameter when installed as a leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    /// The same values with the trainable flag cleared.
    pub fn detached(mut self) -> Self {
        self.requires_grad = false;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> S {
        assert!(self.is_scalar(), "scalar_value on shape {:?}", self.shape);
        self.data[0]
    }

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.ndim(), 2, "rows() on shape {:?}", self.shape);
        self.shape[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.ndim(), 2, "cols() on shape {:?}", self.shape);
        self.shape[1]
    }

    /// Contiguous row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Element accessor by multi-index (row-major). Intended for tests and
    /// small fixtures, not hot loops.
    pub fn at(&self, idx: &[usize]) -> S {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: S) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (d, (&i, &n)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(i < n, "index {} out of bounds at dim {} (size {})", i, d, n);
            off = off * n + i;
        }
        off
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert element precision (used by gradient-check mode to lift `f32`
    /// parameters into `f64`).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
        }
    }
}
