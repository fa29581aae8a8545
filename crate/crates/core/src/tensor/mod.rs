//! Dense row-major tensors, a reverse-mode tape, Adam and finite-difference
//! gradient checking.

mod adam;
mod gradcheck;
mod tape;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{directional_check, gradient_check, relative_error, GradCheckReport};
pub use tape::{Tape, Var, PROB_FLOOR};

/// Errors raised by tensor construction, tape operations and optimizers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("invalid shape {shape} for {len} elements")]
    InvalidShape { shape: Shape, len: usize },
    #[error("tensors are limited to rank 3, got rank {0}")]
    RankTooLarge(usize),
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
}

/// Up to three dimensions. Rank 0 is a scalar.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: [usize; 3],
    rank: u8,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self, TensorError> {
        if dims.len() > 3 {
            return Err(TensorError::RankTooLarge(dims.len()));
        }
        let mut d = [1usize; 3];
        d[..dims.len()].copy_from_slice(dims);
        Ok(Shape {
            dims: d,
            rank: dims.len() as u8,
        })
    }

    pub fn scalar() -> Self {
        Shape {
            dims: [1; 3],
            rank: 0,
        }
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape {
            dims: [rows, cols, 1],
            rank: 2,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.rank as usize]
    }

    pub fn rank(&self) -> usize {
        self.rank as usize
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }

    /// `(outer, extent, inner)` strides around `axis`.
    pub(crate) fn split_at_axis(&self, axis: usize) -> (usize, usize, usize) {
        let dims = self.dims();
        let outer = dims[..axis].iter().product();
        let inner = dims[axis + 1..].iter().product();
        (outer, dims[axis], inner)
    }

    pub(crate) fn with_dim(&self, axis: usize, extent: usize) -> Shape {
        let mut s = *self;
        s.dims[axis] = extent;
        s
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.dims()).finish()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Contiguous `f64` tensor in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Result<Self, TensorError> {
        let shape = Shape::new(dims)?;
        Ok(Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        })
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let shape = Shape::new(dims)?;
        Self::with_shape(shape, data)
    }

    pub fn with_shape(shape: Shape, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.numel() != data.len() {
            return Err(TensorError::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn zeros_like_shape(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    /// A `1 x n` row.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::matrix(1, values.len()),
            data: values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::with_shape(Shape::matrix(rows, cols), data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros_like_shape(Shape::matrix(n, n));
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a rank-2 tensor (1 for lower ranks).
    pub fn rows(&self) -> usize {
        match self.shape.rank() {
            2 => self.shape.dims[0],
            3 => self.shape.dims[0] * self.shape.dims[1],
            _ => 1,
        }
    }

    /// Extent of the last axis.
    pub fn cols(&self) -> usize {
        match self.shape.rank() {
            0 => 1,
            r => self.shape.dims[r - 1],
        }
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Handle for a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replace every tensor, keeping names. Shapes must agree.
    pub fn load_values(&mut self, values: Vec<Tensor>) -> Result<(), TensorError> {
        if values.len() != self.tensors.len() {
            return Err(TensorError::InvalidShape {
                shape: Shape::scalar(),
                len: values.len(),
            });
        }
        for (slot, v) in self.tensors.iter().zip(&values) {
            if slot.shape() != v.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "load_values",
                    left: slot.shape(),
                    right: v.shape(),
                });
            }
        }
        self.tensors = values;
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}
