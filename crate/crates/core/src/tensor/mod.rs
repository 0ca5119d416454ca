//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: dense row-major storage, explicit
//! shapes (no broadcasting), eager forward evaluation and a tape that is
//! replayed in exact reverse construction order. Graphs are built per
//! training step and are single-threaded; plain [`Tensor`] values are
//! immutable data and safe to share across threads.

mod graph;
pub mod gradcheck;

pub use graph::{Graph, NodeId};

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Scalar type the engine computes with. `f64` is used by every test and
/// gradient check; `f32` is available for faster training. The choice is
/// made where the graph and parameters are constructed.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + fmt::Debug
    + fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Name of this precision in checkpoints and configs.
    fn precision() -> &'static str;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn precision() -> &'static str {
        "f64"
    }
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn precision() -> &'static str {
        "f32"
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs} and {rhs}")]
    Dimension {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: unsupported shape {shape}")]
    UnsupportedShape { op: &'static str, shape: Shape },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("shape {shape} expects {expected} elements, got {actual}")]
    DataLength {
        shape: Shape,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0} contains a zero-sized dimension")]
    ZeroDim(Shape),
    #[error("index {index} out of bounds for {op} on {shape}")]
    Index {
        op: &'static str,
        index: usize,
        shape: Shape,
    },
    #[error("backward requires a scalar output, got {0}")]
    NonScalarLoss(Shape),
}

/// Tensor shape: a list of positive dimensions. Rank 0 is a scalar.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn vector(n: usize) -> Self {
        Shape(vec![n])
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape(vec![rows, cols])
    }

    pub fn cube(a: usize, b: usize, c: usize) -> Self {
        Shape(vec![a, b, c])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0[axis]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "[scalar]");
        }
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "\u{d7}")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// An immutable dense value: shape plus row-major data.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self, TensorError> {
        if shape.dims().iter().any(|&d| d == 0) {
            return Err(TensorError::ZeroDim(shape));
        }
        if shape.numel() != data.len() {
            return Err(TensorError::DataLength {
                expected: shape.numel(),
                actual: data.len(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: Shape::vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, TensorError> {
        Tensor::new(Shape::matrix(rows, cols), data)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.shape.numel(), 1);
        self.data[0]
    }

    pub fn at2(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.shape.rank(), 2);
        self.data[i * self.shape.dim(1) + j]
    }

    pub fn at3(&self, i: usize, j: usize, k: usize) -> T {
        debug_assert_eq!(self.shape.rank(), 3);
        let (m, kk) = (self.shape.dim(1), self.shape.dim(2));
        self.data[(i * m + j) * kk + k]
    }

    pub fn row(&self, i: usize) -> &[T] {
        debug_assert_eq!(self.shape.rank(), 2);
        let c = self.shape.dim(1);
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_display_names_dimensions() {
        assert_eq!(Shape::matrix(3, 4).to_string(), "[3\u{d7}4]");
        assert_eq!(Shape::scalar().to_string(), "[scalar]");
    }

    #[test]
    fn tensor_rejects_length_mismatch() {
        let err = Tensor::<f64>::new(Shape::matrix(2, 2), vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 4, actual: 2, .. }));
    }

    #[test]
    fn tensor_rejects_zero_dims() {
        let err = Tensor::<f64>::new(Shape::matrix(0, 2), vec![]).unwrap_err();
        assert!(matches!(err, TensorError::ZeroDim(_)));
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::new(Shape::cube(2, 2, 2), (0..8).map(f64::from).collect()).unwrap();
        assert_eq!(t.at3(1, 0, 1), 5.0);
        let m = Tensor::matrix(2, 3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(m.at2(1, 2), 5.0);
        assert_eq!(m.row(1), &[3.0, 4.0, 5.0]);
    }
}
