//! Dense n-dimensional arrays and the reverse-mode tape built on them.

pub(crate) mod io;
mod tape;

pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, TensorAny};
pub use tape::{Tape, Var};

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

/// Dense row-major array of real scalars with optional gradient tracking.
///
/// Scalars live in a flat buffer; `shape` lists the extents outermost first.
/// A rank-0 shape denotes a scalar (one element).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor from a shape and matching flat buffer.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Tensor<S>> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::arg("tensor", format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} implies {numel} elements, buffer has {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor<S> {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::ZERO; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: Vec<usize>, value: S) -> Tensor<S> {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
            grad: None,
        }
    }

    /// Rank-0 scalar tensor.
    pub fn scalar(value: S) -> Tensor<S> {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> S) -> Tensor<S> {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(&mut f).collect();
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dtype(&self) -> DType {
        S::DTYPE
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

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Mark or unmark this tensor as a differentiation leaf.
    pub fn with_grad(mut self, requires_grad: bool) -> Tensor<S> {
        self.requires_grad = requires_grad;
        self
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    /// Gradient buffer, populated by `Tape::write_grad`.
    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Option<Vec<S>>) {
        if let Some(g) = &grad {
            assert_eq!(g.len(), self.data.len(), "grad length must match data");
        }
        self.grad = grad;
    }

    /// The single element of a rank-0/one-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.data.len() != 1 {
            return Err(Error::shape(
                "item",
                format!("expected one element, tensor has {}", self.data.len()),
            ));
        }
        Ok(self.data[0])
    }

    /// Elementwise -1/0/+1. Not differentiable and never recorded on a tape.
    pub fn sign(&self) -> Tensor<S> {
        let data = self
            .data
            .iter()
            .map(|&v| {
                if v > S::ZERO {
                    S::ONE
                } else if v < S::ZERO {
                    -S::ONE
                } else {
                    S::ZERO
                }
            })
            .collect();
        Tensor {
            shape: self.shape.clone(),
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Largest absolute difference against another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor<S>) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Error out if any element is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("{context}: element {i} is {v}"),
                });
            }
        }
        Ok(())
    }

    /// Convert between precisions. Gradients are dropped.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }
}

/// Check two shapes are identical; the usual precondition of binary ops.
pub(crate) fn check_same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Interpret a shape as [C, H, W].
pub(crate) fn as_chw(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::shape(op, format!("expected [C,H,W], got {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_matches_examples() {
        let t = Tensor::new(vec![3], vec![-3.2f64, 0.0, 1e-9]).unwrap();
        assert_eq!(t.sign().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn sign_is_idempotent_and_odd() {
        let t = Tensor::from_fn(vec![4, 5], |i| (i as f64 - 9.3) * 0.7);
        let s = t.sign();
        assert_eq!(s.sign().data(), s.data());
        let neg = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().map(|&v| -v).collect(),
        )
        .unwrap();
        let expect: Vec<f64> = s.data().iter().map(|&v| -v).collect();
        assert_eq!(neg.sign().data(), &expect[..]);
    }

    #[test]
    fn shape_buffer_mismatch_rejected() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn scalar_tensor_has_one_element() {
        let t = Tensor::scalar(4.5f32);
        assert_eq!(t.numel(), 1);
        assert_eq!(t.shape(), &[] as &[usize]);
        assert_eq!(t.item().unwrap(), 4.5);
    }

    #[test]
    fn ensure_finite_catches_nan() {
        let t = Tensor::new(vec![2], vec![1.0f32, f32::NAN]).unwrap();
        assert!(matches!(
            t.ensure_finite("test"),
            Err(Error::NonFinite { .. })
        ));
    }
}
