//! Dense row-major `f64` tensor, the value carrier for everything in this
//! crate. Shapes are explicit; `data.len()` always equals the product of
//! the shape entries and every entry is positive.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the payload length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Validation("tensor shape must be non-empty".into()));
        }
        if shape.contains(&0) {
            return Err(Error::Validation(format!(
                "tensor shape entries must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n]).expect("zeros: valid shape required")
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n]).expect("filled: valid shape required")
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(vec![n], data).expect("from_vec: non-empty data required")
    }

    /// Shape `[1]` tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// A tensor is scalar-shaped when it holds exactly one value.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar-shaped tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::Shape(format!(
                "expected scalar-shaped tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Row-major element of a 2-D tensor.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, the right notion for determinism checks.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// One-hot vector of length `len` with a 1 at `index`.
pub fn one_hot(len: usize, index: usize) -> Result<Tensor> {
    if index >= len {
        return Err(Error::Validation(format!(
            "one-hot index {index} out of range for length {len}"
        )));
    }
    let mut data = vec![0.0; len];
    data[index] = 1.0;
    Tensor::new(vec![len], data)
}

/// Checks that `x` is 1-D with exactly one entry equal to 1 and the rest 0.
pub fn validate_one_hot(x: &Tensor) -> Result<usize> {
    if x.shape().len() != 1 {
        return Err(Error::Validation(format!(
            "one-hot input must be 1-D, got shape {:?}",
            x.shape()
        )));
    }
    let mut hot = None;
    for (i, &v) in x.data().iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::Validation(
                    "one-hot input has more than one entry equal to 1".into(),
                ));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::Validation(format!(
                "one-hot input has entry {v} at index {i}; entries must be 0 or 1"
            )));
        }
    }
    hot.ok_or_else(|| Error::Validation("one-hot input has no entry equal to 1".into()))
}

/// Stacks `n` same-shaped tensors along a new leading axis.
pub fn stack(items: &[Tensor]) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| Error::Validation("cannot stack an empty list".into()))?;
    let mut data = Vec::with_capacity(items.len() * first.numel());
    for t in items {
        if t.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "stack requires uniform shapes, got {:?} and {:?}",
                first.shape(),
                t.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    Tensor::new(shape, data)
}

/// Extracts slice `i` along the leading axis of a stacked tensor.
pub fn unstack_one(t: &Tensor, i: usize) -> Result<Tensor> {
    if t.shape().len() < 2 {
        return Err(Error::Shape(format!(
            "unstack needs at least 2 axes, got shape {:?}",
            t.shape()
        )));
    }
    let n = t.shape()[0];
    if i >= n {
        return Err(Error::Validation(format!(
            "index {i} out of range for leading axis of size {n}"
        )));
    }
    let inner_shape: Vec<usize> = t.shape()[1..].to_vec();
    let stride: usize = inner_shape.iter().product();
    let data = t.data()[i * stride..(i + 1) * stride].to_vec();
    Tensor::new(inner_shape, data)
}
