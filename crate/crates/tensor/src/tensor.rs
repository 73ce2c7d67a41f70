use std::fmt::Debug;

use crate::error::{Result, TensorError};

/// Element type. Kernels do all arithmetic in f64 and store `Self`.
pub trait Real: Copy + Default + PartialOrd + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    pub dims: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![T::default(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(TensorError::Shape(format!(
                "{} values for dims {dims:?} ({n})",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub(crate) fn from_f64_vec(dims: [usize; 4], acc: Vec<f64>) -> Self {
        Tensor4 {
            dims,
            data: acc.into_iter().map(T::from_f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.as_f64().is_finite())
    }

    pub fn add(&self, other: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.same_dims(other)?;
        Ok(Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| T::from_f64(a.as_f64() + b.as_f64()))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = T::from_f64(a.as_f64() + b.as_f64());
        }
        Ok(())
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &Tensor4<T>) -> Result<()> {
        self.same_dims(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = T::from_f64(a.as_f64() + k * b.as_f64());
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> Tensor4<T> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|v| T::from_f64(k * v.as_f64()))
                .collect(),
        }
    }

    /// Sum of elementwise products, accumulated in f64.
    pub fn dot(&self, other: &Tensor4<T>) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn same_dims(&self, other: &Tensor4<T>) -> Result<()> {
        if self.dims != other.dims {
            return Err(TensorError::Shape(format!(
                "dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}
