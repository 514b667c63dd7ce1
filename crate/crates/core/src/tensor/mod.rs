//! Minimal differentiable tensor engine.
//!
//! Values live in [`Tensor`]; computation is recorded on a [`Graph`] tape and
//! differentiated in reverse mode. Images use a channels×height×width layout.
//! Training and inference run in `f32`; `f64` graphs exist for gradient checks.

mod adam;
mod gradcheck;
mod graph;
mod kernels;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_subset, GradCheckReport};
pub use graph::{Gradients, Graph, Var, WarpTaps};

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

use crate::error::TensorError;

/// Scalar type a [`Graph`] can run on.
pub trait Real: Float + Default + Debug + Sum + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a·b (+ c if accumulate)` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        c: &mut [Self],
        accumulate: bool,
    );
}

fn check_gemm_bounds(len: usize, rows: usize, cols: usize, strides: (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * strides.0 + (cols as isize - 1) * strides.1;
    assert!(strides.0 >= 0 && strides.1 >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                c: &mut [Self],
                accumulate: bool,
            ) {
                check_gemm_bounds(a.len(), m, k, a_strides);
                check_gemm_bounds(b.len(), k, n, b_strides);
                assert!(c.len() >= m * n, "gemm output out of bounds");
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: operand extents were checked against the slice lengths above
                // and the output is a dense row-major m×n block inside `c`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Dense row-major N-dimensional array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::Shape {
                op: "tensor",
                detail: format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self { shape, data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Channels, height and width of a rank-3 image tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize), TensorError> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(TensorError::Shape {
                op: "chw",
                detail: format!("expected rank-3 image, got shape {:?}", self.shape),
            }),
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        let (_, h, w) = self.chw().expect("rank-3 tensor");
        self.data[(c * h + y) * w + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let (_, h, w) = self.chw().expect("rank-3 tensor");
        self.data[(c * h + y) * w + x] = v;
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect() }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(TensorError::Shape {
                op: "reshape",
                detail: format!("cannot view {:?} as {:?}", self.shape, shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Copy of channels `start..start + count` of an image tensor.
    pub fn channel_slice(&self, start: usize, count: usize) -> Result<Self, TensorError> {
        let (c, h, w) = self.chw()?;
        if start + count > c {
            return Err(TensorError::Shape {
                op: "channel_slice",
                detail: format!("channels {}..{} out of {}", start, start + count, c),
            });
        }
        let plane = h * w;
        Ok(Self { shape: vec![count, h, w], data: self.data[start * plane..(start + count) * plane].to_vec() })
    }

    /// Spatial window `[y0, y0+h) × [x0, x0+w)` of an image tensor.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self, TensorError> {
        let (c, sh, sw) = self.chw()?;
        if y0 + h > sh || x0 + w > sw {
            return Err(TensorError::Shape {
                op: "crop",
                detail: format!("window {}x{} at ({}, {}) exceeds {}x{}", h, w, y0, x0, sh, sw),
            });
        }
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in y0..y0 + h {
                let row = (ch * sh + y) * sw;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Ok(Self { shape: vec![c, h, w], data })
    }

    /// Concatenate image tensors along the channel axis.
    pub fn concat(parts: &[&Tensor<T>]) -> Result<Self, TensorError> {
        let first = parts.first().ok_or_else(|| TensorError::Shape {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let (_, h, w) = first.chw()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.chw()?;
            if (ph, pw) != (h, w) {
                return Err(TensorError::Shape {
                    op: "concat",
                    detail: format!("spatial extent {}x{} differs from {}x{}", ph, pw, h, w),
                });
            }
            channels += c;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape: vec![channels, h, w], data })
    }
}
