//! Kernel container shared by the morphology oracle and the smooth layers.
//!
//! A [`Kernel`] is an odd-sided square grid of finite weights centered on its
//! middle cell. It represents both the structuring function `b` of the exact
//! operators and the trainable weights `w` of the smooth layers; per-layer
//! domain constraints (strict positivity, nonnegativity) are enforced by the
//! layer constructors, not here.

use crate::error::{Error, Result};
use crate::{scalar, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    side: usize,
    weights: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(side: usize, weights: Vec<T>) -> Result<Self> {
        if side % 2 == 0 {
            return Err(Error::EvenKernelSide(side));
        }
        if weights.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {side}x{side} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel weights"));
        }
        Ok(Self { side, weights })
    }

    pub fn constant(side: usize, value: T) -> Result<Self> {
        Self::new(side, vec![value; side * side])
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        if side % 2 == 0 {
            return Err(Error::EvenKernelSide(side));
        }
        let mut weights = Vec::with_capacity(side * side);
        for ky in 0..side {
            for kx in 0..side {
                weights.push(f(kx, ky));
            }
        }
        Self::new(side, weights)
    }

    /// Single-cell kernel with value 0: the identity element of both erosion
    /// and dilation.
    pub fn identity() -> Self {
        Self {
            side: 1,
            weights: vec![T::zero()],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Center offset: the origin sits at `(radius, radius)`.
    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, kx: usize, ky: usize) -> T {
        self.weights[ky * self.side + kx]
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    /// Sentinel marking cells outside a flat structuring element's support.
    ///
    /// The most-negative finite value of the scalar type; windowed operators
    /// must skip these cells instead of doing arithmetic with them.
    pub fn excluded() -> T {
        T::min_value()
    }

    #[inline]
    pub fn is_excluded(value: T) -> bool {
        value == Self::excluded()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.side, self.weights.iter().map(|&v| f(v)).collect())
    }

    /// Negated kernel, used for the `(f ⊖ -w)` erosion convention.
    pub fn negated(&self) -> Self {
        Self {
            side: self.side,
            weights: self.weights.iter().map(|&v| -v).collect(),
        }
    }
}

/// Root mean square error between two kernels of the same side.
pub fn rmse<T: Scalar>(a: &Kernel<T>, b: &Kernel<T>) -> Result<T> {
    if a.side() != b.side() {
        return Err(Error::DimensionMismatch(format!(
            "kernel sides {} vs {}",
            a.side(),
            b.side()
        )));
    }
    let sum: T = a
        .weights()
        .iter()
        .zip(b.weights())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((sum / scalar::<T>(a.weights().len() as f64)).sqrt())
}
