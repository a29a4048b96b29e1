//! Square lattice storage.
//!
//! Cells are stored row-major: cell `(x, y)` lives at linear index `x * G + y`,
//! the same enumeration the parcel allocator uses.

use crate::error::{OwmError, Result};

/// A `G x G` field of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    size: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(size: usize) -> Self {
        Self::filled(size, 0.0)
    }

    pub fn filled(size: usize, value: f64) -> Self {
        Self {
            size,
            data: vec![value; size * size],
        }
    }

    pub fn from_vec(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(OwmError::Shape {
                what: "field",
                expected: size * size,
                actual: data.len(),
            });
        }
        Ok(Self { size, data })
    }

    /// Builds a field by evaluating `f(x, y)` on every cell.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for x in 0..size {
            for y in 0..size {
                data.push(f(x, y));
            }
        }
        Self { size, data }
    }

    /// Grid side length `G`.
    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.size && y < self.size);
        x * self.size + y
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Field) -> Result<()> {
        self.check_same(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same(&self, other: &Field) -> Result<()> {
        if self.size != other.size {
            return Err(OwmError::Shape {
                what: "field",
                expected: self.data.len(),
                actual: other.data.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let f = Field::from_fn(3, |x, y| (10 * x + y) as f64);
        assert_eq!(f.as_slice()[3 + 2], 12.0);
        assert_eq!(f.get(2, 1), 21.0);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Field::from_vec(4, vec![0.0; 15]).unwrap_err();
        assert!(matches!(err, OwmError::Shape { expected: 16, actual: 15, .. }));
    }
}
