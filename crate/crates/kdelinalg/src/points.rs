//! Dense point sets.
//!
//! A [`PointSet`] is an `n x d` collection of points stored row-major in a
//! flat buffer. Construction validates finiteness once so the hot kernel
//! loops can skip per-evaluation checks.

use crate::error::{invalid, Error, Result};

/// An immutable set of `n` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    /// Builds a point set from a flat row-major buffer of length `n * dim`.
    ///
    /// Every coordinate must be finite and `n, dim >= 1`.
    pub fn from_flat(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(invalid("point set must have n >= 1 and dim >= 1"));
        }
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite coordinate at flat index {bad}"
            )));
        }
        Ok(Self { n, dim, data })
    }

    /// Builds a point set from per-point rows, all of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("point set must have at least one point"));
        }
        let dim = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("row has {} coordinates, expected {}", row.len(), dim),
                });
            }
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(rows.len(), dim, data)
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.n
    }

    /// True when the set holds no points (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Borrow point `i` as a coordinate slice.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterate over all points in index order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// The underlying flat row-major buffer.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// A new point set holding the points at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("subset must select at least one point"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n {
                return Err(invalid(format!("subset index {i} out of range {}", self.n)));
            }
            data.extend_from_slice(self.point(i));
        }
        Self::from_flat(indices.len(), self.dim, data)
    }

    /// A new point set holding points `lo..hi` (half-open, non-empty).
    pub fn slice(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo >= hi || hi > self.n {
            return Err(invalid(format!("bad slice {lo}..{hi} of {} points", self.n)));
        }
        Self::from_flat(hi - lo, self.dim, self.data[lo * self.dim..hi * self.dim].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_flat_validates_shape_and_finiteness() {
        assert!(PointSet::from_flat(2, 2, vec![0.0, 1.0, 2.0, 3.0]).is_ok());
        assert!(PointSet::from_flat(0, 2, vec![]).is_err());
        assert!(PointSet::from_flat(2, 2, vec![0.0; 3]).is_err());
        assert!(PointSet::from_flat(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(PointSet::from_flat(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn from_rows_rejects_ragged_input() {
        let err = PointSet::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        match err {
            crate::error::Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn accessors_round_trip() {
        let ps = PointSet::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps.dim(), 2);
        assert_eq!(ps.point(1), &[3.0, 4.0]);
        assert_eq!(ps.iter().count(), 3);
        let sub = ps.subset(&[2, 0]).unwrap();
        assert_eq!(sub.point(0), &[5.0, 6.0]);
        assert_eq!(sub.point(1), &[1.0, 2.0]);
        let sl = ps.slice(1, 3).unwrap();
        assert_eq!(sl.len(), 2);
        assert_eq!(sl.point(0), &[3.0, 4.0]);
    }
}
