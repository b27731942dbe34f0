//! Index spaces, coordinate ranges and regions.
//!
//! Every region is stored linearized in row-major order over its index
//! space, so partitions can name sub-regions by linear index alone.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rectangular domain of multi-dimensional indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSpace {
    extents: Vec<usize>,
}

impl IndexSpace {
    pub fn new(extents: Vec<usize>) -> Self {
        IndexSpace { extents }
    }

    pub fn linear(len: usize) -> Self {
        IndexSpace { extents: vec![len] }
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    /// Number of points: the product of the extents (1 for a zero-dimensional space).
    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.len()
    }

    /// Row-major linearization of a multi-dimensional point.
    pub fn linearize(&self, point: &[usize]) -> Option<usize> {
        if point.len() != self.extents.len() {
            return None;
        }
        let mut acc = 0usize;
        for (&x, &n) in point.iter().zip(&self.extents) {
            if x >= n {
                return None;
            }
            acc = acc * n + x;
        }
        Some(acc)
    }

    pub fn delinearize(&self, mut index: usize) -> Vec<usize> {
        let mut point = vec![0; self.extents.len()];
        for (slot, &n) in point.iter_mut().zip(&self.extents).rev() {
            if n > 0 {
                *slot = index % n;
                index /= n;
            }
        }
        point
    }
}

impl fmt::Display for IndexSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.extents.iter().map(|e| e.to_string()).collect();
        write!(f, "[{}]", parts.join("x"))
    }
}

/// Inclusive range of positions or coordinates. Empty iff `lo > hi`;
/// the canonical empty range is `(k, k - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoordRange {
    pub lo: i64,
    pub hi: i64,
}

impl CoordRange {
    pub fn new(lo: i64, hi: i64) -> Self {
        CoordRange { lo, hi }
    }

    pub fn empty_at(k: i64) -> Self {
        CoordRange { lo: k, hi: k - 1 }
    }

    /// The full range `[0, extent)`.
    pub fn full(extent: usize) -> Self {
        CoordRange {
            lo: 0,
            hi: extent as i64 - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.hi - self.lo + 1) as usize
        }
    }

    pub fn contains(&self, x: usize) -> bool {
        let x = x as i64;
        self.lo <= x && x <= self.hi
    }

    pub fn intersect(&self, other: &CoordRange) -> CoordRange {
        let r = CoordRange::new(self.lo.max(other.lo), self.hi.min(other.hi));
        if r.is_empty() {
            CoordRange::empty_at(r.lo)
        } else {
            r
        }
    }

    pub fn overlaps(&self, other: &CoordRange) -> bool {
        !self.intersect(other).is_empty()
    }

    /// Iterate the members of a non-negative range.
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        let (lo, hi) = (self.lo.max(0), self.hi);
        (lo..=hi).map(|x| x as usize)
    }
}

impl fmt::Display for CoordRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Kinds of values a region may hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueKind {
    Scalar,
    Coordinate,
    Range,
    /// A dense `dom` index space has no stored values.
    None,
}

impl ValueKind {
    /// Bytes charged per element when a region of this kind moves between workers.
    pub fn bytes(self) -> usize {
        match self {
            ValueKind::Scalar | ValueKind::Coordinate => 8,
            ValueKind::Range => 16,
            ValueKind::None => 0,
        }
    }
}

/// Element types that can populate a [`Region`].
pub trait RegionValue: Clone + fmt::Debug + Send + Sync + 'static {
    const KIND: ValueKind;
}

impl RegionValue for f64 {
    const KIND: ValueKind = ValueKind::Scalar;
}

impl RegionValue for usize {
    const KIND: ValueKind = ValueKind::Coordinate;
}

impl RegionValue for CoordRange {
    const KIND: ValueKind = ValueKind::Range;
}

/// A multi-dimensional array of values: one value per index of `space`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<T: RegionValue> {
    space: IndexSpace,
    values: Vec<T>,
}

impl<T: RegionValue> Region<T> {
    pub fn new(space: IndexSpace, values: Vec<T>) -> Result<Self> {
        if space.len() != values.len() {
            return Err(Error::Shape(format!(
                "region over {} needs {} values, got {}",
                space,
                space.len(),
                values.len()
            )));
        }
        Ok(Region { space, values })
    }

    pub fn from_vec(values: Vec<T>) -> Self {
        Region {
            space: IndexSpace::linear(values.len()),
            values,
        }
    }

    pub fn space(&self) -> &IndexSpace {
        &self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.values.get(index)
    }

    pub fn kind(&self) -> ValueKind {
        T::KIND
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

impl Region<CoordRange> {
    /// Check that every non-empty range lies inside `dest`.
    pub fn check_references(&self, dest: &IndexSpace) -> Result<()> {
        let n = dest.len() as i64;
        for (i, r) in self.values.iter().enumerate() {
            if !r.is_empty() && (r.lo < 0 || r.hi >= n) {
                return Err(Error::Bounds(format!(
                    "range {r} at index {i} escapes destination space {dest}"
                )));
            }
        }
        Ok(())
    }
}
