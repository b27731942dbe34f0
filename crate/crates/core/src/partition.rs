//! Partitions of index spaces and the dependent-partitioning operators.
//!
//! A partition maps each color `0..colors()` to a sorted set of linear
//! indices of its parent space. Subsets may overlap; the disjointness flag is
//! always computed from the subsets themselves.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::space::{CoordRange, IndexSpace, Region, RegionValue};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    parent: IndexSpace,
    subsets: Vec<Vec<usize>>,
    disjoint: bool,
}

impl Partition {
    /// Build a partition from explicit subsets. Subsets are sorted and
    /// deduplicated; every index must lie inside `parent`.
    pub fn new(parent: IndexSpace, subsets: Vec<Vec<usize>>) -> Result<Self> {
        let n = parent.len();
        let mut clean = Vec::with_capacity(subsets.len());
        for (color, mut s) in subsets.into_iter().enumerate() {
            s.sort_unstable();
            s.dedup();
            if let Some(&last) = s.last() {
                if last >= n {
                    return Err(Error::Bounds(format!(
                        "color {color} names index {last} outside {parent}"
                    )));
                }
            }
            clean.push(s);
        }
        Ok(Self::from_sorted(parent, clean))
    }

    /// Subsets must already be sorted, unique, and in bounds.
    pub(crate) fn from_sorted(parent: IndexSpace, subsets: Vec<Vec<usize>>) -> Self {
        let disjoint = compute_disjoint(parent.len(), &subsets);
        Partition {
            parent,
            subsets,
            disjoint,
        }
    }

    /// Every color receives the whole parent space.
    pub fn replicated(parent: IndexSpace, colors: usize) -> Self {
        let all: Vec<usize> = (0..parent.len()).collect();
        Self::from_sorted(parent, vec![all; colors])
    }

    pub fn empty(parent: IndexSpace, colors: usize) -> Self {
        Self::from_sorted(parent, vec![Vec::new(); colors])
    }

    pub fn parent(&self) -> &IndexSpace {
        &self.parent
    }

    pub fn colors(&self) -> usize {
        self.subsets.len()
    }

    pub fn subset(&self, color: usize) -> &[usize] {
        &self.subsets[color]
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn is_disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn contains(&self, color: usize, index: usize) -> bool {
        self.subsets[color].binary_search(&index).is_ok()
    }

    /// Colors whose subset contains `index`, ascending.
    pub fn colors_of(&self, index: usize) -> Vec<usize> {
        (0..self.colors())
            .filter(|&c| self.contains(c, index))
            .collect()
    }

    /// Color-wise intersection of two partitions of the same space.
    pub fn intersect(&self, other: &Partition) -> Result<Partition> {
        if self.parent != other.parent || self.colors() != other.colors() {
            return Err(Error::Shape(format!(
                "cannot intersect partitions of {} ({} colors) and {} ({} colors)",
                self.parent,
                self.colors(),
                other.parent,
                other.colors()
            )));
        }
        let subsets = self
            .subsets
            .iter()
            .zip(&other.subsets)
            .map(|(a, b)| intersect_sorted(a, b))
            .collect();
        Ok(Self::from_sorted(self.parent.clone(), subsets))
    }

    /// Reindex colors: color `c` of the result is color `map[c]` of `self`,
    /// or empty when `map[c]` is `None`.
    pub fn recolor(&self, map: &[Option<usize>]) -> Partition {
        let subsets = map
            .iter()
            .map(|m| m.map(|c| self.subsets[c].clone()).unwrap_or_default())
            .collect();
        Self::from_sorted(self.parent.clone(), subsets)
    }
}

fn compute_disjoint(n: usize, subsets: &[Vec<usize>]) -> bool {
    let total: usize = subsets.iter().map(Vec::len).sum();
    if total > n {
        return false;
    }
    let mut seen = vec![false; n];
    for s in subsets {
        for &i in s {
            if std::mem::replace(&mut seen[i], true) {
                return false;
            }
        }
    }
    true
}

pub(crate) fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Color every destination of a range-valued pointer with the colors of its
/// source: for each color `c` and each `i` in `src_part[c]`,
/// `source[i] ⊆ result[c]`, and nothing else is colored.
pub fn image(
    source: &Region<CoordRange>,
    src_part: &Partition,
    dest: &IndexSpace,
) -> Result<Partition> {
    if src_part.parent() != source.space() {
        return Err(Error::Shape(format!(
            "partition of {} applied to region over {}",
            src_part.parent(),
            source.space()
        )));
    }
    source.check_references(dest)?;
    let subsets = src_part
        .subsets()
        .iter()
        .map(|s| {
            let mut out = Vec::new();
            for &i in s {
                out.extend(source.values()[i].iter());
            }
            // Sources are usually visited in order with sorted, non-overlapping
            // ranges, so this is typically already sorted.
            if !out.windows(2).all(|w| w[0] < w[1]) {
                out.sort_unstable();
                out.dedup();
            }
            out
        })
        .collect();
    Ok(Partition::from_sorted(dest.clone(), subsets))
}

/// Color every source whose range intersects a color's destination subset.
/// A source may receive several colors.
pub fn preimage(
    source: &Region<CoordRange>,
    dest_part: &Partition,
    dest: &IndexSpace,
) -> Result<Partition> {
    if dest_part.parent() != dest {
        return Err(Error::Shape(format!(
            "destination partition is over {}, expected {}",
            dest_part.parent(),
            dest
        )));
    }
    source.check_references(dest)?;
    let subsets = dest_part
        .subsets()
        .iter()
        .map(|s| {
            source
                .values()
                .iter()
                .enumerate()
                .filter(|(_, r)| range_hits(r, s))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(Partition::from_sorted(source.space().clone(), subsets))
}

fn range_hits(r: &CoordRange, sorted: &[usize]) -> bool {
    if r.is_empty() {
        return false;
    }
    let lo = r.lo as usize;
    let k = sorted.partition_point(|&x| x < lo);
    k < sorted.len() && sorted[k] as i64 <= r.hi
}

/// Color a (possibly multi-dimensional) space by per-dimension bounds.
/// `coloring[c]` holds one range per dimension of `space`.
pub fn partition_by_bounds(space: &IndexSpace, coloring: &[Vec<CoordRange>]) -> Result<Partition> {
    let extents = space.extents();
    let mut subsets = Vec::with_capacity(coloring.len());
    for (color, bounds) in coloring.iter().enumerate() {
        if bounds.len() != extents.len() {
            return Err(Error::Shape(format!(
                "color {color} has {} bounds for a {}-dimensional space",
                bounds.len(),
                extents.len()
            )));
        }
        for (b, &n) in bounds.iter().zip(extents) {
            if !b.is_empty() && (b.lo < 0 || b.hi >= n as i64) {
                return Err(Error::Bounds(format!(
                    "bound {b} for color {color} lies outside {space}"
                )));
            }
        }
        subsets.push(box_indices(extents, bounds));
    }
    Ok(Partition::from_sorted(space.clone(), subsets))
}

/// Linear indices of the box `bounds` inside `extents`, ascending.
pub(crate) fn box_indices(extents: &[usize], bounds: &[CoordRange]) -> Vec<usize> {
    if bounds.iter().any(CoordRange::is_empty) {
        return Vec::new();
    }
    let mut out = vec![0usize];
    for (b, &n) in bounds.iter().zip(extents) {
        let mut next = Vec::with_capacity(out.len() * b.len());
        for &base in &out {
            for x in b.iter() {
                next.push(base * n + x);
            }
        }
        out = next;
    }
    out
}

/// Reinterpret a partition over another region whose space has the same extents.
pub fn copy_partition<T: RegionValue>(part: &Partition, target: &Region<T>) -> Result<Partition> {
    copy_onto(part, target.space())
}

pub(crate) fn copy_onto(part: &Partition, target: &IndexSpace) -> Result<Partition> {
    if part.parent().len() != target.len() {
        return Err(Error::Shape(format!(
            "cannot copy a partition of {} onto {}",
            part.parent(),
            target
        )));
    }
    Ok(Partition::from_sorted(target.clone(), part.subsets().to_vec()))
}

/// Image through the implicit pointer `p -> [p*fanout, p*fanout + fanout - 1]`
/// that relates a dense level to its parent positions.
pub(crate) fn affine_image(part: &Partition, fanout: usize, dest: &IndexSpace) -> Partition {
    let subsets = part
        .subsets()
        .iter()
        .map(|s| {
            s.iter()
                .flat_map(|&p| p * fanout..(p + 1) * fanout)
                .collect()
        })
        .collect();
    Partition::from_sorted(dest.clone(), subsets)
}

/// Preimage through the same implicit pointer as [`affine_image`].
pub(crate) fn affine_preimage(part: &Partition, fanout: usize, parent: &IndexSpace) -> Partition {
    let subsets = part
        .subsets()
        .iter()
        .map(|s| {
            let set: BTreeSet<usize> = s.iter().map(|&q| q / fanout.max(1)).collect();
            set.into_iter().collect()
        })
        .collect();
    Partition::from_sorted(parent.clone(), subsets)
}

/// Coordinate bounds of piece `color` when `extent` coordinates are divided
/// into `pieces` blocks of `ceil(extent / pieces)`, clamped to the extent.
pub fn block_bounds(extent: usize, pieces: usize, color: usize) -> CoordRange {
    let chunk = extent.div_ceil(pieces.max(1));
    let lo = (color * chunk).min(extent);
    let hi = ((color + 1) * chunk).min(extent);
    CoordRange::new(lo as i64, hi as i64 - 1)
}

/// Position bounds of piece `color` when `count` positions are divided into
/// `pieces` runs of `count / pieces`, the final piece absorbing the remainder.
pub fn position_bounds(count: usize, pieces: usize, color: usize) -> CoordRange {
    let pieces = pieces.max(1);
    let size = count / pieces;
    let lo = color * size;
    let hi = if color + 1 == pieces {
        count
    } else {
        (color + 1) * size
    };
    CoordRange::new(lo as i64, hi as i64 - 1)
}
