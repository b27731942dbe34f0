//! Sparse tensors stored as a coordinate tree of Dense and Compressed levels.
//!
//! Every level owns a position space. A Dense level at the top has its `dom`
//! as position space; below another level it has `parent positions x dom`.
//! A Compressed level's positions are the indices of its `crd` region and its
//! `pos` region has one entry per parent position (a single entry at the top).

use crate::error::{Error, Result};
use crate::frontend::format::{FormatSpec, LevelKind};
use crate::space::{CoordRange, IndexSpace, Region};

#[derive(Debug, Clone, PartialEq)]
pub enum LevelStorage {
    Dense { dom: IndexSpace },
    Compressed {
        pos: Region<CoordRange>,
        crd: Region<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Tensor modes stored by this level, outermost first.
    pub modes: Vec<usize>,
    pub storage: LevelStorage,
}

impl Level {
    pub fn kind(&self) -> LevelKind {
        match self.storage {
            LevelStorage::Dense { .. } => LevelKind::Dense,
            LevelStorage::Compressed { .. } => LevelKind::Compressed,
        }
    }

    /// Number of coordinates one parent position fans out to (dense only).
    pub fn fanout(&self) -> usize {
        match &self.storage {
            LevelStorage::Dense { dom } => dom.len(),
            LevelStorage::Compressed { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    dims: Vec<usize>,
    format: FormatSpec,
    levels: Vec<Level>,
    vals: Region<f64>,
}

/// Counts recorded by the two packing phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackReport {
    /// Positions per level predicted by the counting phase.
    pub counted: Vec<usize>,
    /// Positions per level written by the fill phase.
    pub filled: Vec<usize>,
}

impl SparseTensor {
    /// Build a tensor from coordinate/value pairs given in tensor mode order.
    /// Duplicate coordinates are summed.
    pub fn from_entries(
        dims: Vec<usize>,
        format: &FormatSpec,
        entries: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        Ok(Self::pack(dims, format, entries)?.0)
    }

    /// Like [`from_entries`](Self::from_entries), also returning the counts of
    /// the count phase and the fill phase.
    pub fn pack(
        dims: Vec<usize>,
        format: &FormatSpec,
        entries: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<(Self, PackReport)> {
        if format.order() != dims.len() {
            return Err(Error::Shape(format!(
                "format {format} has order {} but the tensor has {} modes",
                format.order(),
                dims.len()
            )));
        }
        let order = format.mode_order();
        let mut keyed: Vec<(Vec<usize>, f64)> = Vec::new();
        for (coords, v) in entries {
            if coords.len() != dims.len() {
                return Err(Error::Shape(format!(
                    "entry {coords:?} has {} coordinates, expected {}",
                    coords.len(),
                    dims.len()
                )));
            }
            for (m, (&x, &n)) in coords.iter().zip(&dims).enumerate() {
                if x >= n {
                    return Err(Error::Bounds(format!(
                        "coordinate {x} of mode {m} is outside dimension {n}"
                    )));
                }
            }
            keyed.push((order.iter().map(|&m| coords[m]).collect(), v));
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Vec<usize>, f64)> = Vec::with_capacity(keyed.len());
        for (k, v) in keyed {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += v,
                _ => merged.push((k, v)),
            }
        }
        pack_sorted(dims, format.clone(), &merged)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn format(&self) -> &FormatSpec {
        &self.format
    }

    pub fn mode_order(&self) -> &[usize] {
        self.format.mode_order()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn vals(&self) -> &Region<f64> {
        &self.vals
    }

    /// Number of stored values (including explicit zeros of dense levels).
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn has_compressed(&self) -> bool {
        self.levels.iter().any(|l| l.kind() == LevelKind::Compressed)
    }

    /// Level holding tensor mode `mode`, and the mode's offset inside it.
    pub fn level_of_mode(&self, mode: usize) -> (usize, usize) {
        for (l, level) in self.levels.iter().enumerate() {
            if let Some(k) = level.modes.iter().position(|&m| m == mode) {
                return (l, k);
            }
        }
        panic!("mode {mode} not stored in any level")
    }

    /// Number of positions of the level above `l` (1 for the top level).
    pub fn parent_positions(&self, l: usize) -> usize {
        if l == 0 {
            1
        } else {
            self.positions(l - 1)
        }
    }

    pub fn positions(&self, l: usize) -> usize {
        match &self.levels[l].storage {
            LevelStorage::Dense { dom } => self.parent_positions(l) * dom.len(),
            LevelStorage::Compressed { crd, .. } => crd.len(),
        }
    }

    /// Index space that level `l`'s partitions are expressed over.
    pub fn position_space(&self, l: usize) -> IndexSpace {
        match &self.levels[l].storage {
            LevelStorage::Dense { dom } if l == 0 => dom.clone(),
            LevelStorage::Dense { dom } => {
                let mut ext = vec![self.parent_positions(l)];
                ext.extend_from_slice(dom.extents());
                IndexSpace::new(ext)
            }
            LevelStorage::Compressed { crd, .. } => crd.space().clone(),
        }
    }

    /// Parent position of position `p` at level `l` (0 for the top level).
    pub fn parent_of(&self, l: usize, p: usize) -> usize {
        if l == 0 {
            return 0;
        }
        match &self.levels[l].storage {
            LevelStorage::Dense { dom } => p / dom.len().max(1),
            LevelStorage::Compressed { pos, .. } => {
                let v = pos.values();
                v.partition_point(|r| r.hi < p as i64)
                    .min(v.len().saturating_sub(1))
            }
        }
    }

    /// Coordinates (of the level's modes) stored at position `p` of level `l`.
    pub fn coords_at(&self, l: usize, p: usize) -> Vec<usize> {
        match &self.levels[l].storage {
            LevelStorage::Dense { dom } => dom.delinearize(p % dom.len().max(1)),
            LevelStorage::Compressed { crd, .. } => vec![crd.values()[p]],
        }
    }

    /// Positions visited at each level on the path to `coords`, if stored.
    pub fn locate(&self, coords: &[usize]) -> Option<Vec<usize>> {
        let mut path = Vec::with_capacity(self.levels.len());
        let mut parent = 0usize;
        for level in &self.levels {
            let local: Vec<usize> = level.modes.iter().map(|&m| coords[m]).collect();
            let p = match &level.storage {
                LevelStorage::Dense { dom } => parent * dom.len() + dom.linearize(&local)?,
                LevelStorage::Compressed { pos, crd } => {
                    let r = pos.values()[parent];
                    if r.is_empty() {
                        return None;
                    }
                    let seg = &crd.values()[r.lo as usize..=r.hi as usize];
                    r.lo as usize + seg.binary_search(&local[0]).ok()?
                }
            };
            path.push(p);
            parent = p;
        }
        Some(path)
    }

    /// All stored leaves as (coordinates in tensor mode order, value), in
    /// lexicographic storage order. Dense levels yield explicit zeros.
    pub fn iterate_leaves(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let mut out = Vec::with_capacity(self.nnz());
        let mut coords = vec![0usize; self.order()];
        self.walk(0, 0, &mut coords, &mut out);
        out.into_iter()
    }

    fn walk(&self, l: usize, parent: usize, coords: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        if l == self.levels.len() {
            out.push((coords.clone(), self.vals.values()[parent]));
            return;
        }
        let level = &self.levels[l];
        match &level.storage {
            LevelStorage::Dense { dom } => {
                for t in 0..dom.len() {
                    for (&m, x) in level.modes.iter().zip(dom.delinearize(t)) {
                        coords[m] = x;
                    }
                    self.walk(l + 1, parent * dom.len() + t, coords, out);
                }
            }
            LevelStorage::Compressed { pos, crd } => {
                for p in pos.values()[parent].iter() {
                    coords[level.modes[0]] = crd.values()[p];
                    self.walk(l + 1, p, coords, out);
                }
            }
        }
    }

    /// Assemble a tensor from existing levels and values, checking the
    /// structural invariants.
    pub fn from_parts(dims: Vec<usize>, format: FormatSpec, levels: Vec<Level>, vals: Vec<f64>) -> Result<Self> {
        let t = SparseTensor {
            dims,
            format,
            levels,
            vals: Region::from_vec(vals),
        };
        t.check_invariants()?;
        Ok(t)
    }

    /// Check the structural invariants of every level.
    pub fn check_invariants(&self) -> Result<()> {
        for (l, level) in self.levels.iter().enumerate() {
            match &level.storage {
                LevelStorage::Dense { dom } => {
                    let expect: Vec<usize> = level.modes.iter().map(|&m| self.dims[m]).collect();
                    if dom.extents() != expect.as_slice() {
                        return Err(Error::Internal(format!(
                            "level {l} dom {dom} does not match dimensions {expect:?}"
                        )));
                    }
                }
                LevelStorage::Compressed { pos, crd } => {
                    if pos.len() != self.parent_positions(l) {
                        return Err(Error::Internal(format!(
                            "level {l} pos has {} entries for {} parent positions",
                            pos.len(),
                            self.parent_positions(l)
                        )));
                    }
                    let mut next = 0i64;
                    for r in pos.values() {
                        if r.is_empty() {
                            continue;
                        }
                        if r.lo != next {
                            return Err(Error::Internal(format!(
                                "level {l} pos range {r} does not start at {next}"
                            )));
                        }
                        let seg = &crd.values()[r.lo as usize..=r.hi as usize];
                        if seg.windows(2).any(|w| w[0] >= w[1]) {
                            return Err(Error::Internal(format!(
                                "level {l} crd not strictly increasing in {r}"
                            )));
                        }
                        if seg.iter().any(|&c| c >= self.dims[level.modes[0]]) {
                            return Err(Error::Internal(format!("level {l} crd out of range in {r}")));
                        }
                        next = r.hi + 1;
                    }
                    if next as usize != crd.len() {
                        return Err(Error::Internal(format!(
                            "level {l} pos covers {next} of {} crd entries",
                            crd.len()
                        )));
                    }
                }
            }
        }
        let leaf = if self.levels.is_empty() { 1 } else { self.positions(self.levels.len() - 1) };
        if self.vals.len() != leaf {
            return Err(Error::Internal(format!(
                "vals has {} entries for {leaf} leaf positions",
                self.vals.len()
            )));
        }
        Ok(())
    }
}

/// Entries grouped under one position: a half-open range of the sorted list.
type Segment = (usize, usize);

fn split_level(
    keys: &[(Vec<usize>, f64)],
    kind: LevelKind,
    storage: &[usize],
    extents: &[usize],
    segments: &[Segment],
    mut on_parent: impl FnMut(usize, &[(usize, Segment)]),
) -> Vec<Segment> {
    let dom = IndexSpace::new(extents.to_vec());
    let mut children = Vec::new();
    for (parent, &(a, b)) in segments.iter().enumerate() {
        let mut local: Vec<(usize, Segment)> = Vec::new();
        match kind {
            LevelKind::Dense => {
                let mut e = a;
                for t in 0..dom.len() {
                    let start = e;
                    while e < b {
                        let point: Vec<usize> = storage.iter().map(|&s| keys[e].0[s]).collect();
                        if dom.linearize(&point) != Some(t) {
                            break;
                        }
                        e += 1;
                    }
                    local.push((t, (start, e)));
                }
            }
            LevelKind::Compressed => {
                let s = storage[0];
                let mut e = a;
                while e < b {
                    let c = keys[e].0[s];
                    let start = e;
                    while e < b && keys[e].0[s] == c {
                        e += 1;
                    }
                    local.push((c, (start, e)));
                }
            }
        }
        on_parent(parent, &local);
        children.extend(local.into_iter().map(|(_, seg)| seg));
    }
    children
}

/// Two-phase packing of sorted, duplicate-free entries keyed in storage order.
fn pack_sorted(
    dims: Vec<usize>,
    format: FormatSpec,
    keys: &[(Vec<usize>, f64)],
) -> Result<(SparseTensor, PackReport)> {
    let groups = format.level_groups();
    let order = format.mode_order().to_vec();
    let extents_of = |storage: &[usize]| -> Vec<usize> { storage.iter().map(|&s| dims[order[s]]).collect() };

    // Phase 1: count positions per level.
    let mut counted = Vec::with_capacity(groups.len());
    let mut segments: Vec<Segment> = vec![(0, keys.len())];
    for (kind, storage) in &groups {
        segments = split_level(keys, *kind, storage, &extents_of(storage), &segments, |_, _| {});
        counted.push(segments.len());
    }

    // Phase 2: allocate exactly and fill.
    let mut levels = Vec::with_capacity(groups.len());
    let mut filled = Vec::with_capacity(groups.len());
    segments = vec![(0, keys.len())];
    for (l, (kind, storage)) in groups.iter().enumerate() {
        let extents = extents_of(storage);
        let modes: Vec<usize> = storage.iter().map(|&s| order[s]).collect();
        match kind {
            LevelKind::Dense => {
                segments = split_level(keys, *kind, storage, &extents, &segments, |_, _| {});
                levels.push(Level {
                    modes,
                    storage: LevelStorage::Dense { dom: IndexSpace::new(extents) },
                });
            }
            LevelKind::Compressed => {
                let mut pos = Vec::with_capacity(segments.len());
                let mut crd = Vec::with_capacity(counted[l]);
                segments = split_level(keys, *kind, storage, &extents, &segments, |_, local| {
                    let lo = crd.len() as i64;
                    crd.extend(local.iter().map(|&(c, _)| c));
                    pos.push(CoordRange::new(lo, crd.len() as i64 - 1));
                });
                if crd.len() != counted[l] {
                    return Err(Error::Internal(format!(
                        "fill phase wrote {} coordinates at level {l}, count phase sized {}",
                        crd.len(),
                        counted[l]
                    )));
                }
                levels.push(Level {
                    modes,
                    storage: LevelStorage::Compressed {
                        pos: Region::from_vec(pos),
                        crd: Region::from_vec(crd),
                    },
                });
            }
        }
        filled.push(segments.len());
    }
    let vals: Vec<f64> = segments
        .iter()
        .map(|&(a, b)| if b > a { keys[a].1 } else { 0.0 })
        .collect();
    let tensor = SparseTensor {
        dims,
        format,
        levels,
        vals: Region::from_vec(vals),
    };
    Ok((tensor, PackReport { counted, filled }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csr_example(format: &FormatSpec) -> SparseTensor {
        let entries = vec![
            (vec![0, 0], 1.0),
            (vec![0, 1], 2.0),
            (vec![1, 1], 3.0),
            (vec![2, 2], 4.0),
        ];
        SparseTensor::from_entries(vec![3, 3], format, entries).unwrap()
    }

    fn pos_crd(t: &SparseTensor, l: usize) -> (Vec<(i64, i64)>, Vec<usize>) {
        match &t.level(l).storage {
            LevelStorage::Compressed { pos, crd } => (
                pos.values().iter().map(|r| (r.lo, r.hi)).collect(),
                crd.values().to_vec(),
            ),
            _ => panic!("not compressed"),
        }
    }

    #[test]
    fn csr_packing() {
        let t = csr_example(&FormatSpec::csr());
        let (pos, crd) = pos_crd(&t, 1);
        assert_eq!(pos, vec![(0, 1), (2, 2), (3, 3)]);
        assert_eq!(crd, vec![0, 1, 1, 2]);
        assert_eq!(t.vals().values(), &[1.0, 2.0, 3.0, 4.0]);
        t.check_invariants().unwrap();
    }

    #[test]
    fn csc_packing() {
        let t = csr_example(&FormatSpec::csc());
        let (pos, crd) = pos_crd(&t, 1);
        assert_eq!(pos, vec![(0, 0), (1, 2), (3, 3)]);
        assert_eq!(crd, vec![0, 0, 1, 2]);
        assert_eq!(t.vals().values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_tensor_has_empty_ranges() {
        let t = SparseTensor::from_entries(vec![3, 3], &FormatSpec::csr(), vec![]).unwrap();
        let (pos, crd) = pos_crd(&t, 1);
        assert!(pos.iter().all(|&(lo, hi)| lo > hi));
        assert!(crd.is_empty());
        assert_eq!(t.nnz(), 0);
        t.check_invariants().unwrap();
    }

    #[test]
    fn duplicates_are_summed() {
        let t = SparseTensor::from_entries(
            vec![2, 2],
            &FormatSpec::csr(),
            vec![(vec![1, 0], 1.5), (vec![1, 0], 2.0)],
        )
        .unwrap();
        assert_eq!(t.iterate_leaves().collect::<Vec<_>>(), vec![(vec![1, 0], 3.5)]);
    }

    #[test]
    fn leaves_in_lexicographic_order() {
        let t = csr_example(&FormatSpec::csr());
        let leaves: Vec<_> = t.iterate_leaves().collect();
        assert_eq!(
            leaves,
            vec![
                (vec![0, 0], 1.0),
                (vec![0, 1], 2.0),
                (vec![1, 1], 3.0),
                (vec![2, 2], 4.0)
            ]
        );
    }

    #[test]
    fn dense_levels_yield_explicit_zeros() {
        let t = SparseTensor::from_entries(vec![2, 2], &FormatSpec::dense(2), vec![(vec![0, 1], 5.0)]).unwrap();
        assert_eq!(t.levels().len(), 1);
        let leaves: Vec<_> = t.iterate_leaves().collect();
        assert_eq!(leaves.len(), 4);
        assert_eq!(leaves[1], (vec![0, 1], 5.0));
        assert_eq!(leaves[0].1, 0.0);
    }

    #[test]
    fn nested_dense_below_compressed() {
        let f: FormatSpec = "sd".parse().unwrap();
        let t = SparseTensor::from_entries(vec![3, 2], &f, vec![(vec![2, 1], 7.0)]).unwrap();
        assert_eq!(t.positions(1), 2);
        assert_eq!(t.position_space(1).extents(), &[1, 2]);
        assert_eq!(t.vals().values(), &[0.0, 7.0]);
        assert_eq!(t.locate(&[2, 1]), Some(vec![0, 1]));
        assert_eq!(t.locate(&[1, 1]), None);
        t.check_invariants().unwrap();
    }

    #[test]
    fn out_of_bounds_coordinates_are_rejected() {
        let r = SparseTensor::from_entries(vec![2, 2], &FormatSpec::csr(), vec![(vec![2, 0], 1.0)]);
        assert!(matches!(r, Err(Error::Bounds(_))));
    }

    #[test]
    fn parents_and_paths() {
        let t = csr_example(&FormatSpec::csr());
        assert_eq!((0..4).map(|p| t.parent_of(1, p)).collect::<Vec<_>>(), vec![0, 0, 1, 2]);
        assert_eq!(t.locate(&[1, 1]), Some(vec![1, 2]));
        assert_eq!(t.coords_at(1, 2), vec![1]);
    }

    #[test]
    fn pack_report_counts_match() {
        let f: FormatSpec = "sss".parse().unwrap();
        let entries = vec![(vec![0, 1, 2], 1.0), (vec![0, 1, 3], 1.0), (vec![2, 0, 0], 1.0)];
        let (t, report) = SparseTensor::pack(vec![3, 2, 4], &f, entries).unwrap();
        assert_eq!(report.counted, vec![2, 2, 3]);
        assert_eq!(report.counted, report.filled);
        t.check_invariants().unwrap();
    }
}
