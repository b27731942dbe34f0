//! Level functions: partitioning one level of a coordinate tree at a time.
//!
//! Every function works in terms of position spaces, so callers never
//! inspect storage kinds. A partition handed *up* is over the parent level's
//! positions; a partition handed *down* is over this level's positions.

use crate::error::{Error, Result};
use crate::partition::{self, copy_onto, Partition};
use crate::space::{CoordRange, IndexSpace, ValueKind};
use crate::tensor::{LevelStorage, SparseTensor};

#[derive(Debug, Clone, PartialEq)]
pub enum LevelPartition {
    Dense { positions: Partition },
    Compressed { pos: Partition, crd: Partition },
}

impl LevelPartition {
    /// Partition of this level's positions.
    pub fn down(&self) -> &Partition {
        match self {
            LevelPartition::Dense { positions } => positions,
            LevelPartition::Compressed { crd, .. } => crd,
        }
    }

    fn intersect(&self, other: &LevelPartition) -> Result<LevelPartition> {
        Ok(match (self, other) {
            (LevelPartition::Dense { positions: a }, LevelPartition::Dense { positions: b }) => {
                LevelPartition::Dense { positions: a.intersect(b)? }
            }
            (LevelPartition::Compressed { pos: p1, crd: c1 }, LevelPartition::Compressed { pos: p2, crd: c2 }) => {
                LevelPartition::Compressed {
                    pos: p1.intersect(p2)?,
                    crd: c1.intersect(c2)?,
                }
            }
            _ => return Err(Error::Internal("intersecting partitions of different level kinds".into())),
        })
    }
}

/// What a level function produces.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    /// Partition of the parent level's positions.
    pub up: Partition,
    /// Partition of this level's positions.
    pub down: Partition,
    /// The partitions of this level's own regions.
    pub level: LevelPartition,
}

/// Partitions of every region of one tensor, one color per worker.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPartitionBundle {
    pub levels: Vec<LevelPartition>,
    pub vals: Partition,
}

/// A named region of a tensor as it appears in bundles and ledgers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionRef<'a> {
    pub level: Option<usize>,
    pub role: &'static str,
    pub kind: ValueKind,
    pub partition: &'a Partition,
}

impl RegionRef<'_> {
    /// `B[1].pos`, `B[0].dom`, `B.vals`.
    pub fn name(&self, tensor: &str) -> String {
        match self.level {
            Some(l) => format!("{tensor}[{l}].{}", self.role),
            None => format!("{tensor}.{}", self.role),
        }
    }
}

impl TensorPartitionBundle {
    /// Every color owns everything when `active[color]`, nothing otherwise.
    pub fn replicated(tensor: &SparseTensor, active: &[bool]) -> Self {
        let full = |space: IndexSpace| {
            let all: Vec<usize> = (0..space.len()).collect();
            let subsets = active.iter().map(|&a| if a { all.clone() } else { Vec::new() }).collect();
            Partition::from_sorted(space, subsets)
        };
        let levels = (0..tensor.levels().len())
            .map(|l| match &tensor.level(l).storage {
                LevelStorage::Dense { .. } => LevelPartition::Dense { positions: full(tensor.position_space(l)) },
                LevelStorage::Compressed { pos, crd } => LevelPartition::Compressed {
                    pos: full(pos.space().clone()),
                    crd: full(crd.space().clone()),
                },
            })
            .collect();
        TensorPartitionBundle {
            levels,
            vals: full(tensor.vals().space().clone()),
        }
    }

    pub fn colors(&self) -> usize {
        self.vals.colors()
    }

    /// Color `c` of the result is color `map[c]` of `self` (empty for `None`).
    pub fn recolor(&self, map: &[Option<usize>]) -> TensorPartitionBundle {
        TensorPartitionBundle {
            levels: self
                .levels
                .iter()
                .map(|lp| match lp {
                    LevelPartition::Dense { positions } => LevelPartition::Dense { positions: positions.recolor(map) },
                    LevelPartition::Compressed { pos, crd } => LevelPartition::Compressed {
                        pos: pos.recolor(map),
                        crd: crd.recolor(map),
                    },
                })
                .collect(),
            vals: self.vals.recolor(map),
        }
    }

    pub fn intersect(&self, other: &TensorPartitionBundle) -> Result<TensorPartitionBundle> {
        Ok(TensorPartitionBundle {
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.intersect(b))
                .collect::<Result<_>>()?,
            vals: self.vals.intersect(&other.vals)?,
        })
    }

    /// Regions in storage order followed by the values.
    pub fn regions(&self) -> Vec<RegionRef<'_>> {
        let mut out = Vec::new();
        for (l, lp) in self.levels.iter().enumerate() {
            match lp {
                LevelPartition::Dense { positions } => out.push(RegionRef {
                    level: Some(l),
                    role: "dom",
                    kind: ValueKind::None,
                    partition: positions,
                }),
                LevelPartition::Compressed { pos, crd } => {
                    out.push(RegionRef { level: Some(l), role: "pos", kind: ValueKind::Range, partition: pos });
                    out.push(RegionRef { level: Some(l), role: "crd", kind: ValueKind::Coordinate, partition: crd });
                }
            }
        }
        out.push(RegionRef { level: None, role: "vals", kind: ValueKind::Scalar, partition: &self.vals });
        out
    }

    /// First region index on a root-to-leaf `path` (one position per level)
    /// that color `color` does not own, as (region name suffix, index).
    pub fn missing_on_path(&self, color: usize, path: &[usize]) -> Option<(String, usize)> {
        let mut parent = 0usize;
        for (l, (lp, &p)) in self.levels.iter().zip(path).enumerate() {
            match lp {
                LevelPartition::Dense { positions } => {
                    if !positions.contains(color, p) {
                        return Some((format!("[{l}].dom"), p));
                    }
                }
                LevelPartition::Compressed { pos, crd } => {
                    if !pos.contains(color, parent) {
                        return Some((format!("[{l}].pos"), parent));
                    }
                    if !crd.contains(color, p) {
                        return Some((format!("[{l}].crd"), p));
                    }
                }
            }
            parent = p;
        }
        let leaf = path.last().copied().unwrap_or(0);
        (!self.vals.contains(color, leaf)).then(|| (".vals".to_string(), leaf))
    }
}

fn parent_space(tensor: &SparseTensor, l: usize) -> IndexSpace {
    if l == 0 {
        IndexSpace::linear(1)
    } else {
        tensor.position_space(l - 1)
    }
}

fn dense_up(tensor: &SparseTensor, l: usize, down: &Partition) -> Partition {
    if l == 0 {
        down.clone()
    } else {
        partition::affine_preimage(down, tensor.level(l).fanout(), &parent_space(tensor, l))
    }
}

fn compressed_from_crd(tensor: &SparseTensor, l: usize, crd_part: Partition) -> Result<LevelResult> {
    let LevelStorage::Compressed { pos, crd } = &tensor.level(l).storage else {
        return Err(Error::Internal(format!("level {l} is not compressed")));
    };
    let pos_part = partition::preimage(pos, &crd_part, crd.space())?;
    let up = copy_onto(&pos_part, &parent_space(tensor, l))?;
    Ok(LevelResult {
        up,
        down: crd_part.clone(),
        level: LevelPartition::Compressed { pos: pos_part, crd: crd_part },
    })
}

fn check_range(r: &CoordRange, n: usize, what: &str) -> Result<()> {
    if !r.is_empty() && (r.lo < 0 || r.hi >= n as i64) {
        return Err(Error::Bounds(format!("{what} {r} outside [0, {n})")));
    }
    Ok(())
}

/// Collects universe entries (coordinate bounds per color) for one level.
#[derive(Debug)]
pub struct UniverseBuilder<'a> {
    tensor: &'a SparseTensor,
    level: usize,
    entries: Vec<Option<Vec<CoordRange>>>,
    aliased: bool,
}

/// Start a universe partition of `level` with `colors` colors.
pub fn init_universe_partition(tensor: &SparseTensor, level: usize, colors: usize) -> UniverseBuilder<'_> {
    UniverseBuilder {
        tensor,
        level,
        entries: vec![None; colors],
        aliased: false,
    }
}

impl UniverseBuilder<'_> {
    /// Allow entries to overlap and leave parts of the universe uncovered.
    /// Used for bounds projected from another tensor's partition.
    pub fn aliased(mut self) -> Self {
        self.aliased = true;
        self
    }

    /// Color the coordinates inside `bounds` (one range per mode of the
    /// level) with `color`.
    pub fn create_entry(&mut self, color: usize, bounds: &[CoordRange]) -> Result<()> {
        let level = self.tensor.level(self.level);
        if bounds.len() != level.modes.len() {
            return Err(Error::Shape(format!(
                "level {} stores {} modes, got {} bounds",
                self.level,
                level.modes.len(),
                bounds.len()
            )));
        }
        for (b, &m) in bounds.iter().zip(&level.modes) {
            check_range(b, self.tensor.dims()[m], "universe bound")?;
        }
        let slot = self
            .entries
            .get_mut(color)
            .ok_or_else(|| Error::Bounds(format!("color {color} out of range")))?;
        if slot.is_some() {
            return Err(Error::validation(format!("color {color} given two universe entries")));
        }
        *slot = Some(bounds.to_vec());
        Ok(())
    }

    pub fn finalize(self) -> Result<LevelResult> {
        let tensor = self.tensor;
        let l = self.level;
        let level = tensor.level(l);
        let boxes: Vec<Vec<CoordRange>> = self
            .entries
            .iter()
            .map(|e| e.clone().unwrap_or_else(|| vec![CoordRange::empty_at(0); level.modes.len()]))
            .collect();
        if !self.aliased {
            let volume = |b: &Vec<CoordRange>| b.iter().map(CoordRange::len).product::<usize>();
            for (a, ba) in boxes.iter().enumerate() {
                for bb in &boxes[..a] {
                    if volume(ba) > 0 && volume(bb) > 0 && ba.iter().zip(bb).all(|(x, y)| x.overlaps(y)) {
                        return Err(Error::validation(format!("overlapping universe entries at level {l}")));
                    }
                }
            }
            let universe: usize = level.modes.iter().map(|&m| tensor.dims()[m]).product();
            let covered: usize = boxes.iter().map(volume).sum();
            if covered != universe {
                return Err(Error::validation(format!(
                    "universe entries at level {l} cover {covered} of {universe} coordinates"
                )));
            }
        }
        match &level.storage {
            LevelStorage::Dense { .. } => {
                let space = tensor.position_space(l);
                let coloring: Vec<Vec<CoordRange>> = boxes
                    .into_iter()
                    .map(|b| {
                        if l == 0 {
                            b
                        } else {
                            std::iter::once(CoordRange::full(tensor.parent_positions(l))).chain(b).collect()
                        }
                    })
                    .collect();
                let down = partition::partition_by_bounds(&space, &coloring)?;
                Ok(LevelResult {
                    up: dense_up(tensor, l, &down),
                    down: down.clone(),
                    level: LevelPartition::Dense { positions: down },
                })
            }
            LevelStorage::Compressed { crd, .. } => {
                let subsets = boxes
                    .iter()
                    .map(|b| {
                        let r = b[0];
                        crd.values()
                            .iter()
                            .enumerate()
                            .filter(|(_, &c)| r.contains(c))
                            .map(|(p, _)| p)
                            .collect()
                    })
                    .collect();
                let crd_part = Partition::from_sorted(crd.space().clone(), subsets);
                compressed_from_crd(tensor, l, crd_part)
            }
        }
    }
}

/// Collects non-zero entries (position bounds per color) for one level.
#[derive(Debug)]
pub struct NonZeroBuilder<'a> {
    tensor: &'a SparseTensor,
    level: usize,
    entries: Vec<Option<CoordRange>>,
}

/// Start a non-zero partition of `level` with `colors` colors.
pub fn init_nonzero_partition(tensor: &SparseTensor, level: usize, colors: usize) -> NonZeroBuilder<'_> {
    NonZeroBuilder {
        tensor,
        level,
        entries: vec![None; colors],
    }
}

impl NonZeroBuilder<'_> {
    pub fn create_entry(&mut self, color: usize, positions: CoordRange) -> Result<()> {
        check_range(&positions, self.tensor.positions(self.level), "position bound")?;
        let slot = self
            .entries
            .get_mut(color)
            .ok_or_else(|| Error::Bounds(format!("color {color} out of range")))?;
        if slot.is_some() {
            return Err(Error::validation(format!("color {color} given two non-zero entries")));
        }
        *slot = Some(positions);
        Ok(())
    }

    pub fn finalize(self) -> Result<LevelResult> {
        let tensor = self.tensor;
        let l = self.level;
        let ranges: Vec<CoordRange> = self
            .entries
            .iter()
            .map(|e| e.unwrap_or(CoordRange::empty_at(0)))
            .collect();
        let mut sorted: Vec<&CoordRange> = ranges.iter().filter(|r| !r.is_empty()).collect();
        sorted.sort_by_key(|r| r.lo);
        let mut next = 0i64;
        for r in sorted {
            if r.lo < next {
                return Err(Error::validation(format!("overlapping non-zero entries at level {l}")));
            }
            if r.lo > next {
                break;
            }
            next = r.hi + 1;
        }
        if next as usize != tensor.positions(l) {
            return Err(Error::validation(format!(
                "non-zero entries at level {l} do not tile its {} positions",
                tensor.positions(l)
            )));
        }
        let space = tensor.position_space(l);
        let subsets: Vec<Vec<usize>> = ranges.iter().map(|r| r.iter().collect()).collect();
        let down = Partition::from_sorted(space, subsets);
        match tensor.level(l).storage {
            LevelStorage::Dense { .. } => Ok(LevelResult {
                up: dense_up(tensor, l, &down),
                down: down.clone(),
                level: LevelPartition::Dense { positions: down },
            }),
            LevelStorage::Compressed { .. } => compressed_from_crd(tensor, l, down),
        }
    }
}

/// Partition level `l` from a partition of its parent's positions.
pub fn partition_from_parent(tensor: &SparseTensor, l: usize, parent: &Partition) -> Result<LevelResult> {
    match &tensor.level(l).storage {
        LevelStorage::Dense { dom } => {
            let down = partition::affine_image(parent, dom.len(), &tensor.position_space(l));
            Ok(LevelResult {
                up: parent.clone(),
                down: down.clone(),
                level: LevelPartition::Dense { positions: down },
            })
        }
        LevelStorage::Compressed { pos, crd } => {
            let pos_part = copy_onto(parent, pos.space())?;
            let crd_part = partition::image(pos, &pos_part, crd.space())?;
            Ok(LevelResult {
                up: parent.clone(),
                down: crd_part.clone(),
                level: LevelPartition::Compressed { pos: pos_part, crd: crd_part },
            })
        }
    }
}

/// Partition level `l` from a partition of its own positions handed up by
/// the level below; returns the partition to hand further up.
pub fn partition_from_child(tensor: &SparseTensor, l: usize, child: &Partition) -> Result<LevelResult> {
    match &tensor.level(l).storage {
        LevelStorage::Dense { .. } => {
            let down = copy_onto(child, &tensor.position_space(l))?;
            Ok(LevelResult {
                up: dense_up(tensor, l, &down),
                down: down.clone(),
                level: LevelPartition::Dense { positions: down },
            })
        }
        LevelStorage::Compressed { crd, .. } => {
            let crd_part = copy_onto(child, crd.space())?;
            compressed_from_crd(tensor, l, crd_part)
        }
    }
}

/// Complete a bundle from the result of a level function run at `seed`:
/// derive levels above from the child side and levels below from the parent
/// side; the values follow the leaf level's positions.
pub fn derive_bundle(tensor: &SparseTensor, seed: usize, result: LevelResult) -> Result<TensorPartitionBundle> {
    let n = tensor.levels().len();
    let mut levels: Vec<Option<LevelPartition>> = vec![None; n];
    let mut up = result.up;
    let mut down = result.down;
    levels[seed] = Some(result.level);
    for l in (0..seed).rev() {
        let r = partition_from_child(tensor, l, &up)?;
        up = r.up;
        levels[l] = Some(r.level);
    }
    for (l, slot) in levels.iter_mut().enumerate().skip(seed + 1) {
        let r = partition_from_parent(tensor, l, &down)?;
        down = r.down;
        *slot = Some(r.level);
    }
    let vals = copy_onto(&down, tensor.vals().space())?;
    Ok(TensorPartitionBundle {
        levels: levels.into_iter().map(|l| l.expect("every level derived")).collect(),
        vals,
    })
}
