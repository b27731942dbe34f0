//! Planner: turns a validated loop nest into per-tensor partition recipes,
//! per-worker iteration spaces and a small plan IR.
//!
//! Distributed loops are classified by what they divide. Coordinate-value
//! loops seed universe partitions on every tensor indexed by the divided
//! variable. A coordinate-position loop seeds a non-zero partition on the
//! strip-mined tensor and projects its coordinate bounds onto the others.

mod render;

use std::collections::BTreeMap;

use log::debug;

use crate::error::{Error, Result};
use crate::frontend::schedule::{derive, position_level, validate_schedule};
use crate::frontend::{
    Access, Derivation, Directive, Factor, FormatSpec, LevelKind, LoopNest, MachineGrid, Schedule, TdnStatement,
    TinStatement,
};
use crate::level::{derive_bundle, init_nonzero_partition, init_universe_partition, TensorPartitionBundle};
use crate::partition::{block_bounds, position_bounds};
use crate::space::CoordRange;
use crate::tensor::SparseTensor;

pub use render::render_plan;

/// What a distributed loop divides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IterationClass {
    /// The coordinate range of an original index variable.
    CoordinateValue { original: String },
    /// The non-zero positions of `tensor` over the fused `originals`.
    CoordinatePosition { tensor: String, originals: Vec<String> },
}

/// Classify the distributed loop `var`.
pub fn classify_iteration(nest: &LoopNest, var: &str) -> Result<IterationClass> {
    let info = nest
        .vars
        .get(var)
        .ok_or_else(|| Error::validation(format!("unknown index variable {var}")))?;
    match &info.derivation {
        Derivation::Divide { parent, outer: true, .. } => Ok(IterationClass::CoordinateValue { original: parent.clone() }),
        Derivation::PosDivide { tensor, outer: true, .. } => Ok(IterationClass::CoordinatePosition {
            tensor: tensor.clone(),
            originals: info.originals.clone(),
        }),
        _ => Err(Error::validation(format!("{var} is not the outer variable of a division"))),
    }
}

/// Initial bounds for one level function, one entry per sub-color.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedBounds {
    /// Coordinate bounds of tensor mode `mode`; other modes of the level
    /// are unconstrained.
    Universe { mode: usize, ranges: Vec<CoordRange>, aliased: bool },
    /// Position bounds of the level holding tensor mode `mode`.
    NonZero { mode: usize, ranges: Vec<CoordRange> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedOrigin {
    Divide,
    Position,
    Projected { from: String },
}

/// One partition seed of a tensor: a level function over sub-colors, and
/// the map from worker colors to sub-colors.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    /// Distributed loop that induced the seed.
    pub var: String,
    pub bounds: SeedBounds,
    pub origin: SeedOrigin,
    pub color_map: Vec<Option<usize>>,
}

impl Seed {
    pub fn mode(&self) -> usize {
        match &self.bounds {
            SeedBounds::Universe { mode, .. } | SeedBounds::NonZero { mode, .. } => *mode,
        }
    }

    /// Bounds of worker `color`, `None` when the color owns nothing.
    pub fn range(&self, color: usize) -> Option<CoordRange> {
        let sub = self.color_map[color]?;
        Some(match &self.bounds {
            SeedBounds::Universe { ranges, .. } | SeedBounds::NonZero { ranges, .. } => ranges[sub],
        })
    }

    fn derive(&self, tensor: &SparseTensor) -> Result<TensorPartitionBundle> {
        let bundle = match &self.bounds {
            SeedBounds::Universe { mode, ranges, aliased } => {
                let (l, k) = tensor.level_of_mode(*mode);
                let level = tensor.level(l);
                let mut builder = init_universe_partition(tensor, l, ranges.len());
                if *aliased {
                    builder = builder.aliased();
                }
                for (c, r) in ranges.iter().enumerate() {
                    let mut bounds: Vec<CoordRange> =
                        level.modes.iter().map(|&m| CoordRange::full(tensor.dims()[m])).collect();
                    bounds[k] = *r;
                    builder.create_entry(c, &bounds)?;
                }
                derive_bundle(tensor, l, builder.finalize()?)?
            }
            SeedBounds::NonZero { mode, ranges } => {
                let (l, _) = tensor.level_of_mode(*mode);
                let mut builder = init_nonzero_partition(tensor, l, ranges.len());
                for (c, r) in ranges.iter().enumerate() {
                    builder.create_entry(c, *r)?;
                }
                derive_bundle(tensor, l, builder.finalize()?)?
            }
        };
        Ok(bundle.recolor(&self.color_map))
    }
}

/// How to partition one tensor: the intersection of its seeds, or
/// replication over the active colors when it has none.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleRecipe {
    pub seeds: Vec<Seed>,
    pub active: Vec<bool>,
}

impl BundleRecipe {
    pub fn is_replicated(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn derive(&self, tensor: &SparseTensor) -> Result<TensorPartitionBundle> {
        let mut bundle: Option<TensorPartitionBundle> = None;
        for seed in &self.seeds {
            let b = seed.derive(tensor)?;
            bundle = Some(match bundle {
                None => b,
                Some(prev) => prev.intersect(&b)?,
            });
        }
        Ok(bundle.unwrap_or_else(|| TensorPartitionBundle::replicated(tensor, &self.active)))
    }
}

/// Loop bounds of one worker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationSpace {
    pub active: bool,
    /// Coordinate bounds of original variables; unlisted variables are
    /// unconstrained.
    pub bounds: BTreeMap<String, CoordRange>,
    /// Position ranges of the strip-mined tensor's levels, outermost first.
    pub positions: Option<(String, Vec<CoordRange>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelFunction {
    InitUniverse { aliased: bool },
    InitNonZero,
    FromParent,
    FromChild,
    CopyVals,
    Intersect,
    Replicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionStep {
    pub tensor: String,
    pub level: Option<usize>,
    pub func: LevelFunction,
    /// Distributed loop the step belongs to.
    pub var: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanNode {
    Partition(PartitionStep),
    DistributedLoop { var: String, grid_dim: String, pieces: usize },
    Communicate { tensors: Vec<String>, at: String },
    Leaf,
    ReduceCombine { tensor: String },
}

/// A fully planned statement.
#[derive(Debug, Clone)]
pub struct Plan {
    pub stmt: TinStatement,
    pub nest: LoopNest,
    pub machine: MachineGrid,
    pub formats: BTreeMap<String, FormatSpec>,
    /// Dimensions of every tensor, the output included.
    pub dims: BTreeMap<String, Vec<usize>>,
    pub extents: BTreeMap<String, usize>,
    pub classes: Vec<IterationClass>,
    pub active: Vec<bool>,
    pub spaces: Vec<IterationSpace>,
    pub recipes: BTreeMap<String, BundleRecipe>,
    /// Partitions of the input tensors.
    pub bundles: BTreeMap<String, TensorPartitionBundle>,
    pub reduce: bool,
    pub nodes: Vec<PlanNode>,
}

impl Plan {
    pub fn workers(&self) -> usize {
        self.machine.workers()
    }

    pub fn output(&self) -> &str {
        self.stmt.output()
    }

    pub fn is_distributed(&self) -> bool {
        !self.nest.distributed.is_empty()
    }
}

/// Plan `stmt` under `schedule` for the given input tensors.
pub fn plan(
    stmt: &TinStatement,
    schedule: &Schedule,
    formats: &BTreeMap<String, FormatSpec>,
    machine: &MachineGrid,
    tensors: &BTreeMap<String, SparseTensor>,
) -> Result<Plan> {
    let nest = validate_schedule(stmt, schedule, formats, machine)?;
    build(stmt, nest, formats, machine, tensors, false)
}

/// Build the placement plan of a tensor distribution statement: the
/// identity statement over `tensor`, scheduled so that its input bundle is
/// the distribution the statement describes.
pub fn lower_tdn(tdn: &TdnStatement, tensor: &SparseTensor, machine: &MachineGrid) -> Result<Plan> {
    let format = tensor.format();
    let placements = tdn.validate(format, machine)?;
    let vars = tdn.dims.clone();
    let stmt = TinStatement::identity(&tdn.tensor, vars.clone());
    let mut directives = Vec::new();
    let storage: Vec<String> = format.mode_order().iter().map(|&m| vars[m].clone()).collect();
    if storage != vars {
        directives.push(Directive::Reorder(storage));
    }
    for f in &tdn.fusions {
        let mut current = f.members[0].clone();
        for (k, m) in f.members.iter().enumerate().skip(1) {
            let fused = if k + 1 == f.members.len() {
                f.name.clone()
            } else {
                format!("{}_{k}", f.name)
            };
            directives.push(Directive::Fuse { first: current, second: m.clone(), fused: fused.clone() });
            current = fused;
        }
    }
    let mut distribute = Vec::new();
    let mut outers = Vec::new();
    for p in &placements {
        let dim = machine.dims()[p.grid_dim].0.clone();
        let factor = Factor::Grid { machine: tdn.machine.clone(), dim: dim.clone() };
        let outer = format!("{}o", p.name);
        let inner = format!("{}i", p.name);
        if p.nonzero {
            directives.push(Directive::PosDivide {
                var: p.name.clone(),
                outer: outer.clone(),
                inner,
                tensor: tdn.tensor.clone(),
                factor,
            });
        } else if p.members.len() > 1 {
            return Err(Error::Unsupported(format!(
                "distribution of {}: coordinate partitions of the fused name {} are not supported (use ~{})",
                tdn.tensor, p.name, p.name
            )));
        } else {
            directives.push(Directive::Divide { var: p.name.clone(), outer: outer.clone(), inner, factor });
        }
        distribute.push(Directive::Distribute { var: outer.clone(), dim: Some((tdn.machine.clone(), dim)) });
        outers.push(outer);
    }
    let mut formats = BTreeMap::new();
    formats.insert(tdn.tensor.clone(), format.clone());
    formats.insert(stmt.output().to_string(), format.clone());
    let base = derive(&stmt, &Schedule::new(directives.clone()), &formats, machine)?;
    let mut order = outers.clone();
    order.extend(base.order.iter().filter(|v| !outers.contains(v)).cloned());
    if order != base.order {
        directives.push(Directive::Reorder(order));
    }
    directives.extend(distribute);
    let nest = derive(&stmt, &Schedule::new(directives), &formats, machine)?;
    let mut inputs = BTreeMap::new();
    inputs.insert(tdn.tensor.clone(), tensor.clone());
    build(&stmt, nest, &formats, machine, &inputs, true)
}

fn level_count(format: &FormatSpec) -> usize {
    format.level_groups().len()
}

fn level_of_mode(format: &FormatSpec, mode: usize) -> usize {
    let s = format.storage_position(mode);
    format
        .level_groups()
        .iter()
        .position(|(_, positions)| positions.contains(&s))
        .expect("every storage position is in a level")
}

/// Coordinate bounds of `target`'s variables implied by `bundle`, a
/// partition of `source` (accessed as `access`): per shared variable, the
/// smallest range holding every coordinate each color owns.
pub fn project_to_universe(
    source: &SparseTensor,
    access: &Access,
    bundle: &TensorPartitionBundle,
    target: &Access,
) -> Vec<(String, Vec<CoordRange>)> {
    let mut out = Vec::new();
    for (mode, var) in access.vars.iter().enumerate() {
        if target.mode_of(var).is_none() {
            continue;
        }
        let (l, k) = source.level_of_mode(mode);
        let part = bundle.levels[l].down();
        let ranges = (0..bundle.colors())
            .map(|c| {
                let mut lo = i64::MAX;
                let mut hi = i64::MIN;
                for &p in part.subset(c) {
                    let x = source.coords_at(l, p)[k] as i64;
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                if lo > hi {
                    CoordRange::empty_at(0)
                } else {
                    CoordRange::new(lo, hi)
                }
            })
            .collect();
        out.push((var.clone(), ranges));
    }
    out
}

fn build(
    stmt: &TinStatement,
    nest: LoopNest,
    formats: &BTreeMap<String, FormatSpec>,
    machine: &MachineGrid,
    tensors: &BTreeMap<String, SparseTensor>,
    placement: bool,
) -> Result<Plan> {
    let mut dims: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for a in stmt.inputs() {
        let t = tensors
            .get(&a.tensor)
            .ok_or_else(|| Error::validation(format!("no data for tensor {}", a.tensor)))?;
        if t.format() != &formats[&a.tensor] {
            return Err(Error::validation(format!(
                "{} is stored as {} but its format is given as {}",
                a.tensor,
                t.format(),
                formats[&a.tensor]
            )));
        }
        dims.insert(a.tensor.clone(), t.dims().to_vec());
    }
    let extents = stmt.var_extents(&dims)?;
    let out = stmt.lhs();
    dims.insert(out.tensor.clone(), out.vars.iter().map(|v| extents[v]).collect());

    let workers = machine.workers();
    let points: Vec<Vec<usize>> = (0..workers).map(|c| machine.point(c)).collect();
    let used: Vec<usize> = nest.distributed.iter().map(|d| d.grid_dim).collect();
    let active: Vec<bool> = points
        .iter()
        .map(|p| placement || p.iter().enumerate().all(|(g, &x)| used.contains(&g) || x == 0))
        .collect();
    let mut spaces: Vec<IterationSpace> = active
        .iter()
        .map(|&a| IterationSpace { active: a, ..Default::default() })
        .collect();

    let mut classes = Vec::new();
    let mut seeds: BTreeMap<String, Vec<Seed>> = stmt.tensors().iter().map(|t| (t.to_string(), Vec::new())).collect();
    let mut bundles: BTreeMap<String, TensorPartitionBundle> = BTreeMap::new();
    let accesses: Vec<&Access> = std::iter::once(stmt.lhs()).chain(stmt.inputs()).collect();

    for d in &nest.distributed {
        let class = classify_iteration(&nest, &d.var)?;
        let color_map: Vec<Option<usize>> = (0..workers)
            .map(|c| active[c].then_some(points[c][d.grid_dim]))
            .collect();
        match &class {
            IterationClass::CoordinateValue { original } => {
                let n = extents[original];
                let ranges: Vec<CoordRange> = (0..d.pieces).map(|s| block_bounds(n, d.pieces, s)).collect();
                for (c, space) in spaces.iter_mut().enumerate() {
                    if let Some(s) = color_map[c] {
                        let b = space.bounds.entry(original.clone()).or_insert(CoordRange::full(n));
                        *b = b.intersect(&ranges[s]);
                    }
                }
                for a in &accesses {
                    if let Some(mode) = a.mode_of(original) {
                        seeds.get_mut(&a.tensor).expect("tensor listed").push(Seed {
                            var: d.var.clone(),
                            bounds: SeedBounds::Universe { mode, ranges: ranges.clone(), aliased: false },
                            origin: SeedOrigin::Divide,
                            color_map: color_map.clone(),
                        });
                    }
                }
            }
            IterationClass::CoordinatePosition { tensor, originals } => {
                let source = &tensors[tensor];
                let access = stmt.access(tensor).expect("position tensor is an input");
                let s = position_level(access, source.format(), originals)?;
                let last_mode = source.format().mode_order()[s];
                let (l, _) = source.level_of_mode(last_mode);
                let count = source.positions(l);
                let ranges: Vec<CoordRange> = (0..d.pieces).map(|c| position_bounds(count, d.pieces, c)).collect();
                let seed = Seed {
                    var: d.var.clone(),
                    bounds: SeedBounds::NonZero { mode: last_mode, ranges: ranges.clone() },
                    origin: SeedOrigin::Position,
                    color_map: color_map.clone(),
                };
                let sub_map: Vec<Option<usize>> = (0..d.pieces).map(Some).collect();
                let sub_bundle = Seed { color_map: sub_map, ..seed.clone() }.derive(source)?;
                seeds.get_mut(tensor).expect("tensor listed").push(seed);
                for (c, space) in spaces.iter_mut().enumerate() {
                    if let Some(sub) = color_map[c] {
                        space.positions = Some((tensor.clone(), ancestor_ranges(source, l, ranges[sub])));
                    }
                }
                for a in &accesses {
                    if a.tensor == *tensor {
                        continue;
                    }
                    for (var, projected) in project_to_universe(source, access, &sub_bundle, a) {
                        let mode = a.mode_of(&var).expect("projected variable is shared");
                        seeds.get_mut(&a.tensor).expect("tensor listed").push(Seed {
                            var: d.var.clone(),
                            bounds: SeedBounds::Universe { mode, ranges: projected, aliased: true },
                            origin: SeedOrigin::Projected { from: tensor.clone() },
                            color_map: color_map.clone(),
                        });
                    }
                }
            }
        }
        classes.push(class);
    }

    let recipes: BTreeMap<String, BundleRecipe> = seeds
        .into_iter()
        .map(|(t, s)| (t, BundleRecipe { seeds: s, active: active.clone() }))
        .collect();
    for a in stmt.inputs() {
        bundles.insert(a.tensor.clone(), recipes[&a.tensor].derive(&tensors[&a.tensor])?);
    }

    let reduce = !placement
        && !nest.distributed.is_empty()
        && (nest
            .distributed
            .iter()
            .any(|d| nest.info(&d.var).originals.iter().any(|o| stmt.is_reduction(o)))
            || output_boxes_overlap(&recipes[stmt.output()], &dims[stmt.output()], &active));

    let nodes = build_nodes(stmt, &nest, formats, machine, &recipes, reduce);
    debug!("planned {} nodes, reduce = {reduce}", nodes.len());
    Ok(Plan {
        stmt: stmt.clone(),
        nest,
        machine: machine.clone(),
        formats: formats.clone(),
        dims,
        extents,
        classes,
        active,
        spaces,
        recipes,
        bundles,
        reduce,
        nodes,
    })
}

/// Position ranges of levels `0..=l` covering the positions `range` of
/// level `l` and their ancestors.
fn ancestor_ranges(tensor: &SparseTensor, l: usize, range: CoordRange) -> Vec<CoordRange> {
    let mut out = vec![CoordRange::empty_at(0); l + 1];
    if range.is_empty() {
        return out;
    }
    let (mut lo, mut hi) = (range.lo as usize, range.hi as usize);
    out[l] = range;
    for k in (0..l).rev() {
        lo = tensor.parent_of(k + 1, lo);
        hi = tensor.parent_of(k + 1, hi);
        out[k] = CoordRange::new(lo as i64, hi as i64);
    }
    out
}

/// Coordinate boxes of the output per active color, from its seeds.
pub(crate) fn output_boxes(recipe: &BundleRecipe, dims: &[usize], active: &[bool]) -> Vec<Option<Vec<CoordRange>>> {
    (0..active.len())
        .map(|c| {
            if !active[c] {
                return None;
            }
            let mut bounds: Vec<CoordRange> = dims.iter().map(|&n| CoordRange::full(n)).collect();
            for seed in &recipe.seeds {
                let r = seed.range(c)?;
                if let SeedBounds::Universe { mode, .. } = seed.bounds {
                    bounds[mode] = bounds[mode].intersect(&r);
                }
            }
            Some(bounds)
        })
        .collect()
}

fn output_boxes_overlap(recipe: &BundleRecipe, dims: &[usize], active: &[bool]) -> bool {
    let boxes: Vec<Vec<CoordRange>> = output_boxes(recipe, dims, active)
        .into_iter()
        .flatten()
        .filter(|b| b.iter().all(|r| !r.is_empty()))
        .collect();
    for (k, a) in boxes.iter().enumerate() {
        for b in &boxes[..k] {
            if a.iter().zip(b).all(|(x, y)| x.overlaps(y)) {
                return true;
            }
        }
    }
    false
}

fn build_nodes(
    stmt: &TinStatement,
    nest: &LoopNest,
    formats: &BTreeMap<String, FormatSpec>,
    machine: &MachineGrid,
    recipes: &BTreeMap<String, BundleRecipe>,
    reduce: bool,
) -> Vec<PlanNode> {
    let mut nodes = Vec::new();
    if nest.distributed.is_empty() {
        nodes.push(PlanNode::Leaf);
        return nodes;
    }
    let mut order: Vec<&str> = stmt.inputs().map(|a| a.tensor.as_str()).collect();
    order.push(stmt.output());
    for t in order {
        let format = &formats[t];
        let n = level_count(format);
        let recipe = &recipes[t];
        if recipe.is_replicated() {
            nodes.push(PlanNode::Partition(PartitionStep {
                tensor: t.to_string(),
                level: None,
                func: LevelFunction::Replicate,
                var: None,
            }));
            continue;
        }
        for seed in &recipe.seeds {
            let l = level_of_mode(format, seed.mode());
            let step = |level: Option<usize>, func| {
                PlanNode::Partition(PartitionStep { tensor: t.to_string(), level, func, var: Some(seed.var.clone()) })
            };
            let init = match seed.bounds {
                SeedBounds::Universe { aliased, .. } => LevelFunction::InitUniverse { aliased },
                SeedBounds::NonZero { .. } => LevelFunction::InitNonZero,
            };
            nodes.push(step(Some(l), init));
            for k in (0..l).rev() {
                nodes.push(step(Some(k), LevelFunction::FromChild));
            }
            for k in l + 1..n {
                nodes.push(step(Some(k), LevelFunction::FromParent));
            }
            nodes.push(step(None, LevelFunction::CopyVals));
        }
        if recipe.seeds.len() > 1 {
            nodes.push(PlanNode::Partition(PartitionStep {
                tensor: t.to_string(),
                level: None,
                func: LevelFunction::Intersect,
                var: None,
            }));
        }
    }
    for d in &nest.distributed {
        nodes.push(PlanNode::DistributedLoop {
            var: d.var.clone(),
            grid_dim: machine.dims()[d.grid_dim].0.clone(),
            pieces: d.pieces,
        });
    }
    let mut named: Vec<String> = Vec::new();
    for (tensors, at) in &nest.communicate {
        nodes.push(PlanNode::Communicate { tensors: tensors.clone(), at: at.clone() });
        named.extend(tensors.iter().cloned());
    }
    let rest: Vec<String> = stmt
        .tensors()
        .iter()
        .filter(|t| !named.iter().any(|n| n == *t))
        .map(|t| t.to_string())
        .collect();
    if !rest.is_empty() {
        let at = nest.distributed.last().expect("distributed").var.clone();
        nodes.push(PlanNode::Communicate { tensors: rest, at });
    }
    nodes.push(PlanNode::Leaf);
    if reduce {
        nodes.push(PlanNode::ReduceCombine { tensor: stmt.output().to_string() });
    }
    nodes
}

/// Whether level `l` of `format` is compressed.
pub(crate) fn is_compressed(format: &FormatSpec, l: usize) -> bool {
    format.level_groups()[l].0 == LevelKind::Compressed
}
