//! Simulated distributed execution of a plan.
//!
//! Each worker runs the leaf over its iteration space against the data its
//! bundles say it holds. Partial outputs are combined in ascending worker
//! order and packed into the output format.

mod coiter;
mod stats;

use std::collections::BTreeMap;
use std::str::FromStr;

use log::debug;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frontend::TdnStatement;
use crate::planner::{lower_tdn, Plan};
use crate::space::CoordRange;
use crate::tensor::{PackReport, SparseTensor};

pub use coiter::{intersect_runs, union_coords};
pub use stats::{communication_bytes, Stats, WorkerStats};

use coiter::{Held, Operand, Sink, Walk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Sequential,
    Parallel,
    /// Sequential, plus a global re-walk that checks every access against
    /// the worker's bundles.
    Instrumented,
}

impl FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequential" => Ok(ExecMode::Sequential),
            "par" | "parallel" => Ok(ExecMode::Parallel),
            "instrumented" => Ok(ExecMode::Instrumented),
            other => Err(Error::validation(format!("unknown execution mode {other}"))),
        }
    }
}

/// Output entries one worker produced, keyed by output coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerResult {
    pub partial: BTreeMap<Vec<usize>, f64>,
    pub work: usize,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub output: SparseTensor,
    pub stats: Stats,
    pub assembly: Assembly,
    pub partials: Vec<WorkerResult>,
}

struct Accumulate<'a> {
    out_vars: &'a [usize],
    result: WorkerResult,
}

impl Sink for Accumulate<'_> {
    fn contribute(&mut self, _term: usize, coords: &[usize], value: f64, _: &[Operand], _: &[Vec<usize>]) -> Result<()> {
        let key: Vec<usize> = self.out_vars.iter().map(|&v| coords[v]).collect();
        *self.result.partial.entry(key).or_insert(0.0) += value;
        self.result.work += 1;
        Ok(())
    }
}

/// Checks each product's access paths against the worker's bundles.
struct CheckPaths<'a> {
    plan: &'a Plan,
    color: usize,
    count: usize,
}

impl Sink for CheckPaths<'_> {
    fn contribute(&mut self, term: usize, _: &[usize], _: f64, operands: &[Operand], paths: &[Vec<usize>]) -> Result<()> {
        for (op, path) in operands.iter().zip(paths) {
            if op.term != term {
                continue;
            }
            if let Some((region, index)) = self.plan.bundles[op.name].missing_on_path(self.color, path) {
                return Err(Error::Closure {
                    tensor: op.name.to_string(),
                    region,
                    index,
                    color: self.color,
                });
            }
        }
        self.count += 1;
        Ok(())
    }
}

fn leaf_vars(plan: &Plan) -> BTreeMap<&str, usize> {
    plan.nest.leaf_order.iter().enumerate().map(|(k, v)| (v.as_str(), k)).collect()
}

fn walk<'a>(plan: &'a Plan, tensors: &'a BTreeMap<String, SparseTensor>, color: usize, local: bool) -> Result<Walk<'a>> {
    let index = leaf_vars(plan);
    let space = &plan.spaces[color];
    let mut operands = Vec::new();
    for (t, term) in plan.stmt.terms().iter().enumerate() {
        for a in term {
            let tensor = tensors
                .get(&a.tensor)
                .ok_or_else(|| Error::validation(format!("no data for tensor {}", a.tensor)))?;
            let vars: Vec<usize> = a.vars.iter().map(|v| index[v.as_str()]).collect();
            let mut op = Operand::new(&a.tensor, tensor, t, &vars);
            if local {
                op = op.with_held(Held::of(&plan.bundles[&a.tensor], color));
            }
            if let Some((pt, ranges)) = &space.positions {
                if *pt == a.tensor {
                    op = op.with_limits(ranges.clone());
                }
            }
            operands.push(op);
        }
    }
    let bounds = plan
        .nest
        .leaf_order
        .iter()
        .map(|v| space.bounds.get(v).copied().unwrap_or(CoordRange::full(plan.extents[v])))
        .collect();
    Ok(Walk { operands, terms: plan.stmt.terms().len(), bounds, color })
}

/// Run worker `color`'s leaf against the data it holds.
pub fn leaf_execute(plan: &Plan, tensors: &BTreeMap<String, SparseTensor>, color: usize) -> Result<WorkerResult> {
    if !plan.active[color] {
        return Ok(WorkerResult::default());
    }
    let index = leaf_vars(plan);
    let out_vars: Vec<usize> = plan.stmt.lhs().vars.iter().map(|v| index[v.as_str()]).collect();
    let mut sink = Accumulate { out_vars: &out_vars, result: WorkerResult::default() };
    walk(plan, tensors, color, true)?.run(&mut sink)?;
    Ok(sink.result)
}

/// Re-walk worker `color`'s iteration space over the full tensors, checking
/// that every access lies in the worker's bundles. Returns the product count.
pub fn check_closure(plan: &Plan, tensors: &BTreeMap<String, SparseTensor>, color: usize) -> Result<usize> {
    if !plan.active[color] {
        return Ok(0);
    }
    let mut sink = CheckPaths { plan, color, count: 0 };
    walk(plan, tensors, color, false)?.run(&mut sink)?;
    Ok(sink.count)
}

/// Combine partial outputs in ascending worker order. Returns the merged
/// entries and the number of entries written by more than one worker.
pub fn reduce_combine(partials: &[WorkerResult], reduce: bool) -> Result<(BTreeMap<Vec<usize>, f64>, usize)> {
    let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut combines = 0;
    for (color, w) in partials.iter().enumerate() {
        for (k, &v) in &w.partial {
            match merged.get_mut(k) {
                Some(acc) => {
                    if !reduce {
                        return Err(Error::Internal(format!(
                            "worker {color} wrote output entry {k:?} already written by another worker"
                        )));
                    }
                    *acc += v;
                    combines += 1;
                }
                None => {
                    merged.insert(k.clone(), v);
                }
            }
        }
    }
    Ok((merged, combines))
}

/// How the output was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    /// Input whose coordinate levels were reused, if any.
    pub reused: Option<String>,
    pub report: PackReport,
}

/// The single sparse input whose leading levels store exactly the output's
/// pattern: one product term, every other operand all-dense, and the
/// output's levels matching the input's leading levels in kind and variable.
pub fn reusable_pattern(plan: &Plan) -> Option<String> {
    let terms = plan.stmt.terms();
    if terms.len() != 1 {
        return None;
    }
    let sparse: Vec<_> = terms[0].iter().filter(|a| plan.formats[&a.tensor].has_compressed()).collect();
    let [src] = sparse.as_slice() else { return None };
    let lhs = plan.stmt.lhs();
    let (of, sf) = (&plan.formats[&lhs.tensor], &plan.formats[&src.tensor]);
    let (og, sg) = (of.level_groups(), sf.level_groups());
    if og.len() > sg.len() {
        return None;
    }
    let same = og.iter().zip(&sg).all(|((ok, op), (sk, sp))| {
        let ov: Vec<&String> = op.iter().map(|&s| &lhs.vars[of.mode_order()[s]]).collect();
        let sv: Vec<&String> = sp.iter().map(|&s| &src.vars[sf.mode_order()[s]]).collect();
        ok == sk && ov == sv
    });
    same.then(|| src.tensor.clone())
}

/// Build the output from merged entries: reuse an input's pattern when
/// [`reusable_pattern`] allows it, else pack in two phases.
pub fn assemble_output(
    plan: &Plan,
    tensors: &BTreeMap<String, SparseTensor>,
    merged: BTreeMap<Vec<usize>, f64>,
) -> Result<(SparseTensor, Assembly)> {
    let out = plan.output();
    let dims = plan.dims[out].clone();
    let format = plan.formats[out].clone();
    if let Some(src_name) = reusable_pattern(plan) {
        let src = &tensors[&src_name];
        let access = plan.stmt.access(&src_name).expect("input");
        let lhs = plan.stmt.lhs();
        let n = format.level_groups().len();
        let levels: Vec<crate::tensor::Level> = src.levels()[..n]
            .iter()
            .map(|level| crate::tensor::Level {
                modes: level
                    .modes
                    .iter()
                    .map(|&m| lhs.mode_of(&access.vars[m]).expect("output variable"))
                    .collect(),
                storage: level.storage.clone(),
            })
            .collect();
        let leaves = src.positions(n - 1);
        let shell = SparseTensor::from_parts(dims.clone(), format.clone(), levels.clone(), vec![0.0; leaves])?;
        let mut vals = Vec::with_capacity(leaves);
        let mut matched = 0;
        for (coords, _) in shell.iterate_leaves() {
            match merged.get(&coords) {
                Some(&v) => {
                    matched += 1;
                    vals.push(v);
                }
                None => vals.push(0.0),
            }
        }
        if matched != merged.len() {
            return Err(Error::Internal(format!(
                "{} output entries fall outside the pattern of {src_name}",
                merged.len() - matched
            )));
        }
        let counts: Vec<usize> = (0..n).map(|l| shell.positions(l)).collect();
        let tensor = SparseTensor::from_parts(dims, format, levels, vals)?;
        let report = PackReport { counted: counts.clone(), filled: counts };
        return Ok((tensor, Assembly { reused: Some(src_name), report }));
    }
    let (tensor, report) = SparseTensor::pack(dims, &format, merged)?;
    if report.counted != report.filled {
        return Err(Error::Internal(format!(
            "assembly filled {:?} positions after counting {:?}",
            report.filled, report.counted
        )));
    }
    Ok((tensor, Assembly { reused: None, report }))
}

/// Bytes worker `color` receives for `tensor` when it needs `plan`'s bundle
/// and starts out holding `resident`'s.
pub fn communicate_step(
    plan: &Plan,
    tensor: &str,
    data: &SparseTensor,
    resident: Option<&TdnStatement>,
    color: usize,
) -> Result<usize> {
    let needed = match plan.bundles.get(tensor) {
        Some(b) => b.clone(),
        None => plan.recipes[tensor].derive(data)?,
    };
    let owned = match resident {
        Some(tdn) => Some(lower_tdn(tdn, data, &plan.machine)?.bundles[&tdn.tensor].clone()),
        None => None,
    };
    Ok(communication_bytes(&needed, owned.as_ref(), color))
}

/// Execute `plan` over `tensors`. `placements` gives the resident
/// distribution of any tensor; tensors without one start out unowned.
pub fn execute(
    plan: &Plan,
    tensors: &BTreeMap<String, SparseTensor>,
    placements: &BTreeMap<String, TdnStatement>,
    mode: ExecMode,
) -> Result<Execution> {
    let workers = plan.workers();
    let partials: Vec<WorkerResult> = match mode {
        ExecMode::Parallel => (0..workers)
            .into_par_iter()
            .map(|c| leaf_execute(plan, tensors, c))
            .collect::<Result<_>>()?,
        _ => (0..workers).map(|c| leaf_execute(plan, tensors, c)).collect::<Result<_>>()?,
    };
    if mode == ExecMode::Instrumented {
        for (c, w) in partials.iter().enumerate() {
            let expected = check_closure(plan, tensors, c)?;
            if expected != w.work {
                return Err(Error::Internal(format!(
                    "worker {c} computed {} products but its iteration space has {expected}",
                    w.work
                )));
            }
        }
    }
    let (merged, combines) = reduce_combine(&partials, plan.reduce)?;
    let (output, assembly) = assemble_output(plan, tensors, merged)?;
    let out = plan.output().to_string();
    let out_bundle = plan.recipes[&out].derive(&output)?;
    if mode == ExecMode::Instrumented {
        for (c, w) in partials.iter().enumerate() {
            for coords in w.partial.keys() {
                let path = output
                    .locate(coords)
                    .ok_or_else(|| Error::Internal(format!("output entry {coords:?} lost in assembly")))?;
                if let Some((region, index)) = out_bundle.missing_on_path(c, &path) {
                    return Err(Error::Closure { tensor: out.clone(), region, index, color: c });
                }
            }
        }
    }

    let mut resident: BTreeMap<String, Option<crate::level::TensorPartitionBundle>> = BTreeMap::new();
    for t in plan.stmt.tensors() {
        let data = if t == out { &output } else { &tensors[t] };
        let owned = match placements.get(t) {
            Some(tdn) => {
                if tdn.tensor != t {
                    return Err(Error::validation(format!("distribution for {t} names tensor {}", tdn.tensor)));
                }
                Some(lower_tdn(tdn, data, &plan.machine)?.bundles[t].clone())
            }
            None => None,
        };
        resident.insert(t.to_string(), owned);
    }
    let per_worker: Vec<WorkerStats> = partials
        .iter()
        .enumerate()
        .map(|(c, w)| {
            let bytes_by_tensor = plan
                .stmt
                .tensors()
                .iter()
                .map(|&t| {
                    let needed = if t == out { &out_bundle } else { &plan.bundles[t] };
                    (t.to_string(), communication_bytes(needed, resident[t].as_ref(), c))
                })
                .collect();
            WorkerStats { bytes_by_tensor, work: w.work }
        })
        .collect();
    let stats = Stats::new(per_worker, combines);
    debug!("executed on {workers} workers: {} bytes, imbalance {:.3}", stats.total_bytes(), stats.imbalance);
    Ok(Execution { output, stats, assembly, partials })
}
