//! Scheduling directives and the index-variable derivation graph.
//!
//! Directives are separated by `;`:
//!
//! ```text
//! divide(i, io, ii, M.x); distribute(io); communicate({a,B,c}, io); parallelize(ii, cpu)
//! fuse(i, j, f); posdivide(f, fo, fi, B, M.x); distribute(fo)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::format::{FormatSpec, LevelKind};
use crate::frontend::machine::MachineGrid;
use crate::frontend::tin::TinStatement;

/// Number of pieces for a division: a machine grid dimension or a constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Grid { machine: String, dim: String },
    Count(usize),
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Grid { machine, dim } => write!(f, "{machine}.{dim}"),
            Factor::Count(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Directive {
    /// Split `var` into `pieces` equal blocks of coordinates.
    Divide { var: String, outer: String, inner: String, factor: Factor },
    /// Split `var` into blocks of `size` coordinates.
    Split { var: String, outer: String, inner: String, size: usize },
    /// Split the non-zeros of `tensor` under `var` into `pieces` equal runs.
    PosDivide { var: String, outer: String, inner: String, tensor: String, factor: Factor },
    /// Split the non-zeros of `tensor` under `var` into runs of `size`.
    PosSplit { var: String, outer: String, inner: String, tensor: String, size: usize },
    Fuse { first: String, second: String, fused: String },
    Reorder(Vec<String>),
    Distribute { var: String, dim: Option<(String, String)> },
    Communicate { tensors: Vec<String>, at: String },
    Parallelize { var: String, annotation: String },
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Divide { var, outer, inner, factor } => {
                write!(f, "divide({var}, {outer}, {inner}, {factor})")
            }
            Directive::Split { var, outer, inner, size } => {
                write!(f, "split({var}, {outer}, {inner}, {size})")
            }
            Directive::PosDivide { var, outer, inner, tensor, factor } => {
                write!(f, "posdivide({var}, {outer}, {inner}, {tensor}, {factor})")
            }
            Directive::PosSplit { var, outer, inner, tensor, size } => {
                write!(f, "possplit({var}, {outer}, {inner}, {tensor}, {size})")
            }
            Directive::Fuse { first, second, fused } => write!(f, "fuse({first}, {second}, {fused})"),
            Directive::Reorder(vars) => write!(f, "reorder({})", vars.join(", ")),
            Directive::Distribute { var, dim: None } => write!(f, "distribute({var})"),
            Directive::Distribute { var, dim: Some((m, d)) } => write!(f, "distribute({var}, {m}.{d})"),
            Directive::Communicate { tensors, at } => {
                write!(f, "communicate({{{}}}, {at})", tensors.join(", "))
            }
            Directive::Parallelize { var, annotation } => write!(f, "parallelize({var}, {annotation})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub directives: Vec<Directive>,
}

impl Schedule {
    pub fn new(directives: Vec<Directive>) -> Self {
        Schedule { directives }
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.directives.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn split_args(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in body.chars() {
        match c {
            '{' => {
                depth += 1;
                cur.push(c);
            }
            '}' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut directives = Vec::new();
        let mut column = 1;
        for raw in text.split(';') {
            let here = column + raw.len() - raw.trim_start().len();
            column += raw.chars().count() + 1;
            let item = raw.trim();
            if item.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(here, m);
            let open = item.find('(').ok_or_else(|| err(format!("expected '(' in '{item}'")))?;
            if !item.ends_with(')') {
                return Err(err(format!("expected ')' at the end of '{item}'")));
            }
            let head = item[..open].trim();
            let args = split_args(&item[open + 1..item.len() - 1]);
            let name = |k: usize| -> Result<String> {
                let a = args.get(k).ok_or_else(|| err(format!("{head} is missing argument {}", k + 1)))?;
                if is_ident(a) {
                    Ok(a.clone())
                } else {
                    Err(err(format!("'{a}' is not an index variable or tensor name")))
                }
            };
            let arity = |n: usize| -> Result<()> {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("{head} takes {n} arguments, got {}", args.len())))
                }
            };
            let number = |k: usize| -> Result<usize> {
                args[k]
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| err(format!("'{}' is not a positive integer", args[k])))
            };
            let factor = |k: usize| -> Result<Factor> {
                if let Some((m, d)) = args[k].split_once('.') {
                    if is_ident(m.trim()) && is_ident(d.trim()) {
                        return Ok(Factor::Grid { machine: m.trim().into(), dim: d.trim().into() });
                    }
                }
                number(k).map(Factor::Count)
            };
            let d = match head {
                "divide" => {
                    arity(4)?;
                    Directive::Divide { var: name(0)?, outer: name(1)?, inner: name(2)?, factor: factor(3)? }
                }
                "split" => {
                    arity(4)?;
                    Directive::Split { var: name(0)?, outer: name(1)?, inner: name(2)?, size: number(3)? }
                }
                "posdivide" => {
                    arity(5)?;
                    Directive::PosDivide {
                        var: name(0)?,
                        outer: name(1)?,
                        inner: name(2)?,
                        tensor: name(3)?,
                        factor: factor(4)?,
                    }
                }
                "possplit" => {
                    arity(5)?;
                    Directive::PosSplit {
                        var: name(0)?,
                        outer: name(1)?,
                        inner: name(2)?,
                        tensor: name(3)?,
                        size: number(4)?,
                    }
                }
                "fuse" => {
                    arity(3)?;
                    Directive::Fuse { first: name(0)?, second: name(1)?, fused: name(2)? }
                }
                "reorder" => Directive::Reorder((0..args.len()).map(name).collect::<Result<_>>()?),
                "distribute" => {
                    if args.len() == 1 {
                        Directive::Distribute { var: name(0)?, dim: None }
                    } else {
                        arity(2)?;
                        match factor(1)? {
                            Factor::Grid { machine, dim } => {
                                Directive::Distribute { var: name(0)?, dim: Some((machine, dim)) }
                            }
                            Factor::Count(_) => return Err(err("distribute expects a machine dimension".into())),
                        }
                    }
                }
                "communicate" => {
                    arity(2)?;
                    let list = args[0].trim();
                    let tensors: Vec<String> = match list.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                        Some(inner) => inner.split(',').map(|s| s.trim().to_string()).collect(),
                        None => vec![list.to_string()],
                    };
                    if let Some(bad) = tensors.iter().find(|t| !is_ident(t)) {
                        return Err(err(format!("'{bad}' is not a tensor name")));
                    }
                    Directive::Communicate { tensors, at: name(1)? }
                }
                "parallelize" => {
                    arity(2)?;
                    Directive::Parallelize { var: name(0)?, annotation: name(1)? }
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            };
            directives.push(d);
        }
        Ok(Schedule { directives })
    }
}

/// Parse a `;`-separated list of scheduling directives.
pub fn parse_schedule(text: &str) -> Result<Schedule> {
    text.parse()
}

/// How an index variable came to exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Derivation {
    Original,
    Divide { parent: String, pieces: usize, outer: bool },
    Split { parent: String, size: usize, outer: bool },
    PosDivide { parent: String, tensor: String, pieces: usize, outer: bool },
    PosSplit { parent: String, tensor: String, size: usize, outer: bool },
    Fuse { first: String, second: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarInfo {
    pub derivation: Derivation,
    /// Original index variables this variable ranges over, outermost first.
    pub originals: Vec<String>,
    /// Tensor whose non-zero positions this variable iterates, if any.
    pub position_tensor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributedVar {
    pub var: String,
    pub grid_dim: usize,
    pub pieces: usize,
}

/// Result of validating a schedule: the final loop nest and everything the
/// planner needs to classify each loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopNest {
    /// Loop order after all transformations, outermost first.
    pub order: Vec<String>,
    pub vars: BTreeMap<String, VarInfo>,
    /// Distributed loops, outermost first.
    pub distributed: Vec<DistributedVar>,
    pub communicate: Vec<(Vec<String>, String)>,
    pub parallel: Vec<(String, String)>,
    /// Original variables in the order the leaf visits them.
    pub leaf_order: Vec<String>,
}

impl LoopNest {
    pub fn info(&self, var: &str) -> &VarInfo {
        &self.vars[var]
    }

    pub fn is_distributed(&self, var: &str) -> bool {
        self.distributed.iter().any(|d| d.var == var)
    }
}

fn factor_pieces(factor: &Factor, machine: &MachineGrid) -> Result<usize> {
    match factor {
        Factor::Count(n) => Ok(*n),
        Factor::Grid { dim, .. } => machine
            .dim_index(dim)
            .map(|g| machine.extent(g))
            .ok_or_else(|| Error::validation(format!("unknown machine dimension {dim}"))),
    }
}

/// Validate `schedule` against the statement, formats and machine, producing
/// the transformed loop nest.
pub fn validate_schedule(
    stmt: &TinStatement,
    schedule: &Schedule,
    formats: &BTreeMap<String, FormatSpec>,
    machine: &MachineGrid,
) -> Result<LoopNest> {
    let nest = derive(stmt, schedule, formats, machine)?;
    check_concordance(stmt, &nest, formats)?;
    Ok(nest)
}

/// Validation without the iteration-order check; used for placement plans,
/// which never execute.
pub(crate) fn derive(
    stmt: &TinStatement,
    schedule: &Schedule,
    formats: &BTreeMap<String, FormatSpec>,
    machine: &MachineGrid,
) -> Result<LoopNest> {
    for t in stmt.tensors() {
        if !formats.contains_key(t) {
            return Err(Error::validation(format!("no format for tensor {t}")));
        }
    }
    for a in std::iter::once(stmt.lhs()).chain(stmt.inputs()) {
        let order = formats[&a.tensor].order();
        if order != a.vars.len() {
            return Err(Error::Shape(format!(
                "{} has a format of order {order} but is accessed with {} indices",
                a.tensor,
                a.vars.len()
            )));
        }
    }
    let mut order = stmt.vars();
    let mut vars: BTreeMap<String, VarInfo> = order
        .iter()
        .map(|v| {
            (
                v.clone(),
                VarInfo { derivation: Derivation::Original, originals: vec![v.clone()], position_tensor: None },
            )
        })
        .collect();
    let mut distributed: Vec<DistributedVar> = Vec::new();
    let mut communicate = Vec::new();
    let mut parallel = Vec::new();

    let active = |order: &Vec<String>, v: &str| -> Result<usize> {
        order
            .iter()
            .position(|o| o == v)
            .ok_or_else(|| Error::validation(format!("index variable {v} is not a loop of the current nest")))
    };
    let fresh = |vars: &BTreeMap<String, VarInfo>, v: &str| -> Result<()> {
        if vars.contains_key(v) {
            Err(Error::validation(format!(
                "cyclic derivation: {v} already names an index variable"
            )))
        } else {
            Ok(())
        }
    };

    for d in &schedule.directives {
        match d {
            Directive::Divide { var, outer, inner, .. }
            | Directive::Split { var, outer, inner, .. }
            | Directive::PosDivide { var, outer, inner, .. }
            | Directive::PosSplit { var, outer, inner, .. } => {
                let at = active(&order, var)?;
                fresh(&vars, outer)?;
                fresh(&vars, inner)?;
                if outer == inner {
                    return Err(Error::validation(format!("{d}: outer and inner variables coincide")));
                }
                let parent = vars[var].clone();
                let position_tensor = match d {
                    Directive::PosDivide { tensor, .. } | Directive::PosSplit { tensor, .. } => {
                        if let Some(prev) = &parent.position_tensor {
                            if prev != tensor {
                                return Err(Error::Unsupported(format!(
                                    "{var} already iterates the positions of {prev}, not {tensor}"
                                )));
                            }
                        }
                        check_position_split(stmt, formats, tensor, &parent.originals)?;
                        Some(tensor.clone())
                    }
                    _ => parent.position_tensor.clone(),
                };
                let make = |outer_side: bool| -> Result<Derivation> {
                    Ok(match d {
                        Directive::Divide { factor, .. } => Derivation::Divide {
                            parent: var.clone(),
                            pieces: factor_pieces(factor, machine)?,
                            outer: outer_side,
                        },
                        Directive::Split { size, .. } => {
                            Derivation::Split { parent: var.clone(), size: *size, outer: outer_side }
                        }
                        Directive::PosDivide { tensor, factor, .. } => Derivation::PosDivide {
                            parent: var.clone(),
                            tensor: tensor.clone(),
                            pieces: factor_pieces(factor, machine)?,
                            outer: outer_side,
                        },
                        Directive::PosSplit { tensor, size, .. } => Derivation::PosSplit {
                            parent: var.clone(),
                            tensor: tensor.clone(),
                            size: *size,
                            outer: outer_side,
                        },
                        _ => unreachable!(),
                    })
                };
                for (name, side) in [(outer, true), (inner, false)] {
                    vars.insert(
                        name.clone(),
                        VarInfo {
                            derivation: make(side)?,
                            originals: parent.originals.clone(),
                            position_tensor: position_tensor.clone(),
                        },
                    );
                }
                order.splice(at..=at, [outer.clone(), inner.clone()]);
            }
            Directive::Fuse { first, second, fused } => {
                let a = active(&order, first)?;
                let b = active(&order, second)?;
                if b != a + 1 {
                    return Err(Error::validation(format!(
                        "fuse({first}, {second}): {first} must be the loop directly outside {second}"
                    )));
                }
                fresh(&vars, fused)?;
                let (fa, fb) = (&vars[first], &vars[second]);
                if fa.position_tensor.is_some() || fb.position_tensor.is_some() {
                    return Err(Error::Unsupported(format!(
                        "fusing position loops {first} and {second}"
                    )));
                }
                let mut originals = fa.originals.clone();
                originals.extend(fb.originals.iter().cloned());
                vars.insert(
                    fused.clone(),
                    VarInfo {
                        derivation: Derivation::Fuse { first: first.clone(), second: second.clone() },
                        originals,
                        position_tensor: None,
                    },
                );
                order.splice(a..=b, [fused.clone()]);
            }
            Directive::Reorder(list) => {
                let slots: Vec<usize> = list.iter().map(|v| active(&order, v)).collect::<Result<_>>()?;
                let mut sorted = slots.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != slots.len() {
                    return Err(Error::validation(format!("{d}: variable listed twice")));
                }
                match list.len() {
                    0 | 1 => return Err(Error::validation(format!("{d}: needs at least two variables"))),
                    2 => order.swap(slots[0], slots[1]),
                    _ => {
                        for (slot, v) in sorted.iter().zip(list) {
                            order[*slot] = v.clone();
                        }
                    }
                }
            }
            Directive::Distribute { var, dim } => {
                active(&order, var)?;
                let info = &vars[var];
                let pieces = match &info.derivation {
                    Derivation::Divide { parent, pieces, outer: true } => {
                        if vars[parent].derivation != Derivation::Original {
                            return Err(Error::Unsupported(format!(
                                "distributing {var}: only divisions of original index variables \
                                 are distributed by coordinate value (divide the non-zeros of \
                                 {parent} with posdivide instead)"
                            )));
                        }
                        *pieces
                    }
                    Derivation::PosDivide { pieces, outer: true, .. } => *pieces,
                    _ => {
                        return Err(Error::validation(format!(
                            "only the outer variable of divide or posdivide can be distributed, not {var}"
                        )))
                    }
                };
                let grid_dim = match dim {
                    Some((_, name)) => machine
                        .dim_index(name)
                        .ok_or_else(|| Error::validation(format!("unknown machine dimension {name}")))?,
                    None => (0..machine.dims().len())
                        .find(|g| !distributed.iter().any(|d: &DistributedVar| d.grid_dim == *g))
                        .ok_or_else(|| {
                            Error::validation(format!(
                                "distributing {var}: more distributed variables than grid dimensions"
                            ))
                        })?,
                };
                if distributed.iter().any(|d| d.grid_dim == grid_dim) {
                    return Err(Error::validation(format!(
                        "machine dimension {} is already distributed over",
                        machine.dims()[grid_dim].0
                    )));
                }
                if distributed.iter().any(|d| d.var == *var) {
                    return Err(Error::validation(format!("{var} is distributed twice")));
                }
                if pieces != machine.extent(grid_dim) {
                    return Err(Error::validation(format!(
                        "{var} has {pieces} pieces but machine dimension {} has {} workers",
                        machine.dims()[grid_dim].0,
                        machine.extent(grid_dim)
                    )));
                }
                distributed.push(DistributedVar { var: var.clone(), grid_dim, pieces });
            }
            Directive::Communicate { tensors, at } => {
                for t in tensors {
                    if !stmt.tensors().contains(&t.as_str()) {
                        return Err(Error::validation(format!("communicate names unknown tensor {t}")));
                    }
                }
                communicate.push((tensors.clone(), at.clone()));
            }
            Directive::Parallelize { var, annotation } => {
                parallel.push((var.clone(), annotation.clone()));
            }
        }
    }

    // Distributed loops must be the outermost loops.
    let mut positions: Vec<usize> = distributed
        .iter()
        .map(|d| active(&order, &d.var))
        .collect::<Result<_>>()?;
    positions.sort_unstable();
    if positions.iter().enumerate().any(|(k, &p)| k != p) {
        return Err(Error::validation(
            "distributed loops must be the outermost loops of the nest (use reorder)",
        ));
    }
    distributed.sort_by_key(|d| order.iter().position(|o| *o == d.var));
    let positional: Vec<&DistributedVar> = distributed
        .iter()
        .filter(|d| vars[&d.var].position_tensor.is_some())
        .collect();
    if !positional.is_empty() && distributed.len() > 1 {
        return Err(Error::Unsupported(
            "a distributed position loop must be the only distributed loop".into(),
        ));
    }
    for (_, at) in &communicate {
        if !distributed.iter().any(|d| d.var == *at) {
            return Err(Error::validation(format!(
                "communicate at {at}: the target loop must be distributed"
            )));
        }
    }
    for (v, a) in &parallel {
        active(&order, v)?;
        info!("parallelize({v}, {a}) recorded; leaf loops run on one thread per worker");
    }
    let mut leaf_order: Vec<String> = Vec::new();
    for v in &order {
        for o in &vars[v].originals {
            if !leaf_order.contains(o) {
                leaf_order.push(o.clone());
            }
        }
    }
    Ok(LoopNest { order, vars, distributed, communicate, parallel, leaf_order })
}

fn check_position_split(
    stmt: &TinStatement,
    formats: &BTreeMap<String, FormatSpec>,
    tensor: &str,
    originals: &[String],
) -> Result<()> {
    if stmt.terms().len() > 1 {
        return Err(Error::Unsupported(
            "union iteration over a sum of terms is incompatible with non-zero splitting".into(),
        ));
    }
    let access = stmt
        .inputs()
        .find(|a| a.tensor == tensor)
        .ok_or_else(|| Error::validation(format!("position split over {tensor}, which is not an input")))?;
    if let Some(v) = originals.iter().find(|v| !access.vars.contains(v)) {
        return Err(Error::validation(format!(
            "position split over {tensor}, which is not accessed by {v}"
        )));
    }
    position_level(access, &formats[tensor], originals).map(|_| ())
}

/// Storage position of the level whose non-zeros are split when the
/// variables `originals` are strip-mined over `access`'s tensor.
pub(crate) fn position_level(
    access: &crate::frontend::tin::Access,
    format: &FormatSpec,
    originals: &[String],
) -> Result<usize> {
    let storage: Vec<&String> = format.mode_order().iter().map(|&m| &access.vars[m]).collect();
    if storage.len() < originals.len() || storage[..originals.len()].iter().zip(originals).any(|(a, b)| *a != b) {
        return Err(Error::validation(format!(
            "position split variables {originals:?} must be the outermost stored dimensions of {}",
            access.tensor
        )));
    }
    let s = originals.len() - 1;
    if format.kinds()[s] != LevelKind::Compressed {
        return Err(Error::validation(format!(
            "position split over {} ends at a dense level",
            access.tensor
        )));
    }
    Ok(s)
}

fn check_concordance(
    stmt: &TinStatement,
    nest: &LoopNest,
    formats: &BTreeMap<String, FormatSpec>,
) -> Result<()> {
    for a in stmt.inputs() {
        let f = &formats[&a.tensor];
        if !f.has_compressed() {
            continue;
        }
        let ranks: Vec<usize> = f
            .mode_order()
            .iter()
            .map(|&m| nest.leaf_order.iter().position(|v| *v == a.vars[m]).expect("var in nest"))
            .collect();
        if ranks.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::validation(format!(
                "loop order {} does not follow the storage order of {} ({})",
                nest.leaf_order.join(","),
                a.tensor,
                f
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::tin::parse_tin;

    fn formats(pairs: &[(&str, &str)]) -> BTreeMap<String, FormatSpec> {
        pairs.iter().map(|(t, f)| (t.to_string(), f.parse().unwrap())).collect()
    }

    fn spmv() -> (TinStatement, BTreeMap<String, FormatSpec>) {
        (
            parse_tin("a(i) = B(i,j) * c(j)").unwrap(),
            formats(&[("a", "d"), ("B", "ds"), ("c", "d")]),
        )
    }

    #[test]
    fn row_schedule() {
        let (s, f) = spmv();
        let sched: Schedule = "divide(i, io, ii, M.x); distribute(io); communicate({a,B,c}, io); parallelize(ii, cpu)"
            .parse()
            .unwrap();
        let nest = validate_schedule(&s, &sched, &f, &MachineGrid::line(2).unwrap()).unwrap();
        assert_eq!(nest.order, vec!["io", "ii", "j"]);
        assert_eq!(nest.distributed, vec![DistributedVar { var: "io".into(), grid_dim: 0, pieces: 2 }]);
        assert_eq!(nest.leaf_order, vec!["i", "j"]);
    }

    #[test]
    fn nonzero_schedule() {
        let (s, f) = spmv();
        let sched: Schedule = "fuse(i, j, f); posdivide(f, fo, fi, B, M.x); distribute(fo)".parse().unwrap();
        let nest = validate_schedule(&s, &sched, &f, &MachineGrid::line(3).unwrap()).unwrap();
        assert_eq!(nest.order, vec!["fo", "fi"]);
        assert_eq!(nest.info("fo").position_tensor.as_deref(), Some("B"));
        assert_eq!(nest.info("fo").originals, vec!["i", "j"]);
    }

    #[test]
    fn double_reorder_is_identity() {
        let (s, f) = spmv();
        let sched: Schedule = "reorder(i, j); reorder(i, j)".parse().unwrap();
        let nest = derive(&s, &sched, &f, &MachineGrid::line(1).unwrap()).unwrap();
        assert_eq!(nest.order, vec!["i", "j"]);
        let once: Schedule = "reorder(i, j)".parse().unwrap();
        assert!(validate_schedule(&s, &once, &f, &MachineGrid::line(1).unwrap()).is_err());
    }

    #[test]
    fn rejected_schedules() {
        let (s, f) = spmv();
        let m = MachineGrid::line(2).unwrap();
        let bad = |text: &str| validate_schedule(&s, &text.parse().unwrap(), &f, &m).unwrap_err();
        assert!(bad("divide(i, i, ii, M.x)").to_string().contains("cyclic"));
        assert!(bad("divide(i, io, ii, M.x); distribute(ii)").is_validation());
        assert!(bad("split(i, io, ii, 4); distribute(io)").is_validation());
        assert!(bad("fuse(i, j, f); posdivide(f, fo, fi, c, M.x)").is_validation());
        assert!(bad("divide(i, io, ii, 3); distribute(io)").is_validation());
        assert!(bad("divide(i, io, ii, M.q)").is_validation());
        assert!(bad("divide(i, io, ii, M.x); reorder(io, ii); distribute(io)").is_validation());
        assert!(bad("divide(i, io, ii, M.x); distribute(io); communicate({a,Q}, io)").is_validation());
        assert!(bad("divide(i, io, ii, M.x); distribute(io); communicate(a, ii)").is_validation());
        assert!(bad("fuse(j, i, f)").is_validation());

        let add = parse_tin("A(i,j) = B(i,j) + C(i,j)").unwrap();
        let fa = formats(&[("A", "ds"), ("B", "ds"), ("C", "ds")]);
        let e = validate_schedule(
            &add,
            &"fuse(i, j, f); posdivide(f, fo, fi, B, M.x); distribute(fo)".parse().unwrap(),
            &fa,
            &m,
        )
        .unwrap_err();
        assert!(e.to_string().contains("incompatible"));
    }

    #[test]
    fn missing_format() {
        let s = parse_tin("a(i) = B(i,j) * c(j)").unwrap();
        let f = formats(&[("a", "d"), ("B", "ds")]);
        let e = validate_schedule(&s, &Schedule::default(), &f, &MachineGrid::line(1).unwrap()).unwrap_err();
        assert!(e.to_string().contains("no format for tensor c"));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!("divide(i, io)".parse::<Schedule>(), Err(Error::Parse { .. })));
        assert!(matches!("frobnicate(i)".parse::<Schedule>(), Err(Error::Parse { .. })));
        assert!(matches!("split(i, io, ii, 0)".parse::<Schedule>(), Err(Error::Parse { .. })));
        assert!(matches!("divide(i, io, ii, M.x".parse::<Schedule>(), Err(Error::Parse { .. })));
    }

    #[test]
    fn print_parse_round_trip() {
        let text = "divide(i, io, ii, M.x); distribute(io, M.x); communicate({a, B, c}, io); \
                    fuse(ii, j, f); possplit(f, fo, fi, B, 16); reorder(fo, fi); parallelize(fi, cpu); \
                    split(k, ko, ki, 4); posdivide(g, go, gi, C, 3)";
        let s: Schedule = text.parse().unwrap();
        assert_eq!(s.directives.len(), 9);
        assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
        assert_eq!(s.to_string(), text);
    }
}
