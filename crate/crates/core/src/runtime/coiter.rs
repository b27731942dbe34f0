//! Leaf co-iteration: a recursive walk over the original index variables
//! that intersects compressed levels within a term and unions terms.

use crate::error::{Error, Result};
use crate::frontend::LevelKind;
use crate::level::{LevelPartition, TensorPartitionBundle};
use crate::partition::Partition;
use crate::space::CoordRange;
use crate::tensor::{LevelStorage, SparseTensor};

/// Sorted-list intersection of `(coordinate, position)` runs.
pub fn intersect_runs(a: &[(usize, usize)], b: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1, b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Sorted, deduplicated union of coordinate lists.
pub fn union_coords(lists: &[Vec<usize>]) -> Vec<usize> {
    let mut out: Vec<usize> = lists.iter().flatten().copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn mask(part: &Partition, color: usize) -> Vec<bool> {
    let mut m = vec![false; part.parent().len()];
    for &i in part.subset(color) {
        m[i] = true;
    }
    m
}

#[derive(Debug, Clone)]
enum HeldLevel {
    Dense(Vec<bool>),
    Compressed { pos: Vec<bool>, crd: Vec<bool> },
}

/// What one worker holds of one tensor.
#[derive(Debug, Clone)]
pub(crate) struct Held {
    levels: Vec<HeldLevel>,
    vals: Vec<bool>,
}

impl Held {
    pub(crate) fn of(bundle: &TensorPartitionBundle, color: usize) -> Held {
        Held {
            levels: bundle
                .levels
                .iter()
                .map(|lp| match lp {
                    LevelPartition::Dense { positions } => HeldLevel::Dense(mask(positions, color)),
                    LevelPartition::Compressed { pos, crd } => HeldLevel::Compressed {
                        pos: mask(pos, color),
                        crd: mask(crd, color),
                    },
                })
                .collect(),
            vals: mask(&bundle.vals, color),
        }
    }
}

/// One tensor access of the statement as the walk sees it.
#[derive(Debug, Clone)]
pub(crate) struct Operand<'a> {
    pub name: &'a str,
    pub tensor: &'a SparseTensor,
    pub term: usize,
    /// All-dense tensors are read at the leaf instead of iterated.
    pub random: bool,
    /// Leaf depth at which each level resolves.
    resolve_at: Vec<usize>,
    /// Leaf variable index of each stored mode, per level.
    level_vars: Vec<Vec<usize>>,
    held: Option<Held>,
    /// Position ranges per level this operand is limited to.
    limits: Option<Vec<CoordRange>>,
}

impl<'a> Operand<'a> {
    /// `vars[m]` is the leaf variable index of tensor mode `m`.
    pub(crate) fn new(name: &'a str, tensor: &'a SparseTensor, term: usize, vars: &[usize]) -> Self {
        let mut running = 0;
        let mut resolve_at = Vec::new();
        let mut level_vars = Vec::new();
        for level in tensor.levels() {
            let lv: Vec<usize> = level.modes.iter().map(|&m| vars[m]).collect();
            running = lv.iter().copied().fold(running, usize::max);
            resolve_at.push(running);
            level_vars.push(lv);
        }
        Operand {
            name,
            tensor,
            term,
            random: !tensor.has_compressed(),
            resolve_at,
            level_vars,
            held: None,
            limits: None,
        }
    }

    pub(crate) fn with_held(mut self, held: Held) -> Self {
        self.held = Some(held);
        self
    }

    pub(crate) fn with_limits(mut self, limits: Vec<CoordRange>) -> Self {
        self.limits = Some(limits);
        self
    }

    fn within_limits(&self, l: usize, p: usize) -> bool {
        match &self.limits {
            Some(lim) if l < lim.len() => lim[l].contains(p),
            _ => true,
        }
    }

    /// Stored `(coordinate, position)` pairs of compressed level `l` under
    /// `parent`, limited to `bounds`. `None` when the operand is absent.
    fn segment(&self, l: usize, parent: usize, bounds: CoordRange, color: usize) -> Result<Option<Vec<(usize, usize)>>> {
        let LevelStorage::Compressed { pos, crd } = &self.tensor.level(l).storage else {
            return Err(Error::Internal("segment of a dense level".into()));
        };
        let (pos_held, crd_held) = match &self.held {
            Some(h) => match &h.levels[l] {
                HeldLevel::Compressed { pos, crd } => (Some(pos), Some(crd)),
                HeldLevel::Dense(_) => return Err(Error::Internal("held kinds differ from storage".into())),
            },
            None => (None, None),
        };
        if let Some(ph) = pos_held {
            if !ph[parent] {
                if l == 0 {
                    return Ok(None);
                }
                return Err(Error::Closure {
                    tensor: self.name.to_string(),
                    region: format!("[{l}].pos"),
                    index: parent,
                    color,
                });
            }
        }
        let r = pos.values()[parent];
        if r.is_empty() || bounds.is_empty() {
            return Ok(Some(Vec::new()));
        }
        let (lo, hi) = (r.lo as usize, r.hi as usize + 1);
        let seg = &crd.values()[lo..hi];
        let a = lo + seg.partition_point(|&c| (c as i64) < bounds.lo);
        let b = lo + seg.partition_point(|&c| (c as i64) <= bounds.hi);
        let mut out = Vec::with_capacity(b.saturating_sub(a));
        for p in a..b {
            if !self.within_limits(l, p) {
                continue;
            }
            if let Some(ch) = crd_held {
                if !ch[p] {
                    continue;
                }
            }
            out.push((crd.values()[p], p));
        }
        Ok(Some(out))
    }
}

/// Receives every product the walk computes.
pub(crate) trait Sink {
    fn contribute(&mut self, term: usize, coords: &[usize], value: f64, operands: &[Operand], paths: &[Vec<usize>]) -> Result<()>;
}

/// How an alive term iterates the current variable.
enum TermIter {
    Dense,
    /// Coordinates and, per coordinate, one position per compressed operand.
    Sparse { ops: Vec<usize>, coords: Vec<usize>, positions: Vec<usize> },
    Absent,
}

/// A walk over one worker's iteration space.
pub(crate) struct Walk<'a> {
    pub operands: Vec<Operand<'a>>,
    pub terms: usize,
    /// Coordinate bounds per leaf variable.
    pub bounds: Vec<CoordRange>,
    pub color: usize,
}

struct State {
    coords: Vec<usize>,
    paths: Vec<Vec<usize>>,
    /// First unheld dense position of a random-access operand, as (level, position).
    missing: Vec<Option<(usize, usize)>>,
}

impl Walk<'_> {
    pub(crate) fn run(&self, sink: &mut impl Sink) -> Result<()> {
        if self.terms > 64 {
            return Err(Error::Unsupported("more than 64 terms".into()));
        }
        let mut state = State {
            coords: vec![0; self.bounds.len()],
            paths: vec![Vec::new(); self.operands.len()],
            missing: vec![None; self.operands.len()],
        };
        let all: u64 = if self.terms == 64 { u64::MAX } else { (1u64 << self.terms) - 1 };
        self.visit(0, all, &mut state, sink)
    }

    fn visit(&self, d: usize, alive: u64, st: &mut State, sink: &mut impl Sink) -> Result<()> {
        if d == self.bounds.len() {
            return self.leaf(alive, st, sink);
        }
        let bounds = self.bounds[d];
        let mut iters: Vec<TermIter> = Vec::with_capacity(self.terms);
        for t in 0..self.terms {
            if alive & (1 << t) == 0 {
                iters.push(TermIter::Absent);
                continue;
            }
            let mut ops = Vec::new();
            let mut runs: Vec<Vec<(usize, usize)>> = Vec::new();
            let mut absent = false;
            for (k, op) in self.operands.iter().enumerate() {
                if op.term != t || op.random {
                    continue;
                }
                let l = st.paths[k].len();
                if l >= op.resolve_at.len() || op.resolve_at[l] != d || op.tensor.level(l).kind() != LevelKind::Compressed {
                    continue;
                }
                let parent = st.paths[k].last().copied().unwrap_or(0);
                match op.segment(l, parent, bounds, self.color)? {
                    Some(run) => {
                        ops.push(k);
                        runs.push(run);
                    }
                    None => absent = true,
                }
            }
            if absent {
                iters.push(TermIter::Absent);
            } else if ops.is_empty() {
                iters.push(TermIter::Dense);
            } else {
                let n = ops.len();
                let mut coords: Vec<usize> = runs[0].iter().map(|r| r.0).collect();
                let mut positions: Vec<usize> = runs[0].iter().map(|r| r.1).collect();
                for (k, run) in runs.iter().enumerate().skip(1) {
                    let mut nc = Vec::new();
                    let mut np = Vec::new();
                    let current: Vec<(usize, usize)> = coords.iter().copied().zip(0..).collect();
                    for (c, row, p) in intersect_runs(&current, run) {
                        nc.push(c);
                        np.extend_from_slice(&positions[row * k..row * k + k]);
                        np.push(p);
                    }
                    coords = nc;
                    positions = np;
                }
                debug_assert_eq!(positions.len(), coords.len() * n);
                iters.push(TermIter::Sparse { ops, coords, positions });
            }
        }
        let any_dense = iters.iter().any(|i| matches!(i, TermIter::Dense));
        let candidates: Vec<usize> = if any_dense {
            bounds.iter().collect()
        } else {
            let lists: Vec<Vec<usize>> = iters
                .iter()
                .filter_map(|i| match i {
                    TermIter::Sparse { coords, .. } => Some(coords.clone()),
                    _ => None,
                })
                .collect();
            union_coords(&lists)
        };
        let mut cursors = vec![0usize; self.terms];
        for x in candidates {
            let mut next = 0u64;
            let mut pushed: Vec<usize> = Vec::new();
            st.coords[d] = x;
            for (t, it) in iters.iter().enumerate() {
                match it {
                    TermIter::Absent => continue,
                    TermIter::Dense => {}
                    TermIter::Sparse { ops, coords, positions } => {
                        let c = &mut cursors[t];
                        while *c < coords.len() && coords[*c] < x {
                            *c += 1;
                        }
                        if *c >= coords.len() || coords[*c] != x {
                            continue;
                        }
                        let n = ops.len();
                        for (j, &k) in ops.iter().enumerate() {
                            st.paths[k].push(positions[*c * n + j]);
                            pushed.push(k);
                        }
                    }
                }
                if self.resolve_dense(t, d, st, &mut pushed) {
                    next |= 1 << t;
                }
            }
            if next != 0 {
                self.visit(d + 1, next, st, sink)?;
            }
            for k in pushed {
                st.paths[k].pop();
                if st.missing[k].is_some_and(|(l, _)| l >= st.paths[k].len()) {
                    st.missing[k] = None;
                }
            }
        }
        Ok(())
    }

    /// Resolve dense levels of term `t`'s operands that become available at
    /// depth `d`. Returns false when the term dies.
    fn resolve_dense(&self, t: usize, d: usize, st: &mut State, pushed: &mut Vec<usize>) -> bool {
        let mut ok = true;
        for (k, op) in self.operands.iter().enumerate() {
            if op.term != t {
                continue;
            }
            loop {
                let l = st.paths[k].len();
                if l >= op.resolve_at.len() || op.resolve_at[l] != d {
                    break;
                }
                let LevelStorage::Dense { dom } = &op.tensor.level(l).storage else { break };
                let parent = st.paths[k].last().copied().unwrap_or(0);
                let local: Vec<usize> = op.level_vars[l].iter().map(|&v| st.coords[v]).collect();
                let p = parent * dom.len() + dom.linearize(&local).expect("coordinate within dimension");
                st.paths[k].push(p);
                pushed.push(k);
                if !op.within_limits(l, p) {
                    ok = false;
                }
                let held = match &op.held {
                    Some(h) => match &h.levels[l] {
                        HeldLevel::Dense(m) => m[p],
                        HeldLevel::Compressed { .. } => true,
                    },
                    None => true,
                };
                if !held {
                    if op.random {
                        if st.missing[k].is_none() {
                            st.missing[k] = Some((l, p));
                        }
                    } else {
                        ok = false;
                    }
                }
            }
        }
        ok
    }

    fn leaf(&self, alive: u64, st: &mut State, sink: &mut impl Sink) -> Result<()> {
        for t in 0..self.terms {
            if alive & (1 << t) == 0 {
                continue;
            }
            let mut value = 1.0;
            for (k, op) in self.operands.iter().enumerate() {
                if op.term != t {
                    continue;
                }
                if let Some((l, index)) = st.missing[k] {
                    return Err(Error::Closure {
                        tensor: op.name.to_string(),
                        region: format!("[{l}].dom"),
                        index,
                        color: self.color,
                    });
                }
                let p = *st.paths[k].last().expect("every tensor has a level");
                if let Some(h) = &op.held {
                    if !h.vals[p] {
                        return Err(Error::Closure {
                            tensor: op.name.to_string(),
                            region: ".vals".into(),
                            index: p,
                            color: self.color,
                        });
                    }
                }
                value *= op.tensor.vals().values()[p];
            }
            sink.contribute(t, &st.coords, value, &self.operands, &st.paths)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersect_runs_matches_common_coordinates() {
        let a = [(0, 10), (2, 11), (5, 12), (7, 13)];
        let b = [(2, 20), (3, 21), (7, 22)];
        assert_eq!(intersect_runs(&a, &b), vec![(2, 11, 20), (7, 13, 22)]);
        assert!(intersect_runs(&a, &[]).is_empty());
    }

    #[test]
    fn union_sorts_and_dedups() {
        assert_eq!(union_coords(&[vec![1, 4], vec![0, 4, 9], vec![]]), vec![0, 1, 4, 9]);
    }
}
