//! Dense reference evaluation for verification.
//!
//! Everything here works on fully materialized arrays and brute-force loops
//! over the whole iteration space, sharing nothing with the planner or the
//! runtime beyond the statement and tensor types.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::frontend::{FormatSpec, TinStatement};
use crate::space::IndexSpace;
use crate::tensor::SparseTensor;

/// Row-major dense array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        DenseTensor { dims, data: vec![0.0; n] }
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.data[self.index(coords)]
    }
}

/// Materialize every stored entry of `tensor`.
pub fn densify(tensor: &SparseTensor) -> DenseTensor {
    let mut d = DenseTensor::zeros(tensor.dims().to_vec());
    for (coords, v) in tensor.iterate_leaves() {
        let k = d.index(&coords);
        d.data[k] += v;
    }
    d
}

/// Pack the non-zeros of `dense` in `format`.
pub fn sparsify(dense: &DenseTensor, format: &FormatSpec) -> Result<SparseTensor> {
    let space = IndexSpace::new(dense.dims.clone());
    let entries = dense
        .data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(k, &v)| (space.delinearize(k), v));
    SparseTensor::from_entries(dense.dims.clone(), format, entries)
}

/// Visit every point of the box `extents` in lexicographic order.
fn odometer(extents: &[usize], mut f: impl FnMut(&[usize])) {
    if extents.contains(&0) {
        return;
    }
    let mut point = vec![0usize; extents.len()];
    loop {
        f(&point);
        let mut k = extents.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            point[k] += 1;
            if point[k] < extents[k] {
                break;
            }
            point[k] = 0;
        }
    }
}

struct Layout {
    vars: Vec<String>,
    extents: Vec<usize>,
}

impl Layout {
    fn of(stmt: &TinStatement, dims: &BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let vars = stmt.vars();
        let known = stmt.var_extents(dims)?;
        let extents = vars.iter().map(|v| known[v]).collect();
        Ok(Layout { vars, extents })
    }

    fn slots(&self, vars: &[String]) -> Vec<usize> {
        vars.iter()
            .map(|v| self.vars.iter().position(|w| w == v).expect("statement variable"))
            .collect()
    }
}

fn pick(point: &[usize], slots: &[usize], buf: &mut Vec<usize>) {
    buf.clear();
    buf.extend(slots.iter().map(|&s| point[s]));
}

/// Evaluate `stmt` densely: the output is the sum over every point of the
/// iteration space of each term's product.
pub fn dense_eval(stmt: &TinStatement, inputs: &BTreeMap<String, DenseTensor>) -> Result<DenseTensor> {
    let dims: BTreeMap<String, Vec<usize>> = inputs.iter().map(|(k, v)| (k.clone(), v.dims.clone())).collect();
    for a in stmt.inputs() {
        if !inputs.contains_key(&a.tensor) {
            return Err(Error::validation(format!("no data for tensor {}", a.tensor)));
        }
    }
    let layout = Layout::of(stmt, &dims)?;
    let out_slots = layout.slots(&stmt.lhs().vars);
    let out_dims: Vec<usize> = out_slots.iter().map(|&s| layout.extents[s]).collect();
    let mut out = DenseTensor::zeros(out_dims);
    let terms: Vec<Vec<(&DenseTensor, Vec<usize>)>> = stmt
        .terms()
        .iter()
        .map(|term| term.iter().map(|a| (&inputs[&a.tensor], layout.slots(&a.vars))).collect())
        .collect();
    let mut buf = Vec::new();
    odometer(&layout.extents, |point| {
        let mut total = 0.0;
        for term in &terms {
            let mut prod = 1.0;
            for (t, slots) in term {
                pick(point, slots, &mut buf);
                prod *= t.get(&buf);
            }
            total += prod;
        }
        pick(point, &out_slots, &mut buf);
        let k = out.index(&buf);
        out.data[k] += total;
    });
    Ok(out)
}

/// Output coordinates a sparse evaluation of `stmt` writes: those reached by
/// some term whose every operand stores an entry there.
pub fn structural_union(stmt: &TinStatement, inputs: &BTreeMap<String, SparseTensor>) -> Result<BTreeSet<Vec<usize>>> {
    let dims: BTreeMap<String, Vec<usize>> = inputs.iter().map(|(k, v)| (k.clone(), v.dims().to_vec())).collect();
    let layout = Layout::of(stmt, &dims)?;
    let stored: BTreeMap<&str, DenseTensor> = stmt
        .inputs()
        .map(|a| {
            let t = &inputs[&a.tensor];
            let mut mask = DenseTensor::zeros(t.dims().to_vec());
            for (coords, _) in t.iterate_leaves() {
                let k = mask.index(&coords);
                mask.data[k] = 1.0;
            }
            (a.tensor.as_str(), mask)
        })
        .collect();
    let terms: Vec<Vec<(&DenseTensor, Vec<usize>)>> = stmt
        .terms()
        .iter()
        .map(|term| term.iter().map(|a| (&stored[a.tensor.as_str()], layout.slots(&a.vars))).collect())
        .collect();
    let out_slots = layout.slots(&stmt.lhs().vars);
    let mut out = BTreeSet::new();
    let mut buf = Vec::new();
    odometer(&layout.extents, |point| {
        let hit = terms.iter().any(|term| {
            term.iter().all(|(m, slots)| {
                pick(point, slots, &mut buf);
                m.get(&buf) != 0.0
            })
        });
        if hit {
            pick(point, &out_slots, &mut buf);
            out.insert(buf.clone());
        }
    });
    Ok(out)
}

/// Largest `|actual - expected| / max(1, |expected|)` over all coordinates.
pub fn max_relative_error(actual: &DenseTensor, expected: &DenseTensor) -> f64 {
    assert_eq!(actual.dims, expected.dims, "comparing tensors of different shapes");
    actual
        .data
        .iter()
        .zip(&expected.data)
        .map(|(a, e)| (a - e).abs() / e.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_tin;
    use proptest::prelude::*;

    #[test]
    fn odometer_visits_box_in_order() {
        let mut seen = Vec::new();
        odometer(&[2, 3], |p| seen.push(p.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[5], vec![1, 2]);
        let mut none = 0;
        odometer(&[2, 0], |_| none += 1);
        assert_eq!(none, 0);
    }

    #[test]
    fn dense_spmv() {
        let stmt = parse_tin("a(i) = B(i,j) * c(j)").unwrap();
        let b = DenseTensor { dims: vec![2, 2], data: vec![1.0, 2.0, 0.0, 3.0] };
        let c = DenseTensor { dims: vec![2], data: vec![1.0, 1.0] };
        let inputs = [("B".to_string(), b), ("c".to_string(), c)].into_iter().collect();
        assert_eq!(dense_eval(&stmt, &inputs).unwrap().data, vec![3.0, 3.0]);
    }

    #[test]
    fn structure_of_sum_is_union() {
        let stmt = parse_tin("A(i,j) = B(i,j) + C(i,j)").unwrap();
        let b = SparseTensor::from_entries(vec![2, 2], &FormatSpec::csr(), vec![(vec![0, 0], 1.0)]).unwrap();
        let c = SparseTensor::from_entries(vec![2, 2], &FormatSpec::csr(), vec![(vec![1, 1], 1.0)]).unwrap();
        let inputs = [("B".to_string(), b), ("C".to_string(), c)].into_iter().collect();
        let s = structural_union(&stmt, &inputs).unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![vec![0, 0], vec![1, 1]]);
    }

    proptest! {
        #[test]
        fn densify_sparsify_round_trip(entries in proptest::collection::btree_map((0usize..5, 0usize..4), -9i32..10, 0..12)) {
            let list: Vec<(Vec<usize>, f64)> = entries
                .iter()
                .filter(|(_, &v)| v != 0)
                .map(|(&(i, j), &v)| (vec![i, j], v as f64))
                .collect();
            for f in ["ds", "ds:1,0", "ss", "dd"] {
                let format: FormatSpec = f.parse().unwrap();
                let t = SparseTensor::from_entries(vec![5, 4], &format, list.clone()).unwrap();
                let d = densify(&t);
                let back = sparsify(&d, &format).unwrap();
                prop_assert_eq!(densify(&back), d);
            }
        }
    }
}
