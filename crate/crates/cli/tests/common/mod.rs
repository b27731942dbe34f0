//! Random kernel instances shared by the integration test targets.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sptdist::frontend::{parse_schedule, parse_tdn, parse_tin, FormatSpec, MachineGrid, TdnStatement, TinStatement};
use sptdist::planner::{plan, Plan};
use sptdist::runtime::{execute, ExecMode, Execution};
use sptdist::{Result, SparseTensor};

pub struct Kernel {
    pub name: &'static str,
    pub expr: &'static str,
    pub formats: &'static [(&'static str, &'static str)],
    /// Inputs generated with random sparsity; the rest are filled densely.
    pub sparse: &'static [&'static str],
    pub max_extent: usize,
    /// Directives fusing the leading variables of `B` into `f`.
    pub fuse: Option<&'static str>,
    /// Products computed per stored value of `B`, given the variable extents.
    pub work_per_nonzero: fn(&BTreeMap<String, usize>) -> usize,
}

pub const KERNELS: &[Kernel] = &[
    Kernel {
        name: "SpMV",
        expr: "a(i) = B(i,j) * c(j)",
        formats: &[("a", "d"), ("B", "ds"), ("c", "d")],
        sparse: &["B"],
        max_extent: 64,
        fuse: Some("fuse(i, j, f)"),
        work_per_nonzero: |_| 1,
    },
    Kernel {
        name: "SpMM",
        expr: "A(i,j) = B(i,k) * C(k,j)",
        formats: &[("A", "dd"), ("B", "ds"), ("C", "dd")],
        sparse: &["B"],
        max_extent: 64,
        fuse: Some("fuse(i, k, f)"),
        work_per_nonzero: |e| e["j"],
    },
    Kernel {
        name: "SpAdd3",
        expr: "A(i,j) = B(i,j) + C(i,j) + D(i,j)",
        formats: &[("A", "ds"), ("B", "ds"), ("C", "ds"), ("D", "ds")],
        sparse: &["B", "C", "D"],
        max_extent: 64,
        fuse: None,
        work_per_nonzero: |_| 1,
    },
    Kernel {
        name: "SDDMM",
        expr: "A(i,j) = B(i,j) * C(i,k) * D(k,j)",
        formats: &[("A", "ds"), ("B", "ds"), ("C", "dd"), ("D", "dd")],
        sparse: &["B"],
        max_extent: 64,
        fuse: Some("fuse(i, j, f)"),
        work_per_nonzero: |e| e["k"],
    },
    Kernel {
        name: "SpTTV",
        expr: "A(i,j) = B(i,j,k) * c(k)",
        formats: &[("A", "ds"), ("B", "dss"), ("c", "d")],
        sparse: &["B"],
        max_extent: 32,
        fuse: Some("fuse(i, j, g); fuse(g, k, f)"),
        work_per_nonzero: |_| 1,
    },
    Kernel {
        name: "SpMTTKRP",
        expr: "A(i,l) = B(i,j,k) * C(j,l) * D(k,l)",
        formats: &[("A", "dd"), ("B", "dss"), ("C", "dd"), ("D", "dd")],
        sparse: &["B"],
        max_extent: 32,
        fuse: Some("fuse(i, j, g); fuse(g, k, f)"),
        work_per_nonzero: |e| e["l"],
    },
];

pub const PIECES: &[usize] = &[1, 2, 3, 4, 7];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Rows,
    NonZeros,
}

impl Kernel {
    pub fn stmt(&self) -> TinStatement {
        parse_tin(self.expr).unwrap()
    }

    pub fn formats(&self) -> BTreeMap<String, FormatSpec> {
        self.formats.iter().map(|(t, f)| (t.to_string(), f.parse().unwrap())).collect()
    }

    pub fn splits(&self) -> Vec<Split> {
        match self.fuse {
            Some(_) => vec![Split::Rows, Split::NonZeros],
            None => vec![Split::Rows],
        }
    }

    pub fn schedule(&self, split: Split) -> String {
        match split {
            Split::Rows => "divide(i, io, ii, M.x); distribute(io)".to_string(),
            Split::NonZeros => format!("{}; posdivide(f, fo, fi, B, M.x); distribute(fo)", self.fuse.unwrap()),
        }
    }

    /// Resident distributions matching `split`: the split tensor follows the
    /// schedule, tensors indexed by `i` are blocked by rows and the rest are
    /// replicated.
    pub fn tdn_text(&self, split: Split) -> Vec<String> {
        let stmt = self.stmt();
        let mut out = Vec::new();
        for t in stmt.tensors() {
            let vars = &stmt.access(t).unwrap().vars;
            let dims = vars.join(",");
            let text = if t == "B" && split == Split::NonZeros {
                let fused = if vars.len() == 3 { "i,j,k" } else { &dims };
                format!("B({dims}) fuse({fused}->f) onto M(~f)")
            } else if vars.iter().any(|v| v == "i") {
                format!("{t}({dims}) onto M(i)")
            } else {
                format!("{t}({dims}) onto M(rep)")
            };
            out.push(text);
        }
        out
    }

    pub fn tdns(&self, split: Split) -> BTreeMap<String, TdnStatement> {
        self.tdn_text(split)
            .iter()
            .map(|s| {
                let t = parse_tdn(s).unwrap();
                (t.tensor.clone(), t)
            })
            .collect()
    }
}

pub struct Instance {
    pub kernel: &'static Kernel,
    pub seed: u64,
    pub integer: bool,
    pub extents: BTreeMap<String, usize>,
    pub tensors: BTreeMap<String, SparseTensor>,
}

fn odometer(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in dims {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

impl Instance {
    /// Deterministic instance `seed` of `kernel`: extents in
    /// `1..=max_extent`, sparse inputs at a density in [1%, 10%], odd seeds
    /// use small integers and even seeds uniform floats.
    pub fn generate(kernel: &'static Kernel, seed: u64) -> Self {
        let salt = kernel.name.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (salt << 20));
        let stmt = kernel.stmt();
        let integer = seed % 2 == 1;
        let extents: BTreeMap<String, usize> =
            stmt.vars().into_iter().map(|v| (v, rng.gen_range(1..=kernel.max_extent))).collect();
        let formats = kernel.formats();
        let mut tensors = BTreeMap::new();
        for a in stmt.inputs() {
            let dims: Vec<usize> = a.vars.iter().map(|v| extents[v]).collect();
            let sparse = kernel.sparse.contains(&a.tensor.as_str());
            let density = rng.gen_range(0.01..=0.10);
            let mut entries = Vec::new();
            for point in odometer(&dims) {
                if sparse && !rng.gen_bool(density) {
                    continue;
                }
                let v = if integer {
                    let m = rng.gen_range(1..=9) as f64;
                    if rng.gen_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                entries.push((point, v));
            }
            let t = SparseTensor::from_entries(dims, &formats[&a.tensor], entries).unwrap();
            tensors.insert(a.tensor.clone(), t);
        }
        Instance { kernel, seed, integer, extents, tensors }
    }

    pub fn nnz(&self, tensor: &str) -> usize {
        self.tensors[tensor].nnz()
    }

    pub fn plan(&self, split: Split, pieces: usize) -> Result<Plan> {
        let sched = parse_schedule(&self.kernel.schedule(split))?;
        plan(&self.kernel.stmt(), &sched, &self.kernel.formats(), &MachineGrid::line(pieces)?, &self.tensors)
    }

    pub fn run(&self, split: Split, pieces: usize, mode: ExecMode) -> Result<Execution> {
        let p = self.plan(split, pieces)?;
        execute(&p, &self.tensors, &self.kernel.tdns(split), mode)
    }
}

/// The 3x3 matrix used by the hand-checked examples:
/// (0,0)=1, (0,1)=2, (1,1)=3, (2,2)=4.
pub const CSR_EXAMPLE: &str = "1 1 1\n1 2 2\n2 2 3\n3 3 4\n";
pub const ONES_3: &str = "1 1\n2 1\n3 1\n";

pub fn spmv_rows_args(dir: &std::path::Path, pieces: usize) -> Vec<String> {
    let b = dir.join("b.tns");
    let c = dir.join("c.tns");
    std::fs::write(&b, CSR_EXAMPLE).unwrap();
    std::fs::write(&c, ONES_3).unwrap();
    [
        "--expr",
        "a(i) = B(i,j) * c(j)",
        "--format",
        "a=d",
        "--format",
        "B=ds",
        "--format",
        "c=d",
        "--tdn",
        "a(x) onto M(x)",
        "--tdn",
        "B(x,y) onto M(x)",
        "--tdn",
        "c(x) onto M(rep)",
        "--schedule",
        "divide(i, io, ii, M.x); distribute(io); communicate({a,B,c}, io); parallelize(ii, CPUThread)",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([
        "--input".to_string(),
        format!("B={}", b.display()),
        "--input".to_string(),
        format!("c={}", c.display()),
        "--pieces".to_string(),
        pieces.to_string(),
    ])
    .collect()
}

pub fn sptdist(args: &[String]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_sptdist")).args(args).output().unwrap()
}
