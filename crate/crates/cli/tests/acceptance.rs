//! Acceptance suite: one pass/fail line per criterion.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{spmv_rows_args, sptdist, Instance, Split, KERNELS, PIECES};
use sptdist::oracle::{dense_eval, densify, max_relative_error, structural_union, DenseTensor};
use sptdist::partition::{image, preimage, Partition};
use sptdist::runtime::{ExecMode, Execution};
use sptdist::{CoordRange, Error, IndexSpace, Region};

const INSTANCES: u64 = 50;
const TOLERANCE: f64 = 1e-12;

struct Outcome {
    failures: Vec<String>,
    checked: usize,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), checked: 0 }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

/// Criteria that share the random corpus: equivalence, closure, balance and
/// assembly.
struct Corpus {
    equivalence: Outcome,
    closure: Outcome,
    balance: Outcome,
    assembly: Outcome,
}

fn compare(out: &DenseTensor, expected: &DenseTensor, integer: bool) -> Option<String> {
    if integer {
        let exact = out.data.iter().zip(&expected.data).all(|(a, e)| a == e);
        (!exact).then(|| "integer result differs".to_string())
    } else {
        let err = max_relative_error(out, expected);
        (err > TOLERANCE).then(|| format!("relative error {err:e}"))
    }
}

fn check_assembly(inst: &Instance, exec: &Execution, out: &mut Outcome, label: &str) {
    let a = &exec.output;
    match inst.kernel.name {
        "SpTTV" => {
            let b = &inst.tensors["B"];
            let same = exec.assembly.reused.as_deref() == Some("B")
                && a.levels().len() == 2
                && a.level(0) == b.level(0)
                && a.level(1) == b.level(1);
            out.check(same, || format!("{label}: output did not reuse B's pattern"));
        }
        "SpAdd3" => {
            let expected = structural_union(&inst.kernel.stmt(), &inst.tensors).unwrap();
            let pattern: BTreeSet<Vec<usize>> = a.iterate_leaves().map(|(c, _)| c).collect();
            out.check(pattern == expected, || format!("{label}: pattern differs from structural union"));
            let report = &exec.assembly.report;
            out.check(
                exec.assembly.reused.is_none()
                    && report.counted == report.filled
                    && report.counted.last() == Some(&a.nnz()),
                || format!("{label}: counted {:?}, filled {:?}, nnz {}", report.counted, report.filled, a.nnz()),
            );
        }
        _ => {}
    }
}

fn check_balance(inst: &Instance, exec: &Execution, pieces: usize, out: &mut Outcome, label: &str) {
    let nnz = inst.nnz("B");
    let per = (inst.kernel.work_per_nonzero)(&inst.extents);
    let works: Vec<usize> = exec.stats.per_worker.iter().map(|w| w.work).collect();
    let spread = works.iter().max().unwrap() - works.iter().min().unwrap();
    let bound = (nnz % pieces) * per;
    out.check(spread <= bound, || format!("{label}: work {works:?} spread {spread} > bound {bound}"));
}

fn run_corpus() -> Corpus {
    let mut c = Corpus {
        equivalence: Outcome::new(),
        closure: Outcome::new(),
        balance: Outcome::new(),
        assembly: Outcome::new(),
    };
    for kernel in KERNELS {
        for seed in 0..INSTANCES {
            let inst = Instance::generate(kernel, seed);
            let dense = inst.tensors.iter().map(|(k, t)| (k.clone(), densify(t))).collect();
            let expected = dense_eval(&kernel.stmt(), &dense).unwrap();
            for split in kernel.splits() {
                for &pieces in PIECES {
                    let label = format!("{} seed {seed} {split:?} p={pieces}", kernel.name);
                    match inst.run(split, pieces, ExecMode::Instrumented) {
                        Ok(exec) => {
                            c.closure.check(true, String::new);
                            let diff = compare(&densify(&exec.output), &expected, inst.integer);
                            c.equivalence.check(diff.is_none(), || format!("{label}: {}", diff.unwrap()));
                            if split == Split::NonZeros {
                                check_balance(&inst, &exec, pieces, &mut c.balance, &label);
                            }
                            check_assembly(&inst, &exec, &mut c.assembly, &label);
                        }
                        Err(e @ Error::Closure { .. }) => {
                            c.closure.check(false, || format!("{label}: {e}"));
                            c.equivalence.check(false, || format!("{label}: {e}"));
                        }
                        Err(e) => c.equivalence.check(false, || format!("{label}: {e}")),
                    }
                }
            }
        }
    }
    c
}

fn hand_balance(out: &mut Outcome) {
    let spmv = &KERNELS[0];
    let b = sptdist::SparseTensor::from_entries(
        vec![3, 3],
        &sptdist::frontend::FormatSpec::csr(),
        vec![(vec![0, 0], 1.0), (vec![0, 1], 2.0), (vec![1, 1], 3.0), (vec![2, 2], 4.0)],
    )
    .unwrap();
    let c = sptdist::SparseTensor::from_entries(
        vec![3],
        &sptdist::frontend::FormatSpec::dense(1),
        (0..3).map(|k| (vec![k], 1.0)).collect::<Vec<_>>(),
    )
    .unwrap();
    let inst = Instance {
        kernel: spmv,
        seed: 0,
        integer: true,
        extents: [("i".to_string(), 3), ("j".to_string(), 3)].into_iter().collect(),
        tensors: [("B".to_string(), b), ("c".to_string(), c)].into_iter().collect(),
    };
    let exec = inst.run(Split::NonZeros, 2, ExecMode::Instrumented).unwrap();
    let works: Vec<usize> = exec.stats.per_worker.iter().map(|w| w.work).collect();
    out.check(works == vec![2, 2], || format!("hand example work {works:?}, expected [2, 2]"));
}

/// Brute-force image: every destination reached from a source of the color.
fn brute_image(ranges: &[CoordRange], part: &[Vec<usize>]) -> Vec<Vec<usize>> {
    part.iter()
        .map(|s| {
            let set: BTreeSet<usize> = s.iter().flat_map(|&i| ranges[i].iter()).collect();
            set.into_iter().collect()
        })
        .collect()
}

/// Brute-force preimage: every source whose range meets the color.
fn brute_preimage(ranges: &[CoordRange], part: &[Vec<usize>], dest: usize) -> Vec<Vec<usize>> {
    part.iter()
        .map(|s| {
            let mut member = vec![false; dest];
            for &d in s {
                member[d] = true;
            }
            (0..ranges.len()).filter(|&i| ranges[i].iter().any(|d| member[d])).collect()
        })
        .collect()
}

fn random_subsets(rng: &mut ChaCha8Rng, n: usize, colors: usize) -> Vec<Vec<usize>> {
    let mut subsets = vec![Vec::new(); colors];
    let aliased = rng.gen_bool(0.3);
    for i in 0..n {
        if rng.gen_bool(0.1) {
            continue;
        }
        subsets[rng.gen_range(0..colors)].push(i);
        if aliased && rng.gen_bool(0.2) {
            subsets[rng.gen_range(0..colors)].push(i);
        }
    }
    for s in &mut subsets {
        s.sort_unstable();
        s.dedup();
    }
    subsets
}

fn partition_laws(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..1000 {
        let sources = 10f64.powf(rng.gen_range(0.0..4.0)) as usize;
        let dest = 10f64.powf(rng.gen_range(0.0..4.0)) as usize;
        let colors = rng.gen_range(1..=64);
        let ranges: Vec<CoordRange> = (0..sources)
            .map(|_| {
                let lo = rng.gen_range(0..dest) as i64;
                let len = rng.gen_range(0..=4i64).min(dest as i64 - lo);
                CoordRange::new(lo, lo + len - 1)
            })
            .collect();
        let region = Region::new(IndexSpace::linear(sources), ranges.clone()).unwrap();
        let dest_space = IndexSpace::linear(dest);

        let src_subsets = random_subsets(&mut rng, sources, colors);
        let src_part = Partition::new(IndexSpace::linear(sources), src_subsets.clone()).unwrap();
        let img = image(&region, &src_part, &dest_space).unwrap();
        out.check(img.subsets() == brute_image(&ranges, &src_subsets).as_slice(), || {
            format!("case {case}: image differs ({sources} sources, {dest} destinations, {colors} colors)")
        });

        let dst_subsets = random_subsets(&mut rng, dest, colors);
        let dst_part = Partition::new(dest_space.clone(), dst_subsets.clone()).unwrap();
        let pre = preimage(&region, &dst_part, &dest_space).unwrap();
        out.check(pre.subsets() == brute_preimage(&ranges, &dst_subsets, dest).as_slice(), || {
            format!("case {case}: preimage differs ({sources} sources, {dest} destinations, {colors} colors)")
        });
    }
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn stats_of(args: &[String], dir: &Path, name: &str) -> (String, serde_json::Value) {
    let stats = dir.join(name);
    let mut full = vec!["run".to_string()];
    full.extend_from_slice(args);
    full.extend(["--stats".to_string(), stats.display().to_string(), "--mode".into(), "instrumented".into()]);
    let out = sptdist(&full);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&stats).unwrap();
    let parsed = serde_json::from_str(&text).unwrap();
    (text, parsed)
}

fn total_bytes(stats: &serde_json::Value, tensor: &str) -> u64 {
    stats["per_worker"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["bytes_by_tensor"][tensor].as_u64().unwrap_or(0))
        .sum()
}

fn communication(out: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let args = spmv_rows_args(dir.path(), 2);
    let (text, matched) = stats_of(&args, dir.path(), "matched.json");
    for t in ["a", "B", "c"] {
        out.check(total_bytes(&matched, t) == 0, || format!("matched row SpMV moved {} bytes of {t}", total_bytes(&matched, t)));
    }
    out.check(text == golden("spmv_rows_matched.stats.json"), || "matched stats differ from golden".into());

    let mut moved = args.clone();
    let k = moved.iter().position(|a| a == "B(x,y) onto M(x)").unwrap();
    moved[k] = "B(x,y) fuse(x,y->f) onto M(~f)".into();
    let (text, mismatched) = stats_of(&moved, dir.path(), "mismatched.json");
    out.check(total_bytes(&mismatched, "B") > 0, || "row schedule over non-zero placement moved no bytes of B".into());
    out.check(text == golden("spmv_rows_over_nonzero.stats.json"), || "mismatched stats differ from golden".into());
}

fn plan_fidelity(out: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["plan".to_string()];
    args.extend(spmv_rows_args(dir.path(), 2));
    let res = sptdist(&args);
    let text = String::from_utf8_lossy(&res.stdout).to_string();
    out.check(res.status.success(), || String::from_utf8_lossy(&res.stderr).to_string());
    out.check(text == golden("spmv_rows.plan"), || "plan differs from golden".into());
    let wanted = ["// initial partitions", "// coordinate tree derivation", "// distributed loop", "// leaf"];
    let labels: Vec<&str> = text.lines().map(str::trim).filter(|l| wanted.contains(l)).collect();
    out.check(labels == wanted, || format!("block labels {labels:?}"));
    out.check(text.contains("<= B[1].pos[i].hi"), || "leaf loop lacks inclusive pos bounds".into());
}

fn determinism(out: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let rows = spmv_rows_args(dir.path(), 3);
    let mut nonzero = rows.clone();
    let k = nonzero.iter().position(|a| a.starts_with("divide(")).unwrap();
    nonzero[k] = "fuse(i, j, f); posdivide(f, fo, fi, B, M.x); distribute(fo)".into();
    let stats = dir.path().join("stats.json");
    for (label, base) in [("rows", &rows), ("nonzeros", &nonzero)] {
        let mut commands: Vec<Vec<String>> = Vec::new();
        for mode in ["seq", "par", "instrumented"] {
            let mut a = vec!["run".to_string()];
            a.extend_from_slice(base);
            a.extend(["--mode".into(), mode.into(), "--stats".into(), stats.display().to_string()]);
            commands.push(a);
        }
        for cmd in ["plan", "partition", "oracle"] {
            let mut a = vec![cmd.to_string()];
            a.extend_from_slice(base);
            commands.push(a);
        }
        for cmd in commands {
            let once = |_: ()| {
                let res = sptdist(&cmd);
                let s = std::fs::read(&stats).unwrap_or_default();
                let _ = std::fs::remove_file(&stats);
                (res.status.code(), res.stdout, res.stderr, s)
            };
            let first = once(());
            let second = once(());
            out.check(first.0 == Some(0), || format!("{label} {}: exit {:?}", cmd[0], first.0));
            out.check(first == second, || format!("{label} {} differs between runs", cmd[0]));
        }
    }

    for kernel in KERNELS {
        for seed in 0..3 {
            let inst = Instance::generate(kernel, seed);
            for split in kernel.splits() {
                for mode in [ExecMode::Sequential, ExecMode::Parallel, ExecMode::Instrumented] {
                    let run = || {
                        let e = inst.run(split, 3, mode).unwrap();
                        let bits: Vec<u64> = e.output.vals().values().iter().map(|v| v.to_bits()).collect();
                        (format!("{:?}", e.output.levels()), bits, e.stats.to_json())
                    };
                    out.check(run() == run(), || format!("{} seed {seed} {split:?} {mode:?} differs", kernel.name));
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let corpus = run_corpus();
    let mut laws = Outcome::new();
    partition_laws(&mut laws);
    let mut balance = corpus.balance;
    hand_balance(&mut balance);
    let mut comm = Outcome::new();
    communication(&mut comm);
    let mut fidelity = Outcome::new();
    plan_fidelity(&mut fidelity);
    let mut det = Outcome::new();
    determinism(&mut det);
    let elapsed = start.elapsed();

    let mut equivalence = corpus.equivalence;
    if elapsed.as_secs() >= 300 {
        equivalence.failures.push(format!("took {elapsed:?}, budget 5 min"));
    }
    let results = [
        ("oracle equivalence", equivalence),
        ("partition laws", laws),
        ("closure", corpus.closure),
        ("load balance", balance),
        ("communication", comm),
        ("plan fidelity", fidelity),
        ("assembly", corpus.assembly),
        ("determinism", det),
    ];
    let mut all = true;
    for (k, (name, o)) in results.iter().enumerate() {
        let pass = o.failures.is_empty();
        all &= pass;
        println!(
            "criterion {} {:<20} {} ({} checks{})",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            o.checked,
            if pass { String::new() } else { format!(", {} failed", o.failures.len()) }
        );
        for f in o.failures.iter().take(5) {
            println!("    {f}");
        }
    }
    println!("acceptance finished in {:.1}s", elapsed.as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
