//! `sptdist`: compile, inspect and simulate distributed sparse tensor
//! statements.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use sptdist::frontend::tdn::MachineTarget;
use sptdist::frontend::{parse_schedule, parse_tdn, parse_tin, FormatSpec, MachineGrid, Schedule, TdnStatement, TinStatement};
use sptdist::io::{format_tns, load_tensor};
use sptdist::level::TensorPartitionBundle;
use sptdist::oracle::{dense_eval, densify, sparsify};
use sptdist::planner::{lower_tdn, plan, render_plan, Plan};
use sptdist::runtime::{execute, ExecMode};
use sptdist::{Error, Result, SparseTensor};

#[derive(Parser)]
#[command(name = "sptdist", version, about = "Distributed sparse tensor algebra on a simulated machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and execute a statement, writing the output tensor.
    Run(Config),
    /// Print the generated pseudo-code of a plan.
    Plan(Config),
    /// Print the per-worker index assignments of every tensor's partitions.
    Partition(Config),
    /// Evaluate the statement with the dense reference evaluator.
    Oracle(Config),
}

#[derive(Args, Debug)]
struct Config {
    /// Tensor index notation statement, e.g. "a(i) = B(i,j) * c(j)".
    #[arg(long)]
    expr: String,
    /// Storage format of a tensor, e.g. B=ds or B=ds:1,0 (repeatable).
    #[arg(long = "format", value_name = "T=FMT")]
    formats: Vec<String>,
    /// Resident distribution of a tensor, e.g. "B(x,y) onto M(x)" (repeatable).
    #[arg(long = "tdn", value_name = "[T=]STMT")]
    tdns: Vec<String>,
    /// Scheduling directives separated by ';'.
    #[arg(long)]
    schedule: Option<String>,
    /// Machine grid: "4" or "x=2,y=2".
    #[arg(long, conflicts_with = "pieces")]
    grid: Option<String>,
    /// Shorthand for a one-dimensional grid named x.
    #[arg(long)]
    pieces: Option<usize>,
    /// Input file of a tensor (.tns or .mtx), e.g. B=b.tns (repeatable).
    #[arg(long = "input", value_name = "T=PATH")]
    inputs: Vec<String>,
    /// Dimensions of a tensor, e.g. B=3x3 (repeatable). Tensors without an
    /// input file are empty with these dimensions.
    #[arg(long = "dims", value_name = "T=DIMS")]
    dims: Vec<String>,
    /// Output .tns path (stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Path for the statistics JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Execution mode: seq, par or instrumented.
    #[arg(long, default_value = "seq")]
    mode: String,
}

fn pair<'a>(text: &'a str, flag: &str) -> Result<(&'a str, &'a str)> {
    text.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::Validation(format!("--{flag} expects T=VALUE, got '{text}'")))
}

/// Everything a command needs, parsed and loaded.
struct Session {
    stmt: TinStatement,
    formats: BTreeMap<String, FormatSpec>,
    tdns: BTreeMap<String, TdnStatement>,
    schedule: Schedule,
    machine: MachineGrid,
    tensors: BTreeMap<String, SparseTensor>,
}

impl Session {
    fn load(cfg: &Config) -> Result<Self> {
        let stmt = parse_tin(&cfg.expr)?;
        let mut formats = BTreeMap::new();
        for f in &cfg.formats {
            let (t, spec) = pair(f, "format")?;
            formats.insert(t.to_string(), spec.parse::<FormatSpec>()?);
        }
        for t in stmt.tensors() {
            if !formats.contains_key(t) {
                return Err(Error::Validation(format!("no format for tensor {t}")));
            }
        }
        let machine = match (&cfg.grid, cfg.pieces) {
            (Some(g), _) => g.parse()?,
            (None, Some(p)) => MachineGrid::line(p)?,
            (None, None) => MachineGrid::line(1)?,
        };
        let mut tdns = BTreeMap::new();
        for text in &cfg.tdns {
            let body = match text.split_once('=') {
                Some((name, rest)) if name.trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => rest,
                _ => text.as_str(),
            };
            let tdn = parse_tdn(body)?;
            tdns.insert(tdn.tensor.clone(), tdn);
        }
        for t in stmt.tensors() {
            if !tdns.contains_key(t) {
                tdns.insert(t.to_string(), default_tdn(t, formats[t].order(), &machine));
            }
        }
        let schedule = match &cfg.schedule {
            Some(s) => parse_schedule(s)?,
            None => Schedule::default(),
        };
        let mut dims: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for d in &cfg.dims {
            let (t, spec) = pair(d, "dims")?;
            let extents = spec
                .split('x')
                .map(|n| n.trim().parse::<usize>().map_err(|_| Error::Validation(format!("bad dimensions '{spec}'"))))
                .collect::<Result<Vec<_>>>()?;
            dims.insert(t.to_string(), extents);
        }
        let mut paths: BTreeMap<String, String> = BTreeMap::new();
        for i in &cfg.inputs {
            let (t, p) = pair(i, "input")?;
            paths.insert(t.to_string(), p.to_string());
        }
        let mut tensors = BTreeMap::new();
        for a in stmt.inputs() {
            let t = &a.tensor;
            let format = &formats[t];
            let tensor = match (paths.get(t), dims.get(t)) {
                (Some(p), d) => load_tensor(p, format, d.cloned())?,
                (None, Some(d)) => SparseTensor::from_entries(d.clone(), format, Vec::new())?,
                (None, None) => {
                    return Err(Error::Validation(format!("no data for tensor {t} (give --input or --dims)")))
                }
            };
            info!("loaded {t}: dims {:?}, {} stored values", tensor.dims(), tensor.nnz());
            tensors.insert(t.clone(), tensor);
        }
        Ok(Session { stmt, formats, tdns, schedule, machine, tensors })
    }

    fn plan(&self) -> Result<Plan> {
        plan(&self.stmt, &self.schedule, &self.formats, &self.machine, &self.tensors)
    }
}

/// Blocked universe distribution of the first mode over the first grid
/// dimension, replicated along the others.
fn default_tdn(tensor: &str, order: usize, machine: &MachineGrid) -> TdnStatement {
    let dims: Vec<String> = (0..order).map(|k| format!("d{k}")).collect();
    let targets = (0..machine.dims().len())
        .map(|g| MachineTarget {
            name: if g == 0 { dims[0].clone() } else { format!("rep{g}") },
            nonzero: false,
        })
        .collect();
    TdnStatement { tensor: tensor.to_string(), dims, fusions: Vec::new(), machine: "M".into(), targets }
}

fn write_output(cfg: &Config, text: &str) -> Result<()> {
    match &cfg.output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(cfg: &Config) -> Result<()> {
    let session = Session::load(cfg)?;
    let mode: ExecMode = cfg.mode.parse()?;
    let plan = session.plan()?;
    let exec = execute(&plan, &session.tensors, &session.tdns, mode)?;
    write_output(cfg, &format_tns(&exec.output))?;
    if let Some(p) = &cfg.stats {
        fs::write(p, exec.stats.to_json() + "\n")?;
    }
    Ok(())
}

fn cmd_plan(cfg: &Config) -> Result<()> {
    let session = Session::load(cfg)?;
    let plan = session.plan()?;
    write_output(cfg, &render_plan(&plan))
}

fn ranges(indices: &[usize]) -> String {
    if indices.is_empty() {
        return "-".into();
    }
    let mut parts = Vec::new();
    let mut start = indices[0];
    let mut prev = start;
    for &i in &indices[1..] {
        if i != prev + 1 {
            parts.push(if start == prev { start.to_string() } else { format!("{start}..{prev}") });
            start = i;
        }
        prev = i;
    }
    parts.push(if start == prev { start.to_string() } else { format!("{start}..{prev}") });
    parts.join(",")
}

fn dump_bundle(out: &mut String, tensor: &str, label: &str, bundle: &TensorPartitionBundle) {
    out.push_str(&format!("{tensor} ({label})\n"));
    for region in bundle.regions() {
        let name = region.name(tensor);
        for c in 0..region.partition.colors() {
            out.push_str(&format!("  {name:<12} color {c}: {}\n", ranges(region.partition.subset(c))));
        }
    }
}

fn cmd_partition(cfg: &Config) -> Result<()> {
    let session = Session::load(cfg)?;
    let plan = session.plan()?;
    let mut out = String::new();
    for a in session.stmt.inputs() {
        let t = &a.tensor;
        dump_bundle(&mut out, t, "compute", &plan.bundles[t]);
        if cfg.tdns.iter().any(|s| s.contains(&format!("{t}("))) {
            let resident = lower_tdn(&session.tdns[t], &session.tensors[t], &session.machine)?;
            dump_bundle(&mut out, t, "resident", &resident.bundles[t]);
        }
    }
    write_output(cfg, &out)
}

fn cmd_oracle(cfg: &Config) -> Result<()> {
    let session = Session::load(cfg)?;
    let dense = session.tensors.iter().map(|(k, t)| (k.clone(), densify(t))).collect();
    let result = dense_eval(&session.stmt, &dense)?;
    let out = sparsify(&result, &session.formats[session.stmt.output()])?;
    write_output(cfg, &format_tns(&out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Plan(c) => cmd_plan(c),
        Command::Partition(c) => cmd_partition(c),
        Command::Oracle(c) => cmd_oracle(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
