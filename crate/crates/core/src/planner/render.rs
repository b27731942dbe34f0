//! Pseudo-code rendering of a plan in four labeled blocks: initial
//! partitions, coordinate tree derivation, the distributed loop and the leaf.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{is_compressed, level_count, IterationClass, LevelFunction, Plan, PlanNode, SeedBounds, SeedOrigin};
use crate::frontend::{Derivation, FormatSpec};

/// Names of the partitions of one tensor as they are produced.
#[derive(Default, Clone)]
struct Names {
    up: String,
    down: String,
    suffix: String,
}

fn part_name(tensor: &str, level: usize, role: &str, suffix: &str) -> String {
    format!("{tensor}{level}{role}Part{suffix}")
}

/// `B[0].dim` when the mode's level stores one mode, else `B.dims[m]`.
fn dim_expr(format: &FormatSpec, tensor: &str, mode: usize) -> String {
    let l = super::level_of_mode(format, mode);
    if format.level_groups()[l].1.len() == 1 {
        format!("{tensor}[{l}].dim")
    } else {
        format!("{tensor}.dims[{mode}]")
    }
}

fn indent(out: &mut String, depth: usize, line: &str) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str(line);
    out.push('\n');
}

/// Render `plan` as pseudo-code. A plan without distributed loops renders
/// only its leaf.
pub fn render_plan(plan: &Plan) -> String {
    if plan.nodes.is_empty() {
        return String::new();
    }
    let mut init = String::new();
    let mut derive = String::new();
    let mut names: BTreeMap<String, Names> = BTreeMap::new();
    let mut seed_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut seed_parts: BTreeMap<String, Vec<String>> = BTreeMap::new();

    for node in &plan.nodes {
        let PlanNode::Partition(step) = node else { continue };
        let t = step.tensor.as_str();
        let format = &plan.formats[t];
        let recipe = &plan.recipes[t];
        match step.func {
            LevelFunction::Replicate => {
                let _ = writeln!(init, "// {t} is replicated on every active worker");
            }
            LevelFunction::InitUniverse { .. } | LevelFunction::InitNonZero => {
                let k = seed_index.entry(t.to_string()).or_insert(0);
                let seed = &recipe.seeds[*k];
                *k += 1;
                let suffix = if recipe.seeds.len() > 1 { format!("_{}", seed.var) } else { String::new() };
                let l = step.level.expect("init names a level");
                let coloring = format!("{t}Coloring{suffix}");
                let var = &seed.var;
                let pieces = plan
                    .nest
                    .distributed
                    .iter()
                    .find(|d| d.var == *var)
                    .map(|d| d.pieces)
                    .unwrap_or(1);
                let mode = seed.mode();
                let x = &plan.stmt.access(t).unwrap_or(plan.stmt.lhs()).vars[mode];
                match (&seed.bounds, &seed.origin) {
                    (SeedBounds::NonZero { .. }, _) => {
                        let size = format!("{t}[{l}].crd.size");
                        let _ = writeln!(init, "// {t}[{l}].initNonZeroPartition()");
                        let _ = writeln!(init, "Coloring {coloring} = {{}};");
                        let _ = writeln!(init, "for (int {var} = 0; {var} < {pieces}; {var}++) {{");
                        let _ = writeln!(init, "  int posLo = {var} * ({size} / {pieces});");
                        let _ = writeln!(
                            init,
                            "  int posHi = ({var} == {}) ? {size} - 1 : ({var} + 1) * ({size} / {pieces}) - 1;",
                            pieces - 1
                        );
                        let _ = writeln!(init, "  // {t}[{l}].createNonZeroPartitionEntry({var}, {{posLo, posHi}})");
                        let _ = writeln!(init, "  {coloring}[{var}] = {{posLo, posHi}};");
                        let _ = writeln!(init, "}}");
                        let _ = writeln!(init, "// {t}[{l}].finalizeNonZeroPartition()");
                    }
                    (SeedBounds::Universe { .. }, SeedOrigin::Projected { from }) => {
                        let src = &plan.formats[from];
                        let src_access = plan.stmt.access(from).expect("projection source is an input");
                        let src_mode = src_access.mode_of(x).expect("shared variable");
                        let src_level = super::level_of_mode(src, src_mode);
                        let src_part = if is_compressed(src, src_level) {
                            part_name(from, src_level, "Crd", "")
                        } else {
                            part_name(from, src_level, "", "")
                        };
                        let _ = writeln!(init, "// {t}[{l}].initUniversePartition() projected from {from}");
                        let _ = writeln!(init, "Coloring {coloring} = {{}};");
                        let _ = writeln!(init, "for (int {var} = 0; {var} < {pieces}; {var}++) {{");
                        let _ = writeln!(init, "  {coloring}[{var}] = coordBounds({from}[{src_level}], {src_part}[{var}]);");
                        let _ = writeln!(init, "}}");
                        let _ = writeln!(init, "// {t}[{l}].finalizeUniversePartition(aliased)");
                    }
                    (SeedBounds::Universe { .. }, _) => {
                        let dim = dim_expr(format, t, mode);
                        let chunk = format!("ceil({dim} / {pieces})");
                        let _ = writeln!(init, "// {t}[{l}].initUniversePartition()");
                        let _ = writeln!(init, "Coloring {coloring} = {{}};");
                        let _ = writeln!(init, "for (int {var} = 0; {var} < {pieces}; {var}++) {{");
                        let _ = writeln!(init, "  int {x}Lo = {var} * {chunk};");
                        let _ = writeln!(init, "  int {x}Hi = min(({var} + 1) * {chunk}, {dim}) - 1;");
                        let _ = writeln!(init, "  // {t}[{l}].createUniversePartitionEntry({var}, {{{x}Lo, {x}Hi}})");
                        let _ = writeln!(init, "  {coloring}[{var}] = {{{x}Lo, {x}Hi}};");
                        let _ = writeln!(init, "}}");
                        let _ = writeln!(init, "// {t}[{l}].finalizeUniversePartition()");
                    }
                }
                let n = names.entry(t.to_string()).or_default();
                n.suffix = suffix.clone();
                if is_compressed(format, l) {
                    let crd = part_name(t, l, "Crd", &suffix);
                    let pos = part_name(t, l, "Pos", &suffix);
                    match seed.bounds {
                        SeedBounds::NonZero { .. } => {
                            let _ = writeln!(init, "auto {crd} = partitionByBounds({t}[{l}].crd.domain, {coloring});");
                        }
                        SeedBounds::Universe { .. } => {
                            let _ = writeln!(init, "auto {crd} = preimageByBounds({t}[{l}].crd, {coloring});");
                        }
                    }
                    let _ = writeln!(init, "auto {pos} = preimage({t}[{l}].pos, {crd});");
                    n.down = crd;
                    n.up = pos;
                } else {
                    let part = part_name(t, l, "", &suffix);
                    let _ = writeln!(init, "auto {part} = partitionByBounds({t}[{l}].dom, {coloring});");
                    n.down = part.clone();
                    n.up = if l == 0 {
                        part
                    } else {
                        let up = format!("{t}{l}UpPart{suffix}");
                        let _ = writeln!(init, "auto {up} = affinePreimage({part}, {t}[{l}].dim);");
                        up
                    };
                }
            }
            LevelFunction::FromChild => {
                let l = step.level.expect("level");
                let n = names.get_mut(t).expect("seeded");
                let suffix = n.suffix.clone();
                if is_compressed(format, l) {
                    let crd = part_name(t, l, "Crd", &suffix);
                    let pos = part_name(t, l, "Pos", &suffix);
                    let _ = writeln!(derive, "// {t}[{l}].partitionFromChild({})", n.up);
                    let _ = writeln!(derive, "auto {crd} = copy({}, {t}[{l}].crd);", n.up);
                    let _ = writeln!(derive, "auto {pos} = preimage({t}[{l}].pos, {crd});");
                    n.up = pos;
                } else {
                    let part = part_name(t, l, "", &suffix);
                    let _ = writeln!(derive, "// {t}[{l}].partitionFromChild({})", n.up);
                    let _ = writeln!(derive, "auto {part} = copy({}, {t}[{l}].dom);", n.up);
                    n.up = if l == 0 {
                        part
                    } else {
                        let up = format!("{t}{l}UpPart{suffix}");
                        let _ = writeln!(derive, "auto {up} = affinePreimage({part}, {t}[{l}].dim);");
                        up
                    };
                }
            }
            LevelFunction::FromParent => {
                let l = step.level.expect("level");
                let n = names.get_mut(t).expect("seeded");
                let suffix = n.suffix.clone();
                let _ = writeln!(derive, "// {t}[{l}].partitionFromParent({})", n.down);
                if is_compressed(format, l) {
                    let crd = part_name(t, l, "Crd", &suffix);
                    let pos = part_name(t, l, "Pos", &suffix);
                    let _ = writeln!(derive, "auto {pos} = copy({}, {t}[{l}].pos);", n.down);
                    let _ = writeln!(derive, "auto {crd} = image({pos}, {t}[{l}].pos, {t}[{l}].crd);");
                    n.down = crd;
                } else {
                    let part = part_name(t, l, "", &suffix);
                    let _ = writeln!(derive, "auto {part} = affineImage({}, {t}[{l}].dim);", n.down);
                    n.down = part;
                }
            }
            LevelFunction::CopyVals => {
                let n = names.get_mut(t).expect("seeded");
                let vals = format!("{t}ValsPart{}", n.suffix);
                let _ = writeln!(derive, "auto {vals} = copy({}, {t}.vals);", n.down);
                seed_parts.entry(t.to_string()).or_default().push(vals);
            }
            LevelFunction::Intersect => {
                let parts = seed_parts.remove(t).unwrap_or_default();
                let _ = writeln!(derive, "auto {t}Part = intersect({});", parts.join(", "));
            }
        }
    }

    let mut out = String::new();
    let distributed = &plan.nest.distributed;
    if !distributed.is_empty() {
        out.push_str("// initial partitions\n");
        out.push_str(&init);
        out.push('\n');
        out.push_str("// coordinate tree derivation\n");
        out.push_str(&derive);
        out.push('\n');
        out.push_str("// distributed loop\n");
    }
    let mut depth = 0;
    for node in &plan.nodes {
        match node {
            PlanNode::DistributedLoop { var, grid_dim, pieces } => {
                indent(&mut out, depth, &format!("distributed for {var} in {{0 .. {}}} on M.{grid_dim} {{", pieces - 1));
                depth += 1;
            }
            PlanNode::Communicate { tensors, at } => {
                indent(&mut out, depth, &format!("communicate({}) at {at};", tensors.join(", ")));
            }
            _ => {}
        }
    }
    indent(&mut out, depth, "// leaf");
    render_leaf(plan, &mut out, depth);
    while depth > 0 {
        depth -= 1;
        indent(&mut out, depth, "}");
    }
    if plan.reduce {
        out.push_str(&format!("reduceCombine({});\n", plan.output()));
    }
    out
}

/// Per-tensor state while rendering the leaf: the position expression of
/// the deepest resolved level.
struct Cursor {
    resolved: usize,
    position: String,
}

fn render_leaf(plan: &Plan, out: &mut String, mut depth: usize) {
    let stmt = &plan.stmt;
    let opened = depth;
    let mut accesses: Vec<&crate::frontend::Access> = stmt.inputs().collect();
    accesses.push(stmt.lhs());
    let mut cursors: BTreeMap<&str, Cursor> = accesses
        .iter()
        .map(|a| (a.tensor.as_str(), Cursor { resolved: 0, position: "0".into() }))
        .collect();
    let mut bound: Vec<String> = Vec::new();

    // A distributed position loop binds its fused variables first.
    let position_class = plan.classes.iter().find_map(|c| match c {
        IterationClass::CoordinatePosition { tensor, originals } => Some((tensor.clone(), originals.clone())),
        _ => None,
    });
    if let Some((t, originals)) = &position_class {
        let format = &plan.formats[t];
        let access = stmt.access(t).expect("input");
        let s = originals.len() - 1;
        let l = super::level_of_mode(format, format.mode_order()[s]);
        let coloring = format!("{t}Coloring");
        let dvar = &plan.nest.distributed[0].var;
        let leaf_pos = format!("fpos{t}");
        indent(
            out,
            depth,
            &format!("for (int {leaf_pos} = {coloring}[{dvar}].lo; {leaf_pos} <= {coloring}[{dvar}].hi; {leaf_pos}++) {{"),
        );
        depth += 1;
        let mut positions = vec![String::new(); l + 1];
        positions[l] = leaf_pos;
        for k in (0..l).rev() {
            let p = format!("p{t}{k}");
            indent(out, depth, &format!("int {p} = {t}[{}].parentOf({});", k + 1, positions[k + 1]));
            positions[k] = p;
        }
        for (k, pos) in positions.iter().enumerate() {
            let (_, storage) = &format.level_groups()[k];
            for (off, &sp) in storage.iter().enumerate() {
                let v = &access.vars[format.mode_order()[sp]];
                if is_compressed(format, k) {
                    indent(out, depth, &format!("int {v} = {t}[{k}].crd[{pos}];"));
                } else if storage.len() == 1 && k == 0 {
                    indent(out, depth, &format!("int {v} = {pos};"));
                } else {
                    indent(out, depth, &format!("int {v} = {t}[{k}].coord({pos}, {off});"));
                }
                bound.push(v.clone());
            }
        }
        if let Some(c) = cursors.get_mut(t.as_str()) {
            c.resolved = l + 1;
            c.position = positions[l].clone();
        }
        resolve_dense(plan, &accesses, &mut cursors, &bound, out, depth);
    }

    for v in &plan.nest.leaf_order {
        if bound.contains(v) {
            continue;
        }
        // Compressed levels that become resolvable by binding v.
        let mut iterators: Vec<(String, usize)> = Vec::new();
        for a in &accesses {
            if a.tensor == stmt.output() {
                continue;
            }
            let format = &plan.formats[&a.tensor];
            let c = &cursors[a.tensor.as_str()];
            if c.resolved < level_count(format) && is_compressed(format, c.resolved) {
                let (_, storage) = &format.level_groups()[c.resolved];
                if a.vars[format.mode_order()[storage[0]]] == *v {
                    iterators.push((a.tensor.clone(), c.resolved));
                }
            }
        }
        match iterators.len() {
            0 => {
                let holder = accesses.iter().find(|a| a.mode_of(v).is_some()).expect("variable is accessed");
                let dim = dim_expr(&plan.formats[&holder.tensor], &holder.tensor, holder.mode_of(v).expect("accessed"));
                let divided = plan.nest.vars.iter().find_map(|(name, info)| match &info.derivation {
                    Derivation::Divide { parent, pieces, outer: false } if parent == v => {
                        let outer = plan.nest.vars.iter().find_map(|(o, i)| match &i.derivation {
                            Derivation::Divide { parent: p2, outer: true, .. } if p2 == v => Some(o.clone()),
                            _ => None,
                        })?;
                        plan.nest.is_distributed(&outer).then(|| (name.clone(), outer, *pieces))
                    }
                    _ => None,
                });
                match divided {
                    Some((inner, outer, pieces)) => {
                        let chunk = format!("ceil({dim} / {pieces})");
                        indent(out, depth, &format!("for (int {inner} = 0; {inner} < {chunk}; {inner}++) {{"));
                        depth += 1;
                        indent(out, depth, &format!("int {v} = {outer} * {chunk} + {inner};"));
                        indent(out, depth, &format!("if ({v} >= {dim}) break;"));
                    }
                    None => {
                        indent(out, depth, &format!("for (int {v} = 0; {v} < {dim}; {v}++) {{"));
                        depth += 1;
                    }
                }
            }
            1 => {
                let (t, l) = &iterators[0];
                let parent = cursors[t.as_str()].position.clone();
                let p = format!("{v}{t}");
                indent(
                    out,
                    depth,
                    &format!("for (int {p} = {t}[{l}].pos[{parent}].lo; {p} <= {t}[{l}].pos[{parent}].hi; {p}++) {{"),
                );
                depth += 1;
                indent(out, depth, &format!("int {v} = {t}[{l}].crd[{p}];"));
            }
            _ => {
                let how = if stmt.terms().len() > 1 { "union" } else { "intersect" };
                let segments: Vec<String> = iterators
                    .iter()
                    .map(|(t, l)| format!("{t}[{l}].crd[{t}[{l}].pos[{}]]", cursors[t.as_str()].position))
                    .collect();
                indent(out, depth, &format!("for ({v} in {how}({})) {{", segments.join(", ")));
                depth += 1;
                for (t, l) in &iterators {
                    indent(out, depth, &format!("int {v}{t} = {t}[{l}].find({v});"));
                }
            }
        }
        for (t, l) in &iterators {
            let c = cursors.get_mut(t.as_str()).expect("cursor");
            c.resolved = l + 1;
            c.position = format!("{v}{t}");
        }
        bound.push(v.clone());
        resolve_dense(plan, &accesses, &mut cursors, &bound, out, depth);
    }

    let lhs = stmt.lhs();
    let out_format = &plan.formats[&lhs.tensor];
    let target = if out_format.has_compressed() {
        format!("{}({})", lhs.tensor, lhs.vars.join(", "))
    } else {
        format!("{}.vals[{}]", lhs.tensor, cursors[lhs.tensor.as_str()].position)
    };
    let terms: Vec<String> = stmt
        .terms()
        .iter()
        .map(|term| {
            term.iter()
                .map(|a| format!("{}.vals[{}]", a.tensor, cursors[a.tensor.as_str()].position))
                .collect::<Vec<_>>()
                .join(" * ")
        })
        .collect();
    indent(out, depth, &format!("{target} += {};", terms.join(" + ")));
    while depth > opened {
        depth -= 1;
        indent(out, depth, "}");
    }
}

/// Resolve dense levels whose variables are all bound.
fn resolve_dense(
    plan: &Plan,
    accesses: &[&crate::frontend::Access],
    cursors: &mut BTreeMap<&str, Cursor>,
    bound: &[String],
    out: &mut String,
    depth: usize,
) {
    for a in accesses {
        let format = &plan.formats[&a.tensor];
        let groups = format.level_groups();
        let c = cursors.get_mut(a.tensor.as_str()).expect("cursor");
        while c.resolved < groups.len() && !is_compressed(format, c.resolved) {
            let l = c.resolved;
            let vars: Vec<&String> = groups[l].1.iter().map(|&s| &a.vars[format.mode_order()[s]]).collect();
            if !vars.iter().all(|v| bound.contains(v)) {
                break;
            }
            c.position = if l == 0 && vars.len() == 1 {
                vars[0].clone()
            } else {
                let p = format!("p{}{l}", a.tensor);
                let coords: Vec<&str> = vars.iter().map(|v| v.as_str()).collect();
                indent(
                    out,
                    depth,
                    &format!("int {p} = {}[{l}].locate({}, {});", a.tensor, c.position, coords.join(", ")),
                );
                p
            };
            c.resolved += 1;
        }
    }
}
