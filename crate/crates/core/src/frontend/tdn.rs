//! Tensor distribution notation.
//!
//! `T(x,y) onto M(x)` distributes rows of `T` over the first machine
//! dimension. `T(x,y) fuse(x,y->f) onto M(~f)` fuses both dimensions and
//! splits the fused non-zeros evenly. Machine names are matched to grid
//! dimensions by position; a machine name that matches no tensor dimension
//! replicates the tensor along that grid dimension.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::format::{FormatSpec, LevelKind};
use crate::frontend::machine::MachineGrid;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fusion {
    pub members: Vec<String>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineTarget {
    pub name: String,
    /// Marked with `~`: split the non-zeros under this name evenly.
    pub nonzero: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdnStatement {
    pub tensor: String,
    pub dims: Vec<String>,
    pub fusions: Vec<Fusion>,
    pub machine: String,
    pub targets: Vec<MachineTarget>,
}

/// One distributed name of a validated statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    /// Tensor dimension or fused name.
    pub name: String,
    /// Underlying tensor dimension names, outermost first.
    pub members: Vec<String>,
    pub grid_dim: usize,
    pub nonzero: bool,
}

impl TdnStatement {
    pub fn placements(&self) -> Vec<Placement> {
        self.targets
            .iter()
            .enumerate()
            .filter_map(|(g, t)| {
                let members = if let Some(f) = self.fusions.iter().find(|f| f.name == t.name) {
                    f.members.clone()
                } else if self.dims.contains(&t.name) {
                    vec![t.name.clone()]
                } else {
                    return None;
                };
                Some(Placement {
                    name: t.name.clone(),
                    members,
                    grid_dim: g,
                    nonzero: t.nonzero,
                })
            })
            .collect()
    }

    /// Check the statement against the tensor's format and the machine.
    pub fn validate(&self, format: &FormatSpec, machine: &MachineGrid) -> Result<Vec<Placement>> {
        let err = |m: String| Err(Error::validation(format!("distribution of {}: {m}", self.tensor)));
        if self.dims.len() != format.order() {
            return err(format!(
                "names {} dimensions but the format has {}",
                self.dims.len(),
                format.order()
            ));
        }
        for (k, d) in self.dims.iter().enumerate() {
            if self.dims[..k].contains(d) {
                return err(format!("dimension name {d} repeated"));
            }
        }
        let storage_pos = |name: &str| {
            let mode = self.dims.iter().position(|d| d == name).expect("declared");
            format.storage_position(mode)
        };
        let mut fused_members: Vec<&String> = Vec::new();
        for f in &self.fusions {
            if f.members.len() < 2 {
                return err(format!("fusion into {} needs at least two dimensions", f.name));
            }
            if self.dims.contains(&f.name) || self.fusions.iter().filter(|g| g.name == f.name).count() > 1 {
                return err(format!("fused name {} is not fresh", f.name));
            }
            for m in &f.members {
                if !self.dims.contains(m) {
                    return err(format!("fusion references unknown dimension {m}"));
                }
                if fused_members.contains(&m) {
                    return err(format!("dimension {m} appears in more than one fusion"));
                }
                fused_members.push(m);
            }
            let positions: Vec<usize> = f.members.iter().map(|m| storage_pos(m)).collect();
            if positions.windows(2).any(|w| w[1] != w[0] + 1) {
                return err(format!("fused dimensions of {} are not consecutive in storage order", f.name));
            }
        }
        if self.targets.len() != machine.dims().len() {
            return err(format!(
                "machine {} is given {} names but the grid has {} dimensions (unknown machine dimension)",
                self.machine,
                self.targets.len(),
                machine.dims().len()
            ));
        }
        for (k, t) in self.targets.iter().enumerate() {
            if self.targets[..k].iter().any(|u| u.name == t.name) {
                return err(format!("machine name {} repeated", t.name));
            }
            if fused_members.contains(&&t.name) {
                return err(format!("{} is consumed by a fusion and cannot be distributed alone", t.name));
            }
        }
        let placements = self.placements();
        for t in &self.targets {
            if t.nonzero && !placements.iter().any(|p| p.name == t.name) {
                return err(format!("~{} does not name a tensor dimension", t.name));
            }
        }
        let nonzero: Vec<&Placement> = placements.iter().filter(|p| p.nonzero).collect();
        if nonzero.len() > 1 {
            return err("at most one non-zero partitioned name is supported".into());
        }
        if let Some(p) = nonzero.first() {
            if placements.len() > 1 {
                return err("a non-zero partition cannot be combined with other distributed names".into());
            }
            let mut positions: Vec<usize> = p.members.iter().map(|m| storage_pos(m)).collect();
            positions.sort_unstable();
            if positions.iter().enumerate().any(|(k, &s)| k != s) {
                return err(format!("~{} must cover the outermost stored dimensions", p.name));
            }
            let innermost = *positions.last().expect("non-empty");
            if format.kinds()[innermost] != LevelKind::Compressed {
                return err(format!(
                    "~{} needs a compressed innermost dimension; its dimensions are dense only",
                    p.name
                ));
            }
        }
        for p in &placements {
            if !p.nonzero && p.members.len() > 1 {
                return Err(Error::Unsupported(format!(
                    "universe partition of fused name {} (use ~{})",
                    p.name, p.name
                )));
            }
        }
        Ok(placements)
    }
}

fn ident(chars: &[char], i: &mut usize) -> Option<String> {
    while *i < chars.len() && chars[*i].is_whitespace() {
        *i += 1;
    }
    let start = *i;
    while *i < chars.len() && (chars[*i].is_ascii_alphanumeric() || chars[*i] == '_') {
        *i += 1;
    }
    (*i > start).then(|| chars[start..*i].iter().collect())
}

fn skip_ws(chars: &[char], i: &mut usize) {
    while *i < chars.len() && chars[*i].is_whitespace() {
        *i += 1;
    }
}

fn eat(chars: &[char], i: &mut usize, s: &str) -> bool {
    skip_ws(chars, i);
    let want: Vec<char> = s.chars().collect();
    if chars[*i..].starts_with(&want) {
        *i += want.len();
        true
    } else {
        false
    }
}

fn expect(chars: &[char], i: &mut usize, s: &str) -> Result<()> {
    if eat(chars, i, s) {
        Ok(())
    } else {
        Err(Error::parse(*i + 1, format!("expected '{s}'")))
    }
}

fn name(chars: &[char], i: &mut usize, what: &str) -> Result<String> {
    ident(chars, i).ok_or_else(|| Error::parse(*i + 1, format!("expected {what}")))
}

impl FromStr for TdnStatement {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        let tensor = name(&chars, &mut i, "tensor name")?;
        expect(&chars, &mut i, "(")?;
        let mut dims = vec![name(&chars, &mut i, "dimension name")?];
        while eat(&chars, &mut i, ",") {
            dims.push(name(&chars, &mut i, "dimension name")?);
        }
        expect(&chars, &mut i, ")")?;
        let mut fusions = Vec::new();
        loop {
            skip_ws(&chars, &mut i);
            let save = i;
            match ident(&chars, &mut i).as_deref() {
                Some("fuse") => {
                    expect(&chars, &mut i, "(")?;
                    let mut members = vec![name(&chars, &mut i, "dimension name")?];
                    while eat(&chars, &mut i, ",") {
                        members.push(name(&chars, &mut i, "dimension name")?);
                    }
                    expect(&chars, &mut i, "->")?;
                    let fused = name(&chars, &mut i, "fused name")?;
                    expect(&chars, &mut i, ")")?;
                    fusions.push(Fusion { members, name: fused });
                }
                Some("onto") => break,
                _ => {
                    i = save;
                    if eat(&chars, &mut i, "|") {
                        break;
                    }
                    return Err(Error::parse(i + 1, "expected 'fuse', 'onto' or '|'"));
                }
            }
        }
        let machine = name(&chars, &mut i, "machine name")?;
        expect(&chars, &mut i, "(")?;
        let mut targets = Vec::new();
        loop {
            let nonzero = eat(&chars, &mut i, "~");
            targets.push(MachineTarget {
                name: name(&chars, &mut i, "machine dimension name")?,
                nonzero,
            });
            if !eat(&chars, &mut i, ",") {
                break;
            }
        }
        expect(&chars, &mut i, ")")?;
        skip_ws(&chars, &mut i);
        if i < chars.len() {
            return Err(Error::parse(i + 1, "unexpected trailing input"));
        }
        Ok(TdnStatement {
            tensor,
            dims,
            fusions,
            machine,
            targets,
        })
    }
}

/// Parse a tensor distribution statement.
pub fn parse_tdn(text: &str) -> Result<TdnStatement> {
    text.parse()
}

impl fmt::Display for TdnStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.tensor, self.dims.join(","))?;
        for fu in &self.fusions {
            write!(f, " fuse({}->{})", fu.members.join(","), fu.name)?;
        }
        let targets: Vec<String> = self
            .targets
            .iter()
            .map(|t| format!("{}{}", if t.nonzero { "~" } else { "" }, t.name))
            .collect();
        write!(f, " onto {}({})", self.machine, targets.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> MachineGrid {
        MachineGrid::line(n).unwrap()
    }

    #[test]
    fn row_distribution() {
        let t = parse_tdn("T(x,y) onto M(x)").unwrap();
        let p = t.validate(&FormatSpec::csr(), &grid(2)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].members, vec!["x"]);
        assert!(!p[0].nonzero);
        assert_eq!(parse_tdn("T(x,y) | M(x)").unwrap(), t);
    }

    #[test]
    fn fused_nonzero() {
        let t = parse_tdn("T(x,y) fuse(x,y->f) onto M(~f)").unwrap();
        let p = t.validate(&FormatSpec::csr(), &grid(2)).unwrap();
        assert_eq!(p[0].members, vec!["x", "y"]);
        assert!(p[0].nonzero);
    }

    #[test]
    fn nonzero_slices() {
        let t = parse_tdn("T(x,y,z) onto M(~x)").unwrap();
        let sss: FormatSpec = "sss".parse().unwrap();
        assert!(t.validate(&sss, &grid(2)).is_ok());
        let dss: FormatSpec = "dss".parse().unwrap();
        assert!(t.validate(&dss, &grid(2)).is_err());
    }

    #[test]
    fn replication_names() {
        let t = parse_tdn("c(y) onto M(x)").unwrap();
        assert!(t.validate(&FormatSpec::dense(1), &grid(3)).unwrap().is_empty());
    }

    #[test]
    fn rejections() {
        let csr = FormatSpec::csr();
        let g = grid(2);
        assert!(parse_tdn("T(x,x) onto M(x)").unwrap().validate(&csr, &g).is_err());
        assert!(parse_tdn("T(x,y) onto M(x,y)").unwrap().validate(&csr, &g).is_err());
        assert!(parse_tdn("T(x,y) onto M(~x)").unwrap().validate(&csr, &g).is_err());
        assert!(parse_tdn("T(x,y) fuse(x,y->f) onto M(~f)")
            .unwrap()
            .validate(&FormatSpec::dense(2), &g)
            .is_err());
        assert!(parse_tdn("T(x,y) fuse(x,y->f) onto M(f)").unwrap().validate(&csr, &g).is_err());
        assert!(parse_tdn("T(x,y) fuse(x,z->f) onto M(~f)").unwrap().validate(&csr, &g).is_err());
        assert!(parse_tdn("T(x,y) fuse(x,y->f) onto M(~x)").unwrap().validate(&csr, &g).is_err());
        assert!(parse_tdn("T(x,y) onto").is_err());
        assert!(parse_tdn("T(x,y) onto M(x) extra").is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in ["T(x,y) onto M(x)", "T(x,y) fuse(x,y->f) onto M(~f)", "c(j) onto M(x,y)"] {
            let t = parse_tdn(text).unwrap();
            assert_eq!(t.to_string(), text);
            assert_eq!(parse_tdn(&t.to_string()).unwrap(), t);
        }
    }
}
