use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::IndexSpace;

/// A grid of workers with named dimensions. Colors are grid points
/// linearized in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineGrid {
    dims: Vec<(String, usize)>,
}

impl MachineGrid {
    pub fn new(dims: Vec<(String, usize)>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::validation("machine grid needs at least one dimension"));
        }
        for (k, (name, n)) in dims.iter().enumerate() {
            if *n == 0 {
                return Err(Error::validation(format!("machine dimension {name} has extent 0")));
            }
            if dims[..k].iter().any(|(m, _)| m == name) {
                return Err(Error::validation(format!("machine dimension {name} repeated")));
            }
        }
        Ok(MachineGrid { dims })
    }

    /// A one-dimensional grid named `x`.
    pub fn line(pieces: usize) -> Result<Self> {
        Self::new(vec![("x".to_string(), pieces)])
    }

    pub fn dims(&self) -> &[(String, usize)] {
        &self.dims
    }

    pub fn extents(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.1).collect()
    }

    pub fn workers(&self) -> usize {
        self.dims.iter().map(|d| d.1).product()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|(n, _)| n == name)
    }

    pub fn extent(&self, dim: usize) -> usize {
        self.dims[dim].1
    }

    pub fn space(&self) -> IndexSpace {
        IndexSpace::new(self.extents())
    }

    /// Grid coordinates of a color.
    pub fn point(&self, color: usize) -> Vec<usize> {
        self.space().delinearize(color)
    }
}

impl FromStr for MachineGrid {
    type Err = Error;

    /// `4` (one dimension named `x`) or `x=2,y=2`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Ok(n) = text.parse::<usize>() {
            return Self::line(n);
        }
        let mut dims = Vec::new();
        for part in text.split(',') {
            let (name, n) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("expected name=extent, got '{part}'")))?;
            let n = n
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(1, format!("bad extent in '{part}'")))?;
            dims.push((name.trim().to_string(), n));
        }
        Self::new(dims)
    }
}

impl fmt::Display for MachineGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|(n, e)| format!("{n}={e}")).collect();
        write!(f, "{}", parts.join(","))
    }
}
