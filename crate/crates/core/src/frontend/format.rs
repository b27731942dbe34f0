//! Per-level storage formats.
//!
//! A format string lists one level kind per mode in storage order
//! (`d` = Dense, `s` = Compressed), optionally followed by `:` and the
//! tensor mode stored at each level. `ds` is CSR, `ds:1,0` is CSC.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LevelKind {
    Dense,
    Compressed,
}

impl LevelKind {
    pub fn letter(self) -> char {
        match self {
            LevelKind::Dense => 'd',
            LevelKind::Compressed => 's',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FormatSpec {
    kinds: Vec<LevelKind>,
    mode_order: Vec<usize>,
}

impl FormatSpec {
    pub fn new(kinds: Vec<LevelKind>, mode_order: Vec<usize>) -> Result<Self> {
        if kinds.len() != mode_order.len() {
            return Err(Error::validation(format!(
                "format has {} level kinds but a mode order of length {}",
                kinds.len(),
                mode_order.len()
            )));
        }
        let mut seen = vec![false; mode_order.len()];
        for &m in &mode_order {
            if m >= seen.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::validation(format!(
                    "mode order {mode_order:?} is not a permutation"
                )));
            }
        }
        Ok(FormatSpec { kinds, mode_order })
    }

    /// Kinds in storage order with the identity mode order.
    pub fn identity(kinds: Vec<LevelKind>) -> Self {
        let mode_order = (0..kinds.len()).collect();
        FormatSpec { kinds, mode_order }
    }

    pub fn dense(order: usize) -> Self {
        Self::identity(vec![LevelKind::Dense; order])
    }

    pub fn csr() -> Self {
        Self::identity(vec![LevelKind::Dense, LevelKind::Compressed])
    }

    pub fn csc() -> Self {
        FormatSpec {
            kinds: vec![LevelKind::Dense, LevelKind::Compressed],
            mode_order: vec![1, 0],
        }
    }

    pub fn order(&self) -> usize {
        self.kinds.len()
    }

    /// Level kind at each storage position.
    pub fn kinds(&self) -> &[LevelKind] {
        &self.kinds
    }

    /// Tensor mode stored at each storage position.
    pub fn mode_order(&self) -> &[usize] {
        &self.mode_order
    }

    /// Kind of the level that stores tensor mode `mode`.
    pub fn kind_of_mode(&self, mode: usize) -> LevelKind {
        let s = self.storage_position(mode);
        self.kinds[s]
    }

    pub fn storage_position(&self, mode: usize) -> usize {
        self.mode_order
            .iter()
            .position(|&m| m == mode)
            .expect("mode order is a permutation")
    }

    pub fn has_compressed(&self) -> bool {
        self.kinds.contains(&LevelKind::Compressed)
    }

    /// Group storage positions into levels: consecutive dense positions merge.
    pub fn level_groups(&self) -> Vec<(LevelKind, Vec<usize>)> {
        let mut groups: Vec<(LevelKind, Vec<usize>)> = Vec::new();
        for (s, &k) in self.kinds.iter().enumerate() {
            match (k, groups.last_mut()) {
                (LevelKind::Dense, Some((LevelKind::Dense, g))) => g.push(s),
                _ => groups.push((k, vec![s])),
            }
        }
        groups
    }
}

impl FromStr for FormatSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (kinds_text, order_text) = match text.split_once(':') {
            Some((k, o)) => (k, Some(o)),
            None => (text, None),
        };
        let mut kinds = Vec::new();
        for (col, ch) in kinds_text.chars().enumerate() {
            kinds.push(match ch {
                'd' | 'D' => LevelKind::Dense,
                's' | 'S' | 'c' | 'C' => LevelKind::Compressed,
                other => {
                    return Err(Error::parse(
                        col + 1,
                        format!("unknown level kind '{other}' (expected d or s)"),
                    ))
                }
            });
        }
        if kinds.is_empty() {
            return Err(Error::parse(1, "empty format"));
        }
        match order_text {
            None => Ok(FormatSpec::identity(kinds)),
            Some(o) => {
                let mut order = Vec::new();
                for (k, part) in o.split(',').enumerate() {
                    let m = part.trim().parse::<usize>().map_err(|_| {
                        Error::parse(
                            kinds_text.len() + 2 + k,
                            format!("bad mode index '{}'", part.trim()),
                        )
                    })?;
                    order.push(m);
                }
                FormatSpec::new(kinds, order)
            }
        }
    }
}

impl fmt::Display for FormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in &self.kinds {
            write!(f, "{}", k.letter())?;
        }
        if self.mode_order.iter().enumerate().any(|(i, &m)| i != m) {
            let parts: Vec<String> = self.mode_order.iter().map(|m| m.to_string()).collect();
            write!(f, ":{}", parts.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_formats() {
        assert_eq!("ds".parse::<FormatSpec>().unwrap(), FormatSpec::csr());
        assert_eq!("ds:1,0".parse::<FormatSpec>().unwrap(), FormatSpec::csc());
        assert_eq!("dd".parse::<FormatSpec>().unwrap().level_groups().len(), 1);
        let f: FormatSpec = "dds".parse().unwrap();
        assert_eq!(f.level_groups(), vec![(LevelKind::Dense, vec![0, 1]), (LevelKind::Compressed, vec![2])]);
    }

    #[test]
    fn rejects_bad_formats() {
        assert!(matches!("dx".parse::<FormatSpec>(), Err(Error::Parse { column: 2, .. })));
        assert!("ds:0,0".parse::<FormatSpec>().is_err());
        assert!("ds:0".parse::<FormatSpec>().is_err());
        assert!("".parse::<FormatSpec>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in ["d", "ds", "ds:1,0", "sss", "dss:2,0,1"] {
            let f: FormatSpec = text.parse().unwrap();
            assert_eq!(f.to_string(), text);
            assert_eq!(f.to_string().parse::<FormatSpec>().unwrap(), f);
        }
    }
}
