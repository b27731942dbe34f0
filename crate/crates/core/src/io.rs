//! FROSTT `.tns` and MatrixMarket coordinate files.
//!
//! Both formats are 1-indexed on disk. `.tns` files written here start with
//! a `# dims d0 d1 ...` comment so that trailing empty slices survive a
//! round trip; other `#` lines are ignored.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::format::FormatSpec;
use crate::tensor::SparseTensor;

/// Coordinates (0-indexed) and values read from a file, plus declared dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Entries {
    pub dims: Option<Vec<usize>>,
    pub entries: Vec<(Vec<usize>, f64)>,
}

fn malformed(line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        line,
        message: message.into(),
    }
}

fn coordinate(tok: &str, line: usize) -> Result<usize> {
    let c: usize = tok
        .parse()
        .map_err(|_| malformed(line, format!("bad coordinate '{tok}'")))?;
    if c == 0 {
        return Err(malformed(line, "coordinates are 1-indexed; found 0"));
    }
    Ok(c - 1)
}

fn value(tok: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| malformed(line, format!("bad value '{tok}'")))
}

/// Parse `.tns` text.
pub fn parse_tns(text: &str) -> Result<Entries> {
    let mut dims = None;
    let mut entries = Vec::new();
    let mut order: Option<usize> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if let Some(rest) = t.strip_prefix('#') {
            let mut words = rest.split_whitespace();
            if words.next() == Some("dims") {
                let d: Vec<usize> = words
                    .map(|w| w.parse().map_err(|_| malformed(line, format!("bad dimension '{w}'"))))
                    .collect::<Result<_>>()?;
                dims = Some(d);
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(malformed(line, "expected coordinates followed by a value"));
        }
        let k = toks.len() - 1;
        match order {
            None => order = Some(k),
            Some(o) if o != k => {
                return Err(malformed(line, format!("expected {o} coordinates, found {k}")));
            }
            _ => {}
        }
        let coords = toks[..k]
            .iter()
            .map(|c| coordinate(c, line))
            .collect::<Result<Vec<_>>>()?;
        entries.push((coords, value(toks[k], line)?));
    }
    Ok(Entries { dims, entries })
}

/// Parse MatrixMarket coordinate text (`real` or `integer`, `general`).
pub fn parse_matrix_market(text: &str) -> Result<Entries> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(malformed(1, "expected '%%MatrixMarket matrix coordinate real general'"));
    }
    if h[2] != "coordinate" || !(h[3] == "real" || h[3] == "integer") || h[4] != "general" {
        return Err(Error::Unsupported(format!("MatrixMarket header '{}'", header.trim())));
    }
    let mut dims = None;
    let mut expected = 0usize;
    let mut entries = Vec::new();
    for (k, raw) in lines {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if dims.is_none() {
            if toks.len() != 3 {
                return Err(malformed(line, "expected 'rows cols nnz'"));
            }
            let n: Vec<usize> = toks
                .iter()
                .map(|w| w.parse().map_err(|_| malformed(line, format!("bad size '{w}'"))))
                .collect::<Result<_>>()?;
            dims = Some(vec![n[0], n[1]]);
            expected = n[2];
            continue;
        }
        if toks.len() != 3 {
            return Err(malformed(line, "expected 'row col value'"));
        }
        let coords = vec![coordinate(toks[0], line)?, coordinate(toks[1], line)?];
        entries.push((coords, value(toks[2], line)?));
    }
    if dims.is_none() {
        return Err(malformed(1, "missing size line"));
    }
    if entries.len() != expected {
        return Err(malformed(
            text.lines().count(),
            format!("size line declares {expected} entries, found {}", entries.len()),
        ));
    }
    Ok(Entries { dims, entries })
}

/// Read a tensor from a `.tns` or `.mtx` file and pack it in `format`.
///
/// Dimensions come from `dims` when given, else from the file's declared
/// dimensions, else from the largest coordinate of each mode.
pub fn load_tensor(path: impl AsRef<Path>, format: &FormatSpec, dims: Option<Vec<usize>>) -> Result<SparseTensor> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let parsed = if text.trim_start().starts_with("%%") {
        parse_matrix_market(&text)?
    } else {
        parse_tns(&text)?
    };
    tensor_from_entries(parsed, format, dims)
}

pub fn tensor_from_entries(parsed: Entries, format: &FormatSpec, dims: Option<Vec<usize>>) -> Result<SparseTensor> {
    let dims = match dims.or(parsed.dims) {
        Some(d) => d,
        None => {
            let order = parsed
                .entries
                .first()
                .map(|e| e.0.len())
                .unwrap_or(format.order());
            let mut d = vec![0usize; order];
            for (c, _) in &parsed.entries {
                for (m, &x) in c.iter().enumerate() {
                    d[m] = d[m].max(x + 1);
                }
            }
            d
        }
    };
    SparseTensor::from_entries(dims, format, parsed.entries)
}

/// Render a tensor's leaves as `.tns` text with a `# dims` header.
pub fn format_tns(tensor: &SparseTensor) -> String {
    let mut out = String::new();
    let dims: Vec<String> = tensor.dims().iter().map(|d| d.to_string()).collect();
    out.push_str(&format!("# dims {}\n", dims.join(" ")));
    for (coords, v) in tensor.iterate_leaves() {
        for c in coords {
            out.push_str(&(c + 1).to_string());
            out.push(' ');
        }
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

pub fn store_tensor(tensor: &SparseTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(format_tns(tensor).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tns_csr_example() {
        let text = "1 1 1.0\n1 2 2.0\n2 2 3.0\n3 3 4.0\n";
        let t = tensor_from_entries(parse_tns(text).unwrap(), &FormatSpec::csr(), None).unwrap();
        assert_eq!(t.dims(), &[3, 3]);
        assert_eq!(t.nnz(), 4);
    }

    #[test]
    fn tns_errors() {
        assert!(matches!(parse_tns("1 1\n1 2 3 4.0\n"), Err(Error::Malformed { line: 2, .. })));
        assert!(matches!(parse_tns("0 1 1.0\n"), Err(Error::Malformed { line: 1, .. })));
        assert!(matches!(parse_tns("1 x 1.0\n"), Err(Error::Malformed { .. })));
        let oob = tensor_from_entries(parse_tns("3 1 1.0\n").unwrap(), &FormatSpec::csr(), Some(vec![2, 2]));
        assert!(matches!(oob, Err(Error::Bounds(_))));
    }

    #[test]
    fn empty_file_with_declared_dims() {
        let t = tensor_from_entries(parse_tns("# dims 3 3\n").unwrap(), &FormatSpec::csr(), None).unwrap();
        assert_eq!(t.nnz(), 0);
        assert_eq!(t.dims(), &[3, 3]);
    }

    #[test]
    fn matrix_market() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n3 3 2\n1 1 1.5\n3 2 -2\n";
        let e = parse_matrix_market(text).unwrap();
        assert_eq!(e.dims, Some(vec![3, 3]));
        assert_eq!(e.entries[1], (vec![2, 1], -2.0));
        let sym = "%%MatrixMarket matrix coordinate real symmetric\n1 1 0\n";
        assert!(matches!(parse_matrix_market(sym), Err(Error::Unsupported(_))));
        let array = "%%MatrixMarket matrix array real general\n1 1\n";
        assert!(matches!(parse_matrix_market(array), Err(Error::Unsupported(_))));
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n";
        assert!(matches!(parse_matrix_market(short), Err(Error::Malformed { .. })));
    }

    #[test]
    fn store_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tns");
        let t = SparseTensor::from_entries(
            vec![4, 5],
            &FormatSpec::csr(),
            vec![(vec![0, 4], 0.1), (vec![2, 0], -3.25), (vec![2, 3], 1e-300)],
        )
        .unwrap();
        store_tensor(&t, &path).unwrap();
        let back = load_tensor(&path, &FormatSpec::csr(), None).unwrap();
        assert_eq!(back, t);
    }
}
