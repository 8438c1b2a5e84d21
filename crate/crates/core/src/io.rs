//! Text field files.
//!
//! Line 1 is the header `m N nu R`; it is followed by `N^m` rows of `nu`
//! whitespace-separated floats in lexicographic node order. Floats are
//! written with 17 significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::{Grid, GridField, Result, WspError};

fn io_err(path: &Path, e: std::io::Error) -> WspError {
    WspError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn parse_field(text: &str) -> Result<GridField> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| WspError::MalformedHeader("empty file".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 4 {
        return Err(WspError::MalformedHeader(format!(
            "expected 'm N nu R', got '{header}'"
        )));
    }
    let bad = |what: &str| WspError::MalformedHeader(format!("invalid {what} in '{header}'"));
    let m: usize = tok[0].parse().map_err(|_| bad("m"))?;
    let n: usize = tok[1].parse().map_err(|_| bad("N"))?;
    let nu: usize = tok[2].parse().map_err(|_| bad("nu"))?;
    let r: f64 = tok[3].parse().map_err(|_| bad("R"))?;
    let grid = Grid::new(m, n, r).map_err(|e| WspError::MalformedHeader(e.to_string()))?;
    if nu == 0 {
        return Err(bad("nu"));
    }

    let expected = grid.node_count();
    let mut values = Vec::with_capacity(expected * nu);
    let mut rows = 0;
    for (row, line) in lines.enumerate() {
        rows += 1;
        if rows > expected {
            continue;
        }
        let before = values.len();
        for t in line.split_whitespace() {
            let v: f64 = t.parse().map_err(|_| WspError::MalformedRow {
                row,
                reason: format!("cannot parse '{t}'"),
            })?;
            if !v.is_finite() {
                return Err(WspError::NonFinite { row });
            }
            values.push(v);
        }
        if values.len() - before != nu {
            return Err(WspError::MalformedRow {
                row,
                reason: format!("expected {nu} entries, found {}", values.len() - before),
            });
        }
    }
    if rows != expected {
        return Err(WspError::RowCount { expected, found: rows });
    }
    GridField::new(grid, nu, values)
}

pub fn format_field(field: &GridField) -> String {
    let g = field.grid();
    let mut out = String::with_capacity(field.values().len() * 25 + 64);
    let _ = writeln!(out, "{} {} {} {:.16e}", g.m, g.n, field.nu(), g.half_width);
    for y in field.nodes() {
        for (c, v) in y.iter().enumerate() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn load_field(path: impl AsRef<Path>) -> Result<GridField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_field(&text)
}

pub fn save_field(field: &GridField, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, format_field(field).as_bytes())
}

/// Writes to a sibling temporary file, then renames it over `path`, so a
/// reader never observes a partially written file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| WspError::Io { path: path.display().to_string(), message: "not a file path".into() })?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}
