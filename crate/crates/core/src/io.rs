//! Matrix, edge-list and table formats.
//!
//! Text matrices are header-free, one row per line, fields separated by
//! commas and/or whitespace. The binary layout is the 8-byte magic
//! `ROBSUB\0\x01`, then `N` and `p` as little-endian `u32`, then `N * p`
//! little-endian `f64` in row-major order.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::online::StreamMetrics;
use crate::path::PathResult;

pub const BINARY_MAGIC: [u8; 8] = *b"ROBSUB\0\x01";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
}

/// Read a delimited text matrix. Blank lines and lines starting with `#`
/// are skipped.
pub fn read_matrix_text(r: impl BufRead) -> Result<DMatrix<f64>> {
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let before = data.len();
        for f in fields(t) {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(idx + 1, "non-finite value"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match ncols {
            None => ncols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(idx + 1, format!("expected {c} fields, found {width}")));
            }
            _ => {}
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| parse_err(0, "empty matrix"))?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

/// Write comma-separated rows using the shortest round-trip representation.
pub fn write_matrix_text(w: &mut impl Write, m: &DMatrix<f64>) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_binary(mut r: impl Read) -> Result<DMatrix<f64>> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if head[..8] != BINARY_MAGIC {
        return Err(parse_err(0, "bad magic in binary matrix"));
    }
    let n = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let p = u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as usize;
    let mut buf = vec![0u8; n * p * 8];
    r.read_exact(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("binary matrix"));
    }
    Ok(DMatrix::from_row_slice(n, p, &vals))
}

pub fn write_matrix_binary(w: &mut impl Write, m: &DMatrix<f64>) -> Result<()> {
    let dim = |d: usize| u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension {d} exceeds u32")));
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&dim(m.nrows())?.to_le_bytes())?;
    w.write_all(&dim(m.ncols())?.to_le_bytes())?;
    for row in m.row_iter() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Edge pairs of 0-based node ids, one per line; returns a symmetric 0/1
/// adjacency. `n` fixes the node count (otherwise max id + 1). Self-loops
/// are rejected.
pub fn read_edge_list(r: impl BufRead, n: Option<usize>) -> Result<DMatrix<f64>> {
    let mut edges = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let ids: Vec<&str> = fields(t).collect();
        if ids.len() != 2 {
            return Err(parse_err(idx + 1, "expected two node ids"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(idx + 1, format!("bad node id {s:?}")))
        };
        let (a, b) = (parse(ids[0])?, parse(ids[1])?);
        if a == b {
            return Err(parse_err(idx + 1, "self-loop"));
        }
        edges.push((a, b, idx + 1));
    }
    let max_id = edges.iter().map(|(a, b, _)| (*a).max(*b) + 1).max().unwrap_or(0);
    let n = n.unwrap_or(max_id);
    let mut adj = DMatrix::zeros(n, n);
    for (a, b, line) in edges {
        if a >= n || b >= n {
            return Err(parse_err(line, format!("node id beyond {n} nodes")));
        }
        adj[(a, b)] = 1.0;
        adj[(b, a)] = 1.0;
    }
    Ok(adj)
}

/// `lambda2,support,objective,o1..oN` with one row per grid point.
pub fn write_path_table(w: &mut impl Write, path: &PathResult) -> Result<()> {
    let n = path.outlier_norms.nrows();
    let mut head = vec!["lambda2".to_string(), "support".into(), "objective".into()];
    head.extend((1..=n).map(|i| format!("o{i}")));
    writeln!(w, "{}", head.join(","))?;
    for g in 0..path.len() {
        let mut row = vec![
            format!("{:?}", path.grid[g]),
            path.support_counts[g].to_string(),
            format!("{:?}", path.fits[g].objective),
        ];
        row.extend(path.outlier_norms.column(g).iter().map(|v| format!("{v:?}")));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// `n,outlier_norm,angle,error`; a missing angle is written as `nan`.
pub fn write_stream_metrics(w: &mut impl Write, rows: &[StreamMetrics]) -> Result<()> {
    writeln!(w, "n,outlier_norm,angle,error")?;
    for m in rows {
        let angle = m.angle.map_or("nan".to_string(), |a| format!("{a:?}"));
        writeln!(w, "{},{:?},{},{:?}", m.n, m.outlier_norm, angle, m.reconstruction_error)?;
    }
    Ok(())
}
