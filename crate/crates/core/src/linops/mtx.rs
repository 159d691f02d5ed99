//! Matrix Market reader and writer (real coordinate and real array formats).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

enum Body {
    Coordinate,
    Array,
}

struct Header {
    body: Body,
    symmetric: bool,
}

fn perr(ctx: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        context: ctx.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(ctx: &str, first: &str) -> Result<Header> {
    let toks: Vec<String> = first.split_whitespace().map(|s| s.to_lowercase()).collect();
    if toks.len() < 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(perr(ctx, 1, "missing %%MatrixMarket matrix banner"));
    }
    let body = match toks[2].as_str() {
        "coordinate" => Body::Coordinate,
        "array" => Body::Array,
        o => return Err(perr(ctx, 1, format!("unsupported format `{o}`"))),
    };
    if toks[3] != "real" && toks[3] != "integer" {
        return Err(perr(ctx, 1, format!("unsupported field `{}`", toks[3])));
    }
    let symmetric = match toks[4].as_str() {
        "general" => false,
        "symmetric" => true,
        o => return Err(perr(ctx, 1, format!("unsupported symmetry `{o}`"))),
    };
    Ok(Header { body, symmetric })
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('%'))
}

fn nums<T: std::str::FromStr>(ctx: &str, line: usize, s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| perr(ctx, line, format!("bad number `{t}`")))
        })
        .collect()
}

enum Parsed {
    Sparse(CsrMatrix),
    Dense(DMatrix<f64>),
}

fn parse(ctx: &str, text: &str) -> Result<Parsed> {
    let first = text.lines().next().ok_or_else(|| perr(ctx, 1, "empty file"))?;
    let h = parse_header(ctx, first)?;
    let mut lines = data_lines(text);
    let (sl, size) = lines.next().ok_or_else(|| perr(ctx, 2, "missing size line"))?;
    let size: Vec<usize> = nums(ctx, sl, size)?;
    match h.body {
        Body::Coordinate => {
            if size.len() != 3 {
                return Err(perr(ctx, sl, "size line needs rows cols nnz"));
            }
            let (r, c, nnz) = (size[0], size[1], size[2]);
            let mut t = Vec::with_capacity(nnz * if h.symmetric { 2 } else { 1 });
            let mut count = 0;
            for (ln, l) in lines {
                let f: Vec<&str> = l.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(perr(ctx, ln, "entry needs row col value"));
                }
                let i: usize = f[0].parse().map_err(|_| perr(ctx, ln, "bad row index"))?;
                let j: usize = f[1].parse().map_err(|_| perr(ctx, ln, "bad column index"))?;
                let v: f64 = f[2].parse().map_err(|_| perr(ctx, ln, "bad value"))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(perr(ctx, ln, format!("index ({i}, {j}) out of range")));
                }
                t.push((i - 1, j - 1, v));
                if h.symmetric && i != j {
                    t.push((j - 1, i - 1, v));
                }
                count += 1;
            }
            if count != nnz {
                return Err(perr(ctx, sl, format!("expected {nnz} entries, found {count}")));
            }
            Ok(Parsed::Sparse(CsrMatrix::from_triplets(r, c, t)?))
        }
        Body::Array => {
            if size.len() != 2 {
                return Err(perr(ctx, sl, "size line needs rows cols"));
            }
            let (r, c) = (size[0], size[1]);
            let mut vals = Vec::with_capacity(r * c);
            for (ln, l) in lines {
                vals.extend(nums::<f64>(ctx, ln, l)?);
            }
            if h.symmetric {
                if r != c {
                    return Err(perr(ctx, sl, "symmetric array must be square"));
                }
                let want = r * (r + 1) / 2;
                if vals.len() != want {
                    return Err(perr(ctx, sl, format!("expected {want} values, found {}", vals.len())));
                }
                let mut m = DMatrix::zeros(r, r);
                let mut it = vals.into_iter();
                for j in 0..r {
                    for i in j..r {
                        let v = it.next().unwrap();
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                return Ok(Parsed::Dense(m));
            }
            if vals.len() != r * c {
                return Err(perr(ctx, sl, format!("expected {} values, found {}", r * c, vals.len())));
            }
            Ok(Parsed::Dense(DMatrix::from_column_slice(r, c, &vals)))
        }
    }
}

fn read(path: &Path) -> Result<(String, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok((path.display().to_string(), text))
}

pub fn parse_sparse(ctx: &str, text: &str) -> Result<CsrMatrix> {
    match parse(ctx, text)? {
        Parsed::Sparse(m) => Ok(m),
        Parsed::Dense(d) => Ok(CsrMatrix::from_dense(&d)),
    }
}

pub fn parse_dense(ctx: &str, text: &str) -> Result<DMatrix<f64>> {
    match parse(ctx, text)? {
        Parsed::Sparse(m) => Ok(m.to_dense()),
        Parsed::Dense(d) => Ok(d),
    }
}

/// Sparse matrix from a coordinate (or array) file.
pub fn read_sparse(path: &Path) -> Result<CsrMatrix> {
    let (ctx, text) = read(path)?;
    parse_sparse(&ctx, &text)
}

/// Dense block from an array (or coordinate) file.
pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    let (ctx, text) = read(path)?;
    parse_dense(&ctx, &text)
}

pub fn format_sparse(a: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
    }
    s
}

pub fn format_dense(a: &DMatrix<f64>) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", a.nrows(), a.ncols());
    for v in a.iter() {
        let _ = writeln!(s, "{v:e}");
    }
    s
}

pub fn write_sparse(path: &Path, a: &CsrMatrix) -> Result<()> {
    std::fs::write(path, format_sparse(a)).map_err(|e| Error::io(path, e))
}

pub fn write_dense(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_dense(a)).map_err(|e| Error::io(path, e))
}
