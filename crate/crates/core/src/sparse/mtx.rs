//! Matrix Market reading and writing.
//!
//! Matrices: `coordinate` format with `real`/`integer` field and `general`/`symmetric`
//! symmetry. Vectors: `array` format, or plain whitespace-separated numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::CsrMatrix;
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_matrix_market(BufReader::new(file), path)
}

/// Parses coordinate Matrix Market text; `origin` only labels error messages.
pub fn parse_matrix_market(reader: impl BufRead, origin: &Path) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty file"))?;
    let header = header.map_err(|e| io_err(origin, e))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(origin, 1, format!("malformed header '{header}'")));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(
            origin,
            1,
            format!("unsupported format '{}', expected coordinate", tokens[2]),
        ));
    }
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => {
            return Err(parse_err(
                origin,
                1,
                format!("field '{other}' is not real-valued"),
            ))
        }
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => {
            return Err(parse_err(
                origin,
                1,
                format!("unsupported symmetry '{other}'"),
            ))
        }
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| io_err(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(origin, lineno, "size line needs 3 integers"));
                }
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_err(origin, lineno, format!("bad integer '{s}'")))
                };
                let (m, n, nnz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                if m == 0 || n == 0 || nnz == 0 {
                    return Err(parse_err(origin, lineno, "empty matrix"));
                }
                if symmetry == Symmetry::Symmetric && m != n {
                    return Err(parse_err(origin, lineno, "symmetric matrix must be square"));
                }
                triplets.reserve(if symmetry == Symmetry::Symmetric { 2 * nnz } else { nnz });
                size = Some((m, n, nnz));
            }
            Some((m, n, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(origin, lineno, "entry line needs 'row col value'"));
                }
                let index = |s: &str, bound: usize| -> Result<usize> {
                    let v = s
                        .parse::<usize>()
                        .map_err(|_| parse_err(origin, lineno, format!("bad index '{s}'")))?;
                    if v == 0 || v > bound {
                        return Err(parse_err(
                            origin,
                            lineno,
                            format!("index {v} out of bounds 1..={bound}"),
                        ));
                    }
                    Ok(v - 1)
                };
                let r = index(fields[0], m)?;
                let c = index(fields[1], n)?;
                let v = fields[2]
                    .parse::<f64>()
                    .map_err(|_| parse_err(origin, lineno, format!("bad value '{}'", fields[2])))?;
                triplets.push((r, c, v));
                if symmetry == Symmetry::Symmetric && r != c {
                    triplets.push((c, r, v));
                }
            }
        }
    }
    let (m, n, nnz) = size.ok_or_else(|| parse_err(origin, 1, "missing size line"))?;
    let stored = if symmetry == Symmetry::Symmetric {
        triplets.iter().filter(|t| t.0 >= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(parse_err(
            origin,
            0,
            format!("header declares {nnz} entries, found {stored}"),
        ));
    }
    CsrMatrix::from_triplets(m, n, &triplets)
}

/// Writes `general` coordinate format (1-based), full precision.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
        for i in 0..a.n_rows() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_err(path, e))
}

/// Reads a vector from Matrix Market `array` format or whitespace-separated text.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| io_err(path, e))?;
    let is_mm = text.starts_with("%%MatrixMarket");
    if is_mm {
        let header = text.lines().next().unwrap_or_default().to_ascii_lowercase();
        if !header.contains(" array ") {
            return Err(parse_err(path, 1, "vector files must use array format"));
        }
    }
    let mut values = Vec::new();
    let mut declared: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        if is_mm && declared.is_none() {
            let dims: Vec<usize> = trimmed
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(path, idx + 1, "bad array size line"))?;
            if dims.len() != 2 || (dims[0] != 1 && dims[1] != 1) {
                return Err(parse_err(path, idx + 1, "array must be a single column or row"));
            }
            declared = Some(dims[0] * dims[1]);
            continue;
        }
        for tok in trimmed.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| parse_err(path, idx + 1, format!("bad value '{tok}'")))?,
            );
        }
    }
    if let Some(n) = declared {
        if n != values.len() {
            return Err(parse_err(
                path,
                0,
                format!("array declares {n} values, found {}", values.len()),
            ));
        }
    }
    Ok(values)
}

pub fn write_vector(path: impl AsRef<Path>, x: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix array real general")?;
        writeln!(w, "{} 1", x.len())?;
        for v in x {
            writeln!(w, "{v:e}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_err(path, e))
}
