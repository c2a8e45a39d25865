//! Matrix Market text format.

use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{BsepError, Result};
use crate::matrix::{ComplexDense, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtxLayout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Complex,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
    Hermitian,
}

fn perr(line: usize, msg: impl Into<String>) -> BsepError {
    BsepError::ParseError { line, msg: msg.into() }
}

/// Reads a Matrix Market file into a dense complex matrix, expanding
/// symmetric, skew-symmetric and Hermitian storage.
pub fn read_matrix_market(path: &Path) -> Result<ComplexDense> {
    let text = fs::read_to_string(path).map_err(|e| BsepError::Io(format!("{}: {e}", path.display())))?;
    parse_matrix_market(&text)
}

pub fn parse_matrix_market(text: &str) -> Result<ComplexDense> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(perr(1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    let layout = match words[2].as_str() {
        "coordinate" => MtxLayout::Coordinate,
        "array" => MtxLayout::Array,
        other => return Err(BsepError::UnsupportedField(format!("format {other}"))),
    };
    let field = match words[3].as_str() {
        "real" | "double" => Field::Real,
        "complex" => Field::Complex,
        "integer" => Field::Integer,
        other => return Err(BsepError::UnsupportedField(other.to_string())),
    };
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        "hermitian" => Symmetry::Hermitian,
        other => return Err(BsepError::UnsupportedField(format!("symmetry {other}"))),
    };
    if symmetry == Symmetry::Hermitian && field != Field::Complex {
        return Err(perr(1, "hermitian storage requires the complex field"));
    }

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let last_line = text.lines().count();
    let (size_line, size) = data.next().ok_or_else(|| perr(last_line + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(size_line, format!("bad size entry `{t}`"))))
        .collect::<Result<_>>()?;
    let want = if layout == MtxLayout::Coordinate { 3 } else { 2 };
    if dims.len() != want {
        return Err(perr(size_line, format!("expected {want} size entries")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetry != Symmetry::General && rows != cols {
        return Err(perr(size_line, "symmetric storage of a non-square matrix"));
    }
    let mut m = ComplexDense::zeros(rows, cols);
    let value_words = if field == Field::Complex { 2 } else { 1 };
    let parse_value = |line: usize, toks: &[&str]| -> Result<C64> {
        let num = |t: &str| t.parse::<f64>().map_err(|_| perr(line, format!("bad number `{t}`")));
        let v = if field == Field::Complex { C64::new(num(toks[0])?, num(toks[1])?) } else { C64::new(num(toks[0])?, 0.0) };
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(perr(line, "non-finite value"));
        }
        Ok(v)
    };
    let mut place = |i: usize, j: usize, v: C64| {
        m[(i, j)] = v;
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => m[(j, i)] = v,
                Symmetry::SkewSymmetric => m[(j, i)] = -v,
                Symmetry::Hermitian => m[(j, i)] = v.conj(),
            }
        }
    };

    match layout {
        MtxLayout::Coordinate => {
            let nnz = dims[2];
            for _ in 0..nnz {
                let (ln, l) = data.next().ok_or_else(|| perr(last_line + 1, format!("expected {nnz} entries, file ended early")))?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != 2 + value_words {
                    return Err(perr(ln, format!("expected {} fields", 2 + value_words)));
                }
                let idx = |t: &str, bound: usize| -> Result<usize> {
                    let v: usize = t.parse().map_err(|_| perr(ln, format!("bad index `{t}`")))?;
                    if v == 0 || v > bound {
                        return Err(perr(ln, format!("index {v} out of range 1..={bound}")));
                    }
                    Ok(v - 1)
                };
                let (i, j) = (idx(toks[0], rows)?, idx(toks[1], cols)?);
                if symmetry != Symmetry::General && i < j {
                    return Err(perr(ln, "entry above the diagonal in symmetric storage"));
                }
                place(i, j, parse_value(ln, &toks[2..])?);
            }
        }
        MtxLayout::Array => {
            let mut slots = Vec::new();
            for j in 0..cols {
                let start = match symmetry {
                    Symmetry::General => 0,
                    Symmetry::SkewSymmetric => j + 1,
                    _ => j,
                };
                slots.extend((start..rows).map(|i| (i, j)));
            }
            for (i, j) in slots {
                let (ln, l) = data.next().ok_or_else(|| perr(last_line + 1, "array data ended early"))?;
                let toks: Vec<&str> = l.split_whitespace().collect();
                if toks.len() != value_words {
                    return Err(perr(ln, format!("expected {value_words} fields")));
                }
                place(i, j, parse_value(ln, &toks)?);
            }
        }
    }
    if let Some((ln, _)) = data.next() {
        return Err(perr(ln, "unexpected trailing data"));
    }
    Ok(m)
}

/// Complex general storage with 17 significant digits per value.
pub fn format_matrix_market(m: &ComplexDense, layout: MtxLayout) -> String {
    let mut out = String::new();
    let num = |x: f64| format!("{x:.16e}");
    match layout {
        MtxLayout::Coordinate => {
            let nz: Vec<(usize, usize, C64)> =
                (0..m.cols()).flat_map(|j| (0..m.rows()).map(move |i| (i, j))).map(|(i, j)| (i, j, m[(i, j)])).filter(|e| e.2 != ZERO).collect();
            out.push_str("%%MatrixMarket matrix coordinate complex general\n");
            out.push_str(&format!("{} {} {}\n", m.rows(), m.cols(), nz.len()));
            for (i, j, v) in nz {
                out.push_str(&format!("{} {} {} {}\n", i + 1, j + 1, num(v.re), num(v.im)));
            }
        }
        MtxLayout::Array => {
            out.push_str("%%MatrixMarket matrix array complex general\n");
            out.push_str(&format!("{} {}\n", m.rows(), m.cols()));
            for v in m.as_slice() {
                out.push_str(&format!("{} {}\n", num(v.re), num(v.im)));
            }
        }
    }
    out
}

pub fn write_matrix_market(m: &ComplexDense, path: &Path, layout: MtxLayout) -> Result<()> {
    fs::write(path, format_matrix_market(m, layout)).map_err(|e| BsepError::Io(format!("{}: {e}", path.display())))
}
