//! Plain-text grid data files.
//!
//! ```text
//! # comments and blank lines are ignored
//! n_gen 3
//! omega_s 376.99111843077515
//! dt 0.1
//! H 4.0 3.5 3.0
//! D 0.2 0.2 0.1
//! L
//! 2.0 -1.0 -1.0
//! -1.0 2.0 -1.0
//! -1.0 -1.0 2.0
//! sha256 <hex digest of every byte before this line>
//! ```
//!
//! `H` holds inertia constants in seconds, `D` damping coefficients and
//! `L` the Kron-reduced Laplacian, row-major. The checksum line is
//! mandatory and must be last.

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::GridModel;
use crate::error::{Error, Result};

/// The bundled synthetic 10-machine network.
pub const SYNTHETIC10: &str = include_str!("../../data/synthetic10.grid");

#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub h: Vec<f64>,
    pub damping: Vec<f64>,
    pub omega_s: f64,
    pub laplacian: DMatrix<f64>,
    pub dt: f64,
}

impl GridData {
    pub fn to_model(&self) -> Result<GridModel> {
        let inertia = DVector::from_iterator(self.h.len(), self.h.iter().map(|h| 2.0 * h / self.omega_s));
        GridModel::new(inertia, DVector::from_vec(self.damping.clone()), self.laplacian.clone(), self.dt)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::BadDataFile(msg.into())
}

fn parse_numbers(line_no: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields.iter().map(|f| f.parse::<f64>().map_err(|_| bad(format!("line {line_no}: '{f}' is not a number")))).collect()
}

fn scalar(line_no: usize, key: &str, fields: &[&str]) -> Result<f64> {
    match parse_numbers(line_no, fields)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(bad(format!("line {line_no}: '{key}' takes exactly one value"))),
    }
}

/// Parses and checksum-verifies a grid file.
pub fn parse_grid(text: &str) -> Result<GridData> {
    let body_end = text.trim_end().rfind('\n').map(|i| i + 1).ok_or_else(|| bad("file has no checksum line"))?;
    let (body, tail) = text.split_at(body_end);
    let digest = match tail.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["sha256", hex] => hex.to_ascii_lowercase(),
        _ => return Err(bad("last line must be 'sha256 <hex>'")),
    };
    let actual = sha256_hex(body.as_bytes());
    if digest != actual {
        return Err(bad(format!("checksum mismatch: file says {digest}, content hashes to {actual}")));
    }

    let mut n_gen = None;
    let mut omega_s = None;
    let mut dt = None;
    let mut h = None;
    let mut damping = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut in_laplacian = false;
    for (idx, raw) in body.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if in_laplacian {
            rows.push(parse_numbers(line_no, &fields)?);
            continue;
        }
        let (key, rest) = fields.split_first().expect("nonempty line");
        match *key {
            "n_gen" => {
                let v = scalar(line_no, key, rest)?;
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(bad(format!("line {line_no}: n_gen must be a positive integer")));
                }
                n_gen = Some(v as usize);
            }
            "omega_s" => omega_s = Some(scalar(line_no, key, rest)?),
            "dt" => dt = Some(scalar(line_no, key, rest)?),
            "H" => h = Some(parse_numbers(line_no, rest)?),
            "D" => damping = Some(parse_numbers(line_no, rest)?),
            "L" if rest.is_empty() => in_laplacian = true,
            other => return Err(bad(format!("line {line_no}: unknown key '{other}'"))),
        }
    }
    let n = n_gen.ok_or_else(|| bad("missing n_gen"))?;
    let h = h.ok_or_else(|| bad("missing H"))?;
    let damping = damping.ok_or_else(|| bad("missing D"))?;
    if h.len() != n || damping.len() != n {
        return Err(bad(format!("expected {n} values for H and D, got {} and {}", h.len(), damping.len())));
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(bad(format!("L must have {n} rows of {n} values")));
    }
    let data = GridData {
        h,
        damping,
        omega_s: omega_s.ok_or_else(|| bad("missing omega_s"))?,
        laplacian: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        dt: dt.ok_or_else(|| bad("missing dt"))?,
    };
    data.to_model().map_err(|e| bad(e.to_string()))?;
    Ok(data)
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

/// Serializes `data` in the grid-file format, checksum included.
pub fn write_grid(data: &GridData) -> String {
    let n = data.h.len();
    let mut body = format!(
        "n_gen {n}\nomega_s {:?}\ndt {:?}\nH {}\nD {}\nL\n",
        data.omega_s,
        data.dt,
        join(data.h.iter().copied()),
        join(data.damping.iter().copied())
    );
    for i in 0..n {
        body.push_str(&join(data.laplacian.row(i).iter().copied()));
        body.push('\n');
    }
    let digest = sha256_hex(body.as_bytes());
    body.push_str(&format!("sha256 {digest}\n"));
    body
}

pub fn synthetic_ten_machine() -> GridData {
    parse_grid(SYNTHETIC10).expect("bundled grid file is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_parses() {
        let g = synthetic_ten_machine();
        assert_eq!(g.h.len(), 10);
        assert!((g.omega_s - 2.0 * std::f64::consts::PI * 60.0).abs() < 1e-12);
        assert_eq!(g.dt, 0.1);
    }

    #[test]
    fn round_trip() {
        let g = synthetic_ten_machine();
        assert_eq!(parse_grid(&write_grid(&g)).unwrap(), g);
    }

    #[test]
    fn tampering_is_detected() {
        let text = SYNTHETIC10.replace("dt 0.1", "dt 0.2");
        assert!(matches!(parse_grid(&text), Err(Error::BadDataFile(m)) if m.contains("checksum")));
    }

    #[test]
    fn structural_errors() {
        let body = "n_gen 2\nomega_s 1.0\ndt 0.1\nH 1.0 1.0\nD 1.0 1.0\nL\n1.0 -1.0\n-1.0 1.0\n";
        let ok = format!("{body}sha256 {}\n", sha256_hex(body.as_bytes()));
        assert!(parse_grid(&ok).is_ok());
        let short = "n_gen 2\nomega_s 1.0\ndt 0.1\nH 1.0\nD 1.0 1.0\nL\n1.0 -1.0\n-1.0 1.0\n";
        let bad_len = format!("{short}sha256 {}\n", sha256_hex(short.as_bytes()));
        assert!(parse_grid(&bad_len).is_err());
        assert!(parse_grid(body).is_err());
    }
}
