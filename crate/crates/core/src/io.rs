//! Text formats: matrices and vectors, flat key=value files, and number
//! formatting shared by the CLI and the harness.
//!
//! A matrix file starts with `m n`, a vector file with `n`; the entries
//! follow in row-major order separated by any whitespace. Lines starting
//! with `#` are comments.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
}

fn parse_dim(tok: Option<&str>, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?;
    tok.parse().map_err(|_| Error::Parse(format!("bad {what} '{tok}'")))
}

fn parse_entries<'a>(it: impl Iterator<Item = &'a str>, expected: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(expected);
    for tok in it {
        let v: f64 = tok.parse().map_err(|_| Error::Parse(format!("bad number '{tok}'")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite entry '{tok}'")));
        }
        out.push(v);
    }
    if out.len() != expected {
        return Err(Error::Parse(format!("expected {expected} entries, found {}", out.len())));
    }
    Ok(out)
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut it = tokens(text);
    let m = parse_dim(it.next(), "row count")?;
    let n = parse_dim(it.next(), "column count")?;
    let data = parse_entries(it, m * n)?;
    Matrix::from_row_major(m, n, &data)
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut it = tokens(text);
    let n = parse_dim(it.next(), "length")?;
    parse_entries(it, n)
}

/// Round-trippable text: entries use the shortest representation that
/// parses back to the same value.
pub fn format_matrix(a: &Matrix) -> String {
    let mut out = format!("{} {}\n", a.rows(), a.cols());
    for r in 0..a.rows() {
        let row: Vec<String> = (0..a.cols()).map(|c| a.get(r, c).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_vector(v: &[f64]) -> String {
    let body: Vec<String> = v.iter().map(f64::to_string).collect();
    format!("{}\n{}\n", v.len(), body.join(" "))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&fs::read_to_string(path)?).map_err(|e| with_path(e, path))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Flat `key=value` pairs in file order. Blank lines and `#` comments are
/// skipped; duplicate keys are rejected.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", no + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", no + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Parse(format!("duplicate key '{k}'")));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn format_key_values<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> String {
    pairs.iter().map(|(k, v)| format!("{}={}\n", k.as_ref(), v.as_ref())).collect()
}

/// Up to 12 significant digits with trailing zeros dropped, so `0.6000000000000001`
/// prints as `0.6`.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let a = Matrix::from_row_major(2, 3, &[1.0, -0.5, 3.25, 1e-17, 0.1, 2.0]).unwrap();
        let text = format_matrix(&a);
        assert!(text.starts_with("2 3\n"));
        let b = parse_matrix(&text).unwrap();
        assert_eq!(a.to_row_major(), b.to_row_major());
    }

    #[test]
    fn parse_is_whitespace_agnostic() {
        let a = parse_matrix("# pair\n2 2\n1 0.6\n\n0   0.8\n").unwrap();
        assert_eq!(a.column(2), &[0.6, 0.8]);
        assert_eq!(parse_vector("3\n1\n2\n3").unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(parse_matrix("2 2\n1 2 3").is_err());
        assert!(parse_matrix("2 2\n1 2 3 4 5").is_err());
        assert!(parse_matrix("2 2\n1 NaN 3 4").is_err());
        assert!(parse_vector("2\ninf 1").is_err());
        assert!(parse_vector("x\n1").is_err());
        assert!(parse_vector("").is_err());
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\nseed = 7\nk=1,2,3\n\n").unwrap();
        assert_eq!(kv, vec![("seed".into(), "7".into()), ("k".into(), "1,2,3".into())]);
        assert!(parse_key_values("a=1\na=2").is_err());
        assert!(parse_key_values("novalue").is_err());
        assert_eq!(format_key_values(&[("a", "1"), ("b", "x")]), "a=1\nb=x\n");
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.6000000000000001), "0.6");
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(2.9999999999999996), "3");
        assert_eq!(format_number(0.123456789012345), "0.123456789012");
        assert_eq!(format_number(f64::INFINITY), "inf");
    }
}
