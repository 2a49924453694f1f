//! Plain-text problem dump for offline debugging.
//!
//! ```text
//! obilc-qp 1
//! n <n> m <m>
//! P
//! <n lines of n values>
//! q
//! <n values>
//! A
//! <m lines of n values>
//! lower
//! <m values>
//! upper
//! <m values>
//! ```
//!
//! Values are whitespace separated, written with 17 significant digits so
//! they read back bit-exactly; infinite bounds are `inf` / `-inf`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::QpProblem;
use crate::error::{Error, Result};

const MAGIC: &str = "obilc-qp 1";

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn write_dump(problem: &QpProblem, path: &Path) -> Result<()> {
    let (n, m) = (problem.n(), problem.m());
    let mut out = format!("{MAGIC}\nn {n} m {m}\nP\n");
    for i in 0..n {
        push_row(&mut out, problem.p().row(i).iter());
    }
    out.push_str("q\n");
    push_row(&mut out, problem.q().iter());
    out.push_str("A\n");
    for i in 0..m {
        push_row(&mut out, problem.a().row(i).iter());
    }
    out.push_str("lower\n");
    push_row(&mut out, problem.lower().iter());
    out.push_str("upper\n");
    push_row(&mut out, problem.upper().iter());
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<QpProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing header"));
    }
    let dims: Vec<&str> = lines.next().ok_or_else(|| bad("missing dimensions"))?.split_whitespace().collect();
    let (n, m) = match dims.as_slice() {
        ["n", n, "m", m] => (
            n.parse::<usize>().map_err(|_| bad("bad n"))?,
            m.parse::<usize>().map_err(|_| bad("bad m"))?,
        ),
        _ => return Err(bad("bad dimension line")),
    };
    let mut section = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
        if lines.next() != Some(name) {
            return Err(bad(&format!("expected section {name}")));
        }
        let mut vals = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated file"))?;
            for tok in line.split_whitespace() {
                vals.push(tok.parse::<f64>().map_err(|_| bad(&format!("cannot parse '{tok}'")))?);
            }
        }
        if vals.len() != rows * cols {
            return Err(bad(&format!("section {name} has {} values, expected {}", vals.len(), rows * cols)));
        }
        Ok(vals)
    };
    let p = section("P", n, n)?;
    let q = section("q", 1, n)?;
    let a = section("A", m, n)?;
    let lower = section("lower", 1, m)?;
    let upper = section("upper", 1, m)?;
    QpProblem::new(
        DMatrix::from_row_slice(n, n, &p),
        DVector::from_vec(q),
        DMatrix::from_row_slice(m, n, &a),
        DVector::from_vec(lower),
        DVector::from_vec(upper),
    )
}
