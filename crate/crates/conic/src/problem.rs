//! Conic program data in the form
//!
//! ```text
//! minimize    c'x
//! subject to  A x = b
//!             h - G x ∈ K
//! ```
//!
//! where `K` is a product of nonnegative orthants and second-order cones
//! `{ (t, u) : ‖u‖ ≤ t }`, listed in row order of `G`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::ConicError;

/// One nonzero of a sparse matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

impl Triplet {
    pub fn new(row: usize, col: usize, val: f64) -> Self {
        Self { row, col, val }
    }
}

/// A block of consecutive rows of `h - G x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    NonNegative(usize),
    /// Dimension including the leading `t` entry.
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNegative(d) | Cone::SecondOrder(d) => d,
        }
    }

    /// Barrier degree contribution.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNegative(d) => d,
            Cone::SecondOrder(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub c: Vec<f64>,
    pub a: Vec<Triplet>,
    pub b: Vec<f64>,
    pub g: Vec<Triplet>,
    pub h: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            c: vec![0.0; num_vars],
            ..Default::default()
        }
    }

    pub fn num_eq(&self) -> usize {
        self.b.len()
    }

    pub fn num_cone_rows(&self) -> usize {
        self.h.len()
    }

    /// Appends one equality row `Σ coeffs·x = rhs` and returns its index.
    pub fn add_equality(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.b.len();
        for &(col, val) in coeffs {
            if val != 0.0 {
                self.a.push(Triplet::new(row, col, val));
            }
        }
        self.b.push(rhs);
        row
    }

    /// Appends `Σ coeffs·x ≤ rhs` as a one-dimensional nonnegative cone row.
    pub fn add_inequality(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.h.len();
        for &(col, val) in coeffs {
            if val != 0.0 {
                self.g.push(Triplet::new(row, col, val));
            }
        }
        self.h.push(rhs);
        match self.cones.last_mut() {
            Some(Cone::NonNegative(d)) => *d += 1,
            _ => self.cones.push(Cone::NonNegative(1)),
        }
        row
    }

    /// Appends a second-order cone `‖(e₁, …)‖ ≤ e₀` where each entry
    /// `eᵢ = offsetᵢ + Σ coeffs·x` is an affine expression. Returns the first row.
    pub fn add_second_order(&mut self, entries: &[(f64, Vec<(usize, f64)>)]) -> usize {
        let first = self.h.len();
        for (i, (offset, coeffs)) in entries.iter().enumerate() {
            // h - G x = offset + coeffs·x
            for &(col, val) in coeffs {
                if val != 0.0 {
                    self.g.push(Triplet::new(first + i, col, -val));
                }
            }
            self.h.push(*offset);
        }
        self.cones.push(Cone::SecondOrder(entries.len()));
        first
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars;
        if self.c.len() != n {
            return Err(ConicError::Dimension(format!(
                "cost vector has {} entries, expected {n}",
                self.c.len()
            )));
        }
        let cone_rows: usize = self.cones.iter().map(Cone::dim).sum();
        if cone_rows != self.h.len() {
            return Err(ConicError::Dimension(format!(
                "cones cover {cone_rows} rows but h has {}",
                self.h.len()
            )));
        }
        for cone in &self.cones {
            if let Cone::SecondOrder(d) = cone {
                if *d < 2 {
                    return Err(ConicError::Dimension(
                        "second-order cone needs at least two rows".into(),
                    ));
                }
            }
        }
        for (name, mat, rows) in [("A", &self.a, self.b.len()), ("G", &self.g, self.h.len())] {
            if let Some(t) = mat.iter().find(|t| t.row >= rows || t.col >= n) {
                return Err(ConicError::Dimension(format!(
                    "{name} entry ({}, {}) outside {rows}x{n}",
                    t.row, t.col
                )));
            }
        }
        let all_finite = self
            .c
            .iter()
            .chain(&self.b)
            .chain(&self.h)
            .copied()
            .chain(self.a.iter().chain(&self.g).map(|t| t.val))
            .all(f64::is_finite);
        if !all_finite {
            return Err(ConicError::NonFinite);
        }
        Ok(())
    }

    /// Writes the program in the sparse triplet text format:
    ///
    /// ```text
    /// dims <n> <p> <m>
    /// c <col> <val>
    /// A <row> <col> <val>
    /// b <row> <val>
    /// G <row> <col> <val>
    /// h <row> <val>
    /// nonneg <dim>
    /// soc <dim>
    /// ```
    ///
    /// Indices are zero-based; zero entries of `c`, `b`, `h` are omitted;
    /// cone lines appear in row order. Lines starting with `#` are comments.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# minimize c'x  s.t.  A x = b,  h - G x in K");
        let _ = writeln!(s, "dims {} {} {}", self.num_vars, self.b.len(), self.h.len());
        for (j, v) in self.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(s, "c {j} {v:e}");
        }
        for t in &self.a {
            let _ = writeln!(s, "A {} {} {:e}", t.row, t.col, t.val);
        }
        for (i, v) in self.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(s, "b {i} {v:e}");
        }
        for t in &self.g {
            let _ = writeln!(s, "G {} {} {:e}", t.row, t.col, t.val);
        }
        for (i, v) in self.h.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(s, "h {i} {v:e}");
        }
        for cone in &self.cones {
            match cone {
                Cone::NonNegative(d) => {
                    let _ = writeln!(s, "nonneg {d}");
                }
                Cone::SecondOrder(d) => {
                    let _ = writeln!(s, "soc {d}");
                }
            }
        }
        out.write_all(s.as_bytes())
    }

    /// Parses the format produced by [`ConicProblem::write_triplets`].
    pub fn read_triplets<R: BufRead>(input: R) -> Result<Self, ConicError> {
        let mut problem: Option<ConicProblem> = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ConicError::Parse(lineno + 1, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| ConicError::Parse(lineno + 1, msg.to_string());
            let fields: Vec<&str> = line.split_whitespace().collect();
            let idx = |k: usize| -> Result<usize, ConicError> {
                fields
                    .get(k)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| bad("expected index"))
            };
            let num = |k: usize| -> Result<f64, ConicError> {
                fields
                    .get(k)
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| bad("expected number"))
            };
            if fields[0] == "dims" {
                let (n, p, m) = (idx(1)?, idx(2)?, idx(3)?);
                let mut pr = ConicProblem::new(n);
                pr.b = vec![0.0; p];
                pr.h = vec![0.0; m];
                problem = Some(pr);
                continue;
            }
            let pr = problem.as_mut().ok_or_else(|| bad("missing dims line"))?;
            match fields[0] {
                "c" => *pr.c.get_mut(idx(1)?).ok_or_else(|| bad("index out of range"))? = num(2)?,
                "b" => *pr.b.get_mut(idx(1)?).ok_or_else(|| bad("index out of range"))? = num(2)?,
                "h" => *pr.h.get_mut(idx(1)?).ok_or_else(|| bad("index out of range"))? = num(2)?,
                "A" => pr.a.push(Triplet::new(idx(1)?, idx(2)?, num(3)?)),
                "G" => pr.g.push(Triplet::new(idx(1)?, idx(2)?, num(3)?)),
                "nonneg" => pr.cones.push(Cone::NonNegative(idx(1)?)),
                "soc" => pr.cones.push(Cone::SecondOrder(idx(1)?)),
                other => return Err(bad(&format!("unknown record '{other}'"))),
            }
        }
        let pr = problem.ok_or_else(|| ConicError::Parse(0, "empty input".into()))?;
        pr.validate()?;
        Ok(pr)
    }
}

/// Row-major sparse matrix used by the solver for products.
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub ncols: usize,
}

impl SparseRows {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[Triplet]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for t in triplets {
            rows[t.row].push((t.col, t.val));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            // merge duplicates
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            *row = merged;
        }
        Self { rows, ncols }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, yi) in self.rows.iter().zip(y) {
            for &(c, v) in r {
                out[c] += v * yi;
            }
        }
        out
    }
}
