//! Generic bounded linear program `min c'x  s.t.  row_lo <= A x <= row_hi,  col_lo <= x <= col_hi`.

use std::io::Write;

use crate::numeric::format_sig;

/// Linear program with the constraint matrix stored column-wise (CSC).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub(crate) cost: Vec<f64>,
    pub(crate) col_lo: Vec<f64>,
    pub(crate) col_hi: Vec<f64>,
    pub(crate) row_lo: Vec<f64>,
    pub(crate) row_hi: Vec<f64>,
    pub(crate) col_start: Vec<usize>,
    pub(crate) row_index: Vec<usize>,
    pub(crate) value: Vec<f64>,
    col_names: Vec<String>,
    row_names: Vec<String>,
}

impl LinearProgram {
    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_lo.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.value.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Row indices and coefficients of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.col_start[j], self.col_start[j + 1]);
        (&self.row_index[a..b], &self.value[a..b])
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.col_lo[j], self.col_hi[j])
    }

    pub fn row_bounds(&self, i: usize) -> (f64, f64) {
        (self.row_lo[i], self.row_hi[i])
    }

    pub fn col_name(&self, j: usize) -> &str {
        &self.col_names[j]
    }

    pub fn row_name(&self, i: usize) -> &str {
        &self.row_names[i]
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let (rows, vals) = self.column(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    act[i] += v * xj;
                }
            }
        }
        act
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Writes the program in fixed-column MPS format.
    ///
    /// Ranged rows are emitted as `G` rows with a `RANGES` entry; names longer than
    /// eight characters are not checked, so keep them short.
    pub fn write_mps<W: Write>(&self, mut out: W, name: &str) -> std::io::Result<()> {
        writeln!(out, "NAME          {name}")?;
        writeln!(out, "ROWS")?;
        writeln!(out, " N  COST")?;
        for i in 0..self.num_rows() {
            let kind = match (self.row_lo[i], self.row_hi[i]) {
                (lo, hi) if lo == hi => "E",
                (lo, hi) if lo.is_infinite() && hi.is_infinite() => "N",
                (lo, _) if lo.is_infinite() => "L",
                _ => "G",
            };
            writeln!(out, " {kind:<2} {}", self.row_names[i])?;
        }
        writeln!(out, "COLUMNS")?;
        for j in 0..self.num_cols() {
            let name = &self.col_names[j];
            if self.cost[j] != 0.0 {
                field_line(&mut out, "", name, "COST", self.cost[j])?;
            }
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                field_line(&mut out, "", name, &self.row_names[i], v)?;
            }
        }
        writeln!(out, "RHS")?;
        for i in 0..self.num_rows() {
            let (lo, hi) = (self.row_lo[i], self.row_hi[i]);
            let rhs = if lo.is_finite() { lo } else { hi };
            if rhs.is_finite() && rhs != 0.0 {
                field_line(&mut out, "", "RHS", &self.row_names[i], rhs)?;
            }
        }
        let ranged: Vec<usize> = (0..self.num_rows())
            .filter(|&i| {
                self.row_lo[i].is_finite()
                    && self.row_hi[i].is_finite()
                    && self.row_lo[i] != self.row_hi[i]
            })
            .collect();
        if !ranged.is_empty() {
            writeln!(out, "RANGES")?;
            for i in ranged {
                field_line(
                    &mut out,
                    "",
                    "RNG",
                    &self.row_names[i],
                    self.row_hi[i] - self.row_lo[i],
                )?;
            }
        }
        writeln!(out, "BOUNDS")?;
        for j in 0..self.num_cols() {
            let (lo, hi) = (self.col_lo[j], self.col_hi[j]);
            let name = &self.col_names[j];
            if lo == hi {
                field_line(&mut out, "FX", "BND", name, lo)?;
                continue;
            }
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => writeln!(out, " FR BND       {name}")?,
                (false, true) => {
                    writeln!(out, " MI BND       {name}")?;
                    field_line(&mut out, "UP", "BND", name, hi)?;
                }
                (true, _) => {
                    if lo != 0.0 {
                        field_line(&mut out, "LO", "BND", name, lo)?;
                    }
                    if hi.is_finite() {
                        field_line(&mut out, "UP", "BND", name, hi)?;
                    }
                }
            }
        }
        writeln!(out, "ENDATA")
    }
}

/// One data line: fields start at columns 2, 5, 15 and 25.
fn field_line<W: Write>(
    out: &mut W,
    kind: &str,
    first: &str,
    second: &str,
    v: f64,
) -> std::io::Result<()> {
    writeln!(
        out,
        " {kind:<2} {first:<8}  {second:<8}  {:>12}",
        mps_number(v)
    )
}

/// Shortest `%g` rendering of `v` that fits the 12-character numeric field.
fn mps_number(v: f64) -> String {
    (1..=12)
        .rev()
        .map(|d| format_sig(v, d))
        .find(|s| s.len() <= 12)
        .unwrap_or_else(|| format_sig(v, 1))
}

/// Incremental constructor for [`LinearProgram`].
#[derive(Debug, Default)]
pub struct LpBuilder {
    columns: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    col_lo: Vec<f64>,
    col_hi: Vec<f64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    col_names: Vec<String>,
    row_names: Vec<String>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_column(&mut self, name: impl Into<String>, cost: f64, lo: f64, hi: f64) -> usize {
        self.columns.push(Vec::new());
        self.cost.push(cost);
        self.col_lo.push(lo);
        self.col_hi.push(hi);
        self.col_names.push(name.into());
        self.columns.len() - 1
    }

    /// Adds `lo <= sum coef * x[col] <= hi`; entries must name existing columns.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        lo: f64,
        hi: f64,
        entries: &[(usize, f64)],
    ) -> usize {
        let i = self.row_lo.len();
        for &(j, v) in entries {
            if v != 0.0 {
                self.columns[j].push((i, v));
            }
        }
        self.row_lo.push(lo);
        self.row_hi.push(hi);
        self.row_names.push(name.into());
        i
    }

    pub fn build(self) -> LinearProgram {
        let mut col_start = Vec::with_capacity(self.columns.len() + 1);
        let mut row_index = Vec::new();
        let mut value = Vec::new();
        col_start.push(0);
        for mut col in self.columns {
            col.sort_by_key(|&(i, _)| i);
            for (i, v) in col {
                row_index.push(i);
                value.push(v);
            }
            col_start.push(row_index.len());
        }
        LinearProgram {
            cost: self.cost,
            col_lo: self.col_lo,
            col_hi: self.col_hi,
            row_lo: self.row_lo,
            row_hi: self.row_hi,
            col_start,
            row_index,
            value,
            col_names: self.col_names,
            row_names: self.row_names,
        }
    }
}
