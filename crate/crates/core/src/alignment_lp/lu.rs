//! LU factorizations of a simplex basis.
//!
//! Both factor `B` once per refactorization; the simplex layers product-form
//! updates on top, so only `solve` (`B z = b`) and `solve_transpose`
//! (`B' y = c`) are needed here.

/// Sparse column view: parallel row-index and value slices.
pub(crate) type ColumnRef<'a> = (&'a [usize], &'a [f64]);

/// A basis matrix was numerically singular at the given basis position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Singular(pub usize);

/// Pivots smaller than this are treated as zero.
const PIVOT_FLOOR: f64 = 1e-11;

pub(crate) trait BasisFactor: Send {
    fn factor(&mut self, columns: &[ColumnRef<'_>]) -> Result<(), Singular>;
    /// Overwrites `rhs` (row space) with `z` (basis-position space), `B z = rhs`.
    fn solve(&self, rhs: &mut [f64]);
    /// Overwrites `rhs` (basis-position space) with `y` (row space), `B' y = rhs`.
    fn solve_transpose(&self, rhs: &mut [f64]);
}

/// Dense `PB = LU` with partial pivoting; the reference choice for small bases.
#[derive(Debug, Default)]
pub(crate) struct DenseLu {
    m: usize,
    /// Row-major packed factors: strict lower part is `L`, upper part is `U`.
    lu: Vec<f64>,
    /// `perm[k]` is the original row placed at position `k`.
    perm: Vec<usize>,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl DenseLu {
    pub(crate) fn new() -> Self {
        Self::default()
    }
}

impl BasisFactor for DenseLu {
    fn factor(&mut self, columns: &[ColumnRef<'_>]) -> Result<(), Singular> {
        let m = columns.len();
        self.m = m;
        self.lu.clear();
        self.lu.resize(m * m, 0.0);
        for (j, (rows, vals)) in columns.iter().enumerate() {
            for (&i, &v) in rows.iter().zip(vals.iter()) {
                self.lu[i * m + j] = v;
            }
        }
        self.perm = (0..m).collect();
        let a = &mut self.lu;
        for k in 0..m {
            let mut p = k;
            let mut best = a[k * m + k].abs();
            for i in k + 1..m {
                let v = a[i * m + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < PIVOT_FLOOR {
                return Err(Singular(k));
            }
            if p != k {
                for c in 0..m {
                    a.swap(k * m + c, p * m + c);
                }
                self.perm.swap(k, p);
            }
            let pivot = a[k * m + k];
            for i in k + 1..m {
                let f = a[i * m + k] / pivot;
                if f != 0.0 {
                    a[i * m + k] = f;
                    for c in k + 1..m {
                        a[i * m + c] -= f * a[k * m + c];
                    }
                } else {
                    a[i * m + k] = 0.0;
                }
            }
        }
        Ok(())
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = self.m;
        let a = &self.lu;
        let mut w = self.scratch.borrow_mut();
        w.clear();
        w.extend(self.perm.iter().map(|&p| rhs[p]));
        for i in 0..m {
            let mut s = w[i];
            for k in 0..i {
                s -= a[i * m + k] * w[k];
            }
            w[i] = s;
        }
        for i in (0..m).rev() {
            let mut s = w[i];
            for k in i + 1..m {
                s -= a[i * m + k] * w[k];
            }
            w[i] = s / a[i * m + i];
        }
        rhs.copy_from_slice(&w);
    }

    fn solve_transpose(&self, rhs: &mut [f64]) {
        let m = self.m;
        let a = &self.lu;
        let mut w = self.scratch.borrow_mut();
        w.clear();
        w.extend_from_slice(rhs);
        // U' v = c, then L' u = v, then y = P' u
        for i in 0..m {
            let v = w[i] / a[i * m + i];
            w[i] = v;
            if v != 0.0 {
                for k in i + 1..m {
                    w[k] -= a[i * m + k] * v;
                }
            }
        }
        for i in (0..m).rev() {
            let v = w[i];
            if v != 0.0 {
                for k in 0..i {
                    w[k] -= a[i * m + k] * v;
                }
            }
        }
        for (k, &p) in self.perm.iter().enumerate() {
            rhs[p] = w[k];
        }
    }
}

/// Left-looking sparse LU with partial pivoting.
///
/// Columns are eliminated in order of their first row index, with dense columns
/// last, which keeps fill near zero on banded bases. Each column is solved
/// against the `L` built so far by visiting pivotal rows in elimination order
/// from a min-heap, so only structurally reachable entries are touched.
#[derive(Debug, Default)]
pub(crate) struct SparseLu {
    m: usize,
    /// Elimination step to basis position.
    col_of_step: Vec<usize>,
    /// Elimination step to pivot row.
    row_of_step: Vec<usize>,
    /// Row to elimination step, `usize::MAX` while unpivoted.
    step_of_row: Vec<usize>,
    l_start: Vec<usize>,
    l_row: Vec<usize>,
    l_val: Vec<f64>,
    /// Off-diagonal `U` entries by column, indexed by step.
    u_start: Vec<usize>,
    u_step: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl SparseLu {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    #[cfg(test)]
    pub(crate) fn fill(&self) -> usize {
        self.l_val.len() + self.u_val.len() + self.u_diag.len()
    }
}

impl BasisFactor for SparseLu {
    fn factor(&mut self, columns: &[ColumnRef<'_>]) -> Result<(), Singular> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        let m = columns.len();
        self.m = m;
        let dense_cut = 16.max(m / 8);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&j| {
            let (rows, _) = columns[j];
            (
                rows.len() > dense_cut,
                rows.iter().copied().min().unwrap_or(usize::MAX),
                j,
            )
        });
        self.col_of_step = order;
        self.row_of_step = vec![usize::MAX; m];
        self.step_of_row = vec![usize::MAX; m];
        self.l_start.clear();
        self.l_row.clear();
        self.l_val.clear();
        self.u_start.clear();
        self.u_step.clear();
        self.u_val.clear();
        self.u_diag.clear();
        self.l_start.push(0);
        self.u_start.push(0);

        let mut work = vec![0.0; m];
        let mut touched = vec![false; m];
        let mut nonzero_rows: Vec<usize> = Vec::new();
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

        for step in 0..m {
            let (rows, vals) = columns[self.col_of_step[step]];
            for (&i, &v) in rows.iter().zip(vals.iter()) {
                work[i] = v;
                if !touched[i] {
                    touched[i] = true;
                    nonzero_rows.push(i);
                }
                let s = self.step_of_row[i];
                if s != usize::MAX {
                    heap.push(Reverse(s));
                }
            }
            let mut last_popped = usize::MAX;
            while let Some(Reverse(s)) = heap.pop() {
                if s == last_popped {
                    continue;
                }
                last_popped = s;
                let xr = work[self.row_of_step[s]];
                if xr == 0.0 {
                    continue;
                }
                for k in self.l_start[s]..self.l_start[s + 1] {
                    let i = self.l_row[k];
                    work[i] -= self.l_val[k] * xr;
                    if !touched[i] {
                        touched[i] = true;
                        nonzero_rows.push(i);
                    }
                    let si = self.step_of_row[i];
                    if si != usize::MAX {
                        heap.push(Reverse(si));
                    }
                }
            }
            let mut pivot_row = usize::MAX;
            let mut best = 0.0;
            nonzero_rows.sort_unstable();
            for &i in &nonzero_rows {
                if self.step_of_row[i] == usize::MAX {
                    let v = work[i].abs();
                    if v > best {
                        best = v;
                        pivot_row = i;
                    }
                }
            }
            if best < PIVOT_FLOOR {
                for &i in &nonzero_rows {
                    work[i] = 0.0;
                    touched[i] = false;
                }
                return Err(Singular(self.col_of_step[step]));
            }
            let pivot = work[pivot_row];
            for &i in &nonzero_rows {
                let v = work[i];
                if v != 0.0 && i != pivot_row {
                    let s = self.step_of_row[i];
                    if s != usize::MAX {
                        self.u_step.push(s);
                        self.u_val.push(v);
                    } else {
                        self.l_row.push(i);
                        self.l_val.push(v / pivot);
                    }
                }
                work[i] = 0.0;
                touched[i] = false;
            }
            nonzero_rows.clear();
            self.u_diag.push(pivot);
            self.u_start.push(self.u_step.len());
            self.l_start.push(self.l_row.len());
            self.row_of_step[step] = pivot_row;
            self.step_of_row[pivot_row] = step;
        }
        Ok(())
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = self.m;
        // rhs is overwritten by L^{-1} rhs in row space
        for s in 0..m {
            let t = rhs[self.row_of_step[s]];
            if t != 0.0 {
                for k in self.l_start[s]..self.l_start[s + 1] {
                    rhs[self.l_row[k]] -= self.l_val[k] * t;
                }
            }
        }
        let mut v = self.scratch.borrow_mut();
        v.clear();
        v.extend(self.row_of_step.iter().map(|&r| rhs[r]));
        for s in (0..m).rev() {
            let u = v[s] / self.u_diag[s];
            v[s] = u;
            if u != 0.0 {
                for k in self.u_start[s]..self.u_start[s + 1] {
                    v[self.u_step[k]] -= self.u_val[k] * u;
                }
            }
        }
        for (s, &c) in self.col_of_step.iter().enumerate() {
            rhs[c] = v[s];
        }
    }

    fn solve_transpose(&self, rhs: &mut [f64]) {
        let m = self.m;
        let mut v = self.scratch.borrow_mut();
        v.clear();
        v.extend(self.col_of_step.iter().map(|&c| rhs[c]));
        for s in 0..m {
            let mut acc = v[s];
            for k in self.u_start[s]..self.u_start[s + 1] {
                acc -= self.u_val[k] * v[self.u_step[k]];
            }
            v[s] = acc / self.u_diag[s];
        }
        // L' y = v with y in row space
        for s in (0..m).rev() {
            let mut acc = v[s];
            for k in self.l_start[s]..self.l_start[s + 1] {
                acc -= self.l_val[k] * rhs[self.l_row[k]];
            }
            rhs[self.row_of_step[s]] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    struct Owned {
        rows: Vec<Vec<usize>>,
        vals: Vec<Vec<f64>>,
    }

    impl Owned {
        fn from_dense(a: &[Vec<f64>]) -> Self {
            let m = a.len();
            let mut rows = vec![Vec::new(); m];
            let mut vals = vec![Vec::new(); m];
            for (i, row) in a.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        rows[j].push(i);
                        vals[j].push(v);
                    }
                }
            }
            Self { rows, vals }
        }

        fn refs(&self) -> Vec<ColumnRef<'_>> {
            self.rows
                .iter()
                .zip(&self.vals)
                .map(|(r, v)| (r.as_slice(), v.as_slice()))
                .collect()
        }
    }

    fn mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn mul_t(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        (0..a.len())
            .map(|j| a.iter().zip(y).map(|(row, yi)| row[j] * yi).sum())
            .collect()
    }

    fn check(factor: &mut dyn BasisFactor, a: &[Vec<f64>], rng: &mut impl Rng) {
        let owned = Owned::from_dense(a);
        factor.factor(&owned.refs()).unwrap();
        let m = a.len();
        let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut b = mul(a, &z);
        factor.solve(&mut b);
        for (u, v) in b.iter().zip(&z) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
        let mut c = mul_t(a, &z);
        factor.solve_transpose(&mut c);
        for (u, v) in c.iter().zip(&z) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }

    fn random_sparse(rng: &mut impl Rng, m: usize, density: f64) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; m]; m];
        // a random permutation on the diagonal keeps the matrix nonsingular
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        for i in 0..m {
            a[i][perm[i]] = rng.gen_range(2.0..4.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            for j in 0..m {
                if j != perm[i] && rng.gen_bool(density) {
                    a[i][j] = rng.gen_range(-1.0..1.0) / m as f64;
                }
            }
        }
        a
    }

    #[test]
    fn dense_and_sparse_solve_random_systems() {
        let mut rng = crate::synthetic::rng(2);
        for m in [1, 2, 5, 17, 40] {
            for density in [0.05, 0.3, 1.0] {
                let a = random_sparse(&mut rng, m, density);
                check(&mut DenseLu::new(), &a, &mut rng);
                check(&mut SparseLu::new(), &a, &mut rng);
            }
        }
    }

    #[test]
    fn needs_row_pivoting() {
        let a = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 2.0],
            vec![0.0, 3.0, 1.0],
        ];
        let mut rng = crate::synthetic::rng(5);
        check(&mut DenseLu::new(), &a, &mut rng);
        check(&mut SparseLu::new(), &a, &mut rng);
    }

    #[test]
    fn singular_bases_are_reported() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let owned = Owned::from_dense(&a);
        assert!(DenseLu::new().factor(&owned.refs()).is_err());
        assert!(SparseLu::new().factor(&owned.refs()).is_err());
        let empty = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let owned = Owned::from_dense(&empty);
        assert!(SparseLu::new().factor(&owned.refs()).is_err());
    }

    #[test]
    fn banded_basis_stays_sparse() {
        // bidiagonal staircase like the storage recursion
        let m = 2000;
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        for j in 0..m {
            let mut r = vec![j];
            let mut v = vec![1.0];
            if j + 1 < m {
                r.push(j + 1);
                v.push(-1.0);
            }
            rows.push(r);
            vals.push(v);
        }
        let refs: Vec<ColumnRef<'_>> = rows
            .iter()
            .zip(&vals)
            .map(|(r, v)| (r.as_slice(), v.as_slice()))
            .collect();
        let mut lu = SparseLu::new();
        lu.factor(&refs).unwrap();
        assert!(lu.fill() <= 2 * m);
        let mut b = vec![0.0; m];
        b[0] = 1.0;
        lu.solve(&mut b);
        assert!(b.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
