//! Bounded-variable primal revised simplex.
//!
//! Rows are turned into equalities with one logical per row, `A x - s = 0`, where
//! `s` carries the row bounds. Phase 1 minimizes the sum of bound violations of
//! basic variables (composite costs `-1` below, `+1` above); phase 2 the true
//! cost. Pricing is Dantzig with lowest-index ties; after a run of degenerate
//! pivots it switches to Bland's rule until progress resumes. Basis inverses are
//! an LU factorization plus a product-form eta file, refactored periodically.

use super::lu::{BasisFactor, ColumnRef, DenseLu, SparseLu};
use super::model::LinearProgram;

/// Which basis factorization to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Factorization {
    /// Dense for at most [`DENSE_ROW_LIMIT`] rows, sparse above.
    #[default]
    Auto,
    Dense,
    Sparse,
}

pub const DENSE_ROW_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub factorization: Factorization,
    /// Defaults to `50 * num_cols`.
    pub max_iterations: Option<usize>,
    /// Primal and dual feasibility tolerance.
    pub tolerance: f64,
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
    /// Initial basic variables, one per row; indices `>= num_cols` are row logicals.
    pub initial_basis: Option<Vec<usize>>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            factorization: Factorization::Auto,
            max_iterations: None,
            tolerance: 1e-9,
            refactor_interval: 64,
            degenerate_limit: 50,
            initial_basis: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit, singular basis, or a final point that failed certification.
    NumericFailure,
}

/// Residuals of the optimality certificate, all in the program's own units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Certificate {
    /// Largest bound or row violation of the returned point.
    pub primal_infeasibility: f64,
    /// Largest reduced cost with the wrong sign for its variable's position.
    pub dual_infeasibility: f64,
    /// `sum |d_j| * distance of x_j from the bound its sign points at`.
    pub complementarity_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub status: SimplexStatus,
    /// Structural values.
    pub x: Vec<f64>,
    /// Row duals `y`, reduced costs are `c - A'y`.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub certificate: Certificate,
    /// Final basic variables, reusable as `initial_basis`.
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable, held at zero.
    Zero,
}

#[derive(Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

struct Solver<'a> {
    lp: &'a LinearProgram,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    value: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    factor: Box<dyn BasisFactor>,
    etas: Vec<Eta>,
    logical_rows: Vec<usize>,
    minus_one: [f64; 1],
    tol: f64,
}

const PIVOT_TOL: f64 = 1e-9;
const STEP_TIE: f64 = 1e-12;

impl<'a> Solver<'a> {
    fn new(lp: &'a LinearProgram, factorization: Factorization) -> Self {
        let n = lp.num_cols();
        let m = lp.num_rows();
        let mut lo = lp.col_lo.clone();
        lo.extend_from_slice(&lp.row_lo);
        let mut hi = lp.col_hi.clone();
        hi.extend_from_slice(&lp.row_hi);
        let mut cost = lp.cost.clone();
        cost.resize(n + m, 0.0);
        let dense = match factorization {
            Factorization::Dense => true,
            Factorization::Sparse => false,
            Factorization::Auto => m <= DENSE_ROW_LIMIT,
        };
        let factor: Box<dyn BasisFactor> = if dense {
            Box::new(DenseLu::new())
        } else {
            Box::new(SparseLu::new())
        };
        Self {
            lp,
            n,
            m,
            lo,
            hi,
            cost,
            value: vec![0.0; n + m],
            state: vec![State::AtLower; n + m],
            basis: Vec::new(),
            factor,
            etas: Vec::new(),
            logical_rows: (0..m).collect(),
            minus_one: [-1.0],
            tol: 0.0,
        }
    }

    fn column(&self, j: usize) -> ColumnRef<'_> {
        column_of(self.lp, &self.logical_rows, &self.minus_one, j)
    }

    fn nonbasic_value(&self, j: usize) -> (State, f64) {
        let (lo, hi) = (self.lo[j], self.hi[j]);
        if lo.is_finite() {
            (State::AtLower, lo)
        } else if hi.is_finite() {
            (State::AtUpper, hi)
        } else {
            (State::Zero, 0.0)
        }
    }

    /// Installs `basis` and places every other variable at a bound.
    fn install(&mut self, basis: &[usize]) -> bool {
        let total = self.n + self.m;
        if basis.len() != self.m || basis.iter().any(|&j| j >= total) {
            return false;
        }
        for j in 0..total {
            let (s, v) = self.nonbasic_value(j);
            self.state[j] = s;
            self.value[j] = v;
        }
        for &j in basis {
            if self.state[j] == State::Basic {
                return false;
            }
            self.state[j] = State::Basic;
        }
        self.basis = basis.to_vec();
        self.refactor()
    }

    fn refactor(&mut self) -> bool {
        let (lp, rows, one) = (self.lp, &self.logical_rows, &self.minus_one);
        let cols: Vec<ColumnRef<'_>> = self
            .basis
            .iter()
            .map(|&j| column_of(lp, rows, one, j))
            .collect();
        let ok = self.factor.factor(&cols).is_ok();
        self.etas.clear();
        if ok {
            self.recompute_basics();
        }
        ok
    }

    /// `x_B = -B^{-1} N x_N`, keeping `A x - s = 0` exact up to rounding.
    fn recompute_basics(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.state[j] != State::Basic && self.value[j] != 0.0 {
                let v = self.value[j];
                let (rows, vals) = self.column(j);
                for (&i, &a) in rows.iter().zip(vals) {
                    rhs[i] -= a * v;
                }
            }
        }
        self.ftran(&mut rhs);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.value[j] = rhs[pos];
        }
    }

    fn ftran(&self, z: &mut [f64]) {
        self.factor.solve(z);
        for eta in &self.etas {
            let t = z[eta.pos] / eta.pivot;
            z[eta.pos] = t;
            if t != 0.0 {
                for &(i, v) in &eta.entries {
                    z[i] -= v * t;
                }
            }
        }
    }

    fn btran(&self, c: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut acc = c[eta.pos];
            for &(i, v) in &eta.entries {
                acc -= v * c[i];
            }
            c[eta.pos] = acc / eta.pivot;
        }
        self.factor.solve_transpose(c);
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.value[j];
        if v < self.lo[j] - self.tol {
            -1.0
        } else if v > self.hi[j] + self.tol {
            1.0
        } else {
            0.0
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        let (rows, vals) = self.column(j);
        rows.iter().zip(vals).map(|(&i, &a)| a * y[i]).sum()
    }
}

/// Column `j` of `[A | -I]`.
fn column_of<'a>(
    lp: &'a LinearProgram,
    logical_rows: &'a [usize],
    minus_one: &'a [f64; 1],
    j: usize,
) -> ColumnRef<'a> {
    let n = lp.num_cols();
    if j < n {
        lp.column(j)
    } else {
        (&logical_rows[j - n..j - n + 1], &minus_one[..])
    }
}

/// Solves `lp` from the given options.
pub fn solve(lp: &LinearProgram, options: &SimplexOptions) -> SimplexResult {
    let mut s = Solver::new(lp, options.factorization);
    s.tol = options.tolerance;
    let slack: Vec<usize> = (s.n..s.n + s.m).collect();
    let crashed = options
        .initial_basis
        .as_deref()
        .is_some_and(|b| s.install(b));
    if !crashed && !s.install(&slack) {
        return failure(&s, 0);
    }
    let cap = options.max_iterations.unwrap_or(50 * s.n.max(1));
    let mut iterations = 0;
    let mut degenerate_run = 0;
    let mut bland = false;
    let mut reverified = false;

    let total = s.n + s.m;
    let mut y = vec![0.0; s.m];
    let mut alpha = vec![0.0; s.m];
    loop {
        let phase_one = s.basis.iter().any(|&j| s.infeasibility(j) != 0.0);
        for (pos, &j) in s.basis.iter().enumerate() {
            y[pos] = if phase_one {
                s.infeasibility(j)
            } else {
                s.cost[j]
            };
        }
        s.btran(&mut y);

        let mut entering = None;
        let mut best = 0.0;
        for j in 0..total {
            let st = s.state[j];
            if st == State::Basic || s.lo[j] == s.hi[j] {
                continue;
            }
            let c = if phase_one { 0.0 } else { s.cost[j] };
            let d = c - s.dot_column(j, &y);
            let dir = match st {
                State::AtLower if d < -s.tol => 1.0,
                State::AtUpper if d > s.tol => -1.0,
                State::Zero if d.abs() > s.tol => -d.signum(),
                _ => continue,
            };
            if bland {
                entering = Some((j, dir));
                break;
            }
            if d.abs() > best {
                best = d.abs();
                entering = Some((j, dir));
            }
        }

        let Some((q, dir)) = entering else {
            if phase_one {
                return finish(&s, SimplexStatus::Infeasible, iterations, options);
            }
            // Refactor once and re-check from a freshly computed point.
            if !reverified {
                reverified = true;
                if !s.refactor() {
                    return failure(&s, iterations);
                }
                continue;
            }
            return finish(&s, SimplexStatus::Optimal, iterations, options);
        };
        reverified = false;

        if iterations >= cap {
            return failure(&s, iterations);
        }
        iterations += 1;

        alpha.iter_mut().for_each(|v| *v = 0.0);
        {
            let (rows, vals) = s.column(q);
            for (&i, &a) in rows.iter().zip(vals) {
                alpha[i] = a;
            }
        }
        s.ftran(&mut alpha);

        // Ratio test. `None` leaving means the entering variable flips bounds.
        let mut theta = s.hi[q] - s.lo[q];
        let mut leaving: Option<(usize, f64)> = None;
        let mut leaving_pivot = 0.0;
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() < PIVOT_TOL {
                continue;
            }
            let j = s.basis[pos];
            let rate = -dir * a;
            let v = s.value[j];
            let (limit, bound) = if rate < 0.0 {
                if v > s.hi[j] + s.tol {
                    ((v - s.hi[j]) / -rate, s.hi[j])
                } else if v >= s.lo[j] - s.tol && s.lo[j].is_finite() {
                    ((v - s.lo[j]).max(0.0) / -rate, s.lo[j])
                } else {
                    continue;
                }
            } else if v < s.lo[j] - s.tol {
                ((s.lo[j] - v) / rate, s.lo[j])
            } else if v <= s.hi[j] + s.tol && s.hi[j].is_finite() {
                ((s.hi[j] - v).max(0.0) / rate, s.hi[j])
            } else {
                continue;
            };
            let take = if limit < theta - STEP_TIE {
                true
            } else if limit <= theta + STEP_TIE {
                // ties with a bound flip keep the flip; ties between basics pick
                // the largest pivot, or the lowest index under Bland's rule
                match leaving {
                    None => false,
                    Some((p, _)) if bland => j < s.basis[p],
                    Some((p, _)) => {
                        a.abs() > leaving_pivot || (a.abs() == leaving_pivot && j < s.basis[p])
                    }
                }
            } else {
                false
            };
            if take {
                theta = theta.min(limit);
                leaving = Some((pos, bound));
                leaving_pivot = a.abs();
            }
        }
        if !theta.is_finite() {
            let status = if phase_one {
                SimplexStatus::NumericFailure
            } else {
                SimplexStatus::Unbounded
            };
            return finish(&s, status, iterations, options);
        }

        if theta <= STEP_TIE {
            degenerate_run += 1;
            if degenerate_run > options.degenerate_limit {
                bland = true;
            }
        } else {
            degenerate_run = 0;
            bland = false;
        }

        if theta != 0.0 {
            s.value[q] += dir * theta;
            for (pos, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let j = s.basis[pos];
                    s.value[j] -= dir * theta * a;
                }
            }
        }
        match leaving {
            None => {
                if dir > 0.0 {
                    s.state[q] = State::AtUpper;
                    s.value[q] = s.hi[q];
                } else {
                    s.state[q] = State::AtLower;
                    s.value[q] = s.lo[q];
                }
            }
            Some((pos, bound)) => {
                let out = s.basis[pos];
                s.value[out] = bound;
                s.state[out] = if bound == s.lo[out] {
                    State::AtLower
                } else {
                    State::AtUpper
                };
                s.state[q] = State::Basic;
                s.basis[pos] = q;
                let entries = alpha
                    .iter()
                    .enumerate()
                    .filter(|&(i, &v)| i != pos && v != 0.0)
                    .map(|(i, &v)| (i, v))
                    .collect();
                s.etas.push(Eta {
                    pos,
                    pivot: alpha[pos],
                    entries,
                });
                if s.etas.len() >= options.refactor_interval && !s.refactor() {
                    return failure(&s, iterations);
                }
            }
        }
    }
}

fn failure(s: &Solver<'_>, iterations: usize) -> SimplexResult {
    SimplexResult {
        status: SimplexStatus::NumericFailure,
        x: s.value[..s.n].to_vec(),
        duals: vec![0.0; s.m],
        objective: f64::NAN,
        iterations,
        certificate: Certificate::default(),
        basis: s.basis.clone(),
    }
}

/// Computes duals and the certificate; downgrades `Optimal` if it does not hold.
fn finish(
    s: &Solver<'_>,
    status: SimplexStatus,
    iterations: usize,
    options: &SimplexOptions,
) -> SimplexResult {
    let x = s.value[..s.n].to_vec();
    let mut y = vec![0.0; s.m];
    for (pos, &j) in s.basis.iter().enumerate() {
        y[pos] = s.cost[j];
    }
    s.btran(&mut y);

    let lp = s.lp;
    let act = lp.activities(&x);
    let mut primal: f64 = 0.0;
    for j in 0..s.n {
        primal = primal.max(lp.col_lo[j] - x[j]).max(x[j] - lp.col_hi[j]);
    }
    for i in 0..s.m {
        primal = primal.max(lp.row_lo[i] - act[i]).max(act[i] - lp.row_hi[i]);
    }

    let mut dual: f64 = 0.0;
    let mut gap = 0.0;
    for j in 0..s.n + s.m {
        let d = s.cost[j] - s.dot_column(j, &y);
        let v = if j < s.n { x[j] } else { act[j - s.n] };
        let (lo, hi) = (s.lo[j], s.hi[j]);
        if d > 0.0 {
            if lo.is_finite() {
                gap += d * (v - lo).abs();
            } else {
                dual = dual.max(d);
            }
        } else if d < 0.0 {
            if hi.is_finite() {
                gap += -d * (hi - v).abs();
            } else {
                dual = dual.max(-d);
            }
        }
    }
    let objective = lp.objective(&x);
    let certificate = Certificate {
        primal_infeasibility: primal.max(0.0),
        dual_infeasibility: dual,
        complementarity_gap: gap,
    };
    let tol = options.tolerance;
    let certified = certificate.primal_infeasibility <= tol
        && certificate.dual_infeasibility <= tol
        && certificate.complementarity_gap <= tol * objective.abs().max(1.0);
    let status = match status {
        SimplexStatus::Optimal if !certified => SimplexStatus::NumericFailure,
        other => other,
    };
    SimplexResult {
        status,
        x,
        duals: y,
        objective,
        iterations,
        certificate,
        basis: s.basis.clone(),
    }
}
