//! The storage scheduling program and its solution.
//!
//! Variables per step `n`: peaker energy `g(n)`, spilled wind `l(n)` and stored
//! energy `x(n)`, plus the initial state `x(0)` and, for the peak objective, a
//! bound `t >= g(n)`. Constraints per step, interleaved by time so the matrix is
//! banded:
//!
//! * conservation `x(n) - alpha x(n-1) - g(n) + l(n) = -r(n)`,
//! * rate limit `-dP <= x(n) - alpha x(n-1) <= dP` (one ranged row),
//! * for the peak objective `g(n) - t <= 0`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::model::{LinearProgram, LpBuilder};
use super::simplex::{self, Factorization, SimplexOptions, SimplexStatus};
use crate::bess_sim::{BessSpec, DispatchSchedule};
use crate::error::{Error, Result};
use crate::series::{excess_demand, EnergySeries};
use crate::Objective;

const INF: f64 = f64::INFINITY;

/// Excess demand, battery and objective: everything that defines one program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpInstance {
    pub r: Vec<f64>,
    pub spec: BessSpec,
    pub objective: Objective,
}

/// Logical constraint counts; each ranged rate row holds two inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConstraintCounts {
    pub equalities: usize,
    pub rate_inequalities: usize,
    pub peak_inequalities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    NumericFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    /// `g_av` or `g_peak` in MW.
    pub objective_value: f64,
    /// Total peaker energy of the optimal schedule (MWh).
    pub total_peaker: f64,
    pub schedule: DispatchSchedule,
    pub status: LpStatus,
    pub iterations: usize,
}

pub fn build_instance(
    wind: &EnergySeries,
    demand: &EnergySeries,
    spec: &BessSpec,
    objective: Objective,
) -> Result<LpInstance> {
    let r = excess_demand(wind, demand)?;
    if wind.delta() != spec.delta {
        return Err(Error::Input(format!(
            "series step {} h differs from battery step {} h",
            wind.delta(),
            spec.delta
        )));
    }
    build_instance_excess(r, spec, objective)
}

pub fn build_instance_excess(
    r: Vec<f64>,
    spec: &BessSpec,
    objective: Objective,
) -> Result<LpInstance> {
    spec.validate()?;
    if r.is_empty() {
        return Err(Error::Input("excess demand is empty".into()));
    }
    if let Some(v) = r.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite excess demand {v}")));
    }
    Ok(LpInstance {
        r,
        spec: *spec,
        objective,
    })
}

/// Column layout of the program: `x(0)`, then `g(n), l(n), x(n)` per step, then `t`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    steps: usize,
    peak: bool,
}

impl Layout {
    fn x(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            3 * n
        }
    }
    fn g(&self, n: usize) -> usize {
        3 * n - 2
    }
    fn l(&self, n: usize) -> usize {
        3 * n - 1
    }
    fn t(&self) -> usize {
        3 * self.steps + 1
    }
    fn rows_per_step(&self) -> usize {
        if self.peak {
            3
        } else {
            2
        }
    }
    fn eq_row(&self, n: usize) -> usize {
        (n - 1) * self.rows_per_step()
    }
    fn rate_row(&self, n: usize) -> usize {
        self.eq_row(n) + 1
    }
    fn peak_row(&self, n: usize) -> usize {
        self.eq_row(n) + 2
    }
}

impl LpInstance {
    pub fn steps(&self) -> usize {
        self.r.len()
    }

    pub fn variable_count(&self) -> usize {
        3 * self.steps() + 1 + usize::from(self.objective == Objective::Peak)
    }

    pub fn constraint_counts(&self) -> ConstraintCounts {
        let n = self.steps();
        ConstraintCounts {
            equalities: n,
            rate_inequalities: 2 * n,
            peak_inequalities: if self.objective == Objective::Peak {
                n
            } else {
                0
            },
        }
    }

    fn layout(&self) -> Layout {
        Layout {
            steps: self.steps(),
            peak: self.objective == Objective::Peak,
        }
    }

    /// Power of two near `max |r|`; dividing by it is exact, so integer data stays integer.
    pub fn scale(&self) -> f64 {
        let top = self.r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if top > 0.0 && top.is_finite() {
            2f64.powi(top.log2().round() as i32)
        } else {
            1.0
        }
    }

    /// The program in internal units (energies divided by [`scale`](Self::scale)).
    pub fn to_linear_program(&self) -> LinearProgram {
        let lay = self.layout();
        let s = self.scale();
        let b = self.spec.energy_rating / s;
        let dp = self.spec.step_limit() / s;
        let alpha = self.spec.retention;
        let avg_cost = if lay.peak { 0.0 } else { 1.0 };
        let mut lp = LpBuilder::new();
        lp.add_column("X0", 0.0, 0.0, b);
        for n in 1..=lay.steps {
            lp.add_column(format!("G{n}"), avg_cost, 0.0, INF);
            lp.add_column(format!("L{n}"), 0.0, 0.0, INF);
            lp.add_column(format!("X{n}"), 0.0, 0.0, b);
        }
        if lay.peak {
            lp.add_column("T", 1.0, 0.0, INF);
        }
        for n in 1..=lay.steps {
            let (xp, x) = (lay.x(n - 1), lay.x(n));
            let rhs = -self.r[n - 1] / s;
            lp.add_row(
                format!("E{n}"),
                rhs,
                rhs,
                &[(xp, -alpha), (lay.g(n), -1.0), (lay.l(n), 1.0), (x, 1.0)],
            );
            lp.add_row(format!("P{n}"), -dp, dp, &[(xp, -alpha), (x, 1.0)]);
            if lay.peak {
                lp.add_row(
                    format!("M{n}"),
                    -INF,
                    0.0,
                    &[(lay.g(n), 1.0), (lay.t(), -1.0)],
                );
            }
        }
        lp.build()
    }

    /// Feasible starting basis with an empty battery: `g` or `l` absorbs each
    /// step's imbalance, rate logicals are basic, and `t` sits on the largest deficit.
    fn crash_basis(&self) -> Vec<usize> {
        let lay = self.layout();
        let cols = self.variable_count();
        let logical = |row: usize| cols + row;
        let mut peak_row = 1;
        let mut best = f64::NEG_INFINITY;
        for (k, &v) in self.r.iter().enumerate() {
            if v > best {
                best = v;
                peak_row = k + 1;
            }
        }
        let mut basis = Vec::with_capacity(lay.steps * lay.rows_per_step());
        for n in 1..=lay.steps {
            basis.push(if self.r[n - 1] >= 0.0 {
                lay.g(n)
            } else {
                lay.l(n)
            });
            basis.push(logical(lay.rate_row(n)));
            if lay.peak {
                basis.push(if n == peak_row {
                    lay.t()
                } else {
                    logical(lay.peak_row(n))
                });
            }
        }
        basis
    }

    /// Writes the program in fixed-column MPS format (internal units).
    pub fn write_mps<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.to_linear_program().write_mps(out, "BESSALGN")
    }
}

pub fn solve(instance: &LpInstance) -> LpSolution {
    solve_with(instance, Factorization::Auto)
}

pub fn solve_with(instance: &LpInstance, factorization: Factorization) -> LpSolution {
    let lp = instance.to_linear_program();
    let options = SimplexOptions {
        factorization,
        initial_basis: Some(instance.crash_basis()),
        ..SimplexOptions::default()
    };
    let res = simplex::solve(&lp, &options);
    let status = match res.status {
        SimplexStatus::Optimal => LpStatus::Optimal,
        SimplexStatus::Infeasible => LpStatus::Infeasible,
        SimplexStatus::Unbounded | SimplexStatus::NumericFailure => LpStatus::NumericFailure,
    };
    let lay = instance.layout();
    let s = instance.scale();
    let spec = &instance.spec;
    let b = spec.energy_rating;
    let mut x = vec![(res.x[lay.x(0)] * s).clamp(0.0, b)];
    let mut g = Vec::with_capacity(lay.steps);
    let mut l = Vec::with_capacity(lay.steps);
    for n in 1..=lay.steps {
        g.push((res.x[lay.g(n)] * s).max(0.0));
        l.push((res.x[lay.l(n)] * s).max(0.0));
        x.push((res.x[lay.x(n)] * s).clamp(0.0, b));
    }
    let internal_total: f64 = (1..=lay.steps).map(|n| res.x[lay.g(n)]).sum();
    let mut schedule = DispatchSchedule::from_trajectories(x, g, l, spec.delta);
    schedule.cancel_simultaneous(spec.delta);
    let horizon = lay.steps as f64 * spec.delta;
    let objective_value = match instance.objective {
        Objective::Average => s * internal_total / horizon,
        Objective::Peak => s * res.x[lay.t()] / spec.delta,
    };
    LpSolution {
        objective_value,
        total_peaker: s * internal_total,
        schedule,
        status,
        iterations: res.iterations,
    }
}

fn certified(sol: LpSolution, spec: &BessSpec) -> Result<LpSolution> {
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        other => Err(Error::Solver(format!(
            "program at B = {}, P = {} ended {:?} after {} iterations",
            spec.energy_rating, spec.power_rating, other, sol.iterations
        ))),
    }
}

/// `g(B, P)` in MW for the given series and battery.
pub fn power_alignment(
    wind: &EnergySeries,
    demand: &EnergySeries,
    spec: &BessSpec,
    objective: Objective,
) -> Result<f64> {
    let inst = build_instance(wind, demand, spec, objective)?;
    Ok(certified(solve(&inst), spec)?.objective_value)
}

/// Certified solution for excess demand `r`.
pub fn solve_excess(r: &[f64], spec: &BessSpec, objective: Objective) -> Result<LpSolution> {
    let inst = build_instance_excess(r.to_vec(), spec, objective)?;
    certified(solve(&inst), spec)
}

/// `g(B, P)` over a fixed series, memoized per `(B, P)`; safe to share across threads.
#[derive(Debug)]
pub struct AlignmentFunction {
    r: Vec<f64>,
    base: BessSpec,
    objective: Objective,
    cache: Mutex<HashMap<(u64, u64), f64>>,
}

impl AlignmentFunction {
    pub fn new(
        wind: &EnergySeries,
        demand: &EnergySeries,
        base: &BessSpec,
        objective: Objective,
    ) -> Result<Self> {
        let inst = build_instance(wind, demand, base, objective)?;
        Ok(Self::from_excess(inst.r, base, objective))
    }

    pub fn from_excess(r: Vec<f64>, base: &BessSpec, objective: Objective) -> Self {
        Self {
            r,
            base: *base,
            objective,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn excess(&self) -> &[f64] {
        &self.r
    }

    pub fn base_spec(&self) -> &BessSpec {
        &self.base
    }

    pub fn evaluate(&self, energy_rating: f64, power_rating: f64) -> Result<f64> {
        let key = (energy_rating.to_bits(), power_rating.to_bits());
        if let Some(&v) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok(v);
        }
        let spec = self.base.with_ratings(energy_rating, power_rating);
        let v = solve_excess(&self.r, &spec, self.objective)?.objective_value;
        self.cache
            .lock()
            .expect("cache lock poisoned")
            .insert(key, v);
        Ok(v)
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }
}
