//! Battery state evolution and the greedy charging protocol.
//!
//! The battery obeys `x(n) = alpha x(n-1) + (w(n) - d(n)) + (g(n) - l(n))` with
//! `0 <= x(n) <= B` and `|x(n) - alpha x(n-1)| <= delta P`. The greedy protocol
//! stores every surplus and covers every deficit from storage as far as those
//! limits allow; the peaker supplies `g(n)` and the remainder is spilled as `l(n)`.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::numeric::{self, KahanSum};
use crate::series::{excess_demand, EnergySeries};
use crate::Objective;

/// Energy rating `B` (MWh), power rating `P` (MW), per-step retention `alpha`
/// and step length `delta` (h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessSpec {
    pub energy_rating: f64,
    pub power_rating: f64,
    pub retention: f64,
    pub delta: f64,
}

impl BessSpec {
    pub fn new(energy_rating: f64, power_rating: f64, retention: f64, delta: f64) -> Result<Self> {
        let spec = Self {
            energy_rating,
            power_rating,
            retention,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lossless battery whose power limit never binds (`delta P = B`).
    pub fn unconstrained(energy_rating: f64, delta: f64) -> Result<Self> {
        Self::new(energy_rating, energy_rating / delta, 1.0, delta)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.energy_rating.is_finite() && self.power_rating.is_finite();
        if !finite || self.energy_rating < 0.0 || self.power_rating < 0.0 {
            return input_err(format!(
                "ratings must be finite and >= 0, got B = {}, P = {}",
                self.energy_rating, self.power_rating
            ));
        }
        if !(0.0..=1.0).contains(&self.retention) {
            return input_err(format!(
                "retention must lie in [0, 1], got {}",
                self.retention
            ));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return input_err(format!("step length must be positive, got {}", self.delta));
        }
        Ok(())
    }

    /// Largest change of stored energy in one step, `delta P` (MWh).
    pub fn step_limit(&self) -> f64 {
        self.delta * self.power_rating
    }

    pub fn with_ratings(&self, energy_rating: f64, power_rating: f64) -> Self {
        Self {
            energy_rating,
            power_rating,
            ..*self
        }
    }
}

/// Per-step retention equivalent to losing `loss` of the stored energy every 24 h.
pub fn retention_from_daily_loss(loss: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&loss) {
        return input_err(format!("daily loss must lie in [0, 1], got {loss}"));
    }
    Ok((1.0 - loss).powf(delta / 24.0))
}

/// Battery, peaker and spill trajectories with their window averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSchedule {
    /// Battery states, `x[0]` is the initial state; length `N + 1`.
    pub x: Vec<f64>,
    /// Peaker energy per step; length `N`.
    pub g: Vec<f64>,
    /// Spilled wind energy per step; length `N`.
    pub l: Vec<f64>,
    pub g_av: f64,
    pub g_peak: f64,
    pub l_av: f64,
}

impl DispatchSchedule {
    pub fn from_trajectories(x: Vec<f64>, g: Vec<f64>, l: Vec<f64>, delta: f64) -> Self {
        let span = g.len() as f64 * delta;
        let g_av = numeric::sum(&g) / span;
        let l_av = numeric::sum(&l) / span;
        let g_peak = g.iter().copied().fold(0.0, f64::max) / delta;
        Self {
            x,
            g,
            l,
            g_av,
            g_peak,
            l_av,
        }
    }

    pub fn steps(&self) -> usize {
        self.g.len()
    }

    pub fn total_peaker(&self) -> f64 {
        numeric::sum(&self.g)
    }

    pub fn total_spilled(&self) -> f64 {
        numeric::sum(&self.l)
    }

    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Average => self.g_av,
            Objective::Peak => self.g_peak,
        }
    }

    /// Removes simultaneous buying and spilling by cancelling `min(g, l)` at each step.
    pub fn cancel_simultaneous(&mut self, delta: f64) {
        for (g, l) in self.g.iter_mut().zip(self.l.iter_mut()) {
            let common = g.min(*l);
            if common > 0.0 {
                *g -= common;
                *l -= common;
            }
        }
        let x = std::mem::take(&mut self.x);
        let g = std::mem::take(&mut self.g);
        let l = std::mem::take(&mut self.l);
        *self = Self::from_trajectories(x, g, l, delta);
    }

    /// Lists every violated schedule invariant for excess demand `r`.
    ///
    /// Checks storage and rate bounds, nonnegativity, complementarity and
    /// conservation, each to `tol` absolute.
    pub fn violations(&self, r: &[f64], spec: &BessSpec, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let n = r.len();
        if self.x.len() != n + 1 || self.g.len() != n || self.l.len() != n {
            out.push(format!(
                "length mismatch: x {}, g {}, l {}, r {}",
                self.x.len(),
                self.g.len(),
                self.l.len(),
                n
            ));
            return out;
        }
        let b = spec.energy_rating;
        let dp = spec.step_limit();
        let alpha = spec.retention;
        for (k, &x) in self.x.iter().enumerate() {
            if x < -tol || x > b + tol {
                out.push(format!("x({k}) = {x} outside [0, {b}]"));
            }
        }
        for k in 0..n {
            let (prev, cur, g, l) = (self.x[k], self.x[k + 1], self.g[k], self.l[k]);
            let step = cur - alpha * prev;
            if step.abs() > dp + tol {
                out.push(format!(
                    "step {}: |x - alpha x_prev| = {} exceeds {}",
                    k + 1,
                    step.abs(),
                    dp
                ));
            }
            if g < -tol || l < -tol {
                out.push(format!("step {}: negative g = {g} or l = {l}", k + 1));
            }
            if g > tol && l > tol {
                out.push(format!(
                    "step {}: buys g = {g} while spilling l = {l}",
                    k + 1
                ));
            }
            let residual = cur - (alpha * prev - r[k] + g - l);
            if residual.abs() > tol {
                out.push(format!("step {}: conservation residual {residual}", k + 1));
            }
        }
        out
    }
}

/// Outcome of one greedy step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub x: f64,
    pub g: f64,
    pub l: f64,
}

fn check_state(x: f64, spec: &BessSpec) -> Result<()> {
    if !(x >= 0.0 && x <= spec.energy_rating) {
        return Err(Error::State {
            state: x,
            energy_rating: spec.energy_rating,
        });
    }
    Ok(())
}

/// One greedy step driven by excess demand `r = d - w`; `x_prev` must already be valid.
#[inline]
fn step_excess(x_prev: f64, r: f64, b: f64, dp: f64, alpha: f64) -> Step {
    let carried = alpha * x_prev;
    let f = carried - r;
    let lo = (carried - dp).max(0.0);
    let hi = (carried + dp).min(b);
    let x = f.clamp(lo, hi);
    if r > 0.0 {
        Step {
            x,
            g: x - f,
            l: 0.0,
        }
    } else if r < 0.0 {
        Step {
            x,
            g: 0.0,
            l: f - x,
        }
    } else {
        Step { x, g: 0.0, l: 0.0 }
    }
}

/// Advances the battery one step from `x_prev` with wind `w` and demand `d` (MWh).
///
/// The new state is `f = alpha x_prev + (w - d)` clamped to the storage and rate
/// limits; the peaker covers what storage cannot during a deficit and the
/// excess is spilled during a surplus.
pub fn greedy_step(x_prev: f64, w: f64, d: f64, spec: &BessSpec) -> Result<Step> {
    check_state(x_prev, spec)?;
    Ok(step_excess(
        x_prev,
        d - w,
        spec.energy_rating,
        spec.step_limit(),
        spec.retention,
    ))
}

/// Runs the greedy protocol over excess demand `r` from initial state `x0`.
pub fn greedy_simulate_excess(r: &[f64], spec: &BessSpec, x0: f64) -> Result<DispatchSchedule> {
    spec.validate()?;
    check_state(x0, spec)?;
    if r.is_empty() {
        return input_err("empty excess demand sequence");
    }
    let (b, dp, alpha) = (spec.energy_rating, spec.step_limit(), spec.retention);
    let mut x = Vec::with_capacity(r.len() + 1);
    let mut g = Vec::with_capacity(r.len());
    let mut l = Vec::with_capacity(r.len());
    x.push(x0);
    let mut state = x0;
    for &rn in r {
        let s = step_excess(state, rn, b, dp, alpha);
        state = s.x;
        x.push(s.x);
        g.push(s.g);
        l.push(s.l);
    }
    Ok(DispatchSchedule::from_trajectories(x, g, l, spec.delta))
}

/// Runs the greedy protocol over a wind/demand pair from initial state `x0`.
pub fn greedy_simulate(
    wind: &EnergySeries,
    demand: &EnergySeries,
    spec: &BessSpec,
    x0: f64,
) -> Result<DispatchSchedule> {
    if wind.delta() != spec.delta {
        return input_err(format!(
            "series step {} h differs from battery step {} h",
            wind.delta(),
            spec.delta
        ));
    }
    let r = excess_demand(wind, demand)?;
    greedy_simulate_excess(&r, spec, x0)
}

/// Greedy objective value (MW) from `x0` without materializing the schedule.
pub fn greedy_objective(r: &[f64], spec: &BessSpec, x0: f64, objective: Objective) -> f64 {
    let (b, dp, alpha) = (spec.energy_rating, spec.step_limit(), spec.retention);
    let mut state = x0;
    let mut total = KahanSum::new();
    let mut peak: f64 = 0.0;
    for &rn in r {
        let s = step_excess(state, rn, b, dp, alpha);
        state = s.x;
        total.add(s.g);
        peak = peak.max(s.g);
    }
    match objective {
        Objective::Average => total.value() / (r.len() as f64 * spec.delta),
        Objective::Peak => peak / spec.delta,
    }
}

/// Smallest initial state in `[0, B]` whose greedy run attains the minimal objective.
///
/// Each greedy state is a nondecreasing function of the previous one and the peaker
/// draw a nonincreasing one, so the objective is nonincreasing in `x0` and its
/// minimum is attained at `x0 = B`. Bisection on "value within rounding of that
/// minimum" then locates the smallest such `x0` to `1e-6 B`.
pub fn best_initial_state_excess(r: &[f64], spec: &BessSpec, objective: Objective) -> Result<f64> {
    spec.validate()?;
    if r.is_empty() {
        return input_err("empty excess demand sequence");
    }
    let b = spec.energy_rating;
    if b == 0.0 {
        return Ok(0.0);
    }
    let eval = |x0: f64| greedy_objective(r, spec, x0, objective);
    let at_zero = eval(0.0);
    let best = eval(b);
    let slack = 1e-12 * at_zero.abs().max(f64::MIN_POSITIVE);
    let good = |x0: f64| eval(x0) <= best + slack;
    if good(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, b);
    let tol = 1e-6 * b;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if good(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// [`best_initial_state_excess`] for a wind/demand pair.
pub fn best_greedy_initial_state(
    wind: &EnergySeries,
    demand: &EnergySeries,
    spec: &BessSpec,
    objective: Objective,
) -> Result<f64> {
    let r = excess_demand(wind, demand)?;
    best_initial_state_excess(&r, spec, objective)
}

/// Greedy schedule from the best initial state for `objective`.
pub fn greedy_best(r: &[f64], spec: &BessSpec, objective: Objective) -> Result<DispatchSchedule> {
    let x0 = best_initial_state_excess(r, spec, objective)?;
    greedy_simulate_excess(r, spec, x0)
}
