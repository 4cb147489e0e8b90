//! Sampled power alignment surfaces and the capacities read off them.
//!
//! A surface holds `g(B, P)` on a rectangular grid; between nodes it is
//! interpolated bilinearly. Capacity is `kappa = g(0,0) - g(B,P)`, the peaker
//! power displaced by the battery; incremental capacity is the directional
//! derivative `-grad g . v` along a ray tying `B` and `P` together.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment_lp::solve_excess;
use crate::bess_sim::{greedy_best, BessSpec};
use crate::error::{input_err, Error, Result};
use crate::numeric::format_machine;
use crate::series::{excess_demand, EnergySeries};
use crate::Objective;

/// How each surface cell is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Exact optimum of the scheduling program.
    #[default]
    Lp,
    /// Greedy charging with the best initial state.
    Greedy,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Lp => "lp",
            Engine::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(Engine::Lp),
            "greedy" => Ok(Engine::Greedy),
            other => Err(Error::Input(format!(
                "unknown engine {other:?}, expected lp or greedy"
            ))),
        }
    }
}

/// `g(B, P)` in MW for excess demand `r`, by the chosen engine.
pub fn evaluate_cell(
    r: &[f64],
    spec: &BessSpec,
    objective: Objective,
    engine: Engine,
) -> Result<f64> {
    match engine {
        Engine::Lp => Ok(solve_excess(r, spec, objective)?.objective_value),
        Engine::Greedy => Ok(greedy_best(r, spec, objective)?.objective(objective)),
    }
}

/// `g` sampled at every `(b_grid[i], p_grid[j])`, stored as `values[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSurface {
    pub b_grid: Vec<f64>,
    pub p_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub objective: Objective,
    pub engine: Engine,
    pub retention: f64,
    pub delta: f64,
}

/// Checks a grid is nonempty, finite, strictly ascending and starts at 0.
pub fn validate_grid(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return input_err(format!("{name} grid is empty"));
    }
    if grid[0] != 0.0 {
        return input_err(format!(
            "{name} grid must start at 0, starts at {}",
            grid[0]
        ));
    }
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return input_err(format!("{name} grid has non-finite value {v}"));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return input_err(format!(
            "{name} grid not strictly ascending at {} -> {}",
            w[0], w[1]
        ));
    }
    Ok(())
}

/// `0` followed by `points - 1` geometrically spaced values from `top * 1e-3` to `top`.
pub fn log_grid(top: f64, points: usize) -> Result<Vec<f64>> {
    if !(top > 0.0 && top.is_finite()) || points < 2 {
        return input_err(format!(
            "log grid needs top > 0 and at least 2 points, got {top}, {points}"
        ));
    }
    let k = points - 1;
    let lo = top * 1e-3;
    let mut grid = vec![0.0];
    for i in 0..k {
        let t = if k == 1 {
            1.0
        } else {
            i as f64 / (k - 1) as f64
        };
        grid.push(if i + 1 == k {
            top
        } else {
            lo * (top / lo).powf(t)
        });
    }
    Ok(grid)
}

/// `points` evenly spaced values from 0 to `top`.
pub fn linear_grid(top: f64, points: usize) -> Result<Vec<f64>> {
    if !(top > 0.0 && top.is_finite()) || points < 2 {
        return input_err(format!(
            "linear grid needs top > 0 and at least 2 points, got {top}, {points}"
        ));
    }
    let k = (points - 1) as f64;
    Ok((0..points).map(|i| top * i as f64 / k).collect())
}

pub fn sweep_surface(
    wind: &EnergySeries,
    demand: &EnergySeries,
    base_spec: &BessSpec,
    b_grid: &[f64],
    p_grid: &[f64],
    objective: Objective,
    engine: Engine,
) -> Result<AlignmentSurface> {
    if wind.delta() != base_spec.delta {
        return input_err(format!(
            "series step {} h differs from battery step {} h",
            wind.delta(),
            base_spec.delta
        ));
    }
    let r = excess_demand(wind, demand)?;
    sweep_surface_excess(&r, base_spec, b_grid, p_grid, objective, engine)
}

/// Evaluates every cell (in parallel); the first failing cell in row-major order
/// is reported, so errors and values never depend on scheduling.
pub fn sweep_surface_excess(
    r: &[f64],
    base_spec: &BessSpec,
    b_grid: &[f64],
    p_grid: &[f64],
    objective: Objective,
    engine: Engine,
) -> Result<AlignmentSurface> {
    validate_grid(b_grid, "energy rating")?;
    validate_grid(p_grid, "power rating")?;
    base_spec.validate()?;
    let cols = p_grid.len();
    let cells: Vec<Result<f64>> = (0..b_grid.len() * cols)
        .into_par_iter()
        .map(|k| {
            let (b, p) = (b_grid[k / cols], p_grid[k % cols]);
            evaluate_cell(r, &base_spec.with_ratings(b, p), objective, engine).map_err(|e| {
                Error::Cell {
                    energy_rating: b,
                    power_rating: p,
                    source: Box::new(e),
                }
            })
        })
        .collect();
    let mut values = vec![Vec::with_capacity(cols); b_grid.len()];
    for (k, cell) in cells.into_iter().enumerate() {
        values[k / cols].push(cell?);
    }
    Ok(AlignmentSurface {
        b_grid: b_grid.to_vec(),
        p_grid: p_grid.to_vec(),
        values,
        objective,
        engine,
        retention: base_spec.retention,
        delta: base_spec.delta,
    })
}

/// Cell index and local coordinate in `[0, 1]` of `v` on `grid`.
fn locate(grid: &[f64], v: f64, name: &str) -> Result<(usize, f64)> {
    let last = *grid.last().expect("validated grids are nonempty");
    if !(v >= grid[0] && v <= last) {
        return input_err(format!(
            "{name} {v} outside the sampled range [{}, {last}]",
            grid[0]
        ));
    }
    if grid.len() == 1 {
        return Ok((0, 0.0));
    }
    let i = grid.partition_point(|&g| g <= v).clamp(1, grid.len() - 1) - 1;
    let t = (v - grid[i]) / (grid[i + 1] - grid[i]);
    Ok((i, t))
}

impl AlignmentSurface {
    /// `g(0, 0)`, the peaker power with no storage.
    pub fn g00(&self) -> f64 {
        self.values[0][0]
    }

    /// Bilinear interpolation; exact at grid nodes.
    pub fn interpolate(&self, energy_rating: f64, power_rating: f64) -> Result<f64> {
        let (i, t) = locate(&self.b_grid, energy_rating, "energy rating")?;
        let (j, u) = locate(&self.p_grid, power_rating, "power rating")?;
        let at = |di: usize, dj: usize| {
            let ii = (i + di).min(self.b_grid.len() - 1);
            let jj = (j + dj).min(self.p_grid.len() - 1);
            self.values[ii][jj]
        };
        if t == 0.0 && u == 0.0 {
            return Ok(at(0, 0));
        }
        Ok((1.0 - t) * (1.0 - u) * at(0, 0)
            + t * (1.0 - u) * at(1, 0)
            + (1.0 - t) * u * at(0, 1)
            + t * u * at(1, 1))
    }

    /// Every node where `g` increases along an axis by more than `tol`.
    pub fn monotonicity_violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i > 0 && v > self.values[i - 1][j] + tol {
                    out.push(format!(
                        "g rises along B at ({}, {})",
                        self.b_grid[i], self.p_grid[j]
                    ));
                }
                if j > 0 && v > row[j - 1] + tol {
                    out.push(format!(
                        "g rises along P at ({}, {})",
                        self.b_grid[i], self.p_grid[j]
                    ));
                }
                if v < -tol {
                    out.push(format!(
                        "g negative at ({}, {})",
                        self.b_grid[i], self.p_grid[j]
                    ));
                }
            }
        }
        out
    }

    /// Boundary nodes differing from `g(0,0)` by more than `tol`.
    pub fn boundary_violations(&self, tol: f64) -> Vec<String> {
        let g00 = self.g00();
        let mut out = Vec::new();
        for (j, &v) in self.values[0].iter().enumerate() {
            if (v - g00).abs() > tol {
                out.push(format!(
                    "g(0, {}) = {v} differs from g(0,0) = {g00}",
                    self.p_grid[j]
                ));
            }
        }
        for (i, row) in self.values.iter().enumerate() {
            if (row[0] - g00).abs() > tol {
                out.push(format!(
                    "g({}, 0) = {} differs from g(0,0) = {g00}",
                    self.b_grid[i], row[0]
                ));
            }
        }
        out
    }

    /// Long-format CSV `B,P,g` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        wtr.write_record(["energy_rating_mwh", "power_rating_mw", "g_mw"])
            .map_err(io)?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                wtr.write_record([
                    format_machine(self.b_grid[i]),
                    format_machine(self.p_grid[j]),
                    format_machine(v),
                ])
                .map_err(io)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W, meta: &SurfaceMetadata) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            metadata: &'a SurfaceMetadata,
            b_grid: &'a [f64],
            p_grid: &'a [f64],
            values: &'a [Vec<f64>],
        }
        let doc = Doc {
            metadata: meta,
            b_grid: &self.b_grid,
            p_grid: &self.p_grid,
            values: &self.values,
        };
        serde_json::to_writer_pretty(out, &doc)?;
        Ok(())
    }

    pub fn metadata(
        &self,
        fingerprint: Option<String>,
        generated_at: Option<String>,
    ) -> SurfaceMetadata {
        SurfaceMetadata {
            engine: self.engine,
            objective: self.objective,
            retention: self.retention,
            delta_hours: self.delta,
            data_fingerprint: fingerprint,
            generated_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetadata {
    pub engine: Engine,
    pub objective: Objective,
    pub retention: f64,
    pub delta_hours: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

/// `kappa(B, P) = g(0,0) - g(B, P)` in MW.
pub fn capacity(surface: &AlignmentSurface, energy_rating: f64, power_rating: f64) -> Result<f64> {
    Ok(surface.g00() - surface.interpolate(energy_rating, power_rating)?)
}

/// `kappa / g(0,0)` in `[0, 1]`; defined as 0 (with a warning) when `g(0,0) = 0`.
pub fn normalized_capacity(
    surface: &AlignmentSurface,
    energy_rating: f64,
    power_rating: f64,
) -> Result<f64> {
    let kappa = capacity(surface, energy_rating, power_rating)?;
    let g00 = surface.g00();
    if g00 == 0.0 {
        log::warn!("g(0,0) = 0: wind always covers demand, capacity taken as 0");
        return Ok(0.0);
    }
    Ok((kappa / g00).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayKind {
    /// `B = f(P)`, parameterized by `P`.
    BOfP,
    /// `P = f(B)`, parameterized by `B`.
    POfB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayShape {
    /// `f(s) = offset + slope * s`.
    Linear { slope: f64, offset: f64 },
    /// Piecewise-linear through `(s, f(s))` samples sorted by `s`.
    Tabulated { points: Vec<(f64, f64)> },
}

/// A curve in the `(B, P)` plane along which incremental capacity is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayConstraint {
    pub kind: RayKind,
    pub shape: RayShape,
}

impl RayConstraint {
    /// Storage of `hours` duration: `B = hours * P`.
    pub fn hours(hours: f64) -> Result<Self> {
        let ray = Self {
            kind: RayKind::BOfP,
            shape: RayShape::Linear {
                slope: hours,
                offset: 0.0,
            },
        };
        ray.validate()?;
        Ok(ray)
    }

    /// Energy rating swept at fixed power rating.
    pub fn fixed_power(power_rating: f64) -> Result<Self> {
        let ray = Self {
            kind: RayKind::POfB,
            shape: RayShape::Linear {
                slope: 0.0,
                offset: power_rating,
            },
        };
        ray.validate()?;
        Ok(ray)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.shape {
            RayShape::Linear { slope, offset } => {
                if !(slope.is_finite() && offset.is_finite()) || *slope < 0.0 || *offset < 0.0 {
                    return input_err(format!(
                        "linear ray needs finite slope, offset >= 0, got {slope}, {offset}"
                    ));
                }
            }
            RayShape::Tabulated { points } => {
                if points.len() < 2 {
                    return input_err("tabulated ray needs at least two points");
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return input_err(
                            "tabulated ray must have ascending parameters and nondecreasing values",
                        );
                    }
                }
                if points
                    .iter()
                    .any(|p| !p.0.is_finite() || !p.1.is_finite() || p.1 < 0.0)
                {
                    return input_err("tabulated ray values must be finite and >= 0");
                }
            }
        }
        Ok(())
    }

    /// `(f(s), f'(s))`; tabulated rays use the slope of the segment to the right
    /// of a breakpoint (left of the last one).
    pub fn evaluate(&self, s: f64) -> Result<(f64, f64)> {
        match &self.shape {
            RayShape::Linear { slope, offset } => Ok((offset + slope * s, *slope)),
            RayShape::Tabulated { points } => {
                let (first, last) = (points[0].0, points[points.len() - 1].0);
                if !(s >= first && s <= last) {
                    return input_err(format!(
                        "ray parameter {s} outside tabulated range [{first}, {last}]"
                    ));
                }
                let k = points
                    .partition_point(|p| p.0 <= s)
                    .clamp(1, points.len() - 1)
                    - 1;
                let (a, b) = (points[k], points[k + 1]);
                let slope = (b.1 - a.1) / (b.0 - a.0);
                Ok((a.1 + slope * (s - a.0), slope))
            }
        }
    }

    /// `(B, P)` at parameter `s`.
    pub fn point(&self, s: f64) -> Result<(f64, f64)> {
        let (f, _) = self.evaluate(s)?;
        Ok(match self.kind {
            RayKind::BOfP => (f, s),
            RayKind::POfB => (s, f),
        })
    }

    /// Tangent `v` at `s`: `(f', 1)` for `B = f(P)`, `(1, f')` for `P = f(B)`.
    pub fn direction(&self, s: f64) -> Result<(f64, f64)> {
        let (_, df) = self.evaluate(s)?;
        Ok(match self.kind {
            RayKind::BOfP => (df, 1.0),
            RayKind::POfB => (1.0, df),
        })
    }

    /// Largest parameter in `[0, ..]` whose point stays inside the surface's grid.
    pub fn max_parameter(&self, surface: &AlignmentSurface) -> Result<f64> {
        let b_max = *surface.b_grid.last().expect("validated grid");
        let p_max = *surface.p_grid.last().expect("validated grid");
        let (s_axis_max, f_max) = match self.kind {
            RayKind::BOfP => (p_max, b_max),
            RayKind::POfB => (b_max, p_max),
        };
        let upper = match &self.shape {
            RayShape::Tabulated { points } => s_axis_max.min(points[points.len() - 1].0),
            RayShape::Linear { .. } => s_axis_max,
        };
        let inside = |s: f64| self.evaluate(s).map(|(f, _)| f <= f_max).unwrap_or(false);
        if inside(upper) {
            return Ok(upper);
        }
        let (mut lo, mut hi) = (0.0_f64, upper);
        if !inside(lo) {
            return input_err("ray starts outside the sampled grid");
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }
}

/// Directional derivative estimate and whether a one-sided difference was needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementalCapacity {
    /// MW per unit of the ray parameter.
    pub value: f64,
    /// Set when a difference had to be one-sided at the edge of the grid.
    pub reduced_accuracy: bool,
}

/// Derivative of `g` along `grid`'s axis at `v`, by central differences with the
/// local grid spacing; falls back to a one-sided difference at the edges.
fn axis_derivative(grid: &[f64], v: f64, eval: impl Fn(f64) -> Result<f64>) -> Result<(f64, bool)> {
    if grid.len() < 2 {
        return input_err("a derivative needs at least two grid points along the axis");
    }
    let (i, t) = locate(grid, v, "point")?;
    let width = grid[i + 1] - grid[i];
    let h = if t == 0.0 && i > 0 {
        width.min(grid[i] - grid[i - 1])
    } else {
        width
    };
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    let (lo, hi) = (v - h, v + h);
    if lo >= first && hi <= last {
        Ok(((eval(hi)? - eval(lo)?) / (2.0 * h), false))
    } else if hi <= last {
        Ok(((eval(hi)? - eval(v)?) / h, true))
    } else {
        Ok((
            (eval(v)? - eval(lo.max(first))?) / (v - lo.max(first)),
            true,
        ))
    }
}

/// `-grad g . v` along `ray` at parameter `at`.
pub fn incremental_capacity(
    surface: &AlignmentSurface,
    ray: &RayConstraint,
    at: f64,
) -> Result<IncrementalCapacity> {
    ray.validate()?;
    let (b, p) = ray.point(at)?;
    surface.interpolate(b, p)?;
    let (vb, vp) = ray.direction(at)?;
    let mut reduced = false;
    let mut grad = 0.0;
    if vb != 0.0 {
        let (d, one_sided) = axis_derivative(&surface.b_grid, b, |x| surface.interpolate(x, p))?;
        grad += d * vb;
        reduced |= one_sided;
    }
    if vp != 0.0 {
        let (d, one_sided) = axis_derivative(&surface.p_grid, p, |y| surface.interpolate(b, y))?;
        grad += d * vp;
        reduced |= one_sided;
    }
    Ok(IncrementalCapacity {
        value: -grad,
        reduced_accuracy: reduced,
    })
}

/// Smallest battery on a ray recovering a target share of the no-storage peaker power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyResult {
    pub energy_rating: f64,
    pub power_rating: f64,
    pub normalized_capacity: f64,
    /// `g(0,0) / P`: no-storage peaker power per MW of battery power rating.
    pub efficiency: f64,
    /// `target * g(0,0) / P`: displaced peaker power per MW of battery power rating.
    pub displaced_per_power: f64,
}

/// Bisects along `ray` (default 4-hour storage) for the smallest battery whose
/// normalized capacity reaches `target_fraction`, re-evaluating `g` with the
/// surface's engine at every probe rather than interpolating.
pub fn efficiency(
    wind: &EnergySeries,
    demand: &EnergySeries,
    surface: &AlignmentSurface,
    target_fraction: f64,
    ray: Option<&RayConstraint>,
) -> Result<EfficiencyResult> {
    let r = excess_demand(wind, demand)?;
    efficiency_excess(&r, surface, target_fraction, ray)
}

pub fn efficiency_excess(
    r: &[f64],
    surface: &AlignmentSurface,
    target_fraction: f64,
    ray: Option<&RayConstraint>,
) -> Result<EfficiencyResult> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return input_err(format!(
            "target fraction must lie in (0, 1], got {target_fraction}"
        ));
    }
    let default_ray;
    let ray = match ray {
        Some(r) => r,
        None => {
            default_ray = RayConstraint::hours(4.0)?;
            &default_ray
        }
    };
    ray.validate()?;
    let base = BessSpec::new(0.0, 0.0, surface.retention, surface.delta)?;
    let eval = |b: f64, p: f64| {
        evaluate_cell(
            r,
            &base.with_ratings(b, p),
            surface.objective,
            surface.engine,
        )
    };
    let g00 = eval(0.0, 0.0)?;
    if g00 == 0.0 {
        return Err(Error::Precondition(
            "no peaker power to recover: g(0,0) is already 0".into(),
        ));
    }
    let fraction_at = |s: f64| -> Result<f64> {
        let (b, p) = ray.point(s)?;
        Ok(((g00 - eval(b, p)?) / g00).clamp(0.0, 1.0))
    };
    let s_max = ray.max_parameter(surface)?;
    let achievable = fraction_at(s_max)?;
    if achievable < target_fraction {
        return Err(Error::Unreachable {
            target: target_fraction,
            achievable,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, s_max);
    let mut at_hi = achievable;
    while hi - lo > 1e-10 * s_max.max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = fraction_at(mid)?;
        if f >= target_fraction {
            hi = mid;
            at_hi = f;
        } else {
            lo = mid;
        }
    }
    let (b, p) = ray.point(hi)?;
    let per_power = |x: f64| if p > 0.0 { x / p } else { f64::INFINITY };
    Ok(EfficiencyResult {
        energy_rating: b,
        power_rating: p,
        normalized_capacity: at_hi,
        efficiency: per_power(g00),
        displaced_per_power: per_power(target_fraction * g00),
    })
}

/// One row of an incremental-capacity table along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityRow {
    pub parameter: f64,
    pub energy_rating: f64,
    pub power_rating: f64,
    pub g: f64,
    pub capacity: f64,
    pub normalized_capacity: f64,
    pub incremental_capacity: f64,
    pub reduced_accuracy: bool,
}

/// Capacity and incremental capacity at each parameter value along `ray`.
pub fn capacity_table(
    surface: &AlignmentSurface,
    ray: &RayConstraint,
    parameters: &[f64],
) -> Result<Vec<CapacityRow>> {
    parameters
        .iter()
        .map(|&s| {
            let (b, p) = ray.point(s)?;
            let inc = incremental_capacity(surface, ray, s)?;
            Ok(CapacityRow {
                parameter: s,
                energy_rating: b,
                power_rating: p,
                g: surface.interpolate(b, p)?,
                capacity: capacity(surface, b, p)?,
                normalized_capacity: normalized_capacity(surface, b, p)?,
                incremental_capacity: inc.value,
                reduced_accuracy: inc.reduced_accuracy,
            })
        })
        .collect()
}

pub fn write_capacity_csv<W: Write>(out: W, rows: &[CapacityRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    wtr.write_record([
        "parameter",
        "energy_rating_mwh",
        "power_rating_mw",
        "g_mw",
        "capacity_mw",
        "normalized_capacity",
        "incremental_capacity",
        "reduced_accuracy",
    ])
    .map_err(io)?;
    for row in rows {
        wtr.write_record([
            format_machine(row.parameter),
            format_machine(row.energy_rating),
            format_machine(row.power_rating),
            format_machine(row.g),
            format_machine(row.capacity),
            format_machine(row.normalized_capacity),
            format_machine(row.incremental_capacity),
            row.reduced_accuracy.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run_bounds::{b_sharp_g, decompose_excess, dp_peaker_energy, endpoint_g00_excess};
    use crate::synthetic::{rng, sharp_fixture};
    use rand::Rng;

    fn lossless() -> BessSpec {
        BessSpec::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn synthetic(
        values: impl Fn(f64, f64) -> f64,
        b_grid: &[f64],
        p_grid: &[f64],
    ) -> AlignmentSurface {
        AlignmentSurface {
            b_grid: b_grid.to_vec(),
            p_grid: p_grid.to_vec(),
            values: b_grid
                .iter()
                .map(|&b| p_grid.iter().map(|&p| values(b, p)).collect())
                .collect(),
            objective: Objective::Average,
            engine: Engine::Lp,
            retention: 1.0,
            delta: 1.0,
        }
    }

    #[test]
    fn grids_are_validated() {
        assert!(validate_grid(&[0.0, 1.0, 2.0], "b").is_ok());
        assert!(validate_grid(&[], "b").is_err());
        assert!(validate_grid(&[1.0, 2.0], "b").is_err());
        assert!(validate_grid(&[0.0, 2.0, 2.0], "b").is_err());
        let g = log_grid(9.6, 41).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[40], 9.6);
        assert!((g[1] - 9.6e-3).abs() < 1e-15);
        assert!(validate_grid(&g, "b").is_ok());
        assert_eq!(linear_grid(2.0, 5).unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn fixture_surface() {
        let r = sharp_fixture();
        let grid: Vec<f64> = (0..=10).map(f64::from).collect();
        for engine in [Engine::Lp, Engine::Greedy] {
            let s = sweep_surface_excess(&r, &lossless(), &grid, &grid, Objective::Average, engine)
                .unwrap();
            let e = endpoint_g00_excess(&r, 1.0).unwrap();
            assert_eq!(s.g00(), e.g_av00);
            assert!(s.boundary_violations(0.0).is_empty());
            assert!(s.monotonicity_violations(1e-9).is_empty());
            for p in 6..=10 {
                assert_eq!(s.values[6][p], 0.0);
            }
            assert_eq!(s.values[5][10], 1.0 / 30.0);
            assert_eq!(normalized_capacity(&s, 6.0, 6.0).unwrap(), 1.0);
            assert_eq!(capacity(&s, 0.0, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn balanced_series_give_zero_surface() {
        let r = vec![0.0; 8];
        let grid = [0.0, 1.0, 2.0];
        let s = sweep_surface_excess(&r, &lossless(), &grid, &grid, Objective::Peak, Engine::Lp)
            .unwrap();
        assert!(s.values.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(normalized_capacity(&s, 1.0, 1.0).unwrap(), 0.0);
        let err = efficiency_excess(&r, &s, 0.5, None).unwrap_err();
        assert!(err.to_string().contains("already 0"), "{err}");
    }

    #[test]
    fn single_cell_surface_is_the_endpoint() {
        let r = vec![3.0, -1.0, 2.0];
        let s = sweep_surface_excess(&r, &lossless(), &[0.0], &[0.0], Objective::Peak, Engine::Lp)
            .unwrap();
        assert_eq!(s.values, vec![vec![3.0]]);
    }

    #[test]
    fn failing_cell_is_reported_with_coordinates() {
        let r = vec![f64::NAN];
        let err = sweep_surface_excess(
            &r,
            &lossless(),
            &[0.0, 1.0],
            &[0.0],
            Objective::Average,
            Engine::Lp,
        )
        .unwrap_err();
        match err {
            Error::Cell {
                energy_rating,
                power_rating,
                ..
            } => assert_eq!((energy_rating, power_rating), (0.0, 0.0)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn interpolation_is_exact_at_nodes_and_bilinear_between() {
        let b = [0.0, 1.0, 3.0];
        let p = [0.0, 2.0];
        let s = synthetic(|b, p| 10.0 - b - 2.0 * p + 0.5 * b * p, &b, &p);
        for (i, &bi) in b.iter().enumerate() {
            for (j, &pj) in p.iter().enumerate() {
                assert_eq!(s.interpolate(bi, pj).unwrap(), s.values[i][j]);
            }
        }
        // bilinear functions are reproduced exactly
        assert!((s.interpolate(2.0, 1.0).unwrap() - (10.0 - 2.0 - 2.0 + 1.0)).abs() < 1e-12);
        assert!(s.interpolate(3.5, 0.0).is_err());
        assert!(capacity(&s, 0.0, -1.0).is_err());
    }

    #[test]
    fn incremental_capacity_of_linear_ramp() {
        let (a, c) = (0.3, 0.7);
        let grid = linear_grid(20.0, 41).unwrap();
        let s = synthetic(|b, p| (100.0 - a * b - c * p).max(0.0), &grid, &grid);
        let ray = RayConstraint::hours(4.0).unwrap();
        for at in [0.75, 1.0, 2.0, 3.3] {
            let inc = incremental_capacity(&s, &ray, at).unwrap();
            assert!(
                (inc.value - (4.0 * a + c)).abs() < 1e-9,
                "{at}: {}",
                inc.value
            );
            assert!(!inc.reduced_accuracy);
        }
        let edge = incremental_capacity(&s, &ray, 5.0).unwrap();
        assert!(edge.reduced_accuracy);
        assert!((edge.value - (4.0 * a + c)).abs() < 1e-9);
        let flat = synthetic(|_, _| 2.0, &grid, &grid);
        assert_eq!(incremental_capacity(&flat, &ray, 2.0).unwrap().value, 0.0);
    }

    #[test]
    fn incremental_capacity_along_b_matches_dp_slope() {
        let r = sharp_fixture();
        let grid: Vec<f64> = (0..=16).map(|k| f64::from(k) * 0.5).collect();
        let p_grid = [0.0, 10.0];
        let s = sweep_surface_excess(
            &r,
            &lossless(),
            &grid,
            &p_grid,
            Objective::Average,
            Engine::Lp,
        )
        .unwrap();
        let ray = RayConstraint::fixed_power(10.0).unwrap();
        let dec = decompose_excess(&r).unwrap();
        let horizon = r.len() as f64;
        for at in [0.75, 2.25, 4.5, 5.5] {
            // both sample points sit inside one linear piece of the DP
            let h = 0.5;
            let slope = (dp_peaker_energy(&dec, at - h).unwrap()
                - dp_peaker_energy(&dec, at + h).unwrap())
                / (2.0 * h);
            let inc = incremental_capacity(&s, &ray, at).unwrap();
            assert!(
                (inc.value - slope / horizon).abs() < 1e-9,
                "{at}: {} vs {}",
                inc.value,
                slope / horizon
            );
        }
    }

    #[test]
    fn incremental_capacity_on_four_hour_ray_is_nonnegative_and_nonincreasing() {
        for seed in 0..5 {
            let r =
                crate::synthetic::random_integer_excess(&mut crate::synthetic::rng(seed), 30, 4);
            let p_grid: Vec<f64> = (0..=12).map(|k| f64::from(k) * 0.5).collect();
            let b_grid: Vec<f64> = p_grid.iter().map(|p| 4.0 * p).collect();
            let s = sweep_surface_excess(
                &r,
                &lossless(),
                &b_grid,
                &p_grid,
                Objective::Average,
                Engine::Lp,
            )
            .unwrap();
            let ray = RayConstraint::hours(4.0).unwrap();
            let incs: Vec<f64> = p_grid[1..12]
                .iter()
                .map(|&at| incremental_capacity(&s, &ray, at).unwrap().value)
                .collect();
            let tol = 1e-6 * incs.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            assert!(incs.iter().all(|&v| v >= -tol), "{r:?}: {incs:?}");
            assert!(
                incs.windows(2).all(|w| w[1] <= w[0] + tol),
                "{r:?}: {incs:?}"
            );
        }
    }

    #[test]
    fn efficiency_reaches_full_recovery_at_b_sharp_g() {
        let r = sharp_fixture();
        let grid: Vec<f64> = (0..=10).map(f64::from).collect();
        let s = sweep_surface_excess(
            &r,
            &lossless(),
            &grid,
            &grid,
            Objective::Average,
            Engine::Lp,
        )
        .unwrap();
        // B = P * delta keeps the power limit slack
        let ray = RayConstraint::hours(1.0).unwrap();
        let e = efficiency_excess(&r, &s, 1.0, Some(&ray)).unwrap();
        let target = b_sharp_g(&decompose_excess(&r).unwrap());
        assert!(
            (e.energy_rating - target).abs() < 1e-6,
            "{}",
            e.energy_rating
        );
        assert_eq!(e.normalized_capacity, 1.0);
        let small: Vec<f64> = (0..=5).map(f64::from).collect();
        let s = sweep_surface_excess(
            &r,
            &lossless(),
            &small,
            &small,
            Objective::Average,
            Engine::Lp,
        )
        .unwrap();
        let unreachable = efficiency_excess(&r, &s, 1.0, None).unwrap_err();
        assert!(
            matches!(unreachable, Error::Unreachable { .. }),
            "{unreachable}"
        );
    }

    #[test]
    fn tabulated_rays() {
        let ray = RayConstraint {
            kind: RayKind::BOfP,
            shape: RayShape::Tabulated {
                points: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 3.0)],
            },
        };
        ray.validate().unwrap();
        assert_eq!(ray.evaluate(0.5).unwrap(), (1.0, 2.0));
        assert_eq!(ray.evaluate(2.0).unwrap(), (2.5, 0.5));
        assert_eq!(ray.point(3.0).unwrap(), (3.0, 3.0));
        assert!(ray.evaluate(4.0).is_err());
        let bad = RayConstraint {
            kind: RayKind::BOfP,
            shape: RayShape::Tabulated {
                points: vec![(0.0, 1.0), (1.0, 0.5)],
            },
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn random_surfaces_are_monotone_and_flat_on_the_boundary() {
        let mut g = rng(21);
        for _ in 0..5 {
            let r: Vec<f64> = (0..24).map(|_| g.gen_range(-3.0..3.0)).collect();
            let spec = BessSpec::new(0.0, 0.0, 0.98, 1.0).unwrap();
            let grid = log_grid(10.0, 8).unwrap();
            for engine in [Engine::Lp, Engine::Greedy] {
                for obj in [Objective::Average, Objective::Peak] {
                    let s = sweep_surface_excess(&r, &spec, &grid, &grid, obj, engine).unwrap();
                    // greedy is a heuristic for the peak objective; see below
                    if !(engine == Engine::Greedy && obj == Objective::Peak) {
                        assert!(s.monotonicity_violations(1e-9).is_empty(), "{engine} {obj}");
                    }
                    assert!(s.boundary_violations(1e-9).is_empty(), "{engine} {obj}");
                }
            }
        }
    }

    #[test]
    fn greedy_peak_can_rise_with_power_rating() {
        // A faster battery empties on the small deficits and meets the big one dry.
        let r = [1.0, 1.0, 3.0];
        let at = |p: f64| {
            let spec = BessSpec::new(2.0, p, 1.0, 1.0).unwrap();
            evaluate_cell(&r, &spec, Objective::Peak, Engine::Greedy).unwrap()
        };
        assert_eq!(at(0.5), 2.5);
        assert_eq!(at(1.0), 3.0);
        let lp = |p: f64| {
            evaluate_cell(
                &r,
                &BessSpec::new(2.0, p, 1.0, 1.0).unwrap(),
                Objective::Peak,
                Engine::Lp,
            )
            .unwrap()
        };
        assert!(lp(1.0) <= lp(0.5));
    }

    #[test]
    fn exports_are_deterministic() {
        let r = sharp_fixture();
        let grid = [0.0, 2.0, 6.0];
        let s = sweep_surface_excess(
            &r,
            &lossless(),
            &grid,
            &grid,
            Objective::Average,
            Engine::Lp,
        )
        .unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        s.write_csv(&mut a).unwrap();
        s.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("energy_rating_mwh,power_rating_mw,g_mw\n0,0,0.5\n"));
        let mut j = Vec::new();
        s.write_json(&mut j, &s.metadata(Some("abc".into()), None))
            .unwrap();
        let v: serde_json::Value = serde_json::from_slice(&j).unwrap();
        assert_eq!(v["metadata"]["engine"], "lp");
        assert_eq!(v["metadata"]["objective"], "avg");
        assert!(v["metadata"].get("generated_at").is_none());
        assert_eq!(v["values"][2][2], 0.0);
    }
}
