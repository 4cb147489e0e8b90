use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use bess_align::alignment_lp::{build_instance, solve_excess};
use bess_align::bess_sim::{greedy_best, BessSpec};
use bess_align::capacity::{
    capacity_table, efficiency, log_grid, sweep_surface, write_capacity_csv, AlignmentSurface,
    EfficiencyResult, RayConstraint,
};
use bess_align::numeric::format_human;
use bess_align::run_bounds::{
    b_sharp_g, b_sharp_with_reference, decompose_excess, dp_peaker_energy, endpoint_g00, Endpoints,
};
use bess_align::series::ingest::{ingest, read_canonical, write_canonical, IngestOptions};
use bess_align::series::{excess_demand, EnergySeries};
use bess_align::synthetic::{random_integer_excess, rng};
use bess_align::{Error, Objective};

use crate::config::RunConfig;

/// Largest accepted relative discrepancy between engines in `validate`.
pub const VALIDATION_TOLERANCE: f64 = 1e-9;

/// Validation found engines disagreeing; mapped to the solver exit code.
#[derive(Debug, thiserror::Error)]
#[error("engines disagree: max relative discrepancy {max} exceeds {tolerance}")]
pub struct ValidationFailed {
    pub max: f64,
    pub tolerance: f64,
}

pub struct Session {
    pub cfg: RunConfig,
    pub timestamp: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(Error::Io)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let f = File::create(path)
        .map_err(Error::Io)
        .with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path)
        .map_err(Error::Io)
        .with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::Json)?;
    out.write_all(b"\n").map_err(Error::Io)?;
    out.flush().map_err(Error::Io)?;
    Ok(())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// SHA-256 over the step length and both series, little-endian.
pub fn fingerprint(wind: &EnergySeries, demand: &EnergySeries) -> String {
    let mut h = Sha256::new();
    h.update(wind.delta().to_le_bytes());
    for s in [wind, demand] {
        h.update((s.len() as u64).to_le_bytes());
        for v in s.values() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Session {
    fn retention(&self) -> Result<f64> {
        let a = self.cfg.retention()?;
        if let Some(loss) = self.cfg.battery.daily_loss {
            println!(
                "retention: daily loss {} over {} h steps gives alpha = {}",
                loss, self.cfg.data.delta_hours, a
            );
        }
        Ok(a)
    }

    fn load_series(&self) -> Result<(EnergySeries, EnergySeries)> {
        let delta = self.cfg.data.delta_hours;
        let wp = self.cfg.wind_series_path();
        let dp = self.cfg.demand_series_path();
        let (tw, wind) = read_canonical(open(&wp)?, delta, "wind")
            .with_context(|| format!("reading {}", wp.display()))?;
        let (td, demand) = read_canonical(open(&dp)?, delta, "demand")
            .with_context(|| format!("reading {}", dp.display()))?;
        if tw != td {
            return Err(Error::Input(format!(
                "{} and {} cover different timestamps",
                wp.display(),
                dp.display()
            ))
            .into());
        }
        Ok((wind, demand))
    }

    fn grids(&self, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = &self.cfg.grid;
        let b = match &g.b {
            Some(b) => b.clone(),
            None => {
                let dec = decompose_excess(r)?;
                let span = dec.cumulative().max() - dec.cumulative().min();
                let top = g.b_max.unwrap_or(1.2 * span);
                if top > 0.0 && g.points >= 2 {
                    log_grid(top, g.points)?
                } else {
                    vec![0.0]
                }
            }
        };
        let p = match &g.p {
            Some(p) => p.clone(),
            None => b.iter().map(|v| v / g.hours).collect(),
        };
        Ok((b, p))
    }

    fn surface(
        &self,
        wind: &EnergySeries,
        demand: &EnergySeries,
        dump_lp: Option<&Path>,
    ) -> Result<AlignmentSurface> {
        let r = excess_demand(wind, demand)?;
        let (b, p) = self.grids(&r)?;
        let base = BessSpec::new(0.0, 0.0, self.retention()?, wind.delta())?;
        if let Some(path) = dump_lp {
            let spec = base.with_ratings(*b.last().unwrap_or(&0.0), *p.last().unwrap_or(&0.0));
            let inst = build_instance(wind, demand, &spec, self.cfg.objective)?;
            let mut out = create(path)?;
            inst.write_mps(&mut out).map_err(Error::Io)?;
            out.flush().map_err(Error::Io)?;
            println!("wrote {}", path.display());
        }
        log::info!(
            "sweeping {} x {} cells with the {} engine",
            b.len(),
            p.len(),
            self.cfg.engine
        );
        Ok(sweep_surface(
            wind,
            demand,
            &base,
            &b,
            &p,
            self.cfg.objective,
            self.cfg.engine,
        )?)
    }
}

pub fn ingest_cmd(ctx: &Session, wind: Option<PathBuf>, demand: Option<PathBuf>) -> Result<()> {
    let d = &ctx.cfg.data;
    let Some(wind_path) = wind.or_else(|| d.wind_csv.clone()) else {
        bail!(Error::Input(
            "no wind CSV given (--wind or data.wind_csv)".into()
        ));
    };
    let Some(demand_path) = demand.or_else(|| d.demand_csv.clone()) else {
        bail!(Error::Input(
            "no demand CSV given (--demand or data.demand_csv)".into()
        ));
    };
    let options = IngestOptions {
        delta_hours: d.delta_hours,
        columns: d.columns.clone(),
        gaps: d.gaps,
        turbine: ctx.cfg.turbine,
        equalize_averages: d.equalize_averages,
    };
    let pair = ingest(open(&wind_path)?, open(&demand_path)?, &options)?;
    let wp = ctx.cfg.wind_series_path();
    let dp = ctx.cfg.demand_series_path();
    for (path, series) in [(&wp, &pair.wind), (&dp, &pair.demand)] {
        let mut out = create(path)?;
        write_canonical(&mut out, &pair.timestamps, series)?;
        out.flush().map_err(Error::Io)?;
    }
    println!(
        "steps N = {}, delta = {} h",
        pair.wind.len(),
        pair.wind.delta()
    );
    println!("w_av = {} MW", format_human(pair.wind.average_power()));
    println!("d_av = {} MW", format_human(pair.demand.average_power()));
    if d.equalize_averages {
        println!("demand scaled by {}", format_human(pair.demand_scale));
    }
    println!("wrote {}", wp.display());
    println!("wrote {}", dp.display());
    Ok(())
}

pub fn surface_cmd(ctx: &Session, dump_lp: Option<&Path>) -> Result<()> {
    let (wind, demand) = ctx.load_series()?;
    let surface = ctx.surface(&wind, &demand, dump_lp)?;
    let meta = surface.metadata(Some(fingerprint(&wind, &demand)), ctx.timestamp.then(now));
    let dir = &ctx.cfg.output_dir;
    let csv_path = dir.join("surface.csv");
    let json_path = dir.join("surface.json");
    let mut out = create(&csv_path)?;
    surface.write_csv(&mut out)?;
    out.flush().map_err(Error::Io)?;
    let mut out = create(&json_path)?;
    surface.write_json(&mut out, &meta)?;
    out.write_all(b"\n").map_err(Error::Io)?;
    out.flush().map_err(Error::Io)?;
    println!(
        "{} x {} surface, engine {}, objective {}, g(0,0) = {} MW",
        surface.b_grid.len(),
        surface.p_grid.len(),
        surface.engine,
        surface.objective,
        format_human(surface.g00())
    );
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EfficiencyDoc {
    engine: String,
    objective: Objective,
    hours: f64,
    target_fraction: f64,
    g00: f64,
    #[serde(flatten)]
    result: EfficiencyResult,
    data_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
}

pub fn capacity_cmd(ctx: &Session, target: Option<f64>, dump_lp: Option<&Path>) -> Result<()> {
    let (wind, demand) = ctx.load_series()?;
    let surface = ctx.surface(&wind, &demand, dump_lp)?;
    let hours = ctx.cfg.grid.hours;
    let ray = RayConstraint::hours(hours)?;
    let s_max = ray.max_parameter(&surface)?;
    let params: Vec<f64> = surface
        .p_grid
        .iter()
        .copied()
        .filter(|&p| p <= s_max)
        .collect();
    let rows = capacity_table(&surface, &ray, &params)?;
    let dir = &ctx.cfg.output_dir;
    let csv_path = dir.join("capacity.csv");
    let mut out = create(&csv_path)?;
    write_capacity_csv(&mut out, &rows)?;
    out.flush().map_err(Error::Io)?;
    println!("wrote {}", csv_path.display());

    let target = target.unwrap_or(ctx.cfg.target_fraction);
    let result = efficiency(&wind, &demand, &surface, target, Some(&ray))?;
    let doc = EfficiencyDoc {
        engine: surface.engine.to_string(),
        objective: surface.objective,
        hours,
        target_fraction: target,
        g00: surface.g00(),
        result,
        data_fingerprint: fingerprint(&wind, &demand),
        generated_at: ctx.timestamp.then(now),
    };
    let json_path = dir.join("efficiency.json");
    write_json(&json_path, &doc)?;
    println!(
        "{}% of g(0,0) = {} MW recovered at B = {} MWh, P = {} MW ({} h)",
        format_human(100.0 * target),
        format_human(surface.g00()),
        format_human(result.energy_rating),
        format_human(result.power_rating),
        format_human(hours)
    );
    println!(
        "efficiency g(0,0)/P = {}, displaced per MW = {}",
        format_human(result.efficiency),
        format_human(result.displaced_per_power)
    );
    println!("wrote {}", json_path.display());
    Ok(())
}

#[derive(Serialize)]
struct SizingDoc {
    steps: usize,
    delta_hours: f64,
    b_sharp: f64,
    b_sharp_g: f64,
    #[serde(flatten)]
    endpoints: Endpoints,
    data_fingerprint: String,
}

pub fn size_cmd(ctx: &Session) -> Result<()> {
    let (wind, demand) = ctx.load_series()?;
    let r = excess_demand(&wind, &demand)?;
    let dec = decompose_excess(&r)?;
    let b_sharp = b_sharp_with_reference(&dec, demand.total())?;
    let doc = SizingDoc {
        steps: wind.len(),
        delta_hours: wind.delta(),
        b_sharp,
        b_sharp_g: b_sharp_g(&dec),
        endpoints: endpoint_g00(&wind, &demand)?,
        data_fingerprint: fingerprint(&wind, &demand),
    };
    let path = ctx.cfg.output_dir.join("sizing.json");
    write_json(&path, &doc)?;
    println!("B# = {} MWh", format_human(doc.b_sharp));
    println!("B#_g = {} MWh", format_human(doc.b_sharp_g));
    println!("g_av(0,0) = {} MW", format_human(doc.endpoints.g_av00));
    println!("g_peak(0,0) = {} MW", format_human(doc.endpoints.g_peak00));
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ValidationPoint {
    pub energy_rating: f64,
    pub lp: f64,
    pub greedy: f64,
    pub dp: f64,
    pub relative_discrepancy: f64,
}

#[derive(Debug, Serialize)]
pub struct ValidationInstance {
    pub label: String,
    pub steps: usize,
    pub points: Vec<ValidationPoint>,
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub tolerance: f64,
    pub max_relative_discrepancy: f64,
    pub pass: bool,
    pub instances: Vec<ValidationInstance>,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Total peaker energy from the three engines at unit retention and `P = B / delta`.
pub fn cross_check(r: &[f64], delta: f64, energy_rating: f64) -> Result<ValidationPoint> {
    let spec = BessSpec::unconstrained(energy_rating, delta)?;
    let lp = solve_excess(r, &spec, Objective::Average)?.total_peaker;
    let greedy = greedy_best(r, &spec, Objective::Average)?.total_peaker();
    let dp = dp_peaker_energy(&decompose_excess(r)?, energy_rating)?;
    Ok(ValidationPoint {
        energy_rating,
        lp,
        greedy,
        dp,
        relative_discrepancy: relative(lp, greedy)
            .max(relative(lp, dp))
            .max(relative(greedy, dp)),
    })
}

fn validate_instance(
    label: String,
    r: &[f64],
    delta: f64,
    integer: bool,
) -> Result<ValidationInstance> {
    let dec = decompose_excess(r)?;
    let span = dec.cumulative().max() - dec.cumulative().min();
    let ratings: Vec<f64> = if integer {
        (0..=span.ceil() as usize).map(|b| b as f64).collect()
    } else if span > 0.0 {
        (0..=10).map(|k| span * k as f64 / 10.0).collect()
    } else {
        vec![0.0]
    };
    let points = ratings
        .into_iter()
        .map(|b| cross_check(r, delta, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationInstance {
        label,
        steps: r.len(),
        points,
    })
}

pub fn validate_cmd(ctx: &Session, seeds: Option<usize>, steps: Option<usize>) -> Result<()> {
    let v = &ctx.cfg.validate;
    let mut instances = Vec::new();
    match seeds.or(v.seeds) {
        Some(count) => {
            let n = steps.unwrap_or(v.steps);
            if n == 0 {
                bail!(Error::Input("validate needs at least one step".into()));
            }
            for k in 0..count as u64 {
                let seed = ctx.cfg.seed.wrapping_add(k);
                let r = random_integer_excess(&mut rng(seed), n, v.max_abs);
                instances.push(validate_instance(format!("seed {seed}"), &r, 1.0, true)?);
            }
        }
        None => {
            let (wind, demand) = ctx.load_series()?;
            let r = excess_demand(&wind, &demand)?;
            instances.push(validate_instance("series".into(), &r, wind.delta(), false)?);
        }
    }
    let max = instances
        .iter()
        .flat_map(|i| i.points.iter().map(|p| p.relative_discrepancy))
        .fold(0.0, f64::max);
    let report = ValidationReport {
        tolerance: VALIDATION_TOLERANCE,
        max_relative_discrepancy: max,
        pass: max <= VALIDATION_TOLERANCE,
        instances,
    };
    let path = ctx.cfg.output_dir.join("validation.json");
    write_json(&path, &report)?;
    let points: usize = report.instances.iter().map(|i| i.points.len()).sum();
    println!(
        "{} instances, {} ratings: max relative discrepancy {:e} (limit {:e})",
        report.instances.len(),
        points,
        max,
        VALIDATION_TOLERANCE
    );
    println!("wrote {}", path.display());
    if !report.pass {
        return Err(ValidationFailed {
            max,
            tolerance: VALIDATION_TOLERANCE,
        }
        .into());
    }
    println!("lp, greedy and dp agree");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use bess_align::synthetic::sharp_fixture;

    #[test]
    fn engines_agree_on_fixture() {
        let r = sharp_fixture();
        let inst = validate_instance("fixture".into(), &r, 1.0, true).unwrap();
        assert_eq!(inst.points.len(), 9);
        for p in &inst.points {
            assert!(p.relative_discrepancy <= VALIDATION_TOLERANCE, "{p:?}");
        }
        assert_eq!(inst.points[0].dp, 15.0);
        assert_eq!(inst.points[8].dp, 0.0);
    }

    #[test]
    fn fingerprint_is_stable_hex() {
        let w = EnergySeries::new(vec![1.0, 2.0], 1.0, "w").unwrap();
        let d = EnergySeries::new(vec![2.0, 1.0], 1.0, "d").unwrap();
        let a = fingerprint(&w, &d);
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(a, fingerprint(&w, &d));
        assert_ne!(a, fingerprint(&d, &w));
    }
}
