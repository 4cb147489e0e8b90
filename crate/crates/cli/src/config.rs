//! Run configuration: a TOML file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use bess_align::bess_sim::retention_from_daily_loss;
use bess_align::capacity::Engine;
use bess_align::series::ingest::{ColumnMap, GapPolicy};
use bess_align::series::TurbineModel;
use bess_align::Objective;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub turbine: TurbineModel,
    pub battery: BatteryConfig,
    pub grid: GridConfig,
    pub objective: Objective,
    pub engine: Engine,
    pub output_dir: PathBuf,
    /// Seed for synthetic instances.
    pub seed: u64,
    /// Share of `g(0,0)` to recover when sizing along the ray.
    pub target_fraction: f64,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            turbine: TurbineModel::default(),
            battery: BatteryConfig::default(),
            grid: GridConfig::default(),
            objective: Objective::Average,
            engine: Engine::Lp,
            output_dir: PathBuf::from("out"),
            seed: 1,
            target_fraction: 0.5,
            validate: ValidateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw wind-speed CSV read by `ingest`.
    pub wind_csv: Option<PathBuf>,
    /// Raw load CSV read by `ingest`.
    pub demand_csv: Option<PathBuf>,
    /// Canonical series; default `<output_dir>/wind_series.csv`.
    pub wind_series: Option<PathBuf>,
    pub demand_series: Option<PathBuf>,
    pub delta_hours: f64,
    pub columns: ColumnMap,
    pub gaps: GapPolicy,
    pub equalize_averages: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            wind_csv: None,
            demand_csv: None,
            wind_series: None,
            demand_series: None,
            delta_hours: 1.0 / 6.0,
            columns: ColumnMap::default(),
            gaps: GapPolicy::Reject,
            equalize_averages: true,
        }
    }
}

/// Give at most one of `retention` (per step) and `daily_loss` (fraction per 24 h).
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub retention: Option<f64>,
    pub daily_loss: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Explicit energy-rating grid (MWh), ascending from 0.
    pub b: Option<Vec<f64>>,
    /// Explicit power-rating grid (MW); default `b / hours`.
    pub p: Option<Vec<f64>>,
    /// Points in the default logarithmic energy grid.
    pub points: usize,
    /// Top of the default energy grid; default `1.2 * (max R - min R)`.
    pub b_max: Option<f64>,
    /// Storage duration `c` of the ray `B = c P`.
    pub hours: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            b: None,
            p: None,
            points: 41,
            b_max: None,
            hours: 4.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Number of synthetic instances; when unset the configured series is used.
    pub seeds: Option<usize>,
    pub steps: usize,
    pub max_abs: i32,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            seeds: None,
            steps: 50,
            max_abs: 5,
        }
    }
}

/// Flag values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub objective: Option<Objective>,
    pub engine: Option<Engine>,
    pub hours: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub wind_series: Option<PathBuf>,
    pub demand_series: Option<PathBuf>,
    pub delta_hours: Option<f64>,
    pub retention: Option<f64>,
    pub daily_loss: Option<f64>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
}

impl RunConfig {
    /// Reads `path` (relative paths inside resolve against its directory), or
    /// returns defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        rebase(&mut cfg.data.wind_csv);
        rebase(&mut cfg.data.demand_csv);
        rebase(&mut cfg.data.wind_series);
        rebase(&mut cfg.data.demand_series);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.objective {
            self.objective = v;
        }
        if let Some(v) = o.engine {
            self.engine = v;
        }
        if let Some(v) = o.hours {
            self.grid.hours = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.wind_series {
            self.data.wind_series = Some(v.clone());
        }
        if let Some(v) = &o.demand_series {
            self.data.demand_series = Some(v.clone());
        }
        if let Some(v) = o.delta_hours {
            self.data.delta_hours = v;
        }
        // a flag for one form of the loss replaces the file's choice of the other
        if o.retention.is_some() || o.daily_loss.is_some() {
            self.battery = BatteryConfig {
                retention: o.retention,
                daily_loss: o.daily_loss,
            };
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.points {
            self.grid.points = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.battery.retention.is_some() && self.battery.daily_loss.is_some() {
            bail!("give either battery.retention or battery.daily_loss, not both");
        }
        if !(self.grid.hours > 0.0 && self.grid.hours.is_finite()) {
            bail!("grid.hours must be positive, got {}", self.grid.hours);
        }
        if !(self.data.delta_hours > 0.0 && self.data.delta_hours.is_finite()) {
            bail!(
                "data.delta_hours must be positive, got {}",
                self.data.delta_hours
            );
        }
        if self.grid.points < 1 {
            bail!("grid.points must be at least 1");
        }
        Ok(())
    }

    /// Per-step retention, converting a daily loss if that is what was given.
    pub fn retention(&self) -> Result<f64> {
        match (self.battery.retention, self.battery.daily_loss) {
            (Some(a), None) => Ok(a),
            (None, Some(loss)) => Ok(retention_from_daily_loss(loss, self.data.delta_hours)?),
            (None, None) => Ok(1.0),
            (Some(_), Some(_)) => {
                bail!("give either battery.retention or battery.daily_loss, not both")
            }
        }
    }

    pub fn wind_series_path(&self) -> PathBuf {
        self.data
            .wind_series
            .clone()
            .unwrap_or_else(|| self.output_dir.join("wind_series.csv"))
    }

    pub fn demand_series_path(&self) -> PathBuf {
        self.data
            .demand_series
            .clone()
            .unwrap_or_else(|| self.output_dir.join("demand_series.csv"))
    }
}
