//! Deterministic synthetic instances for tests, examples and CI fixtures.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{input_err, Result};
use crate::series::{scale_to_ea, speeds_to_energy, EnergySeries, TurbineModel};

/// Excess demand `1^4 (-1)^8 1^5 (-1)^5 1^6 (-1)^2`: `B# = 8`, `B#_g = 6`.
pub fn sharp_fixture() -> Vec<f64> {
    [
        (1.0, 4),
        (-1.0, 8),
        (1.0, 5),
        (-1.0, 5),
        (1.0, 6),
        (-1.0, 2),
    ]
    .iter()
    .flat_map(|&(v, k)| std::iter::repeat(v).take(k))
    .collect()
}

/// Seeded generator used by every randomized fixture.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` integers drawn uniformly from `[-max_abs, max_abs]`.
pub fn random_integer_excess<R: Rng>(rng: &mut R, n: usize, max_abs: i32) -> Vec<f64> {
    (0..n)
        .map(|_| f64::from(rng.gen_range(-max_abs..=max_abs)))
        .collect()
}

/// Wind and demand with `d - w = r`: `w = 1 + max(-r, 0)`, `d = 1 + max(r, 0)`.
pub fn series_from_excess(r: &[f64], delta: f64) -> Result<(EnergySeries, EnergySeries)> {
    let wind = r.iter().map(|&v| 1.0 + (-v).max(0.0)).collect();
    let demand = r.iter().map(|&v| 1.0 + v.max(0.0)).collect();
    Ok((
        EnergySeries::new(wind, delta, "wind")?,
        EnergySeries::new(demand, delta, "demand")?,
    ))
}

/// One synthetic day of wind and demand, demand scaled to equal averages.
#[derive(Debug, Clone)]
pub struct SyntheticDay {
    pub label: String,
    pub wind: EnergySeries,
    pub demand: EnergySeries,
}

/// Mean hub-height wind speed (m/s) for each generated day; cycles if more days are asked for.
const DAY_MEAN_SPEEDS: [f64; 3] = [8.0, 11.0, 6.5];

/// Days of synthetic data: a diurnal load shape and AR(1) wind speeds through one turbine.
pub fn synthetic_days(seed: u64, days: usize, delta: f64) -> Result<Vec<SyntheticDay>> {
    if !(delta > 0.0) || (24.0 / delta).fract() != 0.0 {
        return input_err(format!(
            "step length must divide a day evenly, got {delta} h"
        ));
    }
    let steps = (24.0 / delta) as usize;
    let model = TurbineModel::default();
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(days);
    for day in 0..days {
        let mean = DAY_MEAN_SPEEDS[day % DAY_MEAN_SPEEDS.len()];
        let mut v = mean;
        let mut speeds = Vec::with_capacity(steps);
        let mut load = Vec::with_capacity(steps);
        for k in 0..steps {
            let hour = k as f64 * delta;
            // slow drift plus a gust term, afternoon-peaking load
            v = mean + 0.97 * (v - mean) + rng.gen_range(-1.2..1.2);
            speeds.push(v.max(0.0));
            let mw = 1000.0 * (1.0 + 0.25 * (2.0 * PI * (hour - 9.0) / 24.0).sin())
                + rng.gen_range(-30.0..30.0);
            load.push(mw * delta);
        }
        let raw = EnergySeries::new(load, delta, format!("demand day {}", day + 1))?;
        let wind = speeds_to_energy(&speeds, &model, delta)?;
        let demand = scale_to_ea(&wind, &raw)?;
        out.push(SyntheticDay {
            label: format!("day {}", day + 1),
            wind,
            demand,
        });
    }
    Ok(out)
}
