//! Wind and demand energy series and the cumulative quantities derived from them.
//!
//! Every series is a uniformly sampled sequence of per-step energies in MWh with
//! step length `delta` in hours. The excess demand `r(n) = d(n) - w(n)` is a plain
//! signed sequence since it can take either sign.

pub mod ingest;

use serde::{Deserialize, Serialize};

use crate::bess_sim::DispatchSchedule;
use crate::error::{input_err, Result};
use crate::numeric::{self, relu, KahanSum};

/// Uniformly sampled, nonnegative per-step energy sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    values: Vec<f64>,
    delta: f64,
    label: String,
}

impl EnergySeries {
    /// Validates and wraps per-step energies (MWh) sampled every `delta` hours.
    pub fn new(values: Vec<f64>, delta: f64, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if !(delta.is_finite() && delta > 0.0) {
            return input_err(format!(
                "{label}: step length must be positive, got {delta}"
            ));
        }
        if values.is_empty() {
            return input_err(format!("{label}: series is empty"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return input_err(format!(
                "{label}: entry {i} is {v}; energies must be finite and >= 0"
            ));
        }
        Ok(Self {
            values,
            delta,
            label,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        numeric::sum(&self.values)
    }

    /// Average power in MW over the whole window.
    pub fn average_power(&self) -> f64 {
        self.total() / (self.len() as f64 * self.delta)
    }

    /// A copy of this series restricted to `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.is_empty() {
            return input_err(format!(
                "{}: bad slice {range:?} of {} steps",
                self.label,
                self.len()
            ));
        }
        Self::new(self.values[range].to_vec(), self.delta, self.label.clone())
    }
}

/// Partial sums with a leading zero: `values[n] = sum_{i=1..n} seq[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    values: Vec<f64>,
}

impl CumulativeSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of underlying steps `N` (one less than the number of entries).
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Consecutive differences, recovering the summed sequence.
    pub fn differences(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Turbine converting wind speed to electrical power with a pure cubic law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurbineModel {
    /// Rotor radius in meters.
    pub rotor_radius: f64,
    /// Air density in kg/m^3.
    pub air_density: f64,
    /// Power coefficient, at most the Betz limit 16/27.
    pub power_coefficient: f64,
    /// Speeds below this produce nothing (m/s).
    pub cut_in: f64,
    /// Speeds at or above this produce nothing (m/s).
    pub cut_out: f64,
}

/// Betz limit on the power coefficient.
pub const BETZ_LIMIT: f64 = 16.0 / 27.0;

impl Default for TurbineModel {
    fn default() -> Self {
        Self {
            rotor_radius: 118.0,
            air_density: 1.225,
            power_coefficient: 0.45,
            cut_in: 1.0,
            cut_out: 80.0,
        }
    }
}

impl TurbineModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.power_coefficient > 0.0
            && self.power_coefficient <= BETZ_LIMIT
            && self.rotor_radius > 0.0
            && self.air_density > 0.0
            && self.cut_in >= 0.0
            && self.cut_in < self.cut_out
            && self.rotor_radius.is_finite()
            && self.air_density.is_finite()
            && self.cut_out.is_finite();
        if ok {
            Ok(())
        } else {
            input_err(format!("invalid turbine model {self:?}"))
        }
    }

    /// Swept area in m^2.
    pub fn swept_area(&self) -> f64 {
        std::f64::consts::PI * self.rotor_radius * self.rotor_radius
    }
}

/// Electrical power in MW produced at wind speed `v` (m/s).
///
/// `P = 0.5 * rho * Cp * v^3 * A * 1e-6` inside `[cut_in, cut_out)`, zero outside.
pub fn wind_power_from_speed(v: f64, model: &TurbineModel) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return input_err(format!("wind speed must be finite and >= 0, got {v}"));
    }
    if v < model.cut_in || v >= model.cut_out {
        return Ok(0.0);
    }
    Ok(0.5 * model.air_density * model.power_coefficient * v * v * v * model.swept_area() * 1e-6)
}

/// Converts a sequence of step-averaged wind speeds to per-step wind energy.
pub fn speeds_to_energy(speeds: &[f64], model: &TurbineModel, delta: f64) -> Result<EnergySeries> {
    model.validate()?;
    if speeds.is_empty() {
        return input_err("no wind speeds supplied");
    }
    let values = speeds
        .iter()
        .map(|&v| wind_power_from_speed(v, model).map(|mw| mw * delta))
        .collect::<Result<Vec<_>>>()?;
    EnergySeries::new(values, delta, "wind")
}

fn check_aligned(a: &EnergySeries, b: &EnergySeries) -> Result<()> {
    if a.len() != b.len() {
        return input_err(format!(
            "{} has {} steps but {} has {}",
            a.label(),
            a.len(),
            b.label(),
            b.len()
        ));
    }
    if a.delta() != b.delta() {
        return input_err(format!(
            "{} sampled every {} h but {} every {} h",
            a.label(),
            a.delta(),
            b.label(),
            b.delta()
        ));
    }
    Ok(())
}

/// Rescales demand so its total matches the wind total (the equal-averages condition).
pub fn scale_to_ea(wind: &EnergySeries, demand: &EnergySeries) -> Result<EnergySeries> {
    check_aligned(wind, demand)?;
    let total_demand = demand.total();
    if total_demand <= 0.0 {
        return input_err("total demand is zero; cannot equalize averages");
    }
    let total_wind = wind.total();
    if total_wind == total_demand {
        return Ok(demand.clone());
    }
    let factor = total_wind / total_demand;
    let values = demand.values().iter().map(|d| d * factor).collect();
    EnergySeries::new(values, demand.delta(), demand.label())
}

/// `r(n) = d(n) - w(n)`.
pub fn excess_demand(wind: &EnergySeries, demand: &EnergySeries) -> Result<Vec<f64>> {
    check_aligned(wind, demand)?;
    Ok(demand
        .values()
        .iter()
        .zip(wind.values())
        .map(|(d, w)| d - w)
        .collect())
}

/// Partial sums `R(n)` of `seq`, with `R(0) = 0`.
pub fn cumulate(seq: &[f64]) -> Result<CumulativeSeries> {
    cumulate_with(seq, |v| v)
}

/// Partial sums of the positive parts, `R+(n) = sum [r(i)]+`.
pub fn rectified_cumulate(seq: &[f64]) -> Result<CumulativeSeries> {
    cumulate_with(seq, relu)
}

fn cumulate_with(seq: &[f64], map: impl Fn(f64) -> f64) -> Result<CumulativeSeries> {
    if seq.is_empty() {
        return input_err("cannot cumulate an empty sequence");
    }
    if let Some(v) = seq.iter().find(|v| !v.is_finite()) {
        return input_err(format!("non-finite entry {v} in sequence"));
    }
    let mut values = Vec::with_capacity(seq.len() + 1);
    values.push(0.0);
    let mut acc = KahanSum::new();
    for &v in seq {
        acc.add(map(v));
        values.push(acc.value());
    }
    Ok(CumulativeSeries { values })
}

/// Average and peak powers (MW) of a wind/demand pair and a dispatch schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragePowers {
    pub w_av: f64,
    pub d_av: f64,
    pub g_av: f64,
    pub l_av: f64,
    pub g_peak: f64,
}

/// Window averages `(1/(N delta)) sum` of wind, demand, peaker and loss energy,
/// and `g_peak = max g / delta`.
///
/// Without a schedule the battery is taken to be absent (`B = P = 0`), so the
/// peaker covers every deficit and every surplus is spilled.
pub fn average_powers(
    wind: &EnergySeries,
    demand: &EnergySeries,
    schedule: Option<&DispatchSchedule>,
) -> Result<AveragePowers> {
    check_aligned(wind, demand)?;
    let n = wind.len();
    let delta = wind.delta();
    let span = n as f64 * delta;
    let (g, l): (Vec<f64>, Vec<f64>) = match schedule {
        Some(s) => {
            if s.g.len() != n || s.l.len() != n {
                return input_err(format!("schedule covers {} steps, series {}", s.g.len(), n));
            }
            (s.g.clone(), s.l.clone())
        }
        None => demand
            .values()
            .iter()
            .zip(wind.values())
            .map(|(d, w)| (relu(d - w), relu(w - d)))
            .unzip(),
    };
    Ok(AveragePowers {
        w_av: wind.total() / span,
        d_av: demand.total() / span,
        g_av: numeric::sum(&g) / span,
        l_av: numeric::sum(&l) / span,
        g_peak: g.iter().copied().fold(0.0, f64::max) / delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(values: &[f64], delta: f64, label: &str) -> EnergySeries {
        EnergySeries::new(values.to_vec(), delta, label).unwrap()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(EnergySeries::new(vec![], 1.0, "w").is_err());
        assert!(EnergySeries::new(vec![1.0], 0.0, "w").is_err());
        assert!(EnergySeries::new(vec![-1.0], 1.0, "w").is_err());
        assert!(EnergySeries::new(vec![f64::NAN], 1.0, "w").is_err());
    }

    #[test]
    fn turbine_power_examples() {
        let model = TurbineModel::default();
        assert_eq!(wind_power_from_speed(0.0, &model).unwrap(), 0.0);
        // 0.5 * 1.225 * 0.45 * 10^3 * pi * 118^2 * 1e-6, worked by hand: 12.0567636... MW
        let p10 = wind_power_from_speed(10.0, &model).unwrap();
        let hand = 0.275625 * 1000.0 * (std::f64::consts::PI * 13924.0) * 1e-6;
        assert_relative_eq!(p10, hand, max_relative = 1e-14);
        assert!((p10 - 12.06).abs() < 0.005);
        let p20 = wind_power_from_speed(20.0, &model).unwrap();
        assert_relative_eq!(p20, 8.0 * p10, max_relative = 1e-14);
        assert!(wind_power_from_speed(-1.0, &model).is_err());
        assert!(wind_power_from_speed(f64::INFINITY, &model).is_err());
    }

    #[test]
    fn turbine_band_edges() {
        let model = TurbineModel::default();
        assert_eq!(wind_power_from_speed(0.99, &model).unwrap(), 0.0);
        assert!(wind_power_from_speed(1.0, &model).unwrap() > 0.0);
        assert!(wind_power_from_speed(79.9, &model).unwrap() > 0.0);
        assert_eq!(wind_power_from_speed(80.0, &model).unwrap(), 0.0);
        assert_eq!(wind_power_from_speed(95.0, &model).unwrap(), 0.0);
    }

    #[test]
    fn turbine_validation() {
        let mut m = TurbineModel::default();
        m.power_coefficient = 0.6;
        assert!(m.validate().is_err());
        m.power_coefficient = BETZ_LIMIT;
        assert!(m.validate().is_ok());
        m.cut_in = 90.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn speeds_to_energy_examples() {
        let model = TurbineModel::default();
        let zeros = speeds_to_energy(&[0.0; 5], &model, 0.25).unwrap();
        assert!(zeros.values().iter().all(|&v| v == 0.0));

        let one = speeds_to_energy(&[10.0], &model, 1.0 / 6.0).unwrap();
        assert!((one.values()[0] - 12.056812 / 6.0).abs() < 1e-6);

        let constant = speeds_to_energy(&[7.5; 4], &model, 1.0).unwrap();
        assert!(constant.values().windows(2).all(|w| w[0] == w[1]));

        assert!(speeds_to_energy(&[], &model, 1.0).is_err());
    }

    #[test]
    fn ea_scaling_examples() {
        let w = series(&[2.0, 2.0], 1.0, "wind");
        let d = series(&[1.0, 3.0], 1.0, "demand");
        assert_eq!(scale_to_ea(&w, &d).unwrap().values(), &[1.0, 3.0]);

        let w = series(&[4.0, 4.0], 1.0, "wind");
        assert_eq!(scale_to_ea(&w, &d).unwrap().values(), &[2.0, 6.0]);

        let zero = series(&[0.0, 0.0], 1.0, "demand");
        assert!(scale_to_ea(&w, &zero).is_err());
        assert!(scale_to_ea(&w, &series(&[1.0], 1.0, "demand")).is_err());
        assert!(scale_to_ea(&w, &series(&[1.0, 1.0], 0.5, "demand")).is_err());
    }

    #[test]
    fn excess_demand_examples() {
        let w = series(&[1.0, 0.0], 1.0, "wind");
        let d = series(&[0.0, 1.0], 1.0, "demand");
        assert_eq!(excess_demand(&w, &d).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(excess_demand(&w, &w).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cumulate_examples() {
        let r = cumulate(&[1.0, -1.0]).unwrap();
        assert_eq!(r.values(), &[0.0, 1.0, 0.0]);
        let rp = rectified_cumulate(&[1.0, -1.0]).unwrap();
        assert_eq!(rp.values(), &[0.0, 1.0, 1.0]);
        assert!(cumulate(&[0.0; 4])
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(cumulate(&[]).is_err());

        let fixture = crate::synthetic::sharp_fixture();
        let r = cumulate(&fixture).unwrap();
        assert_eq!(r.max(), 4.0);
        assert_eq!(r.min(), -4.0);
    }

    #[test]
    fn average_powers_examples() {
        let w = series(&[1.0, 1.0], 1.0, "wind");
        let avg = average_powers(&w, &w, None).unwrap();
        assert_eq!(avg.w_av, 1.0);

        let wind = series(&[0.0, 0.0], 0.5, "wind");
        let demand = series(&[0.0, 2.0], 0.5, "demand");
        let avg = average_powers(&wind, &demand, None).unwrap();
        assert_eq!(avg.g_av, 2.0);
        assert_eq!(avg.g_peak, 4.0);
        assert_eq!(avg.l_av, 0.0);
    }

    proptest! {
        #[test]
        fn cumulate_then_difference_recovers(seq in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let r = cumulate(&seq).unwrap();
            prop_assert_eq!(r.at(0), 0.0);
            let scale = seq.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            for (a, b) in r.differences().iter().zip(&seq) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn rectified_dominates_and_grows(seq in prop::collection::vec(-10f64..10.0, 1..100)) {
            let r = cumulate(&seq).unwrap();
            let rp = rectified_cumulate(&seq).unwrap();
            for n in 0..=seq.len() {
                prop_assert!(rp.at(n) >= r.at(n) - 1e-12);
            }
            prop_assert!(rp.values().windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn ea_scaling_equalizes_totals(
            w in prop::collection::vec(0.0f64..100.0, 1..60),
            d in prop::collection::vec(0.01f64..100.0, 1..60),
        ) {
            let n = w.len().min(d.len());
            let wind = series(&w[..n], 0.5, "wind");
            let demand = series(&d[..n], 0.5, "demand");
            let scaled = scale_to_ea(&wind, &demand).unwrap();
            prop_assert!((scaled.total() - wind.total()).abs() <= 1e-9 * wind.total().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn power_is_cubic_and_monotone(a in 1.0f64..79.0, b in 1.0f64..79.0) {
            let model = TurbineModel::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let plo = wind_power_from_speed(lo, &model).unwrap();
            let phi = wind_power_from_speed(hi, &model).unwrap();
            prop_assert!(plo <= phi);
            let ratio = phi / plo;
            prop_assert!((ratio - (hi / lo).powi(3)).abs() <= 1e-12 * ratio);
        }
    }
}
