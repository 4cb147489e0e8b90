//! CSV ingestion: raw wind-speed and load files to aligned per-step energy series.
//!
//! Raw samples are grouped into non-overlapping windows of length `delta`, aligned
//! to the Unix epoch, and averaged. A window is labelled by its start time.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{scale_to_ea, speeds_to_energy, EnergySeries, TurbineModel};
use crate::numeric::format_machine;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{what}: no data rows")]
    Empty { what: String },

    #[error("{what}: {message}")]
    Schema { what: String, message: String },

    #[error("{what}: timestamp on line {line} is not after the previous one")]
    NonMonotone { what: String, line: usize },

    #[error("{what}: {message}")]
    Gap { what: String, message: String },

    #[error("wind and demand records do not overlap in time")]
    NoOverlap,

    #[error("{what}: {source}")]
    Csv {
        what: String,
        #[source]
        source: csv::Error,
    },
}

impl IngestError {
    /// Process exit code reported by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            IngestError::Empty { .. } => 3,
            IngestError::Schema { .. } | IngestError::Csv { .. } => 4,
            IngestError::NonMonotone { .. } => 5,
            IngestError::Gap { .. } => 6,
            IngestError::NoOverlap => 3,
        }
    }
}

type IngestResult<T> = std::result::Result<T, IngestError>;

/// Header names of the raw CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub timestamp: String,
    pub speed: String,
    pub load: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            speed: "speed_mps".into(),
            load: "load_mw".into(),
        }
    }
}

/// What to do with windows holding no valid samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Any missing value or empty window is an error.
    #[default]
    Reject,
    /// Linearly interpolate runs of at most this many empty windows.
    Interpolate { max_steps: usize },
}

impl GapPolicy {
    pub const MAX_INTERPOLATED_STEPS: usize = 3;

    pub fn interpolate() -> Self {
        GapPolicy::Interpolate {
            max_steps: Self::MAX_INTERPOLATED_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub delta_hours: f64,
    pub columns: ColumnMap,
    pub gaps: GapPolicy,
    pub turbine: TurbineModel,
    /// Scale demand so its average equals the wind average.
    pub equalize_averages: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delta_hours: 1.0 / 6.0,
            columns: ColumnMap::default(),
            gaps: GapPolicy::Reject,
            turbine: TurbineModel::default(),
            equalize_averages: true,
        }
    }
}

/// One raw observation; `value` is `None` for a blank or `NaN` field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub millis: i64,
    pub value: Option<f64>,
}

/// Window means on a uniform grid starting at window `first_window`.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub first_window: i64,
    pub window_millis: i64,
    pub means: Vec<f64>,
}

impl Resampled {
    pub fn window_start(&self, k: usize) -> i64 {
        (self.first_window + k as i64) * self.window_millis
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

pub fn format_timestamp(millis: i64) -> String {
    match DateTime::<Utc>::from_timestamp_millis(millis) {
        Some(dt) if millis % 1000 == 0 => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string(),
        None => millis.to_string(),
    }
}

/// Window length in whole milliseconds for a step of `delta_hours`.
pub fn window_millis(delta_hours: f64) -> IngestResult<i64> {
    let ms = delta_hours * 3.6e6;
    let rounded = ms.round();
    if !(delta_hours.is_finite() && delta_hours > 0.0)
        || rounded < 1.0
        || (ms - rounded).abs() > 1e-6 * ms.max(1.0)
    {
        return Err(IngestError::Schema {
            what: "config".into(),
            message: format!("step length {delta_hours} h is not a whole number of milliseconds"),
        });
    }
    Ok(rounded as i64)
}

/// Reads `(timestamp, value)` pairs from a CSV with a header row.
pub fn read_samples<R: Read>(
    reader: R,
    timestamp_col: &str,
    value_col: &str,
    what: &str,
) -> IngestResult<Vec<Sample>> {
    let csv_err = |source| IngestError::Csv {
        what: what.to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(IngestError::Empty { what: what.into() });
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::Schema {
                what: what.to_string(),
                message: format!(
                    "missing column `{name}` (found {:?})",
                    headers.iter().collect::<Vec<_>>()
                ),
            })
    };
    let t_idx = find(timestamp_col)?;
    let v_idx = find(value_col)?;

    let mut samples: Vec<Sample> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let raw_t = record.get(t_idx).unwrap_or("");
        let millis = parse_timestamp(raw_t).ok_or_else(|| IngestError::Schema {
            what: what.to_string(),
            message: format!("line {line}: unparseable timestamp `{raw_t}`"),
        })?;
        let raw_v = record.get(v_idx).unwrap_or("");
        let value = if raw_v.is_empty() || raw_v.eq_ignore_ascii_case("nan") {
            None
        } else {
            let v: f64 = raw_v.parse().map_err(|_| IngestError::Schema {
                what: what.to_string(),
                message: format!("line {line}: `{raw_v}` is not a number"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(IngestError::Schema {
                    what: what.to_string(),
                    message: format!("line {line}: value {v} must be finite and >= 0"),
                });
            }
            Some(v)
        };
        if let Some(prev) = samples.last() {
            if millis <= prev.millis {
                return Err(IngestError::NonMonotone {
                    what: what.to_string(),
                    line,
                });
            }
        }
        samples.push(Sample { millis, value });
    }
    if samples.is_empty() {
        return Err(IngestError::Empty { what: what.into() });
    }
    Ok(samples)
}

/// Arithmetic means over non-overlapping windows of `window_millis`.
pub fn resample(
    samples: &[Sample],
    window_millis: i64,
    gaps: GapPolicy,
    what: &str,
) -> IngestResult<Resampled> {
    if gaps == GapPolicy::Reject {
        if let Some(s) = samples.iter().find(|s| s.value.is_none()) {
            return Err(IngestError::Gap {
                what: what.into(),
                message: format!("missing value at {}", format_timestamp(s.millis)),
            });
        }
    }
    let valid: Vec<(i64, f64)> = samples
        .iter()
        .filter_map(|s| s.value.map(|v| (s.millis.div_euclid(window_millis), v)))
        .collect();
    let (Some(first), Some(last)) = (valid.first(), valid.last()) else {
        return Err(IngestError::Empty { what: what.into() });
    };
    let first_window = first.0;
    let count = (last.0 - first_window + 1) as usize;
    let mut sums = vec![0.0; count];
    let mut counts = vec![0usize; count];
    for &(k, v) in &valid {
        let idx = (k - first_window) as usize;
        sums[idx] += v;
        counts[idx] += 1;
    }
    let mut means: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    let mut k = 0;
    while k < means.len() {
        if means[k].is_some() {
            k += 1;
            continue;
        }
        let start = k;
        while k < means.len() && means[k].is_none() {
            k += 1;
        }
        let len = k - start;
        let at = format_timestamp((first_window + start as i64) * window_millis);
        match gaps {
            GapPolicy::Reject => {
                return Err(IngestError::Gap {
                    what: what.into(),
                    message: format!("{len} empty window(s) starting {at}"),
                })
            }
            GapPolicy::Interpolate { max_steps } if len > max_steps => {
                return Err(IngestError::Gap {
                    what: what.into(),
                    message: format!("{len} empty window(s) starting {at} exceed the interpolation limit of {max_steps}"),
                })
            }
            GapPolicy::Interpolate { .. } => {
                // Interior gap: both neighbours exist because the range starts and ends on valid windows.
                let left = means[start - 1].expect("left neighbour present");
                let right = means[k].expect("right neighbour present");
                for (offset, slot) in means[start..k].iter_mut().enumerate() {
                    let frac = (offset + 1) as f64 / (len + 1) as f64;
                    *slot = Some(left + (right - left) * frac);
                }
            }
        }
    }
    Ok(Resampled {
        first_window,
        window_millis,
        means: means
            .into_iter()
            .map(|m| m.expect("all gaps filled"))
            .collect(),
    })
}

/// Aligned wind and demand energy series ready for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedPair {
    /// Start of each step, milliseconds since the epoch.
    pub timestamps: Vec<i64>,
    pub wind: EnergySeries,
    pub demand: EnergySeries,
    /// Factor applied to demand to equalize averages (1 when disabled).
    pub demand_scale: f64,
    /// Whether either record was cut to the common time span.
    pub trimmed: bool,
}

/// Resamples, converts and aligns a wind-speed CSV and a load CSV.
pub fn ingest<W: Read, D: Read>(
    wind_csv: W,
    demand_csv: D,
    options: &IngestOptions,
) -> crate::Result<IngestedPair> {
    options.turbine.validate()?;
    let window = window_millis(options.delta_hours)?;
    let cols = &options.columns;
    let wind_samples = read_samples(wind_csv, &cols.timestamp, &cols.speed, "wind CSV")?;
    let demand_samples = read_samples(demand_csv, &cols.timestamp, &cols.load, "demand CSV")?;
    let wind = resample(&wind_samples, window, options.gaps, "wind CSV")?;
    let demand = resample(&demand_samples, window, options.gaps, "demand CSV")?;

    let start = wind.first_window.max(demand.first_window);
    let end = (wind.first_window + wind.means.len() as i64)
        .min(demand.first_window + demand.means.len() as i64);
    if start >= end {
        return Err(IngestError::NoOverlap.into());
    }
    let trimmed = start != wind.first_window
        || start != demand.first_window
        || end - start != wind.means.len() as i64
        || end - start != demand.means.len() as i64;
    if trimmed {
        log::warn!(
            "wind and demand cover different spans; trimmed to {} .. {}",
            format_timestamp(start * window),
            format_timestamp(end * window)
        );
    }
    let cut = |r: &Resampled| {
        let a = (start - r.first_window) as usize;
        let b = (end - r.first_window) as usize;
        r.means[a..b].to_vec()
    };
    let delta = options.delta_hours;
    let wind_energy = speeds_to_energy(&cut(&wind), &options.turbine, delta)?;
    let raw_demand = EnergySeries::new(
        cut(&demand).iter().map(|mw| mw * delta).collect(),
        delta,
        "demand",
    )?;
    let (demand_energy, demand_scale) = if options.equalize_averages {
        let scaled = scale_to_ea(&wind_energy, &raw_demand)?;
        let factor = wind_energy.total() / raw_demand.total();
        (scaled, factor)
    } else {
        (raw_demand, 1.0)
    };
    Ok(IngestedPair {
        timestamps: (start..end).map(|k| k * window).collect(),
        wind: wind_energy,
        demand: demand_energy,
        demand_scale,
        trimmed,
    })
}

pub const CANONICAL_HEADER: [&str; 2] = ["timestamp", "mwh_per_step"];

/// Writes a canonical series file: `timestamp,mwh_per_step` with 17 significant digits.
pub fn write_canonical<W: Write>(
    out: W,
    timestamps: &[i64],
    series: &EnergySeries,
) -> crate::Result<()> {
    if timestamps.len() != series.len() {
        return crate::error::input_err("timestamp count does not match series length");
    }
    let mut wtr = csv::Writer::from_writer(out);
    let to_io = |e: csv::Error| std::io::Error::other(e.to_string());
    wtr.write_record(CANONICAL_HEADER).map_err(to_io)?;
    for (&t, &v) in timestamps.iter().zip(series.values()) {
        wtr.write_record([format_timestamp(t), format_machine(v)])
            .map_err(to_io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a canonical series file, checking the spacing matches `delta_hours`.
pub fn read_canonical<R: Read>(
    input: R,
    delta_hours: f64,
    label: &str,
) -> crate::Result<(Vec<i64>, EnergySeries)> {
    let window = window_millis(delta_hours)?;
    let samples = read_samples(input, CANONICAL_HEADER[0], CANONICAL_HEADER[1], label)?;
    let mut values = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if i > 0 && s.millis - samples[i - 1].millis != window {
            return Err(IngestError::Gap {
                what: label.into(),
                message: format!(
                    "step at {} is not {} h after the previous one",
                    format_timestamp(s.millis),
                    delta_hours
                ),
            }
            .into());
        }
        values.push(s.value.ok_or_else(|| IngestError::Gap {
            what: label.into(),
            message: format!("missing value at {}", format_timestamp(s.millis)),
        })?);
    }
    let timestamps = samples.iter().map(|s| s.millis).collect();
    Ok((timestamps, EnergySeries::new(values, delta_hours, label)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEN_MIN: f64 = 1.0 / 6.0;

    #[test]
    fn timestamps_parse_in_common_forms() {
        let base = parse_timestamp("2019-09-20T00:00:00Z").unwrap();
        assert_eq!(parse_timestamp("2019-09-20T00:00:00").unwrap(), base);
        assert_eq!(parse_timestamp("2019-09-20 00:00:00").unwrap(), base);
        assert_eq!(parse_timestamp("2019-09-20").unwrap(), base);
        assert_eq!(parse_timestamp("2019-09-20T02:00:00+02:00").unwrap(), base);
        assert_eq!(parse_timestamp("2019-09-20T00:10").unwrap(), base + 600_000);
        assert!(parse_timestamp("yesterday").is_none());
        assert_eq!(format_timestamp(base), "2019-09-20T00:00:00Z");
    }

    #[test]
    fn resampling_averages_windows() {
        let csv = "timestamp,speed_mps\n\
                   2019-09-20T00:00:00Z,4\n\
                   2019-09-20T00:05:00Z,6\n\
                   2019-09-20T00:10:00Z,8\n\
                   2019-09-20T00:15:00Z,10\n";
        let samples = read_samples(csv.as_bytes(), "timestamp", "speed_mps", "wind").unwrap();
        let r = resample(
            &samples,
            window_millis(TEN_MIN).unwrap(),
            GapPolicy::Reject,
            "wind",
        )
        .unwrap();
        assert_eq!(r.means, vec![5.0, 9.0]);
        assert_eq!(format_timestamp(r.window_start(1)), "2019-09-20T00:10:00Z");
    }

    #[test]
    fn schema_and_ordering_errors() {
        let err = read_samples(
            "time,v\n2019-01-01,1\n".as_bytes(),
            "timestamp",
            "speed_mps",
            "wind",
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Schema { .. }));
        let err = read_samples(
            "timestamp,speed_mps\n".as_bytes(),
            "timestamp",
            "speed_mps",
            "wind",
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Empty { .. }));
        assert_eq!(err.exit_code(), 3);
        let err = read_samples("".as_bytes(), "timestamp", "speed_mps", "wind").unwrap_err();
        assert!(matches!(err, IngestError::Empty { .. }));
        let csv = "timestamp,speed_mps\n2019-01-01T00:10:00,1\n2019-01-01T00:10:00,2\n";
        let err = read_samples(csv.as_bytes(), "timestamp", "speed_mps", "wind").unwrap_err();
        assert!(matches!(err, IngestError::NonMonotone { line: 3, .. }));
        assert_eq!(err.exit_code(), 5);
        let csv = "timestamp,speed_mps\n2019-01-01T00:10:00,-3\n";
        assert!(matches!(
            read_samples(csv.as_bytes(), "timestamp", "speed_mps", "wind").unwrap_err(),
            IngestError::Schema { .. }
        ));
    }

    #[test]
    fn gaps_rejected_or_interpolated() {
        let w = window_millis(1.0).unwrap();
        let samples = |vals: &[Option<f64>]| -> Vec<Sample> {
            vals.iter()
                .enumerate()
                .map(|(i, &value)| Sample {
                    millis: i as i64 * w,
                    value,
                })
                .collect()
        };
        let with_blank = samples(&[Some(1.0), None, None, Some(4.0)]);
        let err = resample(&with_blank, w, GapPolicy::Reject, "x").unwrap_err();
        assert_eq!(err.exit_code(), 6);
        let r = resample(&with_blank, w, GapPolicy::interpolate(), "x").unwrap();
        assert_eq!(r.means, vec![1.0, 2.0, 3.0, 4.0]);

        let long_gap = samples(&[Some(1.0), None, None, None, None, Some(6.0)]);
        assert!(resample(&long_gap, w, GapPolicy::interpolate(), "x").is_err());

        let mut missing_window = samples(&[Some(1.0)]);
        missing_window.push(Sample {
            millis: 2 * w,
            value: Some(3.0),
        });
        assert!(resample(&missing_window, w, GapPolicy::Reject, "x").is_err());
        let r = resample(&missing_window, w, GapPolicy::interpolate(), "x").unwrap();
        assert_eq!(r.means, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn ingest_trims_to_overlap_and_equalizes() {
        let wind = "timestamp,speed_mps\n\
                    2019-09-20T00:00:00Z,10\n\
                    2019-09-20T01:00:00Z,10\n\
                    2019-09-20T02:00:00Z,10\n";
        let demand = "timestamp,load_mw\n\
                      2019-09-20T01:00:00Z,100\n\
                      2019-09-20T02:00:00Z,300\n\
                      2019-09-20T03:00:00Z,300\n";
        let options = IngestOptions {
            delta_hours: 1.0,
            ..IngestOptions::default()
        };
        let pair = ingest(wind.as_bytes(), demand.as_bytes(), &options).unwrap();
        assert!(pair.trimmed);
        assert_eq!(pair.wind.len(), 2);
        assert_eq!(format_timestamp(pair.timestamps[0]), "2019-09-20T01:00:00Z");
        let w = pair.wind.values()[0];
        assert!((pair.demand.total() - pair.wind.total()).abs() < 1e-12 * pair.wind.total());
        assert!((pair.demand.values()[0] - 0.5 * w).abs() < 1e-12 * w);
        assert!((pair.demand_scale - 2.0 * w / 400.0).abs() < 1e-12);
    }

    #[test]
    fn ingest_without_overlap_fails() {
        let wind = "timestamp,speed_mps\n2019-09-20T00:00:00Z,10\n";
        let demand = "timestamp,load_mw\n2019-09-21T00:00:00Z,10\n";
        let err = ingest(
            wind.as_bytes(),
            demand.as_bytes(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, crate::Error::Ingest(IngestError::NoOverlap)));
    }

    #[test]
    fn canonical_round_trip() {
        let series = EnergySeries::new(vec![0.1, 1.0 / 3.0, 2.5e-7], 0.5, "wind").unwrap();
        let t0 = parse_timestamp("2020-01-01T00:00:00Z").unwrap();
        let ts: Vec<i64> = (0..3).map(|k| t0 + k * 1_800_000).collect();
        let mut buf = Vec::new();
        write_canonical(&mut buf, &ts, &series).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("timestamp,mwh_per_step\n2020-01-01T00:00:00Z,0.10000000000000001\n")
        );
        let (ts2, back) = read_canonical(buf.as_slice(), 0.5, "wind").unwrap();
        assert_eq!(ts2, ts);
        assert_eq!(back.values(), series.values());
        assert!(read_canonical(buf.as_slice(), 1.0, "wind").is_err());
    }
}
