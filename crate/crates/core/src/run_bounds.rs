//! Run structure of cumulative excess demand and the sizing bounds built on it.
//!
//! `R(n)` is split at its alternating local extrema. A positive run climbs from a
//! local minimum `n_k` to the next local maximum `m_k`; `Xi(i, j) = R(m_i) - R(n_j)`
//! is the net excess demand between the start of run `j` and the top of run `i`.
//! For a lossless battery whose power limit never binds, the least total peaker
//! energy is the value of a max-cost path over maxima:
//!
//! `G(m_i) = max_{j <= i} { G(m_{j-1}) + [Xi(i, j) - B]+ }`, `G(m_0) = 0`.
//!
//! Run numbers used by [`RunDecomposition::xi`] are 1-based, matching the
//! pairing of run `k` with its minimum `n_k` and maximum `m_k`.

use serde::Serialize;

use crate::error::{input_err, Error, Result};
use crate::numeric::relu;
use crate::series::{cumulate, excess_demand, rectified_cumulate, CumulativeSeries, EnergySeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Extremum {
    pub index: usize,
    pub kind: ExtremumKind,
}

/// Alternating local extrema of `R`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDecomposition {
    cumulative: CumulativeSeries,
    extrema: Vec<Extremum>,
    /// `(n_k, m_k)` for every positive run, in time order.
    runs: Vec<(usize, usize)>,
}

impl RunDecomposition {
    pub fn cumulative(&self) -> &CumulativeSeries {
        &self.cumulative
    }

    pub fn extrema(&self) -> &[Extremum] {
        &self.extrema
    }

    pub fn minima_idx(&self) -> Vec<usize> {
        self.of_kind(ExtremumKind::Min)
    }

    pub fn maxima_idx(&self) -> Vec<usize> {
        self.of_kind(ExtremumKind::Max)
    }

    fn of_kind(&self, kind: ExtremumKind) -> Vec<usize> {
        self.extrema
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.index)
            .collect()
    }

    /// Positive runs as `(n_k, m_k)` index pairs.
    pub fn positive_runs(&self) -> &[(usize, usize)] {
        &self.runs
    }

    /// Number of positive runs `K`.
    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// `Xi(i, j) = R(m_i) - R(n_j)` for 1-based run numbers `j <= i`.
    pub fn xi(&self, i: usize, j: usize) -> Result<f64> {
        let k = self.runs.len();
        if i == 0 || j == 0 || i > k || j > k {
            return input_err(format!(
                "run numbers must lie in 1..={k}, got i = {i}, j = {j}"
            ));
        }
        if j > i {
            return input_err(format!("Xi(i, j) needs j <= i, got i = {i}, j = {j}"));
        }
        Ok(self.xi_unchecked(i, j))
    }

    #[inline]
    fn xi_unchecked(&self, i: usize, j: usize) -> f64 {
        self.cumulative.at(self.runs[i - 1].1) - self.cumulative.at(self.runs[j - 1].0)
    }

    fn steps(&self) -> usize {
        self.cumulative.steps()
    }
}

/// Splits `R` into alternating extrema.
///
/// A zero step continues the run before it (leading zeros join the first run), so
/// an extremum sits at the last index of a plateau. An all-zero `R` is one
/// positive run of height zero.
pub fn decompose(cumulative: &CumulativeSeries) -> RunDecomposition {
    let values = cumulative.values();
    let n = values.len() - 1;
    let mut rising = vec![true; n + 1];
    let first = (1..=n).find_map(|k| {
        let d = values[k] - values[k - 1];
        (d != 0.0).then_some(d > 0.0)
    });
    let mut dir = first.unwrap_or(true);
    for k in 1..=n {
        let d = values[k] - values[k - 1];
        if d != 0.0 {
            dir = d > 0.0;
        }
        rising[k] = dir;
    }
    let kind_after = |r: bool| {
        if r {
            ExtremumKind::Min
        } else {
            ExtremumKind::Max
        }
    };
    let kind_before = |r: bool| {
        if r {
            ExtremumKind::Max
        } else {
            ExtremumKind::Min
        }
    };

    let mut extrema = Vec::new();
    if n == 0 {
        extrema.push(Extremum {
            index: 0,
            kind: ExtremumKind::Min,
        });
    } else {
        extrema.push(Extremum {
            index: 0,
            kind: kind_after(rising[1]),
        });
        for k in 1..n {
            if rising[k] != rising[k + 1] {
                extrema.push(Extremum {
                    index: k,
                    kind: kind_before(rising[k]),
                });
            }
        }
        extrema.push(Extremum {
            index: n,
            kind: kind_before(rising[n]),
        });
    }
    let runs = extrema
        .windows(2)
        .filter(|w| w[0].kind == ExtremumKind::Min && w[1].kind == ExtremumKind::Max)
        .map(|w| (w[0].index, w[1].index))
        .collect();
    RunDecomposition {
        cumulative: cumulative.clone(),
        extrema,
        runs,
    }
}

/// Decomposes the cumulative sum of excess demand `r`.
pub fn decompose_excess(r: &[f64]) -> Result<RunDecomposition> {
    Ok(decompose(&cumulate(r)?))
}

/// How the max-cost path recursion is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpStrategy {
    /// Plain `O(K^2)` recursion over all run pairs.
    Direct,
    /// First splits the runs at troughs whose drop is at least `B`; no optimal path
    /// needs an edge across such a trough, so each piece is solved on its own.
    #[default]
    SplitAtDeepTroughs,
}

/// Node values and optimal predecessors of the max-cost path recursion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpSolution {
    pub energy_rating: f64,
    /// `G(m_i)` for nodes `0..=K`; node 0 is the start with value 0.
    pub node_values: Vec<f64>,
    /// For node `i >= 1`, the run number `j` of the best incoming edge.
    pub best_edge: Vec<usize>,
    /// Total peaker energy `G(m_K)` (MWh).
    pub total: f64,
}

impl DpSolution {
    /// Edges `(j, i)` on the optimal path, first to last.
    pub fn path(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        let mut i = self.node_values.len() - 1;
        while i > 0 {
            let j = self.best_edge[i];
            edges.push((j, i));
            i = j - 1;
        }
        edges.reverse();
        edges
    }
}

/// Least total peaker energy (MWh) for a lossless, power-unconstrained battery of
/// energy rating `energy_rating`.
pub fn dp_peaker_energy(dec: &RunDecomposition, energy_rating: f64) -> Result<f64> {
    Ok(dp_solve(dec, energy_rating, DpStrategy::default())?.total)
}

pub fn dp_solve(
    dec: &RunDecomposition,
    energy_rating: f64,
    strategy: DpStrategy,
) -> Result<DpSolution> {
    if !(energy_rating >= 0.0) || !energy_rating.is_finite() {
        return Err(Error::Input(format!(
            "energy rating must be finite and >= 0, got {energy_rating}"
        )));
    }
    let k = dec.run_count();
    let mut values = vec![0.0; k + 1];
    let mut best_edge = vec![0; k + 1];
    let segments: Vec<(usize, usize)> = match strategy {
        DpStrategy::Direct if k == 0 => Vec::new(),
        DpStrategy::Direct => vec![(1, k)],
        DpStrategy::SplitAtDeepTroughs => deep_trough_segments(dec, energy_rating),
    };
    for (first, last) in segments {
        let base = values[first - 1];
        let mut local = vec![0.0; last - first + 2];
        for i in first..=last {
            let mut best = f64::NEG_INFINITY;
            let mut arg = first;
            for j in first..=i {
                let candidate = local[j - first] + relu(dec.xi_unchecked(i, j) - energy_rating);
                if candidate > best {
                    best = candidate;
                    arg = j;
                }
            }
            local[i - first + 1] = best;
            values[i] = match strategy {
                DpStrategy::Direct => best,
                DpStrategy::SplitAtDeepTroughs => base + best,
            };
            best_edge[i] = arg;
        }
    }
    let total = values[k];
    Ok(DpSolution {
        energy_rating,
        node_values: values,
        best_edge,
        total,
    })
}

/// Maximal ranges of run numbers not separated by a drop of at least `b`.
fn deep_trough_segments(dec: &RunDecomposition, b: f64) -> Vec<(usize, usize)> {
    let k = dec.run_count();
    if k == 0 {
        return Vec::new();
    }
    let r = &dec.cumulative;
    let mut segments = Vec::new();
    let mut start = 1;
    for run in 1..k {
        let top = r.at(dec.runs[run - 1].1);
        let bottom = r.at(dec.runs[run].0);
        if top - bottom >= b {
            segments.push((start, run));
            start = run + 1;
        }
    }
    segments.push((start, k));
    segments
}

/// Battery size `max R - min R` that removes both peaker use and spill under
/// equal averages; the final cumulative imbalance must be within `1e-6 R+(N)`.
pub fn b_sharp(dec: &RunDecomposition) -> Result<f64> {
    let reference = dec
        .cumulative
        .differences()
        .iter()
        .map(|&v| relu(v))
        .sum::<f64>();
    b_sharp_with_reference(dec, reference)
}

/// [`b_sharp`] with the imbalance tolerance `1e-6 * total_demand`.
pub fn b_sharp_with_reference(dec: &RunDecomposition, total_demand: f64) -> Result<f64> {
    let imbalance = dec.cumulative.last();
    if imbalance.abs() > 1e-6 * total_demand {
        return Err(Error::Precondition(format!(
            "equal-averages condition violated: cumulative excess demand R(N) = {imbalance} (tolerance {})",
            1e-6 * total_demand
        )));
    }
    Ok(dec.cumulative.max() - dec.cumulative.min())
}

/// Smallest battery size with zero total peaker energy: the largest rise of `R`.
pub fn b_sharp_g(dec: &RunDecomposition) -> f64 {
    let mut running_min = f64::INFINITY;
    let mut best: f64 = 0.0;
    for &v in dec.cumulative.values() {
        running_min = running_min.min(v);
        best = best.max(v - running_min);
    }
    best
}

/// Average and peak peaker power (MW) with no storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Endpoints {
    pub g_av00: f64,
    pub g_peak00: f64,
}

/// `g_av(0,0) = R+(N) / (N delta)` and `g_peak(0,0) = max(0, max_n r(n)) / delta`.
pub fn endpoint_g00_excess(r: &[f64], delta: f64) -> Result<Endpoints> {
    let rp = rectified_cumulate(r)?;
    let peak = r.iter().copied().fold(0.0, f64::max);
    Ok(Endpoints {
        g_av00: rp.last() / (r.len() as f64 * delta),
        g_peak00: peak / delta,
    })
}

pub fn endpoint_g00(wind: &EnergySeries, demand: &EnergySeries) -> Result<Endpoints> {
    let r = excess_demand(wind, demand)?;
    endpoint_g00_excess(&r, wind.delta())
}

#[derive(Debug, Clone, Serialize)]
pub struct DagNode {
    pub node: usize,
    /// Time index `m_i` of the maximum; `None` for the start node.
    pub position: Option<usize>,
    pub cumulative: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DagEdge {
    pub from: usize,
    pub to: usize,
    /// Time index `n_j` of the minimum the edge passes through.
    pub via_minimum: usize,
    pub xi: f64,
    pub cost: f64,
    pub on_best_path: bool,
}

/// Graph of the recursion for visualization: nodes are maxima, edges carry `[Xi - B]+`.
#[derive(Debug, Clone, Serialize)]
pub struct DagExport {
    pub energy_rating: f64,
    pub steps: usize,
    pub nodes: Vec<DagNode>,
    pub edges: Vec<DagEdge>,
    pub total: f64,
}

pub fn export_dag(dec: &RunDecomposition, energy_rating: f64) -> Result<DagExport> {
    let sol = dp_solve(dec, energy_rating, DpStrategy::Direct)?;
    let path = sol.path();
    let mut nodes = vec![DagNode {
        node: 0,
        position: None,
        cumulative: None,
        value: 0.0,
    }];
    let mut edges = Vec::new();
    for i in 1..=dec.run_count() {
        let m = dec.runs[i - 1].1;
        nodes.push(DagNode {
            node: i,
            position: Some(m),
            cumulative: Some(dec.cumulative.at(m)),
            value: sol.node_values[i],
        });
        for j in 1..=i {
            let xi = dec.xi_unchecked(i, j);
            edges.push(DagEdge {
                from: j - 1,
                to: i,
                via_minimum: dec.runs[j - 1].0,
                xi,
                cost: relu(xi - energy_rating),
                on_best_path: path.contains(&(j, i)),
            });
        }
    }
    Ok(DagExport {
        energy_rating,
        steps: dec.steps(),
        nodes,
        edges,
        total: sol.total,
    })
}
