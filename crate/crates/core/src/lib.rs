//! Power alignment of a battery captive to a wind farm.
//!
//! `g(B, P)` is the least peaker-plant power (average or peak) that, together with
//! wind and a battery of energy rating `B` and power rating `P`, always meets demand.
//! It is computed three ways: an exact linear program ([`alignment_lp`]), the greedy
//! charging protocol ([`bess_sim`]), and, for lossless power-unconstrained batteries,
//! a max-cost path recursion over the run structure of cumulative excess demand
//! ([`run_bounds`]). [`capacity`] samples `g` over grids and derives capacities.

pub mod alignment_lp;
pub mod bess_sim;
pub mod capacity;
pub mod error;
pub mod numeric;
pub mod run_bounds;
pub mod series;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Which peaker-power statistic is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Objective {
    /// Mean peaker power over the horizon.
    #[default]
    #[serde(rename = "avg", alias = "average")]
    Average,
    /// Largest per-step peaker power.
    #[serde(rename = "peak")]
    Peak,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Average => "avg",
            Objective::Peak => "peak",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "average" => Ok(Objective::Average),
            "peak" => Ok(Objective::Peak),
            other => Err(Error::Input(format!(
                "unknown objective {other:?}, expected avg or peak"
            ))),
        }
    }
}
