//! Simulation windows and the record of one sampled realization.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ast::BlockPath;
use crate::blocks::Prior;

/// Half-open integer time range `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    t0: i64,
    t1: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("empty time window [{t0}, {t1}): t1 must exceed t0")]
pub struct EmptyWindow {
    pub t0: i64,
    pub t1: i64,
}

impl TimeWindow {
    pub fn new(t0: i64, t1: i64) -> Result<Self, EmptyWindow> {
        if t1 > t0 {
            Ok(Self { t0, t1 })
        } else {
            Err(EmptyWindow { t0, t1 })
        }
    }

    /// `[0, len)`
    pub fn with_len(len: usize) -> Self {
        assert!(len >= 1, "window length must be positive");
        Self {
            t0: 0,
            t1: len as i64,
        }
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn t1(&self) -> i64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        (self.t1 - self.t0) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Absolute times in order.
    pub fn times(&self) -> impl Iterator<Item = i64> {
        self.t0..self.t1
    }
}

/// A global draw's address: the `?` slot `slot` of the block at `path`.
/// Written as `path/slot`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalKey {
    pub path: BlockPath,
    pub slot: String,
}

impl GlobalKey {
    pub fn new(path: BlockPath, slot: &str) -> Self {
        Self {
            path,
            slot: slot.to_string(),
        }
    }
}

impl fmt::Display for GlobalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.path, self.slot)
    }
}

impl FromStr for GlobalKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.rsplit_once('/') {
            Some((path, slot)) if !path.is_empty() && !slot.is_empty() => {
                Ok(Self::new(BlockPath::from(path), slot))
            }
            _ => Err(format!("`{s}` is not of the form path/slot")),
        }
    }
}

impl Serialize for GlobalKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GlobalKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a primitive draw was consumed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseAddress {
    /// Per-step noise of the block at `path`, at absolute time `t`.
    Step { path: BlockPath, t: i64 },
    /// A `?` slot.
    Global { path: BlockPath, slot: String },
    /// The switch index of a changepoint block.
    Changepoint { path: BlockPath },
}

impl fmt::Display for NoiseAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseAddress::Step { path, t } => write!(f, "{path}@{t}"),
            NoiseAddress::Global { path, slot } => write!(f, "{path}/{slot}"),
            NoiseAddress::Changepoint { path } => write!(f, "{path}#cp"),
        }
    }
}

/// A primitive random draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Draw {
    /// Standard normal deviate `z`; the block used `z * scale`.
    Normal { z: f64, scale: f64 },
    /// Standard normal deviate pushed through the slot's prior.
    Prior { z: f64, prior: Prior },
    /// Uniform integer on `low..=high`.
    DiscreteUniform { value: u64, low: u64, high: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub address: NoiseAddress,
    pub draw: Draw,
}

/// One complete realization of a model over a window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    /// The observed series: pointwise sum of the root terms.
    pub observed: Vec<f64>,
    /// Trajectory of every block, keyed by block path.
    #[serde(default)]
    pub latents: BTreeMap<BlockPath, Vec<f64>>,
    /// Values of the `?` slots.
    #[serde(default)]
    pub globals: BTreeMap<GlobalKey, f64>,
    /// 1-based switch index within the window, per changepoint block.
    #[serde(default)]
    pub changepoints: BTreeMap<BlockPath, u64>,
    /// Every primitive draw in consumption order.
    #[serde(default)]
    pub noises: Vec<NoiseEntry>,
}
