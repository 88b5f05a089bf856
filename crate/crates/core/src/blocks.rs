//! Block registry: per-kind parameter schemas, default priors and the
//! single-step latent dynamics of every block kind.
//!
//! All stochastic blocks are driven by normal noise. The runtime draws a
//! standard normal deviate, multiplies it by the block's scale at `t`, and
//! hands the scaled value to [`step`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{is_identifier, BlockKind};

/// How much of its own past a block reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkovOrder {
    Zero,
    One,
    FullHistory,
}

/// Admissible values of a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Real,
    NonNegative,
    Positive,
    /// Integer-valued, at least one.
    PositiveInteger,
    /// Name of a registered non-Markov transition function.
    FunctionName,
}

impl Domain {
    /// Whether a scalar lies in the domain. Function names are never scalars.
    pub fn contains(self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            Domain::Real => true,
            Domain::NonNegative => value >= 0.0,
            Domain::Positive => value > 0.0,
            Domain::PositiveInteger => value >= 1.0 && value.fract() == 0.0,
            Domain::FunctionName => false,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Domain::Real => "a real number",
            Domain::NonNegative => "a nonnegative number",
            Domain::Positive => "a strictly positive number",
            Domain::PositiveInteger => "an integer >= 1",
            Domain::FunctionName => "a registered function name",
        }
    }
}

/// Default prior for a `?` slot. Both are standard: Normal(0, 1) and
/// LogNormal(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    Normal,
    LogNormal,
}

impl Prior {
    /// Maps a standard normal deviate onto a draw from this prior.
    pub fn transform(self, z: f64) -> f64 {
        match self {
            Prior::Normal => z,
            Prior::LogNormal => z.exp(),
        }
    }

    /// Log density of `value` under the prior. `-inf` outside the support.
    pub fn log_pdf(self, value: f64) -> f64 {
        match self {
            Prior::Normal => normal_log_pdf(value, 0.0, 1.0),
            Prior::LogNormal => {
                if value <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let ln = value.ln();
                    normal_log_pdf(ln, 0.0, 1.0) - ln
                }
            }
        }
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Normal => f.write_str("Normal(0, 1)"),
            Prior::LogNormal => f.write_str("LogNormal(0, 1)"),
        }
    }
}

/// `ln(2 pi) / 2`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of Normal(mean, scale^2) at `x`.
pub fn normal_log_pdf(x: f64, mean: f64, scale: f64) -> f64 {
    let r = (x - mean) / scale;
    -HALF_LN_2PI - scale.ln() - 0.5 * r * r
}

/// What an omitted slot resolves to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotDefault {
    Literal(f64),
    /// Omitted slot is drawn from the slot's default prior.
    PriorDraw,
    /// The slot must be bound explicitly.
    Required,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSpec {
    pub name: &'static str,
    pub default: SlotDefault,
    pub domain: Domain,
    /// Whether the slot may hold a nested model whose trajectory is read
    /// pointwise in time.
    pub composable: bool,
    /// For composable slots: the realized trajectory must be > 0 at every t.
    pub positive_trajectory: bool,
    pub default_prior: Option<Prior>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSchema {
    pub kind: BlockKind,
    pub slots: &'static [SlotSpec],
    pub markov_order: MarkovOrder,
    /// Slot that scales the block's per-step noise; `None` for deterministic
    /// blocks.
    pub noise_scale: Option<&'static str>,
}

impl BlockSchema {
    pub fn slot(&self, name: &str) -> Option<&'static SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn is_stochastic(&self) -> bool {
        self.noise_scale.is_some()
    }
}

const fn slot(
    name: &'static str,
    default: SlotDefault,
    domain: Domain,
    composable: bool,
    default_prior: Option<Prior>,
) -> SlotSpec {
    SlotSpec {
        name,
        default,
        domain,
        composable,
        positive_trajectory: false,
        default_prior,
    }
}

const fn loc_slot() -> SlotSpec {
    slot("loc", SlotDefault::Literal(0.0), Domain::Real, true, Some(Prior::Normal))
}

// Scale literals may be zero (a degenerate point mass, useful for
// deterministic runs); realized scale trajectories must be strictly positive.
const fn scale_slot(composable: bool) -> SlotSpec {
    SlotSpec {
        name: "scale",
        default: SlotDefault::Literal(1.0),
        domain: Domain::NonNegative,
        composable,
        positive_trajectory: composable,
        default_prior: Some(Prior::LogNormal),
    }
}

/// Period used when a seasonal block leaves `period` unbound.
pub const DEFAULT_SEASONAL_PERIOD: f64 = 12.0;

static RW_SLOTS: [SlotSpec; 2] = [loc_slot(), scale_slot(true)];
static GRW_SLOTS: [SlotSpec; 1] = [scale_slot(true)];
static AR1_SLOTS: [SlotSpec; 3] = [
    slot("beta", SlotDefault::PriorDraw, Domain::Real, false, Some(Prior::Normal)),
    scale_slot(true),
    loc_slot(),
];
static SEASONAL_SLOTS: [SlotSpec; 3] = [
    slot(
        "period",
        SlotDefault::Literal(DEFAULT_SEASONAL_PERIOD),
        Domain::PositiveInteger,
        false,
        None,
    ),
    slot("amplitude", SlotDefault::Literal(1.0), Domain::Real, false, Some(Prior::Normal)),
    slot("phase", SlotDefault::Literal(0.0), Domain::Real, false, Some(Prior::Normal)),
];
static TREND_SLOTS: [SlotSpec; 2] = [
    slot("a0", SlotDefault::PriorDraw, Domain::Real, false, Some(Prior::Normal)),
    slot("a1", SlotDefault::PriorDraw, Domain::Real, false, Some(Prior::Normal)),
];
static NONMARKOV_SLOTS: [SlotSpec; 3] = [
    slot("fn", SlotDefault::Required, Domain::FunctionName, false, None),
    scale_slot(false),
    slot("s", SlotDefault::Literal(1.0), Domain::PositiveInteger, false, None),
];
static NOISE_SLOTS: [SlotSpec; 2] = [loc_slot(), scale_slot(true)];

static SCHEMAS: [BlockSchema; 8] = [
    BlockSchema {
        kind: BlockKind::Rw,
        slots: &RW_SLOTS,
        markov_order: MarkovOrder::One,
        noise_scale: Some("scale"),
    },
    BlockSchema {
        kind: BlockKind::Grw,
        slots: &GRW_SLOTS,
        markov_order: MarkovOrder::One,
        noise_scale: Some("scale"),
    },
    BlockSchema {
        kind: BlockKind::Ar1,
        slots: &AR1_SLOTS,
        markov_order: MarkovOrder::One,
        noise_scale: Some("scale"),
    },
    BlockSchema {
        kind: BlockKind::Seasonal,
        slots: &SEASONAL_SLOTS,
        markov_order: MarkovOrder::Zero,
        noise_scale: None,
    },
    BlockSchema {
        kind: BlockKind::Trend,
        slots: &TREND_SLOTS,
        markov_order: MarkovOrder::Zero,
        noise_scale: None,
    },
    BlockSchema {
        kind: BlockKind::Zero,
        slots: &[],
        markov_order: MarkovOrder::Zero,
        noise_scale: None,
    },
    BlockSchema {
        kind: BlockKind::NonMarkov,
        slots: &NONMARKOV_SLOTS,
        markov_order: MarkovOrder::FullHistory,
        noise_scale: Some("scale"),
    },
    BlockSchema {
        kind: BlockKind::Noise,
        slots: &NOISE_SLOTS,
        markov_order: MarkovOrder::Zero,
        noise_scale: Some("scale"),
    },
];

/// The unique schema of a block kind.
pub fn schema(kind: BlockKind) -> &'static BlockSchema {
    let s = &SCHEMAS[kind as usize];
    debug_assert_eq!(s.kind, kind);
    s
}

/// Transition function of a non-Markov block:
/// `F(history, t, s, noise)`, where `history` holds f(1..t-1), `t` is the
/// 1-based position inside the window, `s` the block's lag argument and
/// `noise` the already-scaled noise draw.
pub type TransitionFn = dyn Fn(&[f64], usize, usize, f64) -> f64 + Send + Sync;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("function `{0}` is already registered")]
    Duplicate(String),
    #[error("`{0}` is not a valid function name")]
    InvalidName(String),
}

/// Named transition functions available to `nonmarkov(fn=...)`.
///
/// Registration happens up front; samplers only ever borrow a registry.
#[derive(Clone, Default)]
pub struct FnRegistry {
    fns: BTreeMap<String, Arc<TransitionFn>>,
}

impl fmt::Debug for FnRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.fns.keys()).finish()
    }
}

impl FnRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A fresh registry holding the built-in functions `optim-null` and
    /// `lagged-copy`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("optim-null", optim_null)
            .expect("builtin names are distinct");
        r.register("lagged-copy", lagged_copy)
            .expect("builtin names are distinct");
        r
    }

    /// Shared immutable copy of the built-in registry.
    pub fn builtin() -> &'static FnRegistry {
        static BUILTIN: OnceLock<FnRegistry> = OnceLock::new();
        BUILTIN.get_or_init(FnRegistry::with_builtins)
    }

    pub fn register<F>(&mut self, name: &str, f: F) -> Result<(), RegistryError>
    where
        F: Fn(&[f64], usize, usize, f64) -> f64 + Send + Sync + 'static,
    {
        if !is_identifier(name) {
            return Err(RegistryError::InvalidName(name.to_string()));
        }
        if self.fns.contains_key(name) {
            return Err(RegistryError::Duplicate(name.to_string()));
        }
        self.fns.insert(name.to_string(), Arc::new(f));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TransitionFn> {
        self.fns.get(name).map(|f| f.as_ref())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.fns.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(String::as_str)
    }
}

/// Null model for stochastic optimization: the running best, or the median
/// of the history perturbed by noise, whichever is larger. Even-length
/// histories use the lower median.
fn optim_null(history: &[f64], _t: usize, _s: usize, noise: f64) -> f64 {
    let best = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best.max(lower_median(history) + noise)
}

/// Copies the value `s` steps back, clamped to the first value.
fn lagged_copy(history: &[f64], t: usize, s: usize, noise: f64) -> f64 {
    let idx = t.saturating_sub(s).max(1);
    history[(idx - 1).min(history.len() - 1)] + noise
}

fn lower_median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StepError {
    #[error("slot `{slot}` of {kind} must be {expected}, got {value}")]
    Domain {
        kind: BlockKind,
        slot: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("nonmarkov block has no transition function")]
    MissingFunction,
}

/// Realized parameter values for one step, aligned with the schema's slots.
/// The function slot of a non-Markov block carries its value in `function`;
/// its entry in `values` is ignored.
#[derive(Clone, Copy)]
pub struct StepParams<'a> {
    schema: &'static BlockSchema,
    values: &'a [f64],
    function: Option<&'a TransitionFn>,
}

impl<'a> StepParams<'a> {
    pub fn new(kind: BlockKind, values: &'a [f64], function: Option<&'a TransitionFn>) -> Self {
        let schema = schema(kind);
        assert_eq!(values.len(), schema.slots.len(), "one value per slot");
        Self {
            schema,
            values,
            function,
        }
    }

    /// Value of a named slot.
    ///
    /// Panics if the kind has no such slot.
    pub fn get(&self, name: &str) -> f64 {
        let i = self
            .schema
            .slot_index(name)
            .unwrap_or_else(|| panic!("{} has no slot `{name}`", self.schema.kind));
        self.values[i]
    }

    fn checked(&self, name: &'static str) -> Result<f64, StepError> {
        let spec = self.schema.slot(name).expect("slot exists");
        let value = self.get(name);
        if spec.domain.contains(value) {
            Ok(value)
        } else {
            Err(StepError::Domain {
                kind: self.schema.kind,
                slot: name,
                expected: spec.domain.describe(),
                value,
            })
        }
    }
}

/// Advances a block by one step.
///
/// `history` is the block's own trajectory so far (f(t0), ..., f(t-1));
/// Markov blocks read only its last element and start from f(t0-1) = 0.
/// `t` is absolute time. `noise` is the scaled noise draw (ignored by
/// deterministic blocks).
pub fn step(
    kind: BlockKind,
    history: &[f64],
    t: i64,
    params: &StepParams<'_>,
    noise: f64,
) -> Result<f64, StepError> {
    let prev = history.last().copied().unwrap_or(0.0);
    match kind {
        BlockKind::Rw => {
            params.checked("scale")?;
            Ok(prev + params.checked("loc")? + noise)
        }
        BlockKind::Grw => {
            params.checked("scale")?;
            // g(t0-1) = 0, so f(t0-1) = 1
            let g_prev = history.last().map_or(0.0, |f| f.ln());
            Ok((g_prev + noise).exp())
        }
        BlockKind::Ar1 => {
            params.checked("scale")?;
            let beta = params.checked("beta")?;
            Ok(params.checked("loc")? + beta * prev + noise)
        }
        BlockKind::Seasonal => {
            let period = params.checked("period")?;
            let amplitude = params.checked("amplitude")?;
            let phase = params.checked("phase")?;
            Ok(amplitude * (2.0 * PI * (t as f64 + phase) / period).cos())
        }
        BlockKind::Trend => Ok(params.checked("a0")? + params.checked("a1")? * t as f64),
        BlockKind::Zero => Ok(0.0),
        BlockKind::NonMarkov => {
            params.checked("scale")?;
            let lag = params.checked("s")? as usize;
            let f = params.function.ok_or(StepError::MissingFunction)?;
            if history.is_empty() {
                Ok(noise)
            } else {
                Ok(f(history, history.len() + 1, lag, noise))
            }
        }
        BlockKind::Noise => {
            params.checked("scale")?;
            Ok(params.checked("loc")? + noise)
        }
    }
}
