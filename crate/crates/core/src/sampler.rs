//! Prior-predictive simulation.
//!
//! Evaluation order is fixed so that a `(model, window, rng)` triple always
//! yields the same trace:
//!
//! - terms of a sum left to right, depth first;
//! - within a basic block: `?` slots in schema order, then nested models in
//!   schema order (each over the full window), then the block's own
//!   trajectory from `t0` to `t1 - 1`;
//! - within a changepoint: the left model, the right model, then the switch
//!   index `t* ~ DiscreteUniform{2, ..., T-1}`. The output follows the left
//!   model before absolute time `t0 + t* - 1` and the right model from then
//!   on.

use thiserror::Error;

use crate::ast::{BlockExpr, BlockKind, BlockPath, ModelExpr, ParamValue, Violation};
use crate::blocks::{schema, step, FnRegistry, SlotDefault, StepError, StepParams, TransitionFn};
use crate::rng::{NoiseSource, ReplayError, ReplaySource, RngSpec, StreamSource};
use crate::trace::{Draw, GlobalKey, NoiseAddress, NoiseEntry, TimeWindow, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid model: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error("window of length {len} is too short for a changepoint (needs at least 3)")]
    WindowTooShort { len: usize },
    #[error("slot `{slot}` of block {path} must stay strictly positive, got {value} at t={t}")]
    NonPositive {
        path: BlockPath,
        slot: String,
        t: i64,
        value: f64,
    },
    #[error("block {path} produced a nonfinite value at t={t}")]
    NonFinite { path: BlockPath, t: i64 },
    #[error("block {path}: {source}")]
    Step {
        path: BlockPath,
        #[source]
        source: StepError,
    },
    #[error("replay failed: {0}")]
    Replay(#[from] ReplayError),
    #[error("noise record has {0} unused entries")]
    UnusedNoise(usize),
}

/// Draws traces from a model's prior predictive distribution.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'r> {
    registry: &'r FnRegistry,
}

impl Default for Sampler<'static> {
    fn default() -> Self {
        Self {
            registry: FnRegistry::builtin(),
        }
    }
}

impl<'r> Sampler<'r> {
    pub fn new(registry: &'r FnRegistry) -> Self {
        Self { registry }
    }

    pub fn registry(&self) -> &'r FnRegistry {
        self.registry
    }

    pub fn sample_trace(
        &self,
        model: &ModelExpr,
        window: TimeWindow,
        rng: RngSpec,
    ) -> Result<Trace, SampleError> {
        self.run(model, window, StreamSource::new(rng))
            .map(|(trace, _)| trace)
    }

    /// `draws` independent traces; draw `i` uses stream `rng.stream + i`.
    pub fn sample_prior_predictive(
        &self,
        model: &ModelExpr,
        window: TimeWindow,
        rng: RngSpec,
        draws: usize,
    ) -> Result<Vec<Trace>, SampleError> {
        (0..draws as u64)
            .map(|i| self.sample_trace(model, window, rng.offset(i)))
            .collect()
    }

    /// Re-evaluates a model on a recorded noise list. The record must be
    /// consumed exactly.
    pub fn replay(
        &self,
        model: &ModelExpr,
        window: TimeWindow,
        noises: &[NoiseEntry],
    ) -> Result<Trace, SampleError> {
        let (trace, source) = self.run(model, window, ReplaySource::new(noises))?;
        match source.remaining() {
            0 => Ok(trace),
            n => Err(SampleError::UnusedNoise(n)),
        }
    }

    fn run<S: NoiseSource>(
        &self,
        model: &ModelExpr,
        window: TimeWindow,
        source: S,
    ) -> Result<(Trace, S), SampleError> {
        let violations = model.validate_with(self.registry);
        if !violations.is_empty() {
            return Err(SampleError::Invalid(violations));
        }
        if model.contains_changepoint() && window.len() < 3 {
            return Err(SampleError::WindowTooShort { len: window.len() });
        }
        let mut r = Realizer {
            registry: self.registry,
            window,
            source,
            trace: Trace::default(),
        };
        let observed = r.model(model, &BlockPath::root())?;
        r.trace.observed = observed;
        Ok((r.trace, r.source))
    }
}

/// Samples with the built-in function registry.
pub fn sample_trace(model: &ModelExpr, window: TimeWindow, rng: RngSpec) -> Result<Trace, SampleError> {
    Sampler::default().sample_trace(model, window, rng)
}

pub fn sample_prior_predictive(
    model: &ModelExpr,
    window: TimeWindow,
    rng: RngSpec,
    draws: usize,
) -> Result<Vec<Trace>, SampleError> {
    Sampler::default().sample_prior_predictive(model, window, rng, draws)
}

/// How a slot is realized over the window.
pub(crate) enum Binding<'a> {
    Const(f64),
    Series(Vec<f64>),
    Function(&'a TransitionFn),
}

impl Binding<'_> {
    pub(crate) fn at(&self, i: usize) -> f64 {
        match self {
            Binding::Const(v) => *v,
            Binding::Series(s) => s[i],
            Binding::Function(_) => 0.0,
        }
    }
}

/// Pointwise sum, folded left to right from the first series.
pub(crate) fn pointwise_sum<'a>(mut series: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = series.next().map(<[f64]>::to_vec).unwrap_or_default();
    for s in series {
        for (a, b) in acc.iter_mut().zip(s) {
            *a += b;
        }
    }
    acc
}

struct Realizer<'r, S> {
    registry: &'r FnRegistry,
    window: TimeWindow,
    source: S,
    trace: Trace,
}

impl<'r, S: NoiseSource> Realizer<'r, S> {
    fn model(&mut self, model: &ModelExpr, path: &BlockPath) -> Result<Vec<f64>, SampleError> {
        let mut series = Vec::with_capacity(model.terms().len());
        for (i, term) in model.terms().iter().enumerate() {
            let term_path = path.term(i);
            let s = self.block(term, &term_path)?;
            self.trace.latents.insert(term_path, s.clone());
            series.push(s);
        }
        Ok(pointwise_sum(series.iter().map(Vec::as_slice)))
    }

    fn block(&mut self, block: &BlockExpr, path: &BlockPath) -> Result<Vec<f64>, SampleError> {
        match block {
            BlockExpr::Basic { kind, params } => self.basic(*kind, params, path),
            BlockExpr::Changepoint { left, right } => {
                let left = self.model(left, &path.left())?;
                let right = self.model(right, &path.right())?;
                let high = self.window.len() as u64 - 1;
                let address = NoiseAddress::Changepoint { path: path.clone() };
                let switch = self.source.discrete_uniform(&address, 2, high)?;
                self.trace.noises.push(NoiseEntry {
                    address,
                    draw: Draw::DiscreteUniform {
                        value: switch,
                        low: 2,
                        high,
                    },
                });
                self.trace.changepoints.insert(path.clone(), switch);
                Ok(splice(&left, &right, switch))
            }
        }
    }

    fn basic(
        &mut self,
        kind: BlockKind,
        params: &std::collections::BTreeMap<String, ParamValue>,
        path: &BlockPath,
    ) -> Result<Vec<f64>, SampleError> {
        let schema = schema(kind);
        let mut bindings: Vec<Option<Binding<'r>>> = schema.slots.iter().map(|_| None).collect();

        // global draws
        for (i, spec) in schema.slots.iter().enumerate() {
            let wants_draw = match params.get(spec.name) {
                Some(ParamValue::PriorDraw) => true,
                None => spec.default == SlotDefault::PriorDraw,
                _ => false,
            };
            if !wants_draw {
                continue;
            }
            let prior = spec.default_prior.expect("validated: slot has a prior");
            let address = NoiseAddress::Global {
                path: path.clone(),
                slot: spec.name.to_string(),
            };
            let z = self.source.standard_normal(&address)?;
            let value = prior.transform(z);
            self.trace.noises.push(NoiseEntry {
                address,
                draw: Draw::Prior { z, prior },
            });
            self.trace
                .globals
                .insert(GlobalKey::new(path.clone(), spec.name), value);
            bindings[i] = Some(Binding::Const(value));
        }

        // nested models
        for (i, spec) in schema.slots.iter().enumerate() {
            let Some(ParamValue::SubModel(sub)) = params.get(spec.name) else {
                continue;
            };
            let series = self.model(sub, &path.slot(spec.name))?;
            if spec.positive_trajectory {
                if let Some((j, &value)) = series.iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
                    return Err(SampleError::NonPositive {
                        path: path.clone(),
                        slot: spec.name.to_string(),
                        t: self.window.t0() + j as i64,
                        value,
                    });
                }
            }
            bindings[i] = Some(Binding::Series(series));
        }

        // literals and defaults
        for (i, spec) in schema.slots.iter().enumerate() {
            if bindings[i].is_some() {
                continue;
            }
            bindings[i] = Some(match params.get(spec.name) {
                Some(ParamValue::Literal(v)) => Binding::Const(*v),
                Some(ParamValue::NamedFunction(name)) => Binding::Function(
                    self.registry.get(name).expect("validated: function is registered"),
                ),
                None => match spec.default {
                    SlotDefault::Literal(v) => Binding::Const(v),
                    _ => unreachable!("validated: required slot is bound"),
                },
                Some(ParamValue::PriorDraw | ParamValue::SubModel(_)) => unreachable!(),
            });
        }
        let bindings: Vec<Binding<'r>> = bindings.into_iter().map(Option::unwrap).collect();
        let function = bindings.iter().find_map(|b| match b {
            Binding::Function(f) => Some(*f),
            _ => None,
        });
        let scale_idx = schema.noise_scale.and_then(|s| schema.slot_index(s));

        let mut values = vec![0.0; bindings.len()];
        let mut traj = Vec::with_capacity(self.window.len());
        for (i, t) in self.window.times().enumerate() {
            for (v, b) in values.iter_mut().zip(&bindings) {
                *v = b.at(i);
            }
            let noise = match scale_idx {
                Some(si) => {
                    let address = NoiseAddress::Step {
                        path: path.clone(),
                        t,
                    };
                    let z = self.source.standard_normal(&address)?;
                    let scale = values[si];
                    self.trace.noises.push(NoiseEntry {
                        address,
                        draw: Draw::Normal { z, scale },
                    });
                    z * scale
                }
                None => 0.0,
            };
            let p = StepParams::new(kind, &values, function);
            let f = step(kind, &traj, t, &p, noise).map_err(|source| SampleError::Step {
                path: path.clone(),
                source,
            })?;
            if !f.is_finite() {
                return Err(SampleError::NonFinite {
                    path: path.clone(),
                    t,
                });
            }
            traj.push(f);
        }
        Ok(traj)
    }
}

/// `left` before the 1-based switch index, `right` from it on.
pub(crate) fn splice(left: &[f64], right: &[f64], switch: u64) -> Vec<f64> {
    left.iter()
        .zip(right)
        .enumerate()
        .map(|(i, (l, r))| if (i as u64) + 1 < switch { *l } else { *r })
        .collect()
}
