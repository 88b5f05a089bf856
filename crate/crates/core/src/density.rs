//! Joint log density of a trace under the block factorization
//! `p(x, z, u) = p(x | z, u) p(u) prod_i p(z_i | z_not_i)`.
//!
//! Each stochastic block contributes the sum over time of the normal log
//! density of its innovation at the realized scale. For `rw`, `ar1` and
//! `noise` the innovation is recovered from the trajectory itself; for `grw`
//! it is the increment of the log trajectory. Non-Markov transition
//! functions are generally not invertible, so those blocks are scored on
//! their recorded noise and their trajectory is checked against it.
//! Deterministic blocks (`trend`, `seasonal`, `zero`) contribute nothing and
//! are checked instead. Every `?` slot adds its prior log density and every
//! changepoint adds `-ln(T - 2)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{BlockExpr, BlockKind, BlockPath, ModelExpr, ParamValue, Violation};
use crate::blocks::{normal_log_pdf, schema, step, FnRegistry, SlotDefault, StepParams};
use crate::sampler::{pointwise_sum, splice, Binding};
use crate::trace::{Draw, GlobalKey, NoiseAddress, TimeWindow, Trace};

/// Relative tolerance for deterministic relations, applied as
/// `|a - b| <= TOL * max(1, |a|, |b|)`.
pub const CONSISTENCY_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSISTENCY_TOL * 1f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogDensityReport {
    pub total: f64,
    pub per_block: BTreeMap<BlockPath, f64>,
    pub per_global: BTreeMap<GlobalKey, f64>,
    pub per_changepoint: BTreeMap<BlockPath, f64>,
}

/// A way in which a trace fails to replay under the model. An empty path
/// refers to the observed series.
#[derive(Debug, Clone, PartialEq)]
pub struct Inconsistency {
    pub path: BlockPath,
    pub t: Option<i64>,
    pub message: String,
}

impl fmt::Display for Inconsistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = if self.path.is_root() { "y" } else { self.path.as_str() };
        match self.t {
            Some(t) => write!(f, "{name} at t={t}: {}", self.message),
            None => write!(f, "{name}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("invalid model: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error("noise record has no entry for {0}")]
    MissingNoise(NoiseAddress),
    #[error("trace is inconsistent with the model: {0}")]
    Inconsistent(Inconsistency),
    #[error("scale of block {path} is {value} at t={t}; it must be strictly positive")]
    NonPositiveScale { path: BlockPath, t: i64, value: f64 },
}

/// Scores `trace` with the built-in function registry.
pub fn log_density(
    model: &ModelExpr,
    window: TimeWindow,
    trace: &Trace,
) -> Result<LogDensityReport, DensityError> {
    log_density_with(model, window, trace, FnRegistry::builtin())
}

pub fn log_density_with(
    model: &ModelExpr,
    window: TimeWindow,
    trace: &Trace,
    registry: &FnRegistry,
) -> Result<LogDensityReport, DensityError> {
    let violations = model.validate_with(registry);
    if !violations.is_empty() {
        return Err(DensityError::Invalid(violations));
    }
    let s = Scorer::run(model, window, trace, registry);
    if let Some(address) = s.missing_noise.into_iter().next() {
        return Err(DensityError::MissingNoise(address));
    }
    if let Some(issue) = s.issues.into_iter().next() {
        return Err(DensityError::Inconsistent(issue));
    }
    if let Some((path, t, value)) = s.bad_scales.into_iter().next() {
        return Err(DensityError::NonPositiveScale { path, t, value });
    }
    let total = s.per_block.values().sum::<f64>()
        + s.per_global.values().sum::<f64>()
        + s.per_changepoint.values().sum::<f64>();
    Ok(LogDensityReport {
        total,
        per_block: s.per_block,
        per_global: s.per_global,
        per_changepoint: s.per_changepoint,
    })
}

/// Every deterministic relation of the model that the trace breaks,
/// including missing or malformed entries. Stochastic blocks accept any
/// finite trajectory. Invalid models yield one entry per violation.
pub fn check_consistency(model: &ModelExpr, window: TimeWindow, trace: &Trace) -> Vec<Inconsistency> {
    check_consistency_with(model, window, trace, FnRegistry::builtin())
}

pub fn check_consistency_with(
    model: &ModelExpr,
    window: TimeWindow,
    trace: &Trace,
    registry: &FnRegistry,
) -> Vec<Inconsistency> {
    let violations = model.validate_with(registry);
    if !violations.is_empty() {
        return violations
            .into_iter()
            .map(|v| Inconsistency {
                path: v.path,
                t: None,
                message: format!("invalid model: {}", v.message),
            })
            .collect();
    }
    let s = Scorer::run(model, window, trace, registry);
    let mut out = s.issues;
    out.extend(s.missing_noise.into_iter().map(|address| {
        let (path, t) = match &address {
            NoiseAddress::Step { path, t } => (path.clone(), Some(*t)),
            NoiseAddress::Global { path, .. } | NoiseAddress::Changepoint { path } => {
                (path.clone(), None)
            }
        };
        Inconsistency {
            path,
            t,
            message: format!("missing noise record entry {address}"),
        }
    }));
    out
}

struct Scorer<'a> {
    registry: &'a FnRegistry,
    window: TimeWindow,
    trace: &'a Trace,
    noise: HashMap<&'a NoiseAddress, &'a Draw>,
    visited: BTreeSet<BlockPath>,
    seen_globals: BTreeSet<GlobalKey>,
    issues: Vec<Inconsistency>,
    missing_noise: Vec<NoiseAddress>,
    bad_scales: Vec<(BlockPath, i64, f64)>,
    per_block: BTreeMap<BlockPath, f64>,
    per_global: BTreeMap<GlobalKey, f64>,
    per_changepoint: BTreeMap<BlockPath, f64>,
}

impl<'a> Scorer<'a> {
    fn run(model: &ModelExpr, window: TimeWindow, trace: &'a Trace, registry: &'a FnRegistry) -> Self {
        let mut s = Scorer {
            registry,
            window,
            trace,
            noise: trace.noises.iter().map(|e| (&e.address, &e.draw)).collect(),
            visited: BTreeSet::new(),
            seen_globals: BTreeSet::new(),
            issues: Vec::new(),
            missing_noise: Vec::new(),
            bad_scales: Vec::new(),
            per_block: BTreeMap::new(),
            per_global: BTreeMap::new(),
            per_changepoint: BTreeMap::new(),
        };
        let root = s.model(model, &BlockPath::root());
        if trace.observed.len() != window.len() {
            s.issue(
                BlockPath::root(),
                None,
                format!("has {} values, window needs {}", trace.observed.len(), window.len()),
            );
        } else if let Some(root) = root {
            s.compare(&BlockPath::root(), &trace.observed, &root, "differs from the sum of root terms");
        }
        for path in trace.latents.keys() {
            if !s.visited.contains(path) {
                s.issue(path.clone(), None, "latent series has no block in the model".into());
            }
        }
        for key in trace.globals.keys() {
            if !s.seen_globals.contains(key) {
                s.issue(key.path.clone(), None, format!("global `{key}` has no `?` slot in the model"));
            }
        }
        for path in trace.changepoints.keys() {
            if !s.per_changepoint.contains_key(path) {
                s.issue(path.clone(), None, "changepoint index has no changepoint block".into());
            }
        }
        s
    }

    fn issue(&mut self, path: BlockPath, t: Option<i64>, message: String) {
        self.issues.push(Inconsistency { path, t, message });
    }

    /// Records the first index where `actual` departs from `expected`.
    fn compare(&mut self, path: &BlockPath, actual: &[f64], expected: &[f64], what: &str) {
        if let Some(i) = (0..actual.len()).find(|&i| !close(actual[i], expected[i])) {
            let t = self.window.t0() + i as i64;
            self.issue(
                path.clone(),
                Some(t),
                format!("{what}: {} vs {}", actual[i], expected[i]),
            );
        }
    }

    fn model(&mut self, model: &ModelExpr, path: &BlockPath) -> Option<Vec<f64>> {
        let mut terms = Vec::new();
        let mut complete = true;
        for (i, term) in model.terms().iter().enumerate() {
            match self.block(term, &path.term(i)) {
                Some(s) => terms.push(s),
                None => complete = false,
            }
        }
        complete.then(|| pointwise_sum(terms.into_iter()))
    }

    /// The block's latent series, after checking everything it depends on.
    fn block(&mut self, block: &BlockExpr, path: &BlockPath) -> Option<&'a [f64]> {
        self.visited.insert(path.clone());
        let latent = match self.trace.latents.get(path) {
            None => {
                self.issue(path.clone(), None, "missing latent series".into());
                None
            }
            Some(s) if s.len() != self.window.len() => {
                self.issue(
                    path.clone(),
                    None,
                    format!("has {} values, window needs {}", s.len(), self.window.len()),
                );
                None
            }
            Some(s) => match s.iter().position(|v| !v.is_finite()) {
                Some(i) => {
                    self.issue(path.clone(), Some(self.window.t0() + i as i64), "nonfinite value".into());
                    None
                }
                None => Some(s.as_slice()),
            },
        };
        match block {
            BlockExpr::Changepoint { left, right } => {
                let left = self.model(left, &path.left());
                let right = self.model(right, &path.right());
                let high = self.window.len() as u64 - 1;
                self.per_changepoint
                    .insert(path.clone(), -((self.window.len() - 2) as f64).ln());
                let switch = match self.trace.changepoints.get(path) {
                    None => {
                        self.issue(path.clone(), None, "missing changepoint index".into());
                        None
                    }
                    Some(&s) if !(2..=high).contains(&s) => {
                        self.issue(path.clone(), None, format!("changepoint index {s} outside 2..={high}"));
                        None
                    }
                    Some(&s) => Some(s),
                };
                if let (Some(l), Some(r), Some(s), Some(actual)) = (left, right, switch, latent) {
                    self.compare(path, actual, &splice(&l, &r, s), "does not splice its sides");
                }
            }
            BlockExpr::Basic { kind, params } => {
                let bindings = self.bindings(*kind, params, path);
                let lp = match (bindings, latent) {
                    (Some(b), Some(actual)) => self.score_basic(*kind, &b, path, actual),
                    _ => 0.0,
                };
                self.per_block.insert(path.clone(), lp);
            }
        }
        latent
    }

    fn bindings(
        &mut self,
        kind: BlockKind,
        params: &BTreeMap<String, ParamValue>,
        path: &BlockPath,
    ) -> Option<Vec<Binding<'a>>> {
        let mut out = Vec::new();
        let mut complete = true;
        for spec in schema(kind).slots {
            let binding = match params.get(spec.name) {
                Some(ParamValue::Literal(v)) => Some(Binding::Const(*v)),
                Some(ParamValue::NamedFunction(name)) => self.registry.get(name).map(Binding::Function),
                Some(ParamValue::SubModel(m)) => self.model(m, &path.slot(spec.name)).map(Binding::Series),
                Some(ParamValue::PriorDraw) => self.global(path, spec.name, spec.default_prior),
                None => match spec.default {
                    SlotDefault::Literal(v) => Some(Binding::Const(v)),
                    SlotDefault::PriorDraw => self.global(path, spec.name, spec.default_prior),
                    SlotDefault::Required => None,
                },
            };
            match binding {
                Some(b) => out.push(b),
                None => complete = false,
            }
        }
        complete.then_some(out)
    }

    fn global(
        &mut self,
        path: &BlockPath,
        slot: &str,
        prior: Option<crate::blocks::Prior>,
    ) -> Option<Binding<'a>> {
        let key = GlobalKey::new(path.clone(), slot);
        self.seen_globals.insert(key.clone());
        let prior = prior.expect("validated: `?` slot has a prior");
        match self.trace.globals.get(&key) {
            Some(&v) if v.is_finite() && prior.log_pdf(v).is_finite() => {
                self.per_global.insert(key, prior.log_pdf(v));
                Some(Binding::Const(v))
            }
            Some(&v) => {
                self.issue(path.clone(), None, format!("global `{slot}` = {v} is outside the support of {prior}"));
                None
            }
            None => {
                self.issue(path.clone(), None, format!("missing global `{slot}`"));
                None
            }
        }
    }

    /// The recorded scaled innovation of a Markov step, if the record
    /// reproduces the trace's value. Scoring the recorded deviate rather
    /// than a residual recovered by subtraction keeps full precision when
    /// the series is large compared to its noise.
    #[allow(clippy::too_many_arguments)]
    fn recorded_noise(
        &self,
        kind: BlockKind,
        history: &[f64],
        t: i64,
        params: &StepParams<'_>,
        path: &BlockPath,
        scale: f64,
        actual: f64,
    ) -> Option<f64> {
        let address = NoiseAddress::Step { path: path.clone(), t };
        let Some(Draw::Normal { z, .. }) = self.noise.get(&address) else {
            return None;
        };
        let noise = z * scale;
        match step(kind, history, t, params, noise) {
            Ok(value) if close(actual, value) => Some(noise),
            _ => None,
        }
    }

    fn score_basic(&mut self, kind: BlockKind, bindings: &[Binding<'a>], path: &BlockPath, actual: &[f64]) -> f64 {
        let schema = schema(kind);
        let function = bindings.iter().find_map(|b| match b {
            Binding::Function(f) => Some(*f),
            _ => None,
        });
        let scale_idx = schema.noise_scale.and_then(|s| schema.slot_index(s));
        let mut values = vec![0.0; bindings.len()];
        let mut lp = 0.0;
        for (i, t) in self.window.times().enumerate() {
            for (v, b) in values.iter_mut().zip(bindings) {
                *v = b.at(i);
            }
            let params = StepParams::new(kind, &values, function);
            let history = &actual[..i];
            let scale = match scale_idx {
                Some(si) => {
                    let s = values[si];
                    if s.is_nan() || s <= 0.0 {
                        self.bad_scales.push((path.clone(), t, s));
                        continue;
                    }
                    s
                }
                None => f64::NAN,
            };
            let mismatch = |expected: f64| {
                format!("expected {expected}, trace has {}", actual[i])
            };
            match kind {
                BlockKind::Seasonal | BlockKind::Trend | BlockKind::Zero => {
                    match step(kind, history, t, &params, 0.0) {
                        Ok(expected) if close(actual[i], expected) => {}
                        Ok(expected) => {
                            self.issue(path.clone(), Some(t), mismatch(expected));
                            return 0.0;
                        }
                        Err(e) => {
                            self.issue(path.clone(), Some(t), e.to_string());
                            return 0.0;
                        }
                    }
                }
                BlockKind::Rw | BlockKind::Ar1 | BlockKind::Noise | BlockKind::Grw => {
                    if kind == BlockKind::Grw && (actual[i].is_nan() || actual[i] <= 0.0) {
                        self.issue(path.clone(), Some(t), format!("geometric random walk value {} is not positive", actual[i]));
                        return 0.0;
                    }
                    if let Some(noise) = self.recorded_noise(kind, history, t, &params, path, scale, actual[i]) {
                        lp += normal_log_pdf(noise, 0.0, scale);
                        continue;
                    }
                    // the trace was edited: recover the innovation from the values
                    let residual = match kind {
                        BlockKind::Grw => Ok(actual[i].ln() - history.last().map_or(0.0, |f| f.ln())),
                        _ => step(kind, history, t, &params, 0.0).map(|mean| actual[i] - mean),
                    };
                    match residual {
                        Ok(r) => lp += normal_log_pdf(r, 0.0, scale),
                        Err(e) => {
                            self.issue(path.clone(), Some(t), e.to_string());
                            return 0.0;
                        }
                    }
                }
                BlockKind::NonMarkov => {
                    let address = NoiseAddress::Step { path: path.clone(), t };
                    let z = match self.noise.get(&address) {
                        Some(Draw::Normal { z, .. }) => *z,
                        Some(_) => {
                            self.issue(path.clone(), Some(t), "noise record entry is not a normal draw".into());
                            return 0.0;
                        }
                        None => {
                            self.missing_noise.push(address);
                            return 0.0;
                        }
                    };
                    let noise = z * scale;
                    match step(kind, history, t, &params, noise) {
                        Ok(expected) if close(actual[i], expected) => {}
                        Ok(expected) => {
                            self.issue(path.clone(), Some(t), mismatch(expected));
                            return 0.0;
                        }
                        Err(e) => {
                            self.issue(path.clone(), Some(t), e.to_string());
                            return 0.0;
                        }
                    }
                    lp += normal_log_pdf(noise, 0.0, scale);
                }
            }
        }
        lp
    }
}
