//! Random valid model expressions, for fuzzing and property checks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::ast::{BlockExpr, BlockKind, ModelExpr, ParamValue};
use crate::blocks::{schema, Domain, FnRegistry, SlotSpec};

#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub max_depth: usize,
    pub max_terms: usize,
    pub vocabulary: Vec<BlockKind>,
    /// Chance that a block with depth to spare is a changepoint.
    pub changepoint_prob: f64,
    /// Chance that a composable slot with depth to spare holds a nested model.
    pub nest_prob: f64,
    /// Keep models cheap and numerically tame to sample: moderate literals,
    /// strictly positive scales, scale trajectories built only from
    /// low-volatility geometric random walks, and geometric random walks
    /// that never feed on another geometric walk (whose exponential growth
    /// would leave nothing of the noise below the rounding error).
    pub samplable: bool,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            max_terms: 4,
            vocabulary: BlockKind::ALL.to_vec(),
            changepoint_prob: 0.2,
            nest_prob: 0.4,
            samplable: false,
        }
    }
}

/// A random model that passes validation against the built-in registry.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig) -> ModelExpr {
    assert!(!cfg.vocabulary.is_empty() && cfg.max_terms >= 1);
    model(rng, cfg, cfg.max_depth)
}

fn model<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig, depth: usize) -> ModelExpr {
    let n = rng.random_range(1..=cfg.max_terms);
    ModelExpr::sum((0..n).map(|_| block(rng, cfg, depth)).collect())
}

fn block<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig, depth: usize) -> BlockExpr {
    if depth >= 1 && rng.random_bool(cfg.changepoint_prob) {
        let single = ModelExpr::single(basic(rng, cfg, depth - 1));
        let other = model(rng, cfg, depth - 1);
        return if rng.random_bool(0.5) {
            BlockExpr::changepoint(single, other)
        } else {
            BlockExpr::changepoint(other, single)
        };
    }
    basic(rng, cfg, depth)
}

fn basic<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig, depth: usize) -> BlockExpr {
    let kind = *cfg.vocabulary.choose(rng).expect("nonempty vocabulary");
    let mut b = BlockExpr::basic(kind);
    for spec in schema(kind).slots {
        let value = if cfg.samplable && kind == BlockKind::Grw {
            Some(small_scale(rng))
        } else {
            slot_value(rng, cfg, spec, depth)
        };
        if let Some(v) = value {
            b = b.with(spec.name, v);
        }
    }
    b
}

fn slot_value<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &RandomModelConfig,
    spec: &SlotSpec,
    depth: usize,
) -> Option<ParamValue> {
    if spec.domain == Domain::FunctionName {
        let names: Vec<&str> = FnRegistry::builtin().names().collect();
        return Some(ParamValue::NamedFunction(names.choose(rng)?.to_string()));
    }
    if spec.composable && depth >= 1 && rng.random_bool(cfg.nest_prob) {
        let sub = if cfg.samplable && spec.positive_trajectory {
            positive_model(rng, cfg)
        } else {
            model(rng, cfg, depth - 1)
        };
        return Some(ParamValue::SubModel(sub));
    }
    match rng.random_range(0..3) {
        0 => None,
        1 if spec.default_prior.is_some() => Some(ParamValue::PriorDraw),
        _ => Some(ParamValue::Literal(literal(rng, cfg, spec))),
    }
}

/// A sum of geometric random walks with small literal scales.
fn positive_model<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig) -> ModelExpr {
    let n = rng.random_range(1..=cfg.max_terms.min(2));
    ModelExpr::sum(
        (0..n)
            .map(|_| BlockExpr::basic(BlockKind::Grw).with("scale", small_scale(rng)))
            .collect(),
    )
}

fn small_scale<R: Rng + ?Sized>(rng: &mut R) -> ParamValue {
    ParamValue::Literal(rng.random_range(0.01..0.3))
}

fn literal<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomModelConfig, spec: &SlotSpec) -> f64 {
    match spec.domain {
        Domain::PositiveInteger => rng.random_range(1..=if cfg.samplable { 12 } else { 400 }) as f64,
        Domain::NonNegative if cfg.samplable => rng.random_range(0.05..2.0),
        Domain::Real if cfg.samplable && spec.name == "beta" => rng.random_range(-1.0..1.0),
        Domain::Real if cfg.samplable => rng.random_range(-3.0..3.0),
        Domain::NonNegative | Domain::Positive | Domain::Real => {
            let magnitude = match rng.random_range(0..4) {
                0 => rng.random_range(0..100) as f64,
                1 => rng.random::<f64>(),
                2 => rng.random::<f64>() * 10f64.powi(rng.random_range(-12..12)),
                _ => rng.random_range(0.0..1000.0),
            };
            if spec.domain == Domain::Real && rng.random_bool(0.5) {
                -magnitude
            } else if spec.domain == Domain::Positive && magnitude == 0.0 {
                1.0
            } else {
                magnitude
            }
        }
        Domain::FunctionName => unreachable!("handled by the caller"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_models_validate_and_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for samplable in [false, true] {
            let cfg = RandomModelConfig {
                samplable,
                ..RandomModelConfig::default()
            };
            for _ in 0..300 {
                let m = random_model(&mut rng, &cfg);
                assert!(m.validate().is_empty(), "{m}");
                assert!(m.depth() <= cfg.max_depth);
                assert!(m.terms().len() <= cfg.max_terms);
            }
        }
    }
}
