//! Bounded enumeration of model sentences.
//!
//! A budget fixes the block vocabulary, the longest sum (at every level of
//! nesting), the deepest nesting and whether changepoints may appear.
//! Parameter slots are never given literal values: a slot is left at its
//! default, optionally set to `?`, or (when depth remains and the slot is
//! composable) bound to a nested model. Function slots range over the
//! registered function names.
//!
//! Addition is commutative, so each sum is emitted once, with its terms in
//! nondecreasing canonical order.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use thiserror::Error;

use crate::ast::{BlockExpr, BlockKind, ModelExpr, ParamValue};
use crate::blocks::{schema, Domain, FnRegistry, SlotDefault, SlotSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotPolicy {
    /// Slots keep their defaults unless bound to a nested model.
    DefaultsOnly,
    /// Slots with a default prior may additionally be set to `?`.
    DefaultsPlusPriorDraws,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BudgetError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("max_terms must be at least 1")]
    NoTerms,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumBudget {
    vocabulary: BTreeSet<BlockKind>,
    max_terms: usize,
    max_depth: usize,
    allow_changepoints: bool,
    slot_policy: SlotPolicy,
}

impl EnumBudget {
    /// Defaults-only budget without changepoints.
    pub fn new(
        vocabulary: impl IntoIterator<Item = BlockKind>,
        max_terms: usize,
        max_depth: usize,
    ) -> Result<Self, BudgetError> {
        let vocabulary: BTreeSet<_> = vocabulary.into_iter().collect();
        if vocabulary.is_empty() {
            return Err(BudgetError::EmptyVocabulary);
        }
        if max_terms == 0 {
            return Err(BudgetError::NoTerms);
        }
        Ok(Self {
            vocabulary,
            max_terms,
            max_depth,
            allow_changepoints: false,
            slot_policy: SlotPolicy::DefaultsOnly,
        })
    }

    pub fn with_changepoints(mut self, allow: bool) -> Self {
        self.allow_changepoints = allow;
        self
    }

    pub fn with_slot_policy(mut self, policy: SlotPolicy) -> Self {
        self.slot_policy = policy;
        self
    }

    pub fn vocabulary(&self) -> &BTreeSet<BlockKind> {
        &self.vocabulary
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn allow_changepoints(&self) -> bool {
        self.allow_changepoints
    }

    pub fn slot_policy(&self) -> SlotPolicy {
        self.slot_policy
    }

    fn offers_prior_draw(&self, spec: &SlotSpec) -> bool {
        self.slot_policy == SlotPolicy::DefaultsPlusPriorDraws
            && spec.default_prior.is_some()
            && spec.default != SlotDefault::PriorDraw
    }
}

/// Every model sentence within `budget`, in shortlex order of canonical
/// text, using the built-in function names.
///
/// The sentence set grows very quickly with the budget; use [`count`] to
/// size it first.
pub fn enumerate(budget: &EnumBudget) -> std::vec::IntoIter<ModelExpr> {
    enumerate_with(budget, FnRegistry::builtin())
}

pub fn enumerate_with(budget: &EnumBudget, registry: &FnRegistry) -> std::vec::IntoIter<ModelExpr> {
    let mut levels = Levels::new(budget, registry);
    for d in 0..=budget.max_depth {
        levels.build(d);
    }
    let mut top = levels.models.pop().expect("at least depth 0");
    top.sort_by(|(a, _), (b, _)| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    top.into_iter().map(|(_, m)| m).collect::<Vec<_>>().into_iter()
}

/// Number of sentences [`enumerate`] yields, computed without building them.
pub fn count(budget: &EnumBudget) -> BigUint {
    count_with(budget, FnRegistry::builtin())
}

pub fn count_with(budget: &EnumBudget, registry: &FnRegistry) -> BigUint {
    let fn_names = BigUint::from(registry.names().count());
    let one = BigUint::from(1u32);
    // (basic blocks, models) with depth <= d
    let mut prev: Option<(BigUint, BigUint)> = None;
    for _ in 0..=budget.max_depth {
        let mut basic = BigUint::ZERO;
        for &kind in &budget.vocabulary {
            let mut ways = one.clone();
            for spec in schema(kind).slots {
                let mut options = if spec.default == SlotDefault::Required {
                    BigUint::ZERO
                } else {
                    one.clone()
                };
                if spec.domain == Domain::FunctionName {
                    options += &fn_names;
                }
                if budget.offers_prior_draw(spec) {
                    options += &one;
                }
                if let (true, Some((_, models))) = (spec.composable, &prev) {
                    options += models;
                }
                ways *= options;
            }
            basic += ways;
        }
        let mut blocks = basic.clone();
        if let (true, Some((prev_basic, prev_models))) = (budget.allow_changepoints, &prev) {
            // cp(S, b) and cp(b, S) coincide when both sides are basic
            blocks += BigUint::from(2u32) * prev_models * prev_basic;
            blocks -= prev_basic * prev_basic;
        }
        let models = (1..=budget.max_terms)
            .map(|k| multichoose(&blocks, k))
            .sum::<BigUint>();
        prev = Some((basic, models));
    }
    prev.expect("at least depth 0").1
}

/// Multisets of size `k` drawn from `n` kinds: C(n + k - 1, k).
fn multichoose(n: &BigUint, k: usize) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n + BigUint::from(i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

struct Levels<'a> {
    budget: &'a EnumBudget,
    fn_names: Vec<String>,
    basics: Vec<Vec<(String, BlockExpr)>>,
    models: Vec<Vec<(String, ModelExpr)>>,
}

impl<'a> Levels<'a> {
    fn new(budget: &'a EnumBudget, registry: &FnRegistry) -> Self {
        Self {
            budget,
            fn_names: registry.names().map(str::to_string).collect(),
            basics: Vec::new(),
            models: Vec::new(),
        }
    }

    fn slot_options(&self, spec: &SlotSpec, d: usize) -> Vec<Option<ParamValue>> {
        let mut out = Vec::new();
        if spec.default != SlotDefault::Required {
            out.push(None);
        }
        if spec.domain == Domain::FunctionName {
            out.extend(
                self.fn_names
                    .iter()
                    .map(|n| Some(ParamValue::NamedFunction(n.clone()))),
            );
        }
        if self.budget.offers_prior_draw(spec) {
            out.push(Some(ParamValue::PriorDraw));
        }
        if spec.composable && d >= 1 {
            out.extend(
                self.models[d - 1]
                    .iter()
                    .map(|(_, m)| Some(ParamValue::SubModel(m.clone()))),
            );
        }
        out
    }

    fn build(&mut self, d: usize) {
        let mut basics = BTreeMap::new();
        for &kind in &self.budget.vocabulary {
            let mut partial = vec![BlockExpr::basic(kind)];
            for spec in schema(kind).slots {
                let options = self.slot_options(spec, d);
                partial = partial
                    .iter()
                    .flat_map(|b| {
                        options.iter().map(move |o| match o {
                            Some(v) => b.clone().with(spec.name, v.clone()),
                            None => b.clone(),
                        })
                    })
                    .collect();
            }
            basics.extend(partial.into_iter().map(|b| (b.to_string(), b)));
        }

        let mut blocks = basics.clone();
        if self.budget.allow_changepoints && d >= 1 {
            for (_, side) in &self.models[d - 1] {
                for (_, b) in &self.basics[d - 1] {
                    let single = ModelExpr::single(b.clone());
                    for cp in [
                        BlockExpr::changepoint(side.clone(), single.clone()),
                        BlockExpr::changepoint(single, side.clone()),
                    ] {
                        blocks.insert(cp.to_string(), cp);
                    }
                }
            }
        }
        let blocks: Vec<(String, BlockExpr)> = blocks.into_iter().collect();

        let mut models = Vec::new();
        let mut picks: Vec<usize> = Vec::new();
        extend_multisets(&blocks, self.budget.max_terms, 0, &mut picks, &mut models);

        self.basics.push(basics.into_iter().collect());
        self.models.push(models);
    }
}

/// Appends every nondecreasing index sequence of length 1..=max_terms that
/// extends `picks`.
fn extend_multisets(
    blocks: &[(String, BlockExpr)],
    max_terms: usize,
    start: usize,
    picks: &mut Vec<usize>,
    out: &mut Vec<(String, ModelExpr)>,
) {
    for i in start..blocks.len() {
        picks.push(i);
        let terms: Vec<BlockExpr> = picks.iter().map(|&j| blocks[j].1.clone()).collect();
        let text = picks
            .iter()
            .map(|&j| blocks[j].0.as_str())
            .collect::<Vec<_>>()
            .join(" + ");
        out.push((text, ModelExpr::sum(terms)));
        if picks.len() < max_terms {
            extend_multisets(blocks, max_terms, i, picks, out);
        }
        picks.pop();
    }
}
