//! Typed syntax tree for model sentences, structural validation and the
//! canonical printer.
//!
//! A model is a flat, nonempty sum of blocks. A block is either a basic
//! block (a kind plus named parameter bindings) or a changepoint joining two
//! models, at least one of which is a single basic block.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocks::{schema, Domain, FnRegistry, SlotDefault};

/// The closed set of block kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockKind {
    Rw,
    Grw,
    Ar1,
    Seasonal,
    Trend,
    Zero,
    NonMarkov,
    Noise,
}

impl BlockKind {
    pub const ALL: [BlockKind; 8] = [
        BlockKind::Rw,
        BlockKind::Grw,
        BlockKind::Ar1,
        BlockKind::Seasonal,
        BlockKind::Trend,
        BlockKind::Zero,
        BlockKind::NonMarkov,
        BlockKind::Noise,
    ];

    /// Surface name used in model text.
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Rw => "rw",
            BlockKind::Grw => "grw",
            BlockKind::Ar1 => "ar1",
            BlockKind::Seasonal => "seasonal",
            BlockKind::Trend => "trend",
            BlockKind::Zero => "zero",
            BlockKind::NonMarkov => "nonmarkov",
            BlockKind::Noise => "noise",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownBlockKind(pub String);

impl fmt::Display for UnknownBlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown block kind `{}`", self.0)
    }
}

impl std::error::Error for UnknownBlockKind {}

impl FromStr for BlockKind {
    type Err = UnknownBlockKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlockKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownBlockKind(s.to_string()))
    }
}

/// Keyword of the changepoint operator.
pub const CHANGEPOINT_KEYWORD: &str = "cp";

/// `[a-z][a-z0-9_-]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_' | '-'))
}

/// A sum of one or more blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelExpr {
    terms: Vec<BlockExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockExpr {
    Basic {
        kind: BlockKind,
        params: BTreeMap<String, ParamValue>,
    },
    Changepoint {
        left: ModelExpr,
        right: ModelExpr,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Literal(f64),
    /// `?`: draw from the slot's default prior.
    PriorDraw,
    SubModel(ModelExpr),
    /// Transition function of a non-Markov block.
    NamedFunction(String),
}

impl ModelExpr {
    /// A sum of the given terms. An empty sum is representable but fails
    /// validation.
    pub fn sum(terms: Vec<BlockExpr>) -> Self {
        Self { terms }
    }

    pub fn single(block: BlockExpr) -> Self {
        Self { terms: vec![block] }
    }

    pub fn terms(&self) -> &[BlockExpr] {
        &self.terms
    }

    /// The sole basic block, if this model is exactly one basic block.
    pub fn as_single_basic(&self) -> Option<&BlockExpr> {
        match self.terms.as_slice() {
            [b @ BlockExpr::Basic { .. }] => Some(b),
            _ => None,
        }
    }

    /// 0 without nesting, else one more than the deepest nested model.
    pub fn depth(&self) -> usize {
        self.terms.iter().map(BlockExpr::depth).max().unwrap_or(0)
    }

    /// Canonical text: terms joined by ` + `, parameters in schema order,
    /// literals in shortest round-trip form.
    pub fn print_canonical(&self) -> String {
        self.to_string()
    }

    pub fn contains_changepoint(&self) -> bool {
        self.terms.iter().any(|b| match b {
            BlockExpr::Changepoint { .. } => true,
            BlockExpr::Basic { params, .. } => params.values().any(|p| match p {
                ParamValue::SubModel(m) => m.contains_changepoint(),
                _ => false,
            }),
        })
    }

    /// Validates against the schemas and the built-in function registry.
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with(FnRegistry::builtin())
    }

    /// Every way in which this expression fails to be a sentence of the
    /// grammar. Empty means valid.
    pub fn validate_with(&self, registry: &FnRegistry) -> Vec<Violation> {
        let mut out = Vec::new();
        validate_model(self, &BlockPath::root(), registry, &mut out);
        out
    }
}

impl BlockExpr {
    /// A basic block with no explicit bindings.
    pub fn basic(kind: BlockKind) -> Self {
        BlockExpr::Basic {
            kind,
            params: BTreeMap::new(),
        }
    }

    /// Adds a binding to a basic block.
    ///
    /// Panics on a changepoint block.
    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        match &mut self {
            BlockExpr::Basic { params, .. } => {
                params.insert(name.to_string(), value);
            }
            BlockExpr::Changepoint { .. } => panic!("changepoints have no parameters"),
        }
        self
    }

    pub fn changepoint(left: ModelExpr, right: ModelExpr) -> Self {
        BlockExpr::Changepoint { left, right }
    }

    pub fn depth(&self) -> usize {
        match self {
            BlockExpr::Basic { params, .. } => params
                .values()
                .filter_map(|p| match p {
                    ParamValue::SubModel(m) => Some(1 + m.depth()),
                    _ => None,
                })
                .max()
                .unwrap_or(0),
            BlockExpr::Changepoint { left, right } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Violations local to this block: parameter names, domains, slot
    /// kinds and the changepoint shape rule. Nested models are not visited.
    pub fn local_violations(&self, registry: &FnRegistry) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            BlockExpr::Changepoint { left, right } => {
                if left.as_single_basic().is_none() && right.as_single_basic().is_none() {
                    out.push("changepoint requires one single-block side".to_string());
                }
            }
            BlockExpr::Basic { kind, params } => {
                let schema = schema(*kind);
                for name in params.keys() {
                    if schema.slot(name).is_none() {
                        out.push(format!("unknown parameter `{name}` for {kind}"));
                    }
                }
                for spec in schema.slots {
                    let Some(value) = params.get(spec.name) else {
                        if spec.default == SlotDefault::Required {
                            out.push(format!(
                                "missing required parameter `{}` for {kind}",
                                spec.name
                            ));
                        }
                        continue;
                    };
                    let slot = spec.name;
                    match value {
                        ParamValue::Literal(v) => {
                            if spec.domain == Domain::FunctionName {
                                out.push(format!(
                                    "parameter `{slot}` of {kind} expects a function name"
                                ));
                            } else if !spec.domain.contains(*v) {
                                out.push(format!(
                                    "parameter `{slot}` of {kind} must be {}, got {v}",
                                    spec.domain.describe()
                                ));
                            }
                        }
                        ParamValue::PriorDraw => {
                            if spec.default_prior.is_none() {
                                out.push(format!(
                                    "parameter `{slot}` of {kind} has no default prior"
                                ));
                            }
                        }
                        ParamValue::SubModel(_) => {
                            if !spec.composable {
                                out.push(format!(
                                    "parameter `{slot}` of {kind} does not accept a nested model"
                                ));
                            }
                        }
                        ParamValue::NamedFunction(name) => {
                            if spec.domain != Domain::FunctionName {
                                out.push(format!(
                                    "parameter `{slot}` of {kind} does not accept a function name"
                                ));
                            } else if !registry.contains(name) {
                                out.push(format!("function `{name}` is not registered"));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn validate_model(model: &ModelExpr, path: &BlockPath, registry: &FnRegistry, out: &mut Vec<Violation>) {
    if model.terms.is_empty() {
        out.push(Violation {
            path: path.clone(),
            message: "sum must have at least one term".to_string(),
        });
    }
    for (i, term) in model.terms.iter().enumerate() {
        let term_path = path.term(i);
        for message in term.local_violations(registry) {
            out.push(Violation {
                path: term_path.clone(),
                message,
            });
        }
        match term {
            BlockExpr::Basic { params, .. } => {
                for (name, value) in params {
                    if let ParamValue::SubModel(m) = value {
                        validate_model(m, &term_path.slot(name), registry, out);
                    }
                }
            }
            BlockExpr::Changepoint { left, right } => {
                validate_model(left, &term_path.left(), registry, out);
                validate_model(right, &term_path.right(), registry, out);
            }
        }
    }
}

/// One reason an expression is not a sentence of the grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: BlockPath,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_root() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Slash-separated address of a node, e.g. `0/loc/1` is the second term of
/// the model bound to `loc` in the first root term. The two sides of a
/// changepoint are addressed as `left` and `right`. The empty path is the
/// root model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockPath(String);

impl BlockPath {
    pub fn root() -> Self {
        Self(String::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn join(&self, seg: &str) -> Self {
        if self.0.is_empty() {
            Self(seg.to_string())
        } else {
            Self(format!("{}/{seg}", self.0))
        }
    }

    /// Term `i` of the model at this path.
    pub fn term(&self, i: usize) -> Self {
        self.join(&i.to_string())
    }

    /// Model bound to slot `name` of the block at this path.
    pub fn slot(&self, name: &str) -> Self {
        self.join(name)
    }

    pub fn left(&self) -> Self {
        self.join("left")
    }

    pub fn right(&self) -> Self {
        self.join("right")
    }
}

impl From<&str> for BlockPath {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl fmt::Display for BlockPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for ModelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{term}")?;
        }
        Ok(())
    }
}

impl fmt::Display for BlockExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockExpr::Changepoint { left, right } => {
                write!(f, "{CHANGEPOINT_KEYWORD}({left}, {right})")
            }
            BlockExpr::Basic { kind, params } => {
                write!(f, "{kind}(")?;
                let schema = schema(*kind);
                // schema order first, then any unknown names alphabetically
                let known = schema
                    .slots
                    .iter()
                    .filter_map(|s| params.get_key_value(s.name));
                let unknown = params.iter().filter(|(k, _)| schema.slot(k).is_none());
                for (i, (name, value)) in known.chain(unknown).enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{name}={value}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{}` on f64 is the shortest string that parses back exactly
            ParamValue::Literal(v) => write!(f, "{v}"),
            ParamValue::PriorDraw => f.write_str("?"),
            ParamValue::SubModel(m) => write!(f, "{m}"),
            ParamValue::NamedFunction(name) => f.write_str(name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rw() -> BlockExpr {
        BlockExpr::basic(BlockKind::Rw)
    }

    fn sub(b: BlockExpr) -> ParamValue {
        ParamValue::SubModel(ModelExpr::single(b))
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BlockKind::ALL {
            assert_eq!(k.name().parse::<BlockKind>().unwrap(), k);
        }
        assert!("cp".parse::<BlockKind>().is_err());
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("optim-null"));
        assert!(is_identifier("a_1"));
        assert!(!is_identifier("1a"));
        assert!(!is_identifier("Ab"));
        assert!(!is_identifier(""));
    }

    #[test]
    fn random_walk_under_noise_is_valid() {
        let m = ModelExpr::single(
            BlockExpr::basic(BlockKind::Noise)
                .with("loc", sub(rw().with("scale", ParamValue::Literal(0.1))))
                .with("scale", ParamValue::Literal(0.5)),
        );
        assert!(m.validate().is_empty());
        assert_eq!(m.print_canonical(), "noise(loc=rw(scale=0.1), scale=0.5)");
    }

    #[test]
    fn zero_is_valid() {
        let m = ModelExpr::single(BlockExpr::basic(BlockKind::Zero));
        assert!(m.validate().is_empty());
        assert_eq!(m.print_canonical(), "zero()");
        assert_eq!(m.depth(), 0);
    }

    #[test]
    fn changepoint_of_two_sums_is_rejected() {
        let two = |k| {
            ModelExpr::sum(vec![BlockExpr::basic(k), BlockExpr::basic(k)])
        };
        let m = ModelExpr::single(BlockExpr::changepoint(
            two(BlockKind::Rw),
            two(BlockKind::Trend),
        ));
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "changepoint requires one single-block side");
        assert_eq!(v[0].path.as_str(), "0");

        // either side being a single block is enough
        let ok = ModelExpr::single(BlockExpr::changepoint(
            two(BlockKind::Rw),
            ModelExpr::single(BlockExpr::basic(BlockKind::Trend)),
        ));
        assert!(ok.validate().is_empty());
    }

    #[test]
    fn flat_sum_prints_with_plus() {
        let m = ModelExpr::sum(vec![
            BlockExpr::basic(BlockKind::Seasonal).with("period", ParamValue::Literal(7.0)),
            BlockExpr::basic(BlockKind::Trend)
                .with("a1", ParamValue::Literal(1.0))
                .with("a0", ParamValue::Literal(0.0)),
        ]);
        assert_eq!(m.print_canonical(), "seasonal(period=7) + trend(a0=0, a1=1)");
    }

    #[test]
    fn depths() {
        let m = ModelExpr::single(BlockExpr::basic(BlockKind::Noise).with("loc", sub(rw())));
        assert_eq!(m.depth(), 1);
        let llt = ModelExpr::single(
            BlockExpr::basic(BlockKind::Noise).with("loc", sub(rw().with("loc", sub(rw())))),
        );
        assert_eq!(llt.depth(), 2);
        let cp = ModelExpr::single(BlockExpr::changepoint(
            ModelExpr::single(rw()),
            ModelExpr::single(rw()),
        ));
        assert_eq!(cp.depth(), 1);
    }

    #[test]
    fn slot_rules() {
        let check = |b: BlockExpr| ModelExpr::single(b).validate();
        let msg = |b: BlockExpr| check(b).into_iter().map(|v| v.message).collect::<Vec<_>>();

        assert_eq!(
            msg(rw().with("bogus", ParamValue::Literal(1.0))),
            ["unknown parameter `bogus` for rw"]
        );
        assert_eq!(
            msg(rw().with("scale", ParamValue::Literal(-1.0))),
            ["parameter `scale` of rw must be a nonnegative number, got -1"]
        );
        assert!(check(rw().with("scale", ParamValue::Literal(0.0))).is_empty());
        assert_eq!(
            msg(BlockExpr::basic(BlockKind::Trend).with("a0", sub(rw()))),
            ["parameter `a0` of trend does not accept a nested model"]
        );
        assert_eq!(
            msg(BlockExpr::basic(BlockKind::Seasonal).with("period", ParamValue::PriorDraw)),
            ["parameter `period` of seasonal has no default prior"]
        );
        assert_eq!(
            msg(BlockExpr::basic(BlockKind::Seasonal).with("period", ParamValue::Literal(2.5))),
            ["parameter `period` of seasonal must be an integer >= 1, got 2.5"]
        );
        assert_eq!(
            msg(BlockExpr::basic(BlockKind::NonMarkov)),
            ["missing required parameter `fn` for nonmarkov"]
        );
        assert_eq!(
            msg(BlockExpr::basic(BlockKind::NonMarkov)
                .with("fn", ParamValue::NamedFunction("nope".into()))),
            ["function `nope` is not registered"]
        );
        assert_eq!(
            msg(rw().with("loc", ParamValue::NamedFunction("optim-null".into()))),
            ["parameter `loc` of rw does not accept a function name"]
        );
        assert_eq!(
            msg(BlockExpr::basic(BlockKind::NonMarkov).with("fn", ParamValue::Literal(1.0))),
            ["parameter `fn` of nonmarkov expects a function name"]
        );
        assert_eq!(
            msg(rw().with("loc", ParamValue::Literal(f64::NAN))),
            ["parameter `loc` of rw must be a real number, got NaN"]
        );
        assert_eq!(
            ModelExpr::sum(vec![]).validate()[0].message,
            "sum must have at least one term"
        );
    }

    #[test]
    fn nested_violation_paths() {
        let m = ModelExpr::sum(vec![
            BlockExpr::basic(BlockKind::Zero),
            BlockExpr::basic(BlockKind::Noise)
                .with("loc", sub(rw().with("scale", ParamValue::Literal(-2.0)))),
        ]);
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path.as_str(), "1/loc/0");
    }

    #[test]
    fn unknown_params_print_after_schema_slots() {
        let b = rw()
            .with("zz", ParamValue::Literal(1.0))
            .with("scale", ParamValue::Literal(2.0))
            .with("aa", ParamValue::PriorDraw);
        assert_eq!(b.to_string(), "rw(scale=2, aa=?, zz=1)");
    }
}
