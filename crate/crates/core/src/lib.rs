//! A small language for composing structural time series models out of
//! generative blocks.
//!
//! Model text such as `noise(loc=rw(loc=ar1()), scale=0.5)` is parsed into a
//! [`ModelExpr`], which can be sampled from its prior predictive
//! distribution ([`sampler`]), scored ([`density`]) and enumerated
//! ([`search`]).

pub mod ast;
pub mod blocks;
pub mod density;
pub mod gen;
pub mod parser;
pub mod rng;
pub mod sampler;
pub mod search;
pub mod trace;

pub use ast::{BlockExpr, BlockKind, BlockPath, ModelExpr, ParamValue, Violation};
pub use blocks::FnRegistry;
pub use density::{check_consistency, log_density, DensityError, LogDensityReport};
pub use parser::{parse, parse_with, ParseError};
pub use rng::RngSpec;
pub use sampler::{sample_prior_predictive, sample_trace, SampleError, Sampler};
pub use search::{count, enumerate, EnumBudget, SlotPolicy};
pub use trace::{TimeWindow, Trace};
