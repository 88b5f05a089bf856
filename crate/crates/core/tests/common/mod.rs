//! Reference computations that do not share code with the library.
//!
//! Shared with the CLI crate's acceptance suite, so every helper here only
//! depends on `stsl-core`'s public types and `statrs`.
#![allow(dead_code)]

use std::collections::BTreeSet;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use stsl_core::blocks::Prior;
use stsl_core::trace::{Draw, Trace};

/// ln(2π)/2, written out rather than taken from the library.
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

pub fn std_normal_log_pdf(z: f64) -> f64 {
    -HALF_LN_TAU - 0.5 * z * z
}

/// Log density of a trace computed only from its primitive noise record:
/// every latent value is an affine (or exponentiated) image of one recorded
/// deviate, so the joint density is the product of deviate densities times
/// the Jacobian of each map.
pub fn noise_record_log_density(trace: &Trace) -> f64 {
    trace
        .noises
        .iter()
        .map(|entry| match &entry.draw {
            Draw::Normal { z, scale } => std_normal_log_pdf(*z) - scale.ln(),
            Draw::Prior { z, prior } => {
                // u = z (normal prior) or u = exp(z) (log-normal prior)
                let jacobian = match prior {
                    Prior::Normal => 0.0,
                    Prior::LogNormal => *z,
                };
                std_normal_log_pdf(*z) - jacobian
            }
            Draw::DiscreteUniform { low, high, .. } => -(((high - low + 1) as f64).ln()),
        })
        .sum()
}

/// Relative closeness, measured against max(1, |a|, |b|).
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * 1f64.max(a.abs()).max(b.abs())
}

/// Pearson chi-square goodness-of-fit p-value against equal expected counts.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Slot table of the enumeration oracle: (slot, takes `?` as an extra
/// option, accepts a nested model). Only blocks whose slots all have
/// defaults are listed.
fn oracle_slots(kind: &str) -> &'static [(&'static str, bool, bool)] {
    match kind {
        "zero" => &[],
        "rw" => &[("loc", true, true), ("scale", true, true)],
        // both coefficients already default to `?`
        "trend" => &[("a0", false, false), ("a1", false, false)],
        "seasonal" => &[
            ("period", false, false),
            ("amplitude", true, false),
            ("phase", true, false),
        ],
        other => panic!("no oracle table for {other}"),
    }
}

/// Every sentence derivable from the grammar within the budget, as canonical
/// text, built by literally applying the production rules: ordered term
/// sequences are generated and then collapsed by sorting their terms.
///
/// Gives up (returns `None`) once any intermediate set exceeds `cap`; every
/// intermediate set embeds into the final one, so the final set is then
/// larger than `cap` as well.
pub fn derive_sentences(
    vocabulary: &[&str],
    max_terms: usize,
    max_depth: usize,
    changepoints: bool,
    prior_draws: bool,
    cap: usize,
) -> Option<BTreeSet<String>> {
    let mut prev_models: Option<BTreeSet<String>> = None;
    let mut prev_basics: BTreeSet<String> = BTreeSet::new();
    for _depth in 0..=max_depth {
        let mut basics = BTreeSet::new();
        for kind in vocabulary {
            // partial argument lists
            let mut partial: Vec<Vec<String>> = vec![Vec::new()];
            for &(slot, draw, nests) in oracle_slots(kind) {
                let mut next = Vec::new();
                for args in &partial {
                    next.push(args.clone());
                    if prior_draws && draw {
                        let mut a = args.clone();
                        a.push(format!("{slot}=?"));
                        next.push(a);
                    }
                    if let (true, Some(models)) = (nests, &prev_models) {
                        for m in models {
                            let mut a = args.clone();
                            a.push(format!("{slot}={m}"));
                            next.push(a);
                        }
                    }
                }
                partial = next;
                if partial.len() > cap {
                    return None;
                }
            }
            for args in partial {
                basics.insert(format!("{kind}({})", args.join(", ")));
            }
        }
        let mut blocks = basics.clone();
        if let (true, Some(models)) = (changepoints, &prev_models) {
            for side in models {
                for single in &prev_basics {
                    blocks.insert(format!("cp({side}, {single})"));
                    blocks.insert(format!("cp({single}, {side})"));
                }
            }
        }
        if blocks.len() > cap {
            return None;
        }
        let blocks: Vec<String> = blocks.into_iter().collect();
        let mut models = BTreeSet::new();
        let mut sequences: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..max_terms {
            let mut longer = Vec::new();
            for seq in &sequences {
                for i in 0..blocks.len() {
                    let mut s = seq.clone();
                    s.push(i);
                    let mut terms: Vec<&str> = s.iter().map(|&j| blocks[j].as_str()).collect();
                    terms.sort();
                    models.insert(terms.join(" + "));
                    longer.push(s);
                }
            }
            if models.len() > cap {
                return None;
            }
            sequences = longer;
        }
        prev_basics = basics;
        prev_models = Some(models);
    }
    prev_models
}
