mod common;

use common::{chi_square_uniform_p, mean_var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stsl_core::gen::{random_model, RandomModelConfig};
use stsl_core::trace::GlobalKey;
use stsl_core::{
    log_density, parse, sample_prior_predictive, sample_trace, BlockPath, RngSpec, Sampler, TimeWindow,
};

fn draws(src: &str, window: TimeWindow, seed: u64, n: usize) -> Vec<stsl_core::Trace> {
    sample_prior_predictive(&parse(src).unwrap(), window, RngSpec::new(seed, 0), n).unwrap()
}

#[test]
fn random_walk_increments_are_standard_normal() {
    let traces = draws("rw(scale=1)", TimeWindow::with_len(1000), 11, 2000);
    let increments: Vec<f64> = traces
        .iter()
        .flat_map(|tr| tr.observed.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
        .collect();
    let (mean, var) = mean_var(&increments);
    assert!(mean.abs() <= 0.08, "mean {mean}");
    assert!((0.95..=1.05).contains(&var), "variance {var}");
}

#[test]
fn sum_of_noises_adds_variances() {
    let traces = draws("noise(scale=0.6) + noise(loc=2, scale=0.8)", TimeWindow::with_len(1), 12, 10_000);
    let ys: Vec<f64> = traces.iter().map(|tr| tr.observed[0]).collect();
    let (mean, var) = mean_var(&ys);
    assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
    assert!((var - 1.0).abs() <= 0.05, "variance {var}");
}

#[test]
fn changepoint_time_is_uniform_on_interior() {
    let model = parse("cp(trend(a0=0, a1=0), trend(a0=1, a1=0))").unwrap();
    let window = TimeWindow::with_len(12);
    let path = BlockPath::from("0");
    let mut counts = [0u64; 10];
    for tr in sample_prior_predictive(&model, window, RngSpec::new(13, 0), 10_000).unwrap() {
        let switch = tr.changepoints[&path];
        assert!((2..=11).contains(&switch));
        counts[switch as usize - 2] += 1;
        for (i, &y) in tr.observed.iter().enumerate() {
            assert_eq!(y, if (i as u64) + 1 < switch { 0.0 } else { 1.0 });
        }
        let report = log_density(&model, window, &tr).unwrap();
        assert_eq!(report.per_changepoint[&path], -(10f64.ln()));
    }
    let p = chi_square_uniform_p(&counts);
    assert!(p > 0.001, "p = {p}, counts {counts:?}");
}

#[test]
fn streams_are_uncorrelated() {
    let ys: Vec<f64> = draws("noise()", TimeWindow::with_len(1), 14, 10_001)
        .iter()
        .map(|tr| tr.observed[0])
        .collect();
    let (a, b) = (&ys[..10_000], &ys[1..]);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 9_999.0;
    let r = cov / (va * vb).sqrt();
    assert!(r.abs() < 0.05, "r = {r}");
}

#[test]
fn stochastic_volatility_standardizes() {
    let traces = draws("noise(loc=zero(), scale=grw(scale=0.1))", TimeWindow::with_len(100), 15, 200);
    let vol = BlockPath::from("0/scale/0");
    let standardized: Vec<f64> = traces
        .iter()
        .flat_map(|tr| {
            tr.observed
                .iter()
                .zip(&tr.latents[&vol])
                .map(|(y, s)| y / s)
                .collect::<Vec<_>>()
        })
        .collect();
    let (mean, var) = mean_var(&standardized);
    assert!(mean.abs() < 0.02, "mean {mean}");
    assert!((var - 1.0).abs() < 0.03, "variance {var}");
}

#[test]
fn seasonal_repeats_with_its_period() {
    for period in [1usize, 2, 7, 12, 30] {
        let src = format!("seasonal(period={period}, amplitude=?, phase=?)");
        let window = TimeWindow::new(-40, 150).unwrap();
        for tr in draws(&src, window, period as u64, 20) {
            let y = &tr.observed;
            for i in 0..y.len() - period {
                assert!((y[i + period] - y[i]).abs() <= 1e-9, "{src} at {i}");
            }
        }
    }
}

#[test]
fn zero_is_identically_zero() {
    for tr in draws("zero()", TimeWindow::new(-3, 300).unwrap(), 16, 5) {
        assert!(tr.observed.iter().all(|&y| y == 0.0));
        assert!(tr.noises.is_empty());
    }
}

#[test]
fn trend_is_exact() {
    let window = TimeWindow::new(-20, 80).unwrap();
    for tr in draws("trend(a0=1.5, a1=-0.25)", window, 17, 2) {
        for (t, y) in window.times().zip(&tr.observed) {
            assert_eq!(*y, 1.5 - 0.25 * t as f64);
        }
    }
    for tr in draws("trend()", window, 18, 10) {
        let a0 = tr.globals[&GlobalKey::new(BlockPath::from("0"), "a0")];
        let a1 = tr.globals[&GlobalKey::new(BlockPath::from("0"), "a1")];
        for (t, y) in window.times().zip(&tr.observed) {
            assert_eq!(*y, a0 + a1 * t as f64);
        }
    }
}

#[test]
fn geometric_random_walk_stays_positive() {
    for tr in draws("grw()", TimeWindow::with_len(500), 19, 1000) {
        assert!(tr.observed.iter().all(|&y| y > 0.0 && y.is_finite()));
    }
}

#[test]
fn random_walk_is_unit_root_autoregression() {
    let window = TimeWindow::new(5, 300).unwrap();
    for seed in 0..5 {
        let spec = RngSpec::new(seed, 3);
        let rw = sample_trace(&parse("rw(scale=0.7)").unwrap(), window, spec).unwrap();
        let ar = sample_trace(&parse("ar1(beta=1, scale=0.7)").unwrap(), window, spec).unwrap();
        assert_eq!(rw.observed, ar.observed);
    }
}

#[test]
fn sampling_is_reproducible_and_replayable() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let cfg = RandomModelConfig {
        samplable: true,
        ..RandomModelConfig::default()
    };
    let sampler = Sampler::default();
    let window = TimeWindow::new(-4, 40).unwrap();
    for i in 0..200 {
        let model = random_model(&mut rng, &cfg);
        let spec = RngSpec::new(i, 7);
        let Ok(first) = sample_trace(&model, window, spec) else {
            continue;
        };
        assert_eq!(sample_trace(&model, window, spec).unwrap(), first, "{model}");
        assert_eq!(sampler.replay(&model, window, &first.noises).unwrap(), first, "{model}");
        if !first.noises.is_empty() {
            assert_ne!(sample_trace(&model, window, spec.offset(1)).unwrap().noises, first.noises);
        }
    }
}

#[test]
fn corpus_models_sample_finite_series() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 8);
    for file in files {
        let model = parse(&std::fs::read_to_string(&file).unwrap()).unwrap();
        assert!(model.validate().is_empty());
        for tr in sample_prior_predictive(&model, TimeWindow::with_len(200), RngSpec::new(1, 0), 8).unwrap() {
            assert!(tr.observed.iter().all(|y| y.is_finite()), "{}", file.display());
        }
    }
}

#[test]
fn traces_survive_json_exactly() {
    let model = parse("noise(loc=cp(rw(loc=?), ar1()), scale=grw(scale=0.2))").unwrap();
    for seed in 0..20 {
        let tr = sample_trace(&model, TimeWindow::new(-7, 60).unwrap(), RngSpec::new(seed, 0)).unwrap();
        let text = serde_json::to_string(&tr).unwrap();
        assert_eq!(serde_json::from_str::<stsl_core::Trace>(&text).unwrap(), tr);
    }
}
