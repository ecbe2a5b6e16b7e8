use proptest::prelude::*;
use sdlc_sim::scenario::build_paper_scenario;
use sdlc_sim::stochastic::{Distribution, RngStream};

/// Analytic CDF of the triangular law, written out independently of the sampler.
fn triangular_cdf(x: f64, a: f64, c: f64, b: f64) -> f64 {
    if x <= a {
        0.0
    } else if x <= c {
        (x - a).powi(2) / ((b - a) * (c - a))
    } else if x < b {
        1.0 - (b - x).powi(2) / ((b - a) * (b - c))
    } else {
        1.0
    }
}

fn draws(d: &Distribution, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0);
    (0..n).map(|_| d.sample(&mut rng).real().unwrap()).collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn triangular_ks_statistic() {
    let d = Distribution::triangular(30.0, 35.0, 40.0).unwrap();
    let mut xs = draws(&d, 1_000_000, 11);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = triangular_cdf(x, 30.0, 35.0, 40.0);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.002, "KS statistic {ks}");
}

#[test]
fn empirical_moments_match_closed_form() {
    let (m, v) = mean_var(&draws(&Distribution::triangular(30.0, 35.0, 40.0).unwrap(), 1_000_000, 5));
    assert!((m - 35.0).abs() < 0.05, "mean {m}");
    assert!((v - 25.0 / 6.0).abs() < 0.05, "variance {v}");
    for phase in build_paper_scenario().phases {
        let law = &phase.duration_per_class[0];
        let (em, ev) = mean_var(&draws(law, 1_000_000, 6));
        let (m, v) = law.moments().unwrap();
        assert!((em - m).abs() < 0.05, "{}: mean {em} vs {m}", phase.name);
        assert!((ev - v).abs() < 0.05, "{}: variance {ev} vs {v}", phase.name);
    }
}

#[test]
fn class_mix_frequencies() {
    let mix = build_paper_scenario().mix();
    let mut rng = RngStream::new(42, 9);
    let n = 1_000_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[mix.sample(&mut rng).index().unwrap()] += 1;
    }
    for (count, expected) in counts.iter().zip([0.7, 0.25, 0.05]) {
        let f = *count as f64 / n as f64;
        assert!((f - expected).abs() <= 0.003, "frequency {f} vs {expected}");
    }
}

proptest! {
    #[test]
    fn samples_stay_in_support(
        a in -100.0f64..100.0,
        width in 0.001f64..50.0,
        mode_frac in 0.0f64..=1.0,
        u in 0.0f64..1.0,
    ) {
        let b = a + width;
        let c = (a + mode_frac * width).min(b);
        let tri = Distribution::triangular(a, c, b).unwrap();
        let x = tri.sample_unit(u).real().unwrap();
        prop_assert!(a <= x && x <= b, "{x} outside [{a}, {b}]");
        let uni = Distribution::uniform(a, b).unwrap();
        let y = uni.sample_unit(u).real().unwrap();
        prop_assert!(a <= y && y <= b);
    }

    #[test]
    fn triangular_sampler_inverts_the_cdf(u in 0.0f64..1.0) {
        let x = Distribution::triangular(30.0, 35.0, 40.0).unwrap().sample_unit(u).real().unwrap();
        prop_assert!((triangular_cdf(x, 30.0, 35.0, 40.0) - u).abs() < 1e-9);
    }

    #[test]
    fn pdf_integrates_to_one(a in 0.0f64..10.0, width in 0.5f64..10.0, mode_frac in 0.0f64..=1.0) {
        let b = a + width;
        let c = a + mode_frac * width;
        let d = Distribution::triangular(a, c, b).unwrap();
        let steps = 20_000;
        let h = width / steps as f64;
        // Midpoint rule.
        let area: f64 = (0..steps).map(|i| d.pdf(a + (i as f64 + 0.5) * h).unwrap() * h).sum();
        prop_assert!((area - 1.0).abs() < 1e-3, "area {area}");
    }
}
