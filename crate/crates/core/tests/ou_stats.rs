use vortlab_core::noise::curl_growth_rate;
use vortlab_core::ou::{linear_growth_ratio, stationary_sample, OUState, OuStepper};
use vortlab_core::spectral::sobolev_norm;
use vortlab_core::{FourierGrid, NoiseSpectrum, RngStream, ScalarField};

/// σ c_k |k| = 1 on the four unit wavevectors.
fn unit_spectrum() -> NoiseSpectrum {
    NoiseSpectrum::new(6.0, 4.5, 1.0, 1.0).unwrap()
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn stationary_mode_variance() {
    let g = FourierGrid::new(16).unwrap();
    let mut rng = RngStream::new(8, 1);
    let sq: Vec<f64> = (0..100_000)
        .map(|_| stationary_sample(&unit_spectrum(), &g, 2.0, &mut rng).unwrap().zeta.real_mode(0, 1).1.powi(2))
        .collect();
    let (m, se) = mean_se(&sq);
    assert!((m - 0.25).abs() <= 3.0 * se, "{m} ± {se}");
}

#[test]
fn stationary_sobolev_moment() {
    let g = FourierGrid::new(32).unwrap();
    let spec = NoiseSpectrum::default();
    let (lambda, a) = (1.5, 3.0);
    let mut stepper = OuStepper::new(&spec, &g).unwrap();
    let mut rng = RngStream::new(10, 10);
    let est = (0..10_000)
        .map(|_| sobolev_norm(&stepper.stationary(&g, lambda, &mut rng).unwrap().zeta, a).powi(2))
        .sum::<f64>()
        / 1e4;
    let exact = curl_growth_rate(&spec, a) / (2.0 * lambda);
    assert!((est / exact - 1.0).abs() <= 0.05, "{est} vs {exact}");
}

/// Law of `ζ(1)` from `ζ(0) = 0` does not depend on the step.
#[test]
fn exact_transitions_are_partition_independent() {
    let g = FourierGrid::new(16).unwrap();
    let spec = unit_spectrum();
    let lambda = 1.0;
    let paths = 10_000;
    let sample = |dt: f64, stream: u64| -> Vec<[f64; 4]> {
        let mut stepper = OuStepper::new(&spec, &g).unwrap();
        let mut rng = RngStream::new(99, stream);
        let steps = (1.0 / dt).round() as usize;
        (0..paths)
            .map(|_| {
                let mut s = OUState {
                    zeta: ScalarField::zeros(&g),
                    lambda,
                    time: 0.0,
                };
                for _ in 0..steps {
                    stepper.step(&mut s, dt, &mut rng).unwrap();
                }
                let (a, b) = s.zeta.real_mode(1, 0);
                let (c, d) = s.zeta.real_mode(0, 1);
                [a, b, c, d]
            })
            .collect()
    };
    let coarse = sample(0.1, 1);
    let fine = sample(0.01, 2);
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    for c in 0..4 {
        let sq_a: Vec<f64> = coarse.iter().map(|r| r[c] * r[c]).collect();
        let sq_b: Vec<f64> = fine.iter().map(|r| r[c] * r[c]).collect();
        let (ma, sa) = mean_se(&sq_a);
        let (mb, sb) = mean_se(&sq_b);
        assert!((ma - mb).abs() <= 3.0 * sa.hypot(sb), "coefficient {c}: {ma} vs {mb}");
        assert!((ma - exact).abs() <= 3.0 * sa);
    }
}

/// Pools the four real coefficients of the `|k| = 1` shell, which are
/// independent copies of one scalar OU process with unit forcing.
#[test]
fn ergodic_time_average_of_unit_shell() {
    let g = FourierGrid::new(16).unwrap();
    let spec = unit_spectrum();
    let lambda = 1.0;
    let dt = 0.05;
    let mut stepper = OuStepper::new(&spec, &g).unwrap();
    let mut rng = RngStream::new(31, 0);
    let mut s = stepper.stationary(&g, lambda, &mut rng).unwrap();
    let steps = (2000.0 / dt) as usize;
    let mut sum_sq = 0.0;
    let mut sum_h = 0.0;
    let mut times = Vec::new();
    let mut sob = Vec::new();
    for i in 0..steps {
        stepper.step(&mut s, dt, &mut rng).unwrap();
        let (a, b) = s.zeta.real_mode(1, 0);
        let (c, d) = s.zeta.real_mode(0, 1);
        sum_sq += (a * a + b * b + c * c + d * d) / 4.0;
        let h = sobolev_norm(&s.zeta, 3.0);
        sum_h += h;
        if i % 100 == 0 {
            times.push(s.time);
            sob.push(h);
        }
    }
    let avg_sq = sum_sq / steps as f64;
    assert!((avg_sq / (1.0 / (2.0 * lambda)) - 1.0).abs() <= 0.05, "{avg_sq}");

    // E‖ζ‖_{H^a} by independent stationary draws
    let mut rng2 = RngStream::new(32, 0);
    let reference = (0..20_000)
        .map(|_| sobolev_norm(&stepper.stationary(&g, lambda, &mut rng2).unwrap().zeta, 3.0))
        .sum::<f64>()
        / 20_000.0;
    let avg_h = sum_h / steps as f64;
    assert!((avg_h / reference - 1.0).abs() <= 0.05, "{avg_h} vs {reference}");

    let r = linear_growth_ratio(&times, &sob);
    assert!(r.is_finite() && r > 0.0);
}
