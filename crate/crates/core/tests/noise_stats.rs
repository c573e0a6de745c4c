use proptest::prelude::*;
use vortlab_core::noise::{check_regularity, curl_growth_rate, sample_curl_increment, ForcedModes};
use vortlab_core::spectral::sobolev_norm;
use vortlab_core::{FourierGrid, NoiseSpectrum, RngStream};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn unit_mode_increment_variance() {
    let g = FourierGrid::new(16).unwrap();
    let spec = NoiseSpectrum::new(6.0, 4.5, 1.0, 1.0).unwrap();
    let mut rng = RngStream::new(2024, 0);
    let draws = 100_000;
    let x: Vec<f64> = (0..draws)
        .map(|_| sample_curl_increment(&spec, &g, 0.25, &mut rng).unwrap().real_mode(1, 0).0)
        .collect();
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let (m2, v2) = mean_var(&sq);
    let se = (v2 / draws as f64).sqrt();
    assert!((m2 - 0.25).abs() <= 3.0 * se, "{m2} vs 0.25, se {se}");
}

#[test]
fn increments_are_additive_in_law() {
    let g = FourierGrid::new(16).unwrap();
    let spec = NoiseSpectrum::new(6.0, 4.5, 2.0, 0.7).unwrap();
    let modes = ForcedModes::new(&spec, &g).unwrap();
    let (dt1, dt2) = (0.3, 0.45);
    let mut rng = RngStream::new(77, 3);
    let draws = 100_000;
    for &(k1, k2) in modes.wavevectors() {
        let kmod = ((k1 * k1 + k2 * k2) as f64).sqrt();
        let v = spec.curl_rate(kmod) * (dt1 + dt2);
        let mut stat = 0.0;
        for _ in 0..draws {
            let a = sample_curl_increment(&spec, &g, dt1, &mut rng).unwrap().real_mode(k1, k2);
            let b = sample_curl_increment(&spec, &g, dt2, &mut rng).unwrap().real_mode(k1, k2);
            stat += (a.0 + b.0).powi(2) / v;
        }
        // χ²_n with n = 1e5 is normal to excellent accuracy; two-sided 1% level
        let z = (stat - draws as f64) / (2.0 * draws as f64).sqrt();
        assert!(z.abs() < 2.576, "mode ({k1},{k2}): z = {z}");
    }
}

#[test]
fn sobolev_growth_rate_by_monte_carlo() {
    let g = FourierGrid::new(32).unwrap();
    let spec = NoiseSpectrum::default();
    let a = 3.0;
    let mut rng = RngStream::new(5, 5);
    let paths = 10_000;
    let est: f64 = (0..paths)
        .map(|_| sobolev_norm(&sample_curl_increment(&spec, &g, 1.0, &mut rng).unwrap(), a).powi(2))
        .sum::<f64>()
        / paths as f64;
    let s_a = curl_growth_rate(&spec, a);
    assert!((est / s_a - 1.0).abs() <= 0.05, "{est} vs {s_a}");
}

#[test]
fn regularity_examples() {
    let spec = NoiseSpectrum::default();
    assert!(check_regularity(&spec, 4.5).convergent);
    let rough = NoiseSpectrum { alpha: 4.0, ..spec };
    assert!(!check_regularity(&rough, 4.5).convergent);
    let unit = NoiseSpectrum::new(6.0, 4.5, 1.0, 1.0).unwrap();
    assert_eq!(check_regularity(&unit, 0.0).finite_sum, 4.0);
}

#[test]
fn identical_streams_reproduce_increments() {
    let g = FourierGrid::new(32).unwrap();
    let spec = NoiseSpectrum::default();
    let a = sample_curl_increment(&spec, &g, 0.1, &mut RngStream::at(1, 2, 40)).unwrap();
    let b = sample_curl_increment(&spec, &g, 0.1, &mut RngStream::at(1, 2, 40)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn regularity_is_monotone_in_h(alpha in 1.5f64..12.0, h in 0.0f64..10.0, lower in 0.0f64..1.0) {
        let spec = NoiseSpectrum { alpha, h: 0.0, kcut: 5.0, amplitude: 1.0 };
        if check_regularity(&spec, h).convergent {
            prop_assert!(check_regularity(&spec, h * lower).convergent);
        }
    }

    #[test]
    fn growth_rate_matches_curl_weighted_sum(alpha in 2.0f64..9.0, kcut in 1.0f64..8.0, sigma in 0.0f64..3.0) {
        let spec = NoiseSpectrum { alpha, h: 0.0, kcut, amplitude: sigma };
        let s0 = curl_growth_rate(&spec, 0.0);
        let r1 = check_regularity(&spec, 1.0).finite_sum;
        prop_assert!((s0 - r1).abs() <= 1e-12 * s0.max(1e-300));
    }
}
