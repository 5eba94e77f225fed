use hybridcast::wavelet::{
    denoise, denoise_with_threshold, dwt_forward, dwt_inverse, soft_threshold, Extension, Family, ThresholdRule,
    WaveletSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn spec(family: Family, level: usize, extension: Extension) -> WaveletSpec {
    WaveletSpec {
        family,
        level,
        threshold_rule: ThresholdRule::UniversalSoft,
        extension,
    }
}

fn energy(x: impl IntoIterator<Item = f64>) -> f64 {
    x.into_iter().map(|v| v * v).sum()
}

/// One periodized analysis step written as an explicit N×N matrix.
fn analysis_matrix(h: &[f64], n: usize) -> Vec<Vec<f64>> {
    let f = h.len();
    let g: Vec<f64> = (0..f).map(|k| if k % 2 == 0 { h[f - 1 - k] } else { -h[f - 1 - k] }).collect();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n / 2 {
        for k in 0..f {
            w[i][(2 * i + k) % n] += h[k];
            w[n / 2 + i][(2 * i + k) % n] += g[k];
        }
    }
    w
}

fn noisy_sine(n: usize, sigma: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let clean: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 64.0).sin()).collect();
    let noisy = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
    (clean, noisy)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn periodized_step_matches_matrix_oracle() {
    for family in [Family::Coiflet3, Family::Daubechies4] {
        let n = 64;
        let w = analysis_matrix(family.scaling_filter(), n);
        // Orthogonality: W·Wᵀ = I.
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| w[i][k] * w[j][k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9, "{family:?} {i} {j}");
            }
        }
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 23) as f64).sin()).collect();
        let d = dwt_forward(&x, &spec(family, 1, Extension::Periodization)).unwrap();
        for i in 0..n / 2 {
            let a: f64 = (0..n).map(|k| w[i][k] * x[k]).sum();
            let dd: f64 = (0..n).map(|k| w[n / 2 + i][k] * x[k]).sum();
            assert!((d.approx[i] - a).abs() < 1e-12);
            assert!((d.details[0][i] - dd).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_and_constant_inputs() {
    let s = spec(Family::Coiflet3, 3, Extension::Symmetric);
    let d = dwt_forward(&[0.0; 100], &s).unwrap();
    assert!(d.coefficients().all(|c| c == 0.0));
    let d = dwt_forward(&[2.5; 100], &s).unwrap();
    for band in &d.details {
        assert!(band.iter().all(|c| c.abs() < 1e-9));
    }
    let mut zeroed = d.clone();
    zeroed.details.iter_mut().for_each(|b| b.iter_mut().for_each(|c| *c = 0.0));
    let back = dwt_inverse(&zeroed, &s).unwrap();
    assert!(back.iter().all(|v| (v - 2.5).abs() < 1e-9));
}

#[test]
fn denoising_reduces_error_on_noisy_sine() {
    let (clean, noisy) = noisy_sine(512, 0.1, 5);
    for family in [Family::Coiflet3, Family::Daubechies4] {
        let out = denoise(&noisy, &spec(family, 3, Extension::Symmetric)).unwrap();
        assert!(rmse(&out, &clean) < rmse(&noisy, &clean), "{family:?}");
    }
}

#[test]
fn thresholding_removes_fine_scale_energy() {
    let (_, noisy) = noisy_sine(512, 0.1, 9);
    let s = spec(Family::Coiflet3, 3, Extension::Periodization);
    let out = denoise(&noisy, &s).unwrap();
    let before = energy(dwt_forward(&noisy, &s).unwrap().details[0].iter().copied());
    let after = energy(dwt_forward(&out, &s).unwrap().details[0].iter().copied());
    assert!(after < 0.1 * before);
}

#[test]
fn zero_threshold_is_identity() {
    let (_, noisy) = noisy_sine(300, 0.2, 1);
    let out = denoise_with_threshold(&noisy, &spec(Family::Coiflet3, 3, Extension::Symmetric), 0.0).unwrap();
    assert!(rmse(&out, &noisy) < 1e-10);
}

#[test]
fn invalid_inputs() {
    let s = spec(Family::Coiflet3, 3, Extension::Periodization);
    assert!(dwt_forward(&[1.0; 100], &s).is_err());
    assert!(dwt_forward(&[1.0; 10], &spec(Family::Coiflet3, 1, Extension::Symmetric)).is_err());
    assert!(dwt_forward(&[1.0; 64], &spec(Family::Daubechies4, 7, Extension::Symmetric)).is_err());
    let mut x = vec![1.0; 64];
    x[3] = f64::NAN;
    assert!(dwt_forward(&x, &spec(Family::Daubechies4, 2, Extension::Symmetric)).is_err());
}

proptest! {
    #[test]
    fn perfect_reconstruction(
        x in prop::collection::vec(-10.0f64..10.0, 64..512),
        level in 1usize..=3,
        db4 in any::<bool>(),
    ) {
        let family = if db4 { Family::Daubechies4 } else { Family::Coiflet3 };
        let s = spec(family, level, Extension::Symmetric);
        let back = dwt_inverse(&dwt_forward(&x, &s).unwrap(), &s).unwrap();
        prop_assert_eq!(back.len(), x.len());
        prop_assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn periodization_conserves_energy(blocks in 8usize..64, level in 1usize..=3, seed in any::<u64>()) {
        let n = blocks * 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let s = spec(Family::Daubechies4, level, Extension::Periodization);
        let d = dwt_forward(&x, &s).unwrap();
        let (ex, ec) = (energy(x.iter().copied()), energy(d.coefficients()));
        prop_assert!((ex - ec).abs() <= 1e-9 * ex);
        let back = dwt_inverse(&d, &s).unwrap();
        prop_assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn soft_threshold_properties(v in -100.0f64..100.0, t in 0.0f64..50.0) {
        let s = soft_threshold(v, t);
        prop_assert!(s.abs() <= v.abs());
        prop_assert!(s == 0.0 || s.signum() == v.signum());
        prop_assert!(s.abs() == (v.abs() - t).max(0.0));
    }

    #[test]
    fn denoise_is_scale_equivariant(x in prop::collection::vec(-1.0f64..1.0, 64..200), c in 0.1f64..100.0) {
        let s = spec(Family::Coiflet3, 2, Extension::Symmetric);
        let a = denoise(&x, &s).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let b = denoise(&scaled, &s).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| (p * c - q).abs() < 1e-8 * c.max(1.0)));
    }
}
