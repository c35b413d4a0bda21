use loomix::config::PriorSpec;
use loomix::synthetic::{gen_synthetic, SyntheticDesign};
use loomix_core::Error;

fn csv_bytes(seed: u64) -> Vec<u8> {
    let (_, data) = gen_synthetic(12, 4, 1.0, PriorSpec::Iso(10.0), seed).unwrap();
    let mut out = Vec::new();
    data.write_csv(&mut out).unwrap();
    out
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    assert_eq!(csv_bytes(8), csv_bytes(8));
    assert_ne!(csv_bytes(8), csv_bytes(9));
}

#[test]
fn design_entries_are_centered() {
    let (n, p) = (200, 150);
    let (_, data) = gen_synthetic(n, p, 1.0, PriorSpec::Scaled(100.0), 3).unwrap();
    let mean = data.x().iter().sum::<f64>() / (n * p) as f64;
    assert!(mean.abs() < 4.0 / ((n * p) as f64).sqrt(), "mean {mean}");
    let var = data.x().iter().map(|v| v * v).sum::<f64>() / (n * p) as f64;
    assert!((var - 1.0).abs() < 0.03, "variance {var}");
}

#[test]
fn design_variance_is_respected() {
    let d = SyntheticDesign {
        n: 100,
        p: 100,
        sigma2: 1.0,
        tau2: 4.0,
        prior: PriorSpec::Iso(1.0),
    };
    let (_, data) = d.generate(1).unwrap();
    let var = data.x().iter().map(|v| v * v).sum::<f64>() / 1e4;
    assert!((var - 4.0).abs() < 0.15, "variance {var}");
}

#[test]
fn zero_noise_is_rejected() {
    let err = gen_synthetic(5, 2, 0.0, PriorSpec::Iso(1.0), 1).unwrap_err();
    assert!(matches!(err, Error::Input(_)), "{err}");
    assert!(gen_synthetic(0, 2, 1.0, PriorSpec::Iso(1.0), 1).is_err());
}

#[test]
fn model_carries_the_generating_settings() {
    let (model, data) = gen_synthetic(30, 3, 0.5, PriorSpec::Scaled(6.0), 2).unwrap();
    assert_eq!(model.sigma2(), 0.5);
    assert_eq!(model.data(), &data);
    assert!(model.theta0().iter().all(|v| *v == 0.0));
}

#[test]
fn residual_variance_matches_the_noise_level() {
    // With a tiny prior the signal vanishes, so y is almost pure noise.
    let (_, data) = gen_synthetic(4000, 1, 2.0, PriorSpec::Iso(1e-12), 5).unwrap();
    let var = data.y().iter().map(|v| v * v).sum::<f64>() / 4000.0;
    assert!((var - 2.0).abs() < 0.15, "variance {var}");
}

#[test]
fn single_covariate_leverage_matches_the_scalar_formula() {
    let (model, data) = gen_synthetic(6, 1, 1.5, PriorSpec::Iso(2.0), 4).unwrap();
    let sx2: f64 = data.x().iter().map(|v| v * v).sum();
    for i in 0..6 {
        let x = data.x()[(i, 0)];
        let expect = x * x / (sx2 + 1.5 / 2.0);
        assert!((model.leverage(i).unwrap() - expect).abs() < 1e-12);
    }
}
