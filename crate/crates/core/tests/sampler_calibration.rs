use nsbl_core::samplers::{run_chain, ChainConfig, FnTarget, Support};

fn names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

#[test]
fn correlated_gaussian_moments() {
    // Mean (1, -2), covariance [[1, 0.8], [0.8, 2]].
    let (m, c) = ([1.0, -2.0], [[1.0, 0.8], [0.8, 2.0]]);
    let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let target = FnTarget::new(vec![Support::Unbounded; 2], move |x: &[f64]| {
        let (a, b) = (x[0] - m[0], x[1] - m[1]);
        -0.5 * (c[1][1] * a * a - 2.0 * c[0][1] * a * b + c[0][0] * b * b) / det
    });
    let cfg = ChainConfig {
        n_stationary: 500_000,
        burn_in: 5000,
        thin: 10,
        seed: 3,
        ..ChainConfig::default()
    };
    let s = run_chain(&target, &[0.0, 0.0], &cfg, names(2)).unwrap();
    assert_eq!(s.len(), 50_000);
    let (x, y) = (s.column(0), s.column(1));
    assert!((mean(&x) - m[0]).abs() < 0.05);
    assert!((mean(&y) - m[1]).abs() < 0.05);
    assert!((cov(&x, &x) - c[0][0]).abs() < 0.1);
    assert!((cov(&x, &y) - c[0][1]).abs() < 0.1);
    assert!((cov(&y, &y) - c[1][1]).abs() < 0.1);
    for j in 0..2 {
        assert!(s.meta.lag1_thinned[j] < s.meta.lag1_raw[j]);
    }
    let first_stage = s.meta.acceptance_rate - s.meta.dr_acceptance_rate;
    assert!(first_stage > 0.1 && first_stage < 0.6, "first-stage acceptance {first_stage}");
}

#[test]
fn one_dimensional_gaussian_passes_ks() {
    let target = FnTarget::new(vec![Support::Unbounded], |x: &[f64]| -0.5 * ((x[0] - 0.5) / 1.5).powi(2));
    let cfg = ChainConfig {
        n_stationary: 200_000,
        burn_in: 5000,
        thin: 20,
        seed: 11,
        ..ChainConfig::default()
    };
    let s = run_chain(&target, &[0.0], &cfg, names(1)).unwrap();
    let mut x = s.column(0);
    assert_eq!(x.len(), 10_000);
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let cdf = |v: f64| 0.5 * (1.0 + libm::erf((v - 0.5) / (1.5 * std::f64::consts::SQRT_2)));
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic two-sided critical value at the 0.01 level.
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn positive_support_uses_the_jacobian() {
    // Gamma(shape 3, rate 2): mean 1.5, variance 0.75.
    let target = FnTarget::new(vec![Support::Positive], |x: &[f64]| {
        if x[0] <= 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * x[0].ln() - 2.0 * x[0]
        }
    });
    let cfg = ChainConfig {
        n_stationary: 200_000,
        seed: 5,
        ..ChainConfig::default()
    };
    let s = run_chain(&target, &[1.0], &cfg, names(1)).unwrap();
    let x = s.column(0);
    assert!((mean(&x) - 1.5).abs() < 0.03, "mean {}", mean(&x));
    assert!((cov(&x, &x) - 0.75).abs() < 0.05, "var {}", cov(&x, &x));
}

#[test]
fn bounded_support_stays_inside() {
    // Uniform on [-2, 0] has mean -1 and variance 1/3.
    let target = FnTarget::new(vec![Support::Bounded { lo: -2.0, hi: 0.0 }], |x: &[f64]| {
        if (-2.0..=0.0).contains(&x[0]) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    });
    let cfg = ChainConfig {
        n_stationary: 200_000,
        seed: 8,
        preoptimize: false,
        ..ChainConfig::default()
    };
    let s = run_chain(&target, &[-0.5], &cfg, names(1)).unwrap();
    let x = s.column(0);
    assert!(x.iter().all(|v| (-2.0..=0.0).contains(v)));
    assert!((mean(&x) + 1.0).abs() < 0.03);
    assert!((cov(&x, &x) - 1.0 / 3.0).abs() < 0.02);
}

#[test]
fn untransformed_chain_matches_transformed() {
    let target = FnTarget::new(vec![Support::Positive], |x: &[f64]| {
        if x[0] <= 0.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * x[0].ln() - 2.0 * x[0]
        }
    });
    let cfg = ChainConfig {
        n_stationary: 200_000,
        seed: 6,
        transform: false,
        ..ChainConfig::default()
    };
    let s = run_chain(&target, &[1.0], &cfg, names(1)).unwrap();
    let x = s.column(0);
    assert!((mean(&x) - 1.5).abs() < 0.03);
    assert!(x.iter().all(|v| *v > 0.0));
}

#[test]
fn frozen_proposal_after_burn_in_is_still_calibrated() {
    let target = FnTarget::new(vec![Support::Unbounded; 2], |x: &[f64]| {
        -0.5 * ((x[0] - 3.0).powi(2) / 4.0 + (x[1] + 1.0).powi(2) / 0.25)
    });
    let cfg = ChainConfig {
        n_stationary: 200_000,
        burn_in: 5000,
        thin: 10,
        seed: 21,
        adapt_stationary: false,
        ..ChainConfig::default()
    };
    let s = run_chain(&target, &[0.0, 0.0], &cfg, names(2)).unwrap();
    let (x, y) = (s.column(0), s.column(1));
    assert!((mean(&x) - 3.0).abs() < 0.1);
    assert!((mean(&y) + 1.0).abs() < 0.025);
    assert!((cov(&x, &x) - 4.0).abs() < 0.3);
    assert!((cov(&y, &y) - 0.25).abs() < 0.02);
    assert!(cov(&x, &y).abs() < 0.05);
}
