use nalgebra::Vector3;
use nsbl_core::aero::psd::welch;
use nsbl_core::aero::simulate::{integrate, limit_cycle_stats, TARGET_FREQUENCY_HZ};
use nsbl_core::aero::{synthesize_observations, AeroSystem, SimulationConfig};
use rand_chacha::ChaCha8Rng;

fn quiet() -> AeroSystem {
    AeroSystem {
        sigma: 0.0,
        ..AeroSystem::reference()
    }
}

fn noise_free(sys: &AeroSystem, dt: f64, tau: f64) -> nsbl_core::aero::Trajectory {
    integrate::<ChaCha8Rng>(sys, [0.01, 0.0, 0.0], dt, (tau / dt).round() as usize, None).unwrap()
}

#[test]
fn default_series_peaks_at_target_frequency_and_is_band_limited() {
    let obs = synthesize_observations(&AeroSystem::reference(), &SimulationConfig::default()).unwrap();
    assert_eq!(obs.len(), 20_000);
    let psd = welch(&obs.pitch_rad, 1000.0, 4096).unwrap();
    let f = psd.dominant_frequency();
    assert!((f - TARGET_FREQUENCY_HZ).abs() <= 0.5, "dominant frequency {f}");
    let ratio_db = 10.0 * (psd.peak_power() / psd.max_power_above(25.0)).log10();
    assert!(ratio_db >= 40.0, "attenuation {ratio_db} dB");
}

#[test]
fn quiet_equilibrium_is_exact() {
    let t = integrate::<ChaCha8Rng>(&quiet(), [0.0; 3], 0.01, 200_000, None).unwrap();
    assert!(t.states.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn limit_cycle_amplitude_is_stationary() {
    let t = noise_free(&quiet(), 0.01, 2000.0);
    let n = t.states.len();
    let quarter = &t.states[n - n / 4..];
    let half = quarter.len() / 2;
    let amp = |s: &[[f64; 3]]| s.iter().map(|x| x[0].abs()).fold(0.0, f64::max);
    let (a, b) = (amp(&quarter[..half]), amp(&quarter[half..]));
    assert!(a > 1e-3, "no limit cycle, amplitude {a}");
    assert!((a - b).abs() / a < 0.05, "amplitudes {a} and {b}");
}

#[test]
fn halving_the_step_barely_moves_the_amplitude() {
    let (_, a1) = limit_cycle_stats(&noise_free(&quiet(), 0.01, 2000.0), 0.1).unwrap();
    let (_, a2) = limit_cycle_stats(&noise_free(&quiet(), 0.005, 2000.0), 0.1).unwrap();
    assert!((a1 - a2).abs() / a2 < 0.01, "amplitudes {a1} and {a2}");
}

#[test]
fn linearized_frequency_matches_eigenvalues() {
    let lin = quiet().linearized();
    let eig = lin.jacobian(&Vector3::zeros()).complex_eigenvalues();
    let omega = eig.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
    let t = integrate::<ChaCha8Rng>(&lin, [1e-6, 0.0, 0.0], 0.001, 300_000, None).unwrap();
    let (period, _) = limit_cycle_stats(&t, 0.5).unwrap();
    let simulated = 2.0 * std::f64::consts::PI / period;
    assert!((simulated - omega).abs() / omega < 0.02, "simulated {simulated}, eigen {omega}");
}
