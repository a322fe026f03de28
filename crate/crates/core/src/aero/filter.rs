//! Butterworth low-pass design (bilinear transform, second-order sections)
//! and zero-phase forward-backward filtering.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Normalized biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a constant unit input at steady state.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[1] * g]
    }

    /// Magnitude response at `freq` (same units as `fs`).
    pub fn response(&self, freq: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * freq / fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, -self.b[1] * s1 - self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, -self.a[0] * s1 - self.a[1] * s2);
        ((num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1)).sqrt()
    }
}

/// Digital Butterworth low-pass of the given order as cascaded sections.
pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Vec<Biquad>> {
    if order == 0 || !(cutoff_hz > 0.0) || !(fs > 2.0 * cutoff_hz) {
        return Err(Error::invalid(format!(
            "invalid Butterworth design: order {order}, cutoff {cutoff_hz} Hz, fs {fs} Hz"
        )));
    }
    let k = 2.0 * fs;
    let wc = k * (PI * cutoff_hz / fs).tan();
    let mut sections = Vec::new();
    for j in 0..order / 2 {
        // Conjugate pole pair wc * exp(i theta), Re < 0.
        let theta = PI * (2 * j + order + 1) as f64 / (2 * order) as f64;
        let a1 = -2.0 * wc * theta.cos();
        let a0 = wc * wc;
        let d0 = k * k + a1 * k + a0;
        sections.push(Biquad {
            b: [a0 / d0, 2.0 * a0 / d0, a0 / d0],
            a: [(2.0 * a0 - 2.0 * k * k) / d0, (k * k - a1 * k + a0) / d0],
        });
    }
    if order % 2 == 1 {
        let d0 = k + wc;
        sections.push(Biquad {
            b: [wc / d0, wc / d0, 0.0],
            a: [(wc - k) / d0, 0.0],
        });
    }
    Ok(sections)
}

fn sosfilt(sos: &[Biquad], x: &mut [f64]) {
    let mut scale = x.first().copied().unwrap_or(0.0);
    for s in sos {
        let zi = s.steady_state();
        let (mut z1, mut z2) = (zi[0] * scale, zi[1] * scale);
        for v in x.iter_mut() {
            let y = s.b[0] * *v + z1;
            z1 = s.b[1] * *v - s.a[0] * y + z2;
            z2 = s.b[2] * *v - s.a[1] * y;
            *v = y;
        }
        scale *= s.dc_gain();
    }
}

/// Zero-phase filtering: odd extension at both ends, forward pass, reverse
/// pass, each started from the steady state of its first sample.
pub fn filtfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let pad = (3 * (2 * sos.len() + 1)).max(64).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    sosfilt(sos, &mut ext);
    ext.reverse();
    sosfilt(sos, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}
