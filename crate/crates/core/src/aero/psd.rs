//! Welch power spectral density estimate.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freq_hz: Vec<f64>,
    pub power: Vec<f64>,
}

impl Psd {
    /// Frequency of the largest non-DC bin.
    pub fn dominant_frequency(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .skip(1)
            .fold((1, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        self.freq_hz[i]
    }

    pub fn peak_power(&self) -> f64 {
        self.power.iter().skip(1).copied().fold(0.0, f64::max)
    }

    /// Largest power at frequencies strictly above `hz`.
    pub fn max_power_above(&self, hz: f64) -> f64 {
        self.freq_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f > hz)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["freq_hz", "power"])?;
        for (f, p) in self.freq_hz.iter().zip(&self.power) {
            w.write_record([f.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One-sided density-scaled Welch estimate with periodic Hann windows,
/// 50% overlap and per-segment mean removal.
pub fn welch(x: &[f64], fs: f64, segment: usize) -> Result<Psd> {
    if x.len() < 2 || segment < 2 || !(fs > 0.0) {
        return Err(Error::invalid("Welch estimate needs at least 2 samples and a positive rate"));
    }
    let seg = segment.min(x.len());
    let step = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let norm = fs * window.iter().map(|w| w * w).sum::<f64>();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let n_freq = seg / 2 + 1;
    let mut power = vec![0.0; n_freq];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for (b, (v, w)) in buf.iter_mut().zip(chunk.iter().zip(&window)) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        count += 1;
        start += step;
    }
    for (i, p) in power.iter_mut().enumerate() {
        let one_sided = if i == 0 || (seg % 2 == 0 && i == n_freq - 1) { 1.0 } else { 2.0 };
        *p *= one_sided / (norm * count as f64);
    }
    let freq_hz = (0..n_freq).map(|i| i as f64 * fs / seg as f64).collect();
    Ok(Psd { freq_hz, power })
}
