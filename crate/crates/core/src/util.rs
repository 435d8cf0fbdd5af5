//! Small measurement helpers shared by tests, benchmarks and the CLI.

use crate::signal::{stft, StftConfig, Waveform};

/// SNR (dB) of `w` against a pure sinusoid at `freq`, fitting amplitude and
/// phase by least squares over samples [lo, hi). Signal power is the fitted
/// sinusoidal component, noise is everything else.
pub fn sine_fit_snr_db(w: &Waveform, freq: f64, lo: usize, hi: usize) -> f64 {
    let sr = w.sample_rate as f64;
    let omega = 2.0 * std::f64::consts::PI * freq / sr;
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in lo..hi {
        let (s, c) = ((omega * i as f64).sin(), (omega * i as f64).cos());
        let x = w.samples[i];
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += x * s;
        xc += x * c;
    }
    let det = ss * cc - sc * sc;
    if det.abs() < 1e-30 {
        return f64::NEG_INFINITY;
    }
    let a = (xs * cc - xc * sc) / det;
    let b = (xc * ss - xs * sc) / det;
    let mut sig = 0.0;
    let mut noise = 0.0;
    for i in lo..hi {
        let fit = a * (omega * i as f64).sin() + b * (omega * i as f64).cos();
        sig += fit * fit;
        noise += (w.samples[i] - fit).powi(2);
    }
    if noise <= 0.0 {
        return f64::INFINITY;
    }
    10.0 * (sig / noise).log10()
}

/// Index of the FFT bin with the largest time-averaged magnitude.
pub fn dominant_bin(w: &Waveform, cfg: &StftConfig) -> crate::Result<usize> {
    let spec = stft(w, cfg)?;
    let mut best = (0usize, f64::NEG_INFINITY);
    for b in 0..spec.nrows() {
        let e: f64 = spec.row(b).iter().map(|c| c.norm()).sum();
        if e > best.1 {
            best = (b, e);
        }
    }
    Ok(best.0)
}
