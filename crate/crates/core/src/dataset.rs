//! Synthetic datasets: labeled toy feature data for the adversarial
//! extractor, harmonic waveforms, and mel corpora for the inversion
//! benchmark.

use crate::error::Result;
use crate::signal::{apply_mel, MelFilterbank, StftConfig, Waveform};
use crate::toymodel::extractor::LabeledData;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Labeled toy data where each sample is an identity template plus a pitch
/// template plus Gaussian noise. Both factors are recoverable by a linear
/// probe when `noise` is small relative to the template scale (~1).
pub fn factorized_toy_dataset(
    n_identity: usize,
    n_pitch: usize,
    per_cell: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> LabeledData {
    assert!(n_identity > 0 && n_pitch > 0 && per_cell > 0 && dim > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let id_templates: Vec<Array1<f64>> = (0..n_identity)
        .map(|_| Array1::from_shape_fn(dim, |_| normal.sample(&mut rng)))
        .collect();
    let pitch_templates: Vec<Array1<f64>> = (0..n_pitch)
        .map(|_| Array1::from_shape_fn(dim, |_| normal.sample(&mut rng)))
        .collect();

    let n = n_identity * n_pitch * per_cell;
    let mut x = Array2::zeros((n, dim));
    let mut pitch = Vec::with_capacity(n);
    let mut identity = Vec::with_capacity(n);
    let mut row = 0;
    for i in 0..n_identity {
        for p in 0..n_pitch {
            for _ in 0..per_cell {
                for d in 0..dim {
                    x[[row, d]] =
                        id_templates[i][d] + pitch_templates[p][d] + noise * normal.sample(&mut rng);
                }
                identity.push(i);
                pitch.push(p);
                row += 1;
            }
        }
    }
    LabeledData {
        x,
        pitch,
        identity,
        n_pitch,
        n_identity,
    }
}

/// Parameters of one synthetic harmonic tone.
#[derive(Debug, Clone)]
pub struct HarmonicTone {
    pub f0: f64,
    pub n_harmonics: usize,
    /// Amplitude of harmonic h is `1 / h^rolloff`.
    pub rolloff: f64,
    /// Exponential amplitude decay rate, 1/s.
    pub decay: f64,
}

/// Render a harmonic tone with a decaying envelope, peak-normalized.
pub fn harmonic_waveform(tone: &HarmonicTone, sample_rate: u32, samples: usize) -> Result<Waveform> {
    let sr = sample_rate as f64;
    let mut out = vec![0.0f64; samples];
    for (n, o) in out.iter_mut().enumerate() {
        let t = n as f64 / sr;
        let env = (-tone.decay * t).exp();
        let mut v = 0.0;
        for h in 1..=tone.n_harmonics {
            let f = tone.f0 * h as f64;
            if f >= sr / 2.0 {
                break;
            }
            v += (2.0 * std::f64::consts::PI * f * t).sin() / (h as f64).powf(tone.rolloff);
        }
        *o = env * v;
    }
    let peak = out.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if peak > 0.0 {
        for o in &mut out {
            *o /= peak;
        }
    }
    Waveform::new(out, sample_rate)
}

/// A randomized harmonic tone with f0 drawn log-uniformly in [110, 1760] Hz.
pub fn random_tone(rng: &mut impl Rng) -> HarmonicTone {
    let lo = 110f64.ln();
    let hi = 1760f64.ln();
    HarmonicTone {
        f0: (lo + rng.gen::<f64>() * (hi - lo)).exp(),
        n_harmonics: rng.gen_range(4..=12),
        rolloff: rng.gen_range(0.5..1.5),
        decay: rng.gen_range(0.5..3.0),
    }
}

/// Synthetic mel spectrograms for inversion benchmarks: harmonic line
/// spectra with decaying envelopes, mapped through the filterbank, plus a
/// small non-negative noise floor.
pub fn synthetic_mel_corpus(
    fb: &MelFilterbank,
    cfg: &StftConfig,
    count: usize,
    frames: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = cfg.bins();
    let bin_hz = fb.sample_rate as f64 / fb.fft_size as f64;
    let hop_s = cfg.hop_size as f64 / fb.sample_rate as f64;
    let mut corpus = Vec::with_capacity(count);
    for _ in 0..count {
        let tone = random_tone(&mut rng);
        let mut lin = Array2::zeros((bins, frames));
        for t in 0..frames {
            let env = (-tone.decay * t as f64 * hop_s).exp();
            for h in 1..=tone.n_harmonics {
                let f = tone.f0 * h as f64;
                if f >= fb.sample_rate as f64 / 2.0 {
                    break;
                }
                let center = f / bin_hz;
                let amp = env / (h as f64).powf(tone.rolloff);
                // spectral line with a two-bin Gaussian width
                let b0 = (center - 6.0).max(0.0) as usize;
                let b1 = ((center + 6.0) as usize).min(bins - 1);
                for b in b0..=b1 {
                    let d = b as f64 - center;
                    lin[[b, t]] += amp * (-d * d / 8.0).exp();
                }
            }
        }
        let mut mel = apply_mel(fb, &lin)?;
        let floor = 1e-4 * mel.iter().fold(0.0f64, |a, &b| a.max(b));
        mel.mapv_inplace(|v| v + floor);
        corpus.push(mel);
    }
    Ok(corpus)
}

/// Write a labeled dataset as `x.gstm` plus a `labels.csv` of
/// `row,pitch,identity` lines.
pub fn save_labeled(dir: impl AsRef<std::path::Path>, data: &LabeledData) -> Result<()> {
    use std::io::Write as _;
    data.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    crate::tensor::save_matrix_atomic(dir.join("x.gstm"), &data.x)?;
    let mut csv = String::from("row,pitch,identity\n");
    for r in 0..data.len() {
        csv.push_str(&format!("{r},{},{}\n", data.pitch[r], data.identity[r]));
    }
    let tmp = dir.join("labels.csv.tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(csv.as_bytes())?;
    f.sync_all()?;
    std::fs::rename(tmp, dir.join("labels.csv"))?;
    Ok(())
}

pub fn load_labeled(dir: impl AsRef<std::path::Path>) -> Result<LabeledData> {
    use crate::error::Error;
    let dir = dir.as_ref();
    let x = crate::tensor::load_matrix(dir.join("x.gstm"))?;
    let text = std::fs::read_to_string(dir.join("labels.csv"))?;
    let mut pitch = Vec::new();
    let mut identity = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != "row,pitch,identity" {
                return Err(Error::format("labels.csv: unexpected header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::format(format!("labels.csv line {}: bad field count", i + 1)));
        }
        let row: usize = fields[0].parse().map_err(|_| Error::format("bad row"))?;
        if row != i - 1 {
            return Err(Error::format("labels.csv rows out of order"));
        }
        pitch.push(fields[1].parse().map_err(|_| Error::format("bad pitch"))?);
        identity.push(fields[2].parse().map_err(|_| Error::format("bad identity"))?);
    }
    let n_pitch = pitch.iter().max().map_or(0, |m| m + 1);
    let n_identity = identity.iter().max().map_or(0, |m| m + 1);
    let data = LabeledData {
        x,
        pitch,
        identity,
        n_pitch,
        n_identity,
    };
    data.validate()?;
    Ok(data)
}
