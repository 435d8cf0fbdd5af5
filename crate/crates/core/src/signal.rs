//! Waveform-to-mel analysis pipeline: Hann-windowed STFT, triangular mel
//! filterbank on the HTK scale, preprocessing (trim, peak normalization,
//! exponential fade-out) and the inverse STFT used by phase reconstruction.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::OnceLock;

/// Mono audio at a fixed sample rate, samples nominally in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid_argument("sample_rate must be > 0"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid_argument("waveform contains non-finite samples"));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// STFT analysis parameters. Defaults: 1024 window, 64 hop, 2048 fft,
/// 256 output frames after time-axis fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub fft_size: usize,
    pub target_frames: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_size: 1024,
            hop_size: 64,
            fft_size: 2048,
            target_frames: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.hop_size == 0 || self.fft_size == 0 {
            return Err(Error::invalid_argument("window, hop and fft sizes must be positive"));
        }
        if self.fft_size < self.window_size {
            return Err(Error::invalid_argument(format!(
                "fft_size {} < window_size {}",
                self.fft_size, self.window_size
            )));
        }
        if self.hop_size > self.window_size {
            return Err(Error::invalid_argument(format!(
                "hop_size {} > window_size {}",
                self.hop_size, self.window_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Preprocessing parameters for one-shot inputs: segment length, peak
/// normalization and exponential fade-out of the tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub duration_s: f64,
    pub fade_start_s: f64,
    pub fade_tau_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            duration_s: 1.0,
            fade_start_s: 0.75,
            fade_tau_s: 0.1,
        }
    }
}

/// Periodic Hann window: w[n] = 0.5 (1 - cos(2 pi n / size)).
pub fn hann_window(size: usize) -> Result<Array1<f64>> {
    if size < 2 {
        return Err(Error::invalid_argument("hann window size must be >= 2"));
    }
    Ok(Array1::from_iter((0..size).map(|n| {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos())
    })))
}

// Reflect index into [0, len), mirroring at the boundaries (no edge repeat).
fn reflect_index(i: isize, len: usize) -> usize {
    let len = len as isize;
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let mut j = i.rem_euclid(period);
    if j >= len {
        j = period - j;
    }
    j as usize
}

/// Short-time Fourier transform, center-padded by window_size/2 with
/// reflection. Frame count is 1 + floor(len / hop).
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Array2<Complex<f64>>> {
    cfg.validate()?;
    if w.is_empty() {
        return Err(Error::invalid_argument("empty waveform"));
    }
    let len = w.len();
    let half = cfg.window_size / 2;
    let frames = 1 + len / cfg.hop_size;
    let bins = cfg.bins();
    let window = hann_window(cfg.window_size)?;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let mut spec = Array2::zeros((bins, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];

    for t in 0..frames {
        let start = t as isize * cfg.hop_size as isize - half as isize;
        for n in 0..cfg.window_size {
            let idx = reflect_index(start + n as isize, len);
            buf[n] = Complex::new(w.samples[idx] * window[n], 0.0);
        }
        for v in buf[cfg.window_size..].iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            spec[[b, t]] = buf[b];
        }
    }
    Ok(spec)
}

/// Inverse STFT: per-frame inverse FFT, windowed overlap-add, normalized by
/// the accumulated squared window. Output is cropped/zero-padded to `length`.
pub fn istft(
    spec: &Array2<Complex<f64>>,
    cfg: &StftConfig,
    length: usize,
    sample_rate: u32,
) -> Result<Waveform> {
    cfg.validate()?;
    let bins = cfg.bins();
    if spec.nrows() != bins {
        return Err(Error::invalid_argument(format!(
            "spectrogram has {} bins, config implies {}",
            spec.nrows(),
            bins
        )));
    }
    let frames = spec.ncols();
    let half = cfg.window_size / 2;
    let window = hann_window(cfg.window_size)?;

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.fft_size);
    let padded_len = (frames.saturating_sub(1)) * cfg.hop_size + cfg.window_size;
    let mut acc = vec![0.0f64; padded_len];
    let mut norm = vec![0.0f64; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];

    for t in 0..frames {
        buf[0] = spec[[0, t]];
        for b in 1..bins {
            buf[b] = spec[[b, t]];
            if b < cfg.fft_size - b {
                buf[cfg.fft_size - b] = spec[[b, t]].conj();
            }
        }
        ifft.process(&mut buf);
        let offset = t * cfg.hop_size;
        for n in 0..cfg.window_size {
            let v = buf[n].re / cfg.fft_size as f64;
            acc[offset + n] += v * window[n];
            norm[offset + n] += window[n] * window[n];
        }
    }

    let mut out = vec![0.0f64; length];
    for i in 0..length {
        let j = i + half;
        if j < padded_len && norm[j] > 1e-12 {
            out[i] = acc[j] / norm[j];
        }
    }
    Waveform::new(out, sample_rate)
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

struct FilterbankSvd {
    /// Left singular vectors, mel_bins x r.
    u: Array2<f64>,
    /// Singular values, descending.
    s: Array1<f64>,
    /// Right singular vectors transposed, r x bins.
    vt: Array2<f64>,
}

/// Triangular mel filterbank (mel_bins x bins), peak height 1, with its SVD
/// cached for least-squares inversion.
pub struct MelFilterbank {
    pub matrix: Array2<f64>,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub f_min: f64,
    pub f_max: f64,
    svd: OnceLock<FilterbankSvd>,
}

impl std::fmt::Debug for MelFilterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFilterbank")
            .field("mel_bins", &self.matrix.nrows())
            .field("bins", &self.matrix.ncols())
            .field("f_min", &self.f_min)
            .field("f_max", &self.f_max)
            .finish()
    }
}

impl MelFilterbank {
    pub fn new(
        mel_bins: usize,
        fft_size: usize,
        sample_rate: u32,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if mel_bins == 0 {
            return Err(Error::invalid_argument("mel_bins must be >= 1"));
        }
        if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(Error::invalid_argument(format!(
                "invalid frequency range [{f_min}, {f_max}] for nyquist {nyquist}"
            )));
        }
        let bins = fft_size / 2 + 1;
        let mel_lo = hz_to_mel(f_min);
        let mel_hi = hz_to_mel(f_max);
        // mel_bins + 2 boundary points, uniform on the mel scale
        let edges: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;

        let mut matrix = Array2::zeros((mel_bins, bins));
        for m in 0..mel_bins {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut any = false;
            for b in 0..bins {
                let f = b as f64 * bin_hz;
                let w = if f <= left || f >= right {
                    0.0
                } else if f <= center {
                    (f - left) / (center - left)
                } else {
                    (right - f) / (right - center)
                };
                if w > 0.0 {
                    matrix[[m, b]] = w;
                    any = true;
                }
            }
            if !any {
                // Triangle narrower than one FFT bin: anchor it at the bin
                // nearest its center so every mel row stays non-empty.
                let b = ((center / bin_hz).round() as usize).min(bins - 1);
                matrix[[m, b]] = 1.0;
            }
        }

        Ok(MelFilterbank {
            matrix,
            sample_rate,
            fft_size,
            f_min,
            f_max,
            svd: OnceLock::new(),
        })
    }

    /// Filterbank with spec defaults: 512 mels, 2048 fft, 16 kHz, 0..8000 Hz.
    pub fn default_512() -> Result<Self> {
        MelFilterbank::new(512, 2048, 16000, 0.0, 8000.0)
    }

    pub fn from_matrix(matrix: Array2<f64>, sample_rate: u32, fft_size: usize) -> Self {
        MelFilterbank {
            matrix,
            sample_rate,
            fft_size,
            f_min: 0.0,
            f_max: sample_rate as f64 / 2.0,
            svd: OnceLock::new(),
        }
    }

    pub fn mel_bins(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bins(&self) -> usize {
        self.matrix.ncols()
    }

    /// Center frequency (Hz) per mel row, by weighted average of its support.
    pub fn center_frequencies(&self) -> Vec<f64> {
        let bin_hz = self.sample_rate as f64 / self.fft_size as f64;
        (0..self.mel_bins())
            .map(|m| {
                let row = self.matrix.row(m);
                let wsum: f64 = row.sum();
                let fsum: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(b, &w)| w * b as f64 * bin_hz)
                    .sum();
                fsum / wsum
            })
            .collect()
    }

    fn svd(&self) -> &FilterbankSvd {
        self.svd.get_or_init(|| {
            let (rows, cols) = (self.matrix.nrows(), self.matrix.ncols());
            let dm = nalgebra::DMatrix::from_row_iterator(rows, cols, self.matrix.iter().cloned());
            let svd = dm.svd(true, true);
            let u = svd.u.expect("svd requested u");
            let vt = svd.v_t.expect("svd requested v_t");
            let r = svd.singular_values.len();
            let u_nd = Array2::from_shape_fn((rows, r), |(i, j)| u[(i, j)]);
            let vt_nd = Array2::from_shape_fn((r, cols), |(i, j)| vt[(i, j)]);
            let s_nd = Array1::from_iter(svd.singular_values.iter().cloned());
            FilterbankSvd { u: u_nd, s: s_nd, vt: vt_nd }
        })
    }

    /// Largest singular value of the filterbank matrix.
    pub fn sigma_max(&self) -> f64 {
        self.svd().s.iter().cloned().fold(0.0, f64::max)
    }

    /// Min-norm least-squares solve of matrix * X = rhs via the cached SVD,
    /// zeroing singular values below cutoff * sigma_max.
    pub fn pinv_apply(&self, rhs: &Array2<f64>, cutoff: f64) -> Result<Array2<f64>> {
        if rhs.nrows() != self.mel_bins() {
            return Err(Error::invalid_argument(format!(
                "rhs has {} rows, filterbank has {} mel bins",
                rhs.nrows(),
                self.mel_bins()
            )));
        }
        let svd = self.svd();
        let smax = self.sigma_max();
        if smax <= 0.0 {
            return Err(Error::SingularOperator("all-zero filterbank".into()));
        }
        let thresh = cutoff * smax;
        // X = V diag(1/s) U^T rhs
        let mut ut_rhs = svd.u.t().dot(rhs);
        for (i, mut row) in ut_rhs.outer_iter_mut().enumerate() {
            let s = svd.s[i];
            let inv = if s > thresh { 1.0 / s } else { 0.0 };
            row.mapv_inplace(|v| v * inv);
        }
        Ok(svd.vt.t().dot(&ut_rhs))
    }
}

/// Mel projection: plain matrix product filterbank * lin, frame by frame.
pub fn apply_mel(fb: &MelFilterbank, lin: &Array2<f64>) -> Result<Array2<f64>> {
    if lin.nrows() != fb.bins() {
        return Err(Error::invalid_argument(format!(
            "linear magnitude has {} bins, filterbank expects {}",
            lin.nrows(),
            fb.bins()
        )));
    }
    Ok(fb.matrix.dot(lin))
}

/// Trim/zero-pad to the configured duration, peak-normalize (silence passes
/// through), and apply an exponential fade-out past the fade start.
pub fn preprocess(w: &Waveform, cfg: &PreprocessConfig) -> Result<Waveform> {
    if cfg.duration_s <= 0.0 {
        return Err(Error::invalid_argument("duration must be > 0"));
    }
    let sr = w.sample_rate as f64;
    let n = (cfg.duration_s * sr).round() as usize;
    let mut samples = vec![0.0f64; n];
    let copy = n.min(w.len());
    samples[..copy].copy_from_slice(&w.samples[..copy]);

    let peak = samples.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
    if peak > 0.0 {
        for s in &mut samples {
            *s /= peak;
        }
    }

    let fade_start = (cfg.fade_start_s * sr).round() as usize;
    if cfg.fade_tau_s > 0.0 {
        for (i, s) in samples.iter_mut().enumerate().skip(fade_start) {
            let t = (i - fade_start) as f64 / sr;
            *s *= (-t / cfg.fade_tau_s).exp();
        }
    }
    Waveform::new(samples, w.sample_rate)
}

/// Full analysis: |STFT| -> mel projection -> fit the time axis to exactly
/// cfg.target_frames by right zero-padding or trimming.
pub fn analyze(w: &Waveform, cfg: &StftConfig, fb: &MelFilterbank) -> Result<Array2<f64>> {
    let spec = stft(w, cfg)?;
    let mag = spec.mapv(|c| c.norm());
    let mel = apply_mel(fb, &mag)?;
    Ok(fit_frames(&mel, cfg.target_frames))
}

/// Right zero-pad or trim the frame axis to exactly `frames` columns.
pub fn fit_frames(m: &Array2<f64>, frames: usize) -> Array2<f64> {
    let mut out = Array2::zeros((m.nrows(), frames));
    let copy = frames.min(m.ncols());
    out.slice_mut(ndarray::s![.., ..copy])
        .assign(&m.slice(ndarray::s![.., ..copy]));
    out
}
