//! Plain-text `key = value` configuration shared by the CLI commands.
//! Unknown keys are rejected and every value is validated against the
//! owning module's invariants.

use crate::error::{Error, Result};
use crate::inversion::{GriffinLimConfig, NnlsConfig, NnlsInit};
use crate::signal::{MelFilterbank, StftConfig};
use crate::toymodel::extractor::AdvConfig;
use crate::toymodel::gan::GanConfig;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone)]
pub struct Config {
    pub stft: StftConfig,
    pub mel_bins: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
    pub nnls: NnlsConfig,
    pub griffin_lim: GriffinLimConfig,
    pub adv: AdvConfig,
    pub gan: GanConfig,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            stft: StftConfig::default(),
            mel_bins: 512,
            sample_rate: 16000,
            f_min: 0.0,
            f_max: 8000.0,
            nnls: NnlsConfig::default(),
            griffin_lim: GriffinLimConfig::default(),
            adv: AdvConfig::default(),
            gan: GanConfig::default(),
            seed: 0,
        }
    }
}

impl Config {
    pub fn filterbank(&self) -> Result<MelFilterbank> {
        MelFilterbank::new(
            self.mel_bins,
            self.stft.fft_size,
            self.sample_rate,
            self.f_min,
            self.f_max,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.nnls.validate()?;
        self.griffin_lim.validate()?;
        if self.mel_bins == 0 {
            return Err(Error::invalid_argument("mel.bins must be > 0"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid_argument("mel.sample_rate must be > 0"));
        }
        if !(self.f_min >= 0.0 && self.f_max > self.f_min) {
            return Err(Error::invalid_argument("need 0 <= mel.f_min < mel.f_max"));
        }
        if self.f_max > self.sample_rate as f64 / 2.0 {
            return Err(Error::invalid_argument("mel.f_max above Nyquist"));
        }
        if self.adv.steps == 0 || self.adv.batch == 0 || self.gan.steps == 0 || self.gan.batch == 0
        {
            return Err(Error::invalid_argument("training steps/batch must be > 0"));
        }
        if self.adv.lr <= 0.0 || self.gan.lr <= 0.0 {
            return Err(Error::invalid_argument("learning rates must be > 0"));
        }
        if self.gan.r1_gamma < 0.0 {
            return Err(Error::invalid_argument("gan.r1_gamma must be >= 0"));
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid_argument(format!("bad value for {key}: {value:?}")))
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::format(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "stft.window_size" => cfg.stft.window_size = parse_num(key, value)?,
            "stft.hop_size" => cfg.stft.hop_size = parse_num(key, value)?,
            "stft.fft_size" => cfg.stft.fft_size = parse_num(key, value)?,
            "stft.target_frames" => cfg.stft.target_frames = parse_num(key, value)?,
            "mel.bins" => cfg.mel_bins = parse_num(key, value)?,
            "mel.sample_rate" => cfg.sample_rate = parse_num(key, value)?,
            "mel.f_min" => cfg.f_min = parse_num(key, value)?,
            "mel.f_max" => cfg.f_max = parse_num(key, value)?,
            "nnls.max_iters" => cfg.nnls.max_iters = parse_num(key, value)?,
            "nnls.tol" => cfg.nnls.tol = parse_num(key, value)?,
            "nnls.init" => cfg.nnls.init = NnlsInit::from_str(value)?,
            "nnls.svd_cutoff" => cfg.nnls.svd_cutoff = parse_num(key, value)?,
            "gl.iters" => cfg.griffin_lim.iters = parse_num(key, value)?,
            "gl.momentum" => cfg.griffin_lim.momentum = parse_num(key, value)?,
            "adv.lambda" => cfg.adv.lambda_adv = parse_num(key, value)?,
            "adv.steps" => cfg.adv.steps = parse_num(key, value)?,
            "adv.batch" => cfg.adv.batch = parse_num(key, value)?,
            "adv.lr" => cfg.adv.lr = parse_num(key, value)?,
            "adv.feature_dim" => cfg.adv.feature_dim = parse_num(key, value)?,
            "adv.hidden" => cfg.adv.hidden = parse_num(key, value)?,
            "gan.steps" => cfg.gan.steps = parse_num(key, value)?,
            "gan.batch" => cfg.gan.batch = parse_num(key, value)?,
            "gan.z_dim" => cfg.gan.z_dim = parse_num(key, value)?,
            "gan.hidden" => cfg.gan.hidden = parse_num(key, value)?,
            "gan.lr" => cfg.gan.lr = parse_num(key, value)?,
            "gan.r1_gamma" => cfg.gan.r1_gamma = parse_num(key, value)?,
            "seed" => cfg.seed = parse_num(key, value)?,
            _ => {
                return Err(Error::invalid_argument(format!(
                    "line {}: unknown key {key:?}",
                    lineno + 1
                )))
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    parse_config(&std::fs::read_to_string(path)?)
}
