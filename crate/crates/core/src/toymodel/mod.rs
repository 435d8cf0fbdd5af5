//! Small explicit-gradient networks and the adversarial training loops built
//! on them: feature extractor with a pitch adversary, and an
//! instance-conditioned GAN.

pub mod extractor;
pub mod gan;
pub mod losses;
pub mod net;

pub use extractor::{
    probe_retrain, train_extractor, train_extractor_with, AdvConfig, ExtractorBundle, LabeledData,
};
pub use gan::{
    generate, generate_from_feature, interpolate, load_gan, save_gan, train_gan, GanBundle,
    GanConfig,
};
pub use net::{Activation, Adam, ToyNet};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use ndarray::Array2;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Save a network as a directory: a plain-text manifest plus one tensor file
/// per weight matrix and bias vector.
pub fn save_net(dir: impl AsRef<Path>, net: &ToyNet) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("layers = {}\n", net.layers.len()));
    for (i, layer) in net.layers.iter().enumerate() {
        manifest.push_str(&format!("layer{i}.act = {}\n", layer.act.as_str()));
        Tensor::from_matrix(&layer.w).save(dir.join(format!("layer{i}.w.gstm")))?;
        let b = layer
            .b
            .view()
            .insert_axis(ndarray::Axis(0))
            .to_owned();
        Tensor::from_matrix(&b).save(dir.join(format!("layer{i}.b.gstm")))?;
    }
    let tmp = dir.join("manifest.txt.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(manifest.as_bytes())?;
    f.sync_all()?;
    fs::rename(tmp, dir.join("manifest.txt"))?;
    Ok(())
}

pub fn load_net(dir: impl AsRef<Path>) -> Result<ToyNet> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut n_layers: Option<usize> = None;
    let mut acts: Vec<(usize, Activation)> = Vec::new();
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("bad manifest line: {line}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "layers" {
            n_layers = Some(
                value
                    .parse()
                    .map_err(|_| Error::format("bad layer count"))?,
            );
        } else if let Some(rest) = key.strip_prefix("layer") {
            let idx_str = rest
                .strip_suffix(".act")
                .ok_or_else(|| Error::format(format!("unknown manifest key: {key}")))?;
            let idx: usize = idx_str
                .parse()
                .map_err(|_| Error::format("bad layer index"))?;
            acts.push((idx, Activation::parse(value)?));
        } else {
            return Err(Error::format(format!("unknown manifest key: {key}")));
        }
    }
    let n_layers = n_layers.ok_or_else(|| Error::format("manifest missing layer count"))?;
    if acts.len() != n_layers {
        return Err(Error::format("manifest activation count mismatch"));
    }
    acts.sort_by_key(|(i, _)| *i);
    let mut layers = Vec::with_capacity(n_layers);
    for (i, act) in acts {
        let w: Array2<f64> = Tensor::load(dir.join(format!("layer{i}.w.gstm")))?.to_matrix()?;
        let b2: Array2<f64> = Tensor::load(dir.join(format!("layer{i}.b.gstm")))?.to_matrix()?;
        if b2.nrows() != 1 || b2.ncols() != w.nrows() {
            return Err(Error::format(format!("layer {i} bias shape mismatch")));
        }
        layers.push(net::Layer {
            w,
            b: b2.row(0).to_owned(),
            act,
        });
    }
    let net = ToyNet { layers };
    // verify chained dimensions
    for pair in net.layers.windows(2) {
        if pair[1].w.ncols() != pair[0].w.nrows() {
            return Err(Error::format("layer dimensions do not chain"));
        }
    }
    Ok(net)
}
