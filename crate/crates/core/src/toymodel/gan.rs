//! Instance-conditioned toy GAN: generator and discriminator conditioned on
//! a neighbor pitch and a frozen instance feature, trained with neighborhood
//! samples as reals.

use super::losses::{gan_loss_g_non_saturating, gan_losses, one_hot};
use super::net::{sigmoid, Activation, Adam, Gradients, ToyNet};
use crate::error::{Error, Result};
use crate::neighborhood::FeatureStore;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorLoss {
    /// log(1 - D(fake)), the literal minimax objective.
    Minimax,
    /// -log D(fake), the trainable variant.
    NonSaturating,
}

#[derive(Debug, Clone, Copy)]
pub struct GanConfig {
    pub steps: usize,
    pub batch: usize,
    pub z_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub generator_loss: GeneratorLoss,
    /// R1 gradient penalty weight on the discriminator at real samples;
    /// 0 disables it.
    pub r1_gamma: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            steps: 2000,
            batch: 16,
            z_dim: 8,
            hidden: 64,
            lr: 2.5e-3,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
            generator_loss: GeneratorLoss::NonSaturating,
            r1_gamma: 0.0,
            seed: 0,
        }
    }
}

/// Trained generator/discriminator pair plus the pitch vocabulary used for
/// one-hot conditioning.
pub struct GanBundle {
    pub generator: ToyNet,
    pub discriminator: ToyNet,
    /// Sorted distinct MIDI pitches seen in the store.
    pub pitch_classes: Vec<u8>,
    pub z_dim: usize,
    pub feature_dim: usize,
    pub data_dim: usize,
    /// (step, loss_d, loss_g) per training step.
    pub log: Vec<(usize, f64, f64)>,
}

impl GanBundle {
    pub fn pitch_index(&self, pitch: u8) -> Result<usize> {
        self.pitch_classes
            .binary_search(&pitch)
            .map_err(|_| Error::invalid_argument(format!("pitch {pitch} not in vocabulary")))
    }
}

fn concat_row(parts: &[&[f64]]) -> Array2<f64> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut v = Vec::with_capacity(total);
    for p in parts {
        v.extend_from_slice(p);
    }
    Array2::from_shape_vec((1, total), v).unwrap()
}

/// R1 penalty gamma/2 * mean ||grad_x D||^2 at the given inputs, with its
/// parameter gradients. Valid for ReLU/identity discriminators, where the
/// activation masks are locally constant.
pub fn r1_penalty(d: &ToyNet, x: &Array2<f64>, gamma: f64) -> Result<(f64, Gradients)> {
    if d.output_dim() != 1 {
        return Err(Error::invalid_argument("r1 expects a scalar discriminator"));
    }
    for layer in &d.layers {
        if !matches!(layer.act, Activation::Relu | Activation::Identity) {
            return Err(Error::invalid_argument(
                "r1 penalty implemented for relu/identity layers only",
            ));
        }
    }
    let batch = x.nrows() as f64;
    let in_dim = d.input_dim();
    let n_layers = d.layers.len();
    let mut grads = Gradients::zeros_like(d);
    let mut penalty = 0.0;

    for row in x.rows() {
        let xr = row.insert_axis(ndarray::Axis(0)).to_owned();
        let cache = d.forward_cached(&xr)?;
        let dout = Array2::ones((1, 1));
        let (_, g_in) = d.backward(&cache, &dout); // 1 x in_dim
        let g = g_in.row(0).to_owned();
        penalty += gamma / (2.0 * batch) * g.iter().map(|v| v * v).sum::<f64>();

        // masks (activation derivatives at the cached pre-activations)
        let masks: Vec<Array1<f64>> = (0..n_layers)
            .map(|l| {
                cache.pre_act(l).row(0).mapv(|z| match d.layers[l].act {
                    Activation::Relu => {
                        if z > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    _ => 1.0,
                })
            })
            .collect();

        // J_l = d(a_l)/dx with masks held constant; J_{-1} = I
        let mut j_prev = Array2::eye(in_dim);
        let mut j_list: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            j_list.push(j_prev.clone());
            if l < n_layers - 1 {
                let mut j = d.layers[l].w.dot(&j_prev);
                for (r, mut rowj) in j.outer_iter_mut().enumerate() {
                    rowj.mapv_inplace(|v| v * masks[l][r]);
                }
                j_prev = j;
            }
        }

        // r_l = d(logit)/d(z_l)
        let mut r = Array1::from_elem(1, 1.0); // final layer, identity head
        let mut r_list: Vec<Array1<f64>> = vec![Array1::zeros(0); n_layers];
        r_list[n_layers - 1] = r.clone();
        for l in (0..n_layers - 1).rev() {
            let s = r.dot(&d.layers[l + 1].w); // 1 x out_l
            r = &s * &masks[l];
            r_list[l] = r.clone();
        }

        // d penalty / dW_l = (gamma/batch) r_l^T (g J_{l-1}^T)
        for l in 0..n_layers {
            let gj = j_list[l].dot(&g); // in_l
            let rl = &r_list[l];
            for a in 0..rl.len() {
                for b in 0..gj.len() {
                    grads.dw[l][[a, b]] += gamma / batch * rl[a] * gj[b];
                }
            }
        }
    }
    Ok((penalty, grads))
}

/// Train the instance-conditioned GAN. `data` rows are the training items in
/// store order; the store supplies frozen features, pitches and neighbor
/// sets.
pub fn train_gan(store: &FeatureStore, data: &Array2<f64>, cfg: &GanConfig) -> Result<GanBundle> {
    if store.is_empty() {
        return Err(Error::InvalidState("empty feature store".into()));
    }
    if data.nrows() != store.len() {
        return Err(Error::invalid_argument(format!(
            "data has {} rows, store has {} items",
            data.nrows(),
            store.len()
        )));
    }
    let n = store.len();
    let data_dim = data.ncols();
    let feature_dim = store.dim();
    let mut pitch_classes: Vec<u8> = store.items().iter().map(|i| i.pitch).collect();
    pitch_classes.sort_unstable();
    pitch_classes.dedup();
    let n_pitch = pitch_classes.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let g_in = cfg.z_dim + n_pitch + feature_dim;
    let d_in = data_dim + n_pitch + feature_dim;
    let mut generator = ToyNet::new(
        &[g_in, cfg.hidden, cfg.hidden, data_dim],
        &[Activation::Relu, Activation::Relu, Activation::Softplus],
        &mut rng,
    )?;
    let mut discriminator = ToyNet::new(
        &[d_in, cfg.hidden, cfg.hidden, 1],
        &[Activation::Relu, Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut adam_g = Adam::new(&generator, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut adam_d = Adam::new(&discriminator, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

    // neighbor sets are fixed for the whole run
    let neighbor_sets: Vec<_> = store
        .items()
        .iter()
        .map(|item| store.knn(item.id))
        .collect::<Result<Vec<_>>>()?;

    let mut log = Vec::with_capacity(cfg.steps);
    let ids: Vec<u64> = store.items().iter().map(|i| i.id).collect();
    let id_to_row: std::collections::HashMap<u64, usize> =
        ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();

    let draw_batch = |rng: &mut ChaCha8Rng| -> Result<(Array2<f64>, Array2<f64>)> {
        // returns (real D inputs, G inputs) sharing conditioning per row
        let mut reals = Vec::with_capacity(cfg.batch);
        let mut gins = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let i = rng.gen_range(0..n);
            let (j_id, pitch_j) =
                crate::neighborhood::sample_neighbor(&neighbor_sets[i], store, rng)?;
            let j = id_to_row[&j_id];
            let h_i = &store.items()[i].feature;
            let p_idx = pitch_classes.binary_search(&pitch_j).unwrap();
            let p_onehot = one_hot(p_idx, n_pitch);
            let z: Vec<f64> = (0..cfg.z_dim).map(|_| normal.sample(rng)).collect();
            let x_j: Vec<f64> = data.row(j).to_vec();
            reals.push(concat_row(&[&x_j, p_onehot.as_slice().unwrap(), h_i]));
            gins.push(concat_row(&[&z, p_onehot.as_slice().unwrap(), h_i]));
        }
        Ok((vstack(&reals), vstack(&gins)))
    };

    for step in 0..cfg.steps {
        // --- discriminator step ---
        let (d_real_in, g_in_batch) = draw_batch(&mut rng)?;
        let g_cache = generator.forward_cached(&g_in_batch)?;
        let fake = &g_cache.output;
        let cond = d_real_in.slice(ndarray::s![.., data_dim..]).to_owned();
        let d_fake_in = hconcat(fake, &cond);

        let real_cache = discriminator.forward_cached(&d_real_in)?;
        let fake_cache = discriminator.forward_cached(&d_fake_in)?;
        let b = cfg.batch as f64;
        // stable BCE-with-logits gradients
        let d_real_grad = real_cache.output.mapv(|l| (sigmoid(l) - 1.0) / b);
        let d_fake_grad = fake_cache.output.mapv(|l| sigmoid(l) / b);
        let (mut gd, _) = discriminator.backward(&real_cache, &d_real_grad);
        let (gd_fake, _) = discriminator.backward(&fake_cache, &d_fake_grad);
        gd.add(&gd_fake);
        if cfg.r1_gamma > 0.0 {
            let (_, r1g) = r1_penalty(&discriminator, &d_real_in, cfg.r1_gamma)?;
            gd.add(&r1g);
        }
        adam_d.step(&mut discriminator, &gd);

        // --- generator step ---
        let (d_real_in2, g_in2) = draw_batch(&mut rng)?;
        let g_cache2 = generator.forward_cached(&g_in2)?;
        let cond2 = d_real_in2.slice(ndarray::s![.., data_dim..]).to_owned();
        let d_fake_in2 = hconcat(&g_cache2.output, &cond2);
        let fake_cache2 = discriminator.forward_cached(&d_fake_in2)?;
        let dlogit = match cfg.generator_loss {
            GeneratorLoss::NonSaturating => fake_cache2.output.mapv(|l| (sigmoid(l) - 1.0) / b),
            GeneratorLoss::Minimax => fake_cache2.output.mapv(|l| -sigmoid(l) / b),
        };
        let (_, d_input_grad) = discriminator.backward(&fake_cache2, &dlogit);
        let dg_out = d_input_grad.slice(ndarray::s![.., ..data_dim]).to_owned();
        let (gg, _) = generator.backward(&g_cache2, &dg_out);
        adam_g.step(&mut generator, &gg);

        // report in probability form
        let clamp = |p: f64| p.clamp(1e-12, 1.0 - 1e-12);
        let p_real: Vec<f64> = real_cache.output.iter().map(|&l| clamp(sigmoid(l))).collect();
        let p_fake: Vec<f64> = fake_cache.output.iter().map(|&l| clamp(sigmoid(l))).collect();
        let (loss_d, loss_g_mm) = gan_losses(&p_real, &p_fake)?;
        let loss_g = match cfg.generator_loss {
            GeneratorLoss::Minimax => loss_g_mm,
            GeneratorLoss::NonSaturating => {
                let p2: Vec<f64> = fake_cache2.output.iter().map(|&l| clamp(sigmoid(l))).collect();
                gan_loss_g_non_saturating(&p2)?
            }
        };
        log.push((step, loss_d, loss_g));
    }

    Ok(GanBundle {
        generator,
        discriminator,
        pitch_classes,
        z_dim: cfg.z_dim,
        feature_dim,
        data_dim,
        log,
    })
}

fn vstack(rows: &[Array2<f64>]) -> Array2<f64> {
    let cols = rows[0].ncols();
    let mut out = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&r.row(0));
    }
    out
}

fn hconcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(ndarray::s![.., ..a.ncols()]).assign(a);
    out.slice_mut(ndarray::s![.., a.ncols()..]).assign(b);
    out
}

/// x_g = G(z, p, f_phi(x_input)). The final softplus keeps outputs
/// non-negative.
pub fn generate(
    bundle: &GanBundle,
    f_phi: &ToyNet,
    x_input: &Array1<f64>,
    pitch: u8,
    z: &Array1<f64>,
) -> Result<Array1<f64>> {
    let x = x_input.clone().insert_axis(ndarray::Axis(0));
    let h = f_phi.forward(&x)?;
    generate_from_feature(bundle, &h.row(0).to_owned(), pitch, z)
}

/// Same as [`generate`] with a precomputed instance feature.
pub fn generate_from_feature(
    bundle: &GanBundle,
    h: &Array1<f64>,
    pitch: u8,
    z: &Array1<f64>,
) -> Result<Array1<f64>> {
    if z.len() != bundle.z_dim || h.len() != bundle.feature_dim {
        return Err(Error::invalid_argument("z or feature dimension mismatch"));
    }
    let p_idx = bundle.pitch_index(pitch)?;
    let p = one_hot(p_idx, bundle.pitch_classes.len());
    let input = concat_row(&[
        z.as_slice().unwrap(),
        p.as_slice().unwrap(),
        h.as_slice().unwrap(),
    ]);
    Ok(bundle.generator.forward(&input)?.row(0).to_owned())
}

/// G(z, p, (1-t) h_a + t h_b); endpoints reproduce generate() exactly.
pub fn interpolate(
    bundle: &GanBundle,
    h_a: &Array1<f64>,
    h_b: &Array1<f64>,
    t: f64,
    pitch: u8,
    z: &Array1<f64>,
) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid_argument(format!("t = {t} outside [0, 1]")));
    }
    let h = h_a * (1.0 - t) + h_b * t;
    generate_from_feature(bundle, &h, pitch, z)
}

/// Save a trained bundle as generator/ and discriminator/ checkpoints plus
/// a metadata file with the conditioning layout and training log.
pub fn save_gan(dir: impl AsRef<std::path::Path>, bundle: &GanBundle) -> Result<()> {
    use std::io::Write as _;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    super::save_net(dir.join("generator"), &bundle.generator)?;
    super::save_net(dir.join("discriminator"), &bundle.discriminator)?;
    let mut meta = String::new();
    meta.push_str(&format!("z_dim = {}\n", bundle.z_dim));
    meta.push_str(&format!("feature_dim = {}\n", bundle.feature_dim));
    meta.push_str(&format!("data_dim = {}\n", bundle.data_dim));
    let pitches: Vec<String> = bundle.pitch_classes.iter().map(|p| p.to_string()).collect();
    meta.push_str(&format!("pitch_classes = {}\n", pitches.join(" ")));
    let tmp = dir.join("meta.txt.tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(meta.as_bytes())?;
    f.sync_all()?;
    std::fs::rename(tmp, dir.join("meta.txt"))?;
    let mut log = String::from("step,loss_d,loss_g\n");
    for (s, d, g) in &bundle.log {
        log.push_str(&format!("{s},{d},{g}\n"));
    }
    std::fs::write(dir.join("train_log.csv"), log)?;
    Ok(())
}

pub fn load_gan(dir: impl AsRef<std::path::Path>) -> Result<GanBundle> {
    let dir = dir.as_ref();
    let generator = super::load_net(dir.join("generator"))?;
    let discriminator = super::load_net(dir.join("discriminator"))?;
    let meta = std::fs::read_to_string(dir.join("meta.txt"))?;
    let mut z_dim = None;
    let mut feature_dim = None;
    let mut data_dim = None;
    let mut pitch_classes: Vec<u8> = Vec::new();
    for line in meta.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "z_dim" => z_dim = value.parse().ok(),
            "feature_dim" => feature_dim = value.parse().ok(),
            "data_dim" => data_dim = value.parse().ok(),
            "pitch_classes" => {
                for tok in value.split_whitespace() {
                    pitch_classes.push(
                        tok.parse()
                            .map_err(|_| Error::format("bad pitch in meta.txt"))?,
                    );
                }
            }
            _ => return Err(Error::format(format!("unknown meta key {key:?}"))),
        }
    }
    let (z_dim, feature_dim, data_dim) = match (z_dim, feature_dim, data_dim) {
        (Some(z), Some(f), Some(d)) => (z, f, d),
        _ => return Err(Error::format("meta.txt missing dimensions")),
    };
    if pitch_classes.is_empty() {
        return Err(Error::format("meta.txt missing pitch classes"));
    }
    if generator.input_dim() != z_dim + pitch_classes.len() + feature_dim
        || generator.output_dim() != data_dim
    {
        return Err(Error::format("generator dimensions disagree with meta.txt"));
    }
    Ok(GanBundle {
        generator,
        discriminator,
        pitch_classes,
        z_dim,
        feature_dim,
        data_dim,
        log: Vec::new(),
    })
}
