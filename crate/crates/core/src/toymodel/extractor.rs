//! Adversarially trained pitch-invariant feature extractor: the identity
//! classifier objective with a KL-to-uniform pitch-adversarial term,
//! alternated against pitch classifier updates, plus the probe re-training
//! protocol that measures what the features still encode.

use super::losses::{accuracy, cross_entropy, kl_uniform};
use super::net::{Activation, Adam, ToyNet};
use crate::error::{Error, Result};
use ndarray::{Array2, Axis};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adversarial training hyperparameters. Adam defaults follow the training
/// setup used elsewhere in the pipeline: lr 2.5e-3, betas (0.0, 0.99).
#[derive(Debug, Clone, Copy)]
pub struct AdvConfig {
    pub lambda_adv: f64,
    /// Eq.-style alternation: steps of the joint (extractor + identity)
    /// objective per pitch-classifier step.
    pub extractor_steps_per_adversary_step: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            lambda_adv: 1.0,
            extractor_steps_per_adversary_step: 1,
            lr: 2.5e-3,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
            steps: 3000,
            batch: 64,
            feature_dim: 16,
            hidden: 32,
            seed: 0,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_adv < 0.0 {
            return Err(Error::invalid_argument("lambda_adv must be >= 0"));
        }
        if self.lr <= 0.0 {
            return Err(Error::invalid_argument("lr must be > 0"));
        }
        if self.batch == 0 || self.steps == 0 {
            return Err(Error::invalid_argument("steps and batch must be >= 1"));
        }
        Ok(())
    }
}

/// Labeled toy dataset: rows of `x` with pitch and instrument-identity
/// class indices.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub x: Array2<f64>,
    pub pitch: Vec<usize>,
    pub identity: Vec<usize>,
    pub n_pitch: usize,
    pub n_identity: usize,
}

impl LabeledData {
    pub fn validate(&self) -> Result<()> {
        let n = self.x.nrows();
        if self.pitch.len() != n || self.identity.len() != n {
            return Err(Error::invalid_argument("label/row count mismatch"));
        }
        if self.pitch.iter().any(|&p| p >= self.n_pitch)
            || self.identity.iter().any(|&i| i >= self.n_identity)
        {
            return Err(Error::invalid_argument("label out of range"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledData {
        LabeledData {
            x: self.x.select(Axis(0), idx),
            pitch: idx.iter().map(|&i| self.pitch[i]).collect(),
            identity: idx.iter().map(|&i| self.identity[i]).collect(),
            n_pitch: self.n_pitch,
            n_identity: self.n_identity,
        }
    }
}

/// The two alternating loss values on a batch: the joint objective
/// (identity CE + lambda * KL(uniform || pitch predictions)) and the
/// adversary's pitch CE.
pub fn extractor_losses(
    f_phi: &ToyNet,
    c_id: &ToyNet,
    c_pitch: &ToyNet,
    batch_x: &Array2<f64>,
    identity: &[usize],
    pitch: &[usize],
    lambda_adv: f64,
) -> Result<(f64, f64)> {
    let h = f_phi.forward(batch_x)?;
    let id_logits = c_id.forward(&h)?;
    let pitch_logits = c_pitch.forward(&h)?;
    let (ce_id, _) = cross_entropy(&id_logits, identity)?;
    let (kl, _) = kl_uniform(&pitch_logits);
    let (ce_pitch, _) = cross_entropy(&pitch_logits, pitch)?;
    Ok((ce_id + lambda_adv * kl, ce_pitch))
}

/// A trained extractor with its two classifier heads.
pub struct ExtractorBundle {
    pub f_phi: ToyNet,
    pub c_id: ToyNet,
    pub c_pitch: ToyNet,
    /// (step, joint loss, pitch-adversary loss)
    pub log: Vec<(usize, f64, f64)>,
}

fn sample_batch(rng: &mut impl Rng, n: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.gen_range(0..n)).collect()
}

/// Alternating adversarial training. Joint steps update f_phi and c_id
/// only; adversary steps update c_pitch only.
pub fn train_extractor(data: &LabeledData, cfg: &AdvConfig) -> Result<ExtractorBundle> {
    train_extractor_with(data, cfg, |_, _, _, _, _| {})
}

/// [`train_extractor`] with a per-step observer. After every step the
/// observer receives (step index, whether it was a joint step, f_phi, c_id,
/// c_pitch), which makes update-isolation checkable from outside.
pub fn train_extractor_with<F>(
    data: &LabeledData,
    cfg: &AdvConfig,
    mut observe: F,
) -> Result<ExtractorBundle>
where
    F: FnMut(usize, bool, &ToyNet, &ToyNet, &ToyNet),
{
    cfg.validate()?;
    data.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidState("empty dataset".into()));
    }
    if data.n_identity < 2 {
        eprintln!("warning: single identity class, extractor has nothing to separate");
    }
    let dim = data.x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut f_phi = ToyNet::new(
        &[dim, cfg.hidden, cfg.feature_dim],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut c_id = ToyNet::new(
        &[cfg.feature_dim, cfg.hidden, data.n_identity],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut c_pitch = ToyNet::new(
        &[cfg.feature_dim, cfg.hidden, data.n_pitch],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut adam_f = Adam::new(&f_phi, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut adam_id = Adam::new(&c_id, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut adam_pitch = Adam::new(&c_pitch, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

    let mut log = Vec::new();
    let period = cfg.extractor_steps_per_adversary_step + 1;
    for step in 0..cfg.steps {
        let idx = sample_batch(&mut rng, data.len(), cfg.batch);
        let bx = data.x.select(Axis(0), &idx);
        let bid: Vec<usize> = idx.iter().map(|&i| data.identity[i]).collect();
        let bp: Vec<usize> = idx.iter().map(|&i| data.pitch[i]).collect();
        let joint = step % period < cfg.extractor_steps_per_adversary_step;

        if joint {
            // joint objective: CE on identity plus lambda * KL-to-uniform on
            // pitch predictions; gradients reach f_phi and c_id only
            let fc = f_phi.forward_cached(&bx)?;
            let idc = c_id.forward_cached(&fc.output)?;
            let pc = c_pitch.forward_cached(&fc.output)?;
            let (loss_id, did_logits) = cross_entropy(&idc.output, &bid)?;
            let (loss_kl, dkl_logits) = kl_uniform(&pc.output);
            let (grads_id, dh_id) = c_id.backward(&idc, &did_logits);
            // gradient flows through c_pitch into h but c_pitch stays fixed
            let (_, dh_kl) = c_pitch.backward(&pc, &dkl_logits);
            let dh = &dh_id + &(dh_kl * cfg.lambda_adv);
            let (grads_f, _) = f_phi.backward(&fc, &dh);
            adam_f.step(&mut f_phi, &grads_f);
            adam_id.step(&mut c_id, &grads_id);
            log.push((step, loss_id + cfg.lambda_adv * loss_kl, f64::NAN));
        } else {
            // adversary: pitch CE through the frozen extractor
            let h = f_phi.forward(&bx)?;
            let pc = c_pitch.forward_cached(&h)?;
            let (loss_pitch, dp_logits) = cross_entropy(&pc.output, &bp)?;
            let (grads_p, _) = c_pitch.backward(&pc, &dp_logits);
            adam_pitch.step(&mut c_pitch, &grads_p);
            log.push((step, f64::NAN, loss_pitch));
        }
        observe(step, joint, &f_phi, &c_id, &c_pitch);
    }
    Ok(ExtractorBundle {
        f_phi,
        c_id,
        c_pitch,
        log,
    })
}

/// Probe re-training: freeze the extractor, train fresh classifier heads on
/// a train split, report (pitch accuracy, identity accuracy) on the held-out
/// split.
pub fn probe_retrain(f_phi: &ToyNet, data: &LabeledData, seed: u64) -> Result<(f64, f64)> {
    probe_retrain_features(&f_phi.forward(&data.x)?, data, seed)
}

/// Same protocol on precomputed features (rows aligned with `data`).
pub fn probe_retrain_features(
    features: &Array2<f64>,
    data: &LabeledData,
    seed: u64,
) -> Result<(f64, f64)> {
    data.validate()?;
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let split = (n * 4) / 5;
    let (train_idx, test_idx) = order.split_at(split.max(1).min(n - 1));

    let feat_dim = features.ncols();
    let hidden = 32;
    let mut probe_pitch = ToyNet::new(
        &[feat_dim, hidden, data.n_pitch],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut probe_id = ToyNet::new(
        &[feat_dim, hidden, data.n_identity],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut adam_p = Adam::new(&probe_pitch, 5e-3, 0.9, 0.999, 1e-8);
    let mut adam_i = Adam::new(&probe_id, 5e-3, 0.9, 0.999, 1e-8);

    let train_x = features.select(Axis(0), train_idx);
    let train_pitch: Vec<usize> = train_idx.iter().map(|&i| data.pitch[i]).collect();
    let train_id: Vec<usize> = train_idx.iter().map(|&i| data.identity[i]).collect();

    for _ in 0..600 {
        let pc = probe_pitch.forward_cached(&train_x)?;
        let (_, dlogits) = cross_entropy(&pc.output, &train_pitch)?;
        let (g, _) = probe_pitch.backward(&pc, &dlogits);
        adam_p.step(&mut probe_pitch, &g);

        let ic = probe_id.forward_cached(&train_x)?;
        let (_, dlogits) = cross_entropy(&ic.output, &train_id)?;
        let (g, _) = probe_id.backward(&ic, &dlogits);
        adam_i.step(&mut probe_id, &g);
    }

    let test_x = features.select(Axis(0), test_idx);
    let test_pitch: Vec<usize> = test_idx.iter().map(|&i| data.pitch[i]).collect();
    let test_id: Vec<usize> = test_idx.iter().map(|&i| data.identity[i]).collect();
    let pitch_acc = accuracy(&probe_pitch.forward(&test_x)?, &test_pitch);
    let id_acc = accuracy(&probe_id.forward(&test_x)?, &test_id);
    Ok((pitch_acc, id_acc))
}

/// Full-batch supervised classifier training, used for evaluation-time
/// pitch classifiers and FID feature extractors.
pub fn train_classifier(
    x: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    hidden: usize,
    steps: usize,
    seed: u64,
) -> Result<ToyNet> {
    if x.nrows() == 0 || x.nrows() != labels.len() {
        return Err(Error::invalid_argument("empty or mismatched training set"));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::invalid_argument("label out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ToyNet::new(
        &[x.ncols(), hidden, n_classes],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    )?;
    let mut adam = Adam::new(&net, 5e-3, 0.9, 0.999, 1e-8);
    for _ in 0..steps {
        let c = net.forward_cached(x)?;
        let (_, dlogits) = cross_entropy(&c.output, labels)?;
        let (g, _) = net.backward(&c, &dlogits);
        adam.step(&mut net, &g);
    }
    Ok(net)
}
