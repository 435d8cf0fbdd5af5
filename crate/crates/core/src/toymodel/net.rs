//! Minimal feed-forward network with explicit forward/backward passes and
//! Adam state. Small enough to verify every gradient against central finite
//! differences.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softplus => softplus(z),
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(z),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::invalid_argument(format!("unknown activation '{other}'"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        (1.0 + z.exp()).ln()
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// out x in
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct ToyNet {
    pub layers: Vec<Layer>,
}

/// Per-layer cached inputs and pre-activations from a forward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_acts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl ForwardCache {
    pub fn pre_act(&self, layer: usize) -> &Array2<f64> {
        &self.pre_acts[layer]
    }
}

/// Gradients matching ToyNet's layer layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Vec<Array2<f64>>,
    pub db: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &ToyNet) -> Self {
        Gradients {
            dw: net.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            db: net.layers.iter().map(|l| Array1::zeros(l.b.len())).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            *a += b;
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.dw {
            a.mapv_inplace(|v| v * s);
        }
        for a in &mut self.db {
            a.mapv_inplace(|v| v * s);
        }
    }
}

impl ToyNet {
    /// Fully-connected net: sizes[0] inputs, one layer per following entry,
    /// acts[i] applied after layer i. He-style init scaled by fan-in.
    pub fn new(sizes: &[usize], acts: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || acts.len() != sizes.len() - 1 {
            return Err(Error::invalid_argument(
                "need >= 2 sizes and one activation per layer",
            ));
        }
        let normal = Normal::new(0.0, 1.0).unwrap();
        let layers = sizes
            .windows(2)
            .zip(acts)
            .map(|(pair, &act)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let scale = (2.0 / fan_in as f64).sqrt();
                Layer {
                    w: Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(rng) * scale),
                    b: Array1::zeros(fan_out),
                    act,
                }
            })
            .collect();
        Ok(ToyNet { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    /// Forward pass on a batch (rows are samples).
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "input dim {}, net expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            inputs.push(a.clone());
            let z = a.dot(&layer.w.t()) + &layer.b;
            a = z.mapv(|v| layer.act.apply(v));
            pre_acts.push(z);
        }
        Ok(ForwardCache {
            inputs,
            pre_acts,
            output: a,
        })
    }

    /// Backward pass: dL/d(output) in, parameter gradients and dL/d(input)
    /// out. Gradients are sums over the batch; divide by batch size in the
    /// loss if a mean is wanted.
    pub fn backward(&self, cache: &ForwardCache, dout: &Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let mut da = dout.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_acts[l];
            let dz = ndarray::Zip::from(&da)
                .and(z)
                .map_collect(|&g, &zv| g * layer.act.derivative(zv));
            grads.dw[l] = dz.t().dot(&cache.inputs[l]);
            grads.db[l] = dz.sum_axis(Axis(0));
            da = dz.dot(&layer.w);
        }
        (grads, da)
    }

    /// Flattened parameter vector, weights then bias per layer. Test hook
    /// for finite-difference checks and checkpointing.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.w.iter_mut() {
                *w = params[i];
                i += 1;
            }
            for b in l.b.iter_mut() {
                *b = params[i];
                i += 1;
            }
        }
        assert_eq!(i, params.len());
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Adam optimizer state for one ToyNet.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(net: &ToyNet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let n = net.num_params();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut ToyNet, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            for (w, g) in layer.w.iter_mut().zip(grads.dw[l].iter()) {
                self.update_one(w, *g, bc1, bc2, i);
                i += 1;
            }
            for (b, g) in layer.b.iter_mut().zip(grads.db[l].iter()) {
                self.update_one(b, *g, bc1, bc2, i);
                i += 1;
            }
        }
    }

    fn update_one(&mut self, p: &mut f64, g: f64, bc1: f64, bc2: f64, i: usize) {
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        let mhat = self.m[i] / bc1;
        let vhat = self.v[i] / bc2;
        *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_affine_layer_analytic_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ToyNet::new(&[3, 2], &[Activation::Identity], &mut rng).unwrap();
        let x = ndarray::array![[0.5, -1.0, 2.0]];
        let cache = net.forward_cached(&x).unwrap();
        // loss = sum of outputs -> dW = broadcast of inputs, db = 1
        let dout = Array2::ones((1, 2));
        let (grads, _) = net.backward(&cache, &dout);
        for r in 0..2 {
            for c in 0..3 {
                assert!((grads.dw[0][[r, c]] - x[[0, c]]).abs() < 1e-12);
            }
            assert!((grads.db[0][r] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_through_odd_nonlinearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = ToyNet::new(&[4, 4], &[Activation::Tanh], &mut rng).unwrap();
        for l in &mut net.layers {
            l.b.fill(0.0);
        }
        let x = Array2::zeros((2, 4));
        let y = net.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..10 {
            let acts = [Activation::Relu, Activation::Tanh, Activation::Softplus, Activation::Sigmoid];
            let act = acts[trial % acts.len()];
            let mut net =
                ToyNet::new(&[5, 7, 3], &[act, Activation::Identity], &mut rng).unwrap();
            let x = Array2::from_shape_fn((4, 5), |_| rng.gen_range(-1.0..1.0));
            // scalar loss: sum of squared outputs
            let loss = |net: &ToyNet| -> f64 {
                let y = net.forward(&x).unwrap();
                y.iter().map(|v| v * v).sum()
            };
            let cache = net.forward_cached(&x).unwrap();
            let dout = cache.output.mapv(|v| 2.0 * v);
            let (grads, _) = net.backward(&cache, &dout);

            let analytic: Vec<f64> = {
                let mut v = Vec::new();
                for l in 0..net.layers.len() {
                    v.extend(grads.dw[l].iter());
                    v.extend(grads.db[l].iter());
                }
                v
            };
            let params = net.flat_params();
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += h;
                net.set_flat_params(&p);
                let lp = loss(&net);
                p[i] -= 2.0 * h;
                net.set_flat_params(&p);
                let lm = loss(&net);
                let fd = (lp - lm) / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / (1.0 + fd.abs());
                max_rel = max_rel.max(rel);
            }
            net.set_flat_params(&params);
            assert!(max_rel < 1e-4, "trial {trial} max rel err {max_rel}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = ToyNet::new(
            &[4, 6, 2],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let x = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let loss_of = |x: &Array2<f64>| -> f64 {
            net.forward(x).unwrap().iter().map(|v| v * v).sum()
        };
        let cache = net.forward_cached(&x).unwrap();
        let dout = cache.output.mapv(|v| 2.0 * v);
        let (_, dx) = net.backward(&cache, &dout);
        let h = 1e-5;
        for i in 0..3 {
            for j in 0..4 {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (loss_of(&xp) - loss_of(&xm)) / (2.0 * h);
                let rel = (dx[[i, j]] - fd).abs() / (1.0 + fd.abs());
                assert!(rel < 1e-4);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = ToyNet::new(&[3, 3], &[Activation::Relu], &mut rng).unwrap();
        let before = net.flat_params();
        let mut adam = Adam::new(&net, 1e-2, 0.0, 0.99, 1e-8);
        let grads = Gradients::zeros_like(&net);
        for _ in 0..5 {
            adam.step(&mut net, &grads);
        }
        assert_eq!(net.flat_params(), before);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = ToyNet::new(&[3, 2], &[Activation::Identity], &mut rng).unwrap();
        let x = Array2::zeros((1, 4));
        assert!(net.forward(&x).is_err());
    }
}
