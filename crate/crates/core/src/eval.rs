//! Evaluation metrics: Fréchet distance between feature Gaussians, pitch
//! accuracy, feature-space MSE, and the latent-interpolation harness.

use crate::error::{Error, Result};
use crate::toymodel::gan::{interpolate, GanBundle};
use crate::toymodel::losses::argmax;
use crate::toymodel::net::ToyNet;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Sample mean and unbiased covariance of a feature set.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    pub count: usize,
}

pub fn gaussian_stats(features: &Array2<f64>) -> Result<GaussianStats> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::invalid_argument("need at least 2 samples for covariance"));
    }
    let d = features.ncols();
    let mean = features.mean_axis(Axis(0)).unwrap();
    let mut cov = Array2::zeros((d, d));
    for row in features.rows() {
        let c = &row.to_owned() - &mean;
        for a in 0..d {
            for b in a..d {
                cov[[a, b]] += c[a] * c[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            cov[[a, b]] /= denom;
            cov[[b, a]] = cov[[a, b]];
        }
    }
    Ok(GaussianStats { mean, cov, count: n })
}

/// Symmetric PSD square root via eigendecomposition; eigenvalues below the
/// clamp are treated as zero.
fn sym_sqrt(m: &Array2<f64>, clamp: f64) -> Array2<f64> {
    let d = m.nrows();
    let dm = DMatrix::from_fn(d, d, |r, c| 0.5 * (m[[r, c]] + m[[c, r]]));
    let eig = dm.symmetric_eigen();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let lam = eig.eigenvalues[i].max(0.0);
        if lam <= clamp {
            continue;
        }
        let s = lam.sqrt();
        let v = eig.eigenvectors.column(i);
        for r in 0..d {
            for c in 0..d {
                out[(r, c)] += s * v[r] * v[c];
            }
        }
    }
    Array2::from_shape_fn((d, d), |(r, c)| out[(r, c)])
}

/// ‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2 (Σ_a Σ_b)^{1/2}), with the matrix root
/// computed as the symmetric root of Σ_a^{1/2} Σ_b Σ_a^{1/2}.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::invalid_argument("dimension mismatch"));
    }
    let clamp = 1e-8;
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(b.mean.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let sa_half = sym_sqrt(&a.cov, clamp);
    let inner = sa_half.dot(&b.cov).dot(&sa_half);
    let cross = sym_sqrt(&inner, clamp);
    let trace = |m: &Array2<f64>| (0..m.nrows()).map(|i| m[[i, i]]).sum::<f64>();
    let fid = mean_term + trace(&a.cov) + trace(&b.cov) - 2.0 * trace(&cross);
    Ok(fid.max(0.0))
}

/// Fraction of samples whose predicted pitch class matches the conditioning
/// pitch class.
pub fn pitch_accuracy(
    classifier: &ToyNet,
    samples: &Array2<f64>,
    conditioned: &[usize],
) -> Result<f64> {
    if samples.nrows() == 0 {
        return Err(Error::invalid_argument("empty sample set"));
    }
    if samples.nrows() != conditioned.len() {
        return Err(Error::invalid_argument("sample/label count mismatch"));
    }
    let logits = classifier.forward(samples)?;
    if logits.ncols() <= *conditioned.iter().max().unwrap() {
        return Err(Error::invalid_argument("classifier output smaller than pitch vocabulary"));
    }
    let hits = logits
        .rows()
        .into_iter()
        .zip(conditioned)
        .filter(|(row, &p)| argmax(row) == p)
        .count();
    Ok(hits as f64 / conditioned.len() as f64)
}

/// Mean squared Euclidean distance between paired feature vectors.
pub fn feature_mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid_argument("paired sets must have equal shape"));
    }
    if a.nrows() == 0 {
        return Err(Error::invalid_argument("empty sets"));
    }
    let mut total = 0.0;
    for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
        total += ra
            .iter()
            .zip(rb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    Ok(total / a.nrows() as f64)
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub fid: f64,
    pub pitch_accuracy: f64,
    pub feature_mse: f64,
    /// (pitch, accuracy, trials) per conditioning pitch.
    pub per_pitch: Vec<(u8, f64, usize)>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "fid = {:.6}\npitch_accuracy = {:.6}\nfeature_mse = {:.6}\n",
            self.fid, self.pitch_accuracy, self.feature_mse
        );
        for (p, acc, n) in &self.per_pitch {
            s.push_str(&format!("pitch_{p}_accuracy = {acc:.6} ({n} trials)\n"));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        s.push_str(&format!("fid,{}\n", self.fid));
        s.push_str(&format!("pitch_accuracy,{}\n", self.pitch_accuracy));
        s.push_str(&format!("feature_mse,{}\n", self.feature_mse));
        for (p, acc, _) in &self.per_pitch {
            s.push_str(&format!("pitch_{p}_accuracy,{acc}\n"));
        }
        s
    }
}

/// Latent interpolation study against a generator closure. Each trial draws
/// two inputs, a blend t ~ U(0,1), a random pitch and a fresh z; the report
/// compares FID-extractor statistics of the inputs and the interpolations
/// and scores pitch accuracy of the outputs.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_eval_with<G>(
    generate: G,
    f_phi: &ToyNet,
    fid_extractor: &ToyNet,
    pitch_classifier: &ToyNet,
    data: &Array2<f64>,
    pitch_classes: &[u8],
    z_dim: usize,
    n_trials: usize,
    seed: u64,
) -> Result<MetricReport>
where
    G: Fn(&Array1<f64>, &Array1<f64>, f64, u8, &Array1<f64>) -> Result<Array1<f64>>,
{
    if data.nrows() < 2 {
        return Err(Error::InvalidState("dataset smaller than 2".into()));
    }
    if n_trials < 2 {
        return Err(Error::invalid_argument("need at least 2 trials"));
    }
    if pitch_classes.is_empty() {
        return Err(Error::invalid_argument("empty pitch vocabulary"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = data.nrows();
    let mut inputs = Vec::with_capacity(n_trials);
    let mut outputs = Vec::with_capacity(n_trials);
    let mut pitch_idx = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let t: f64 = rng.gen();
        let p_i = rng.gen_range(0..pitch_classes.len());
        let pitch = pitch_classes[p_i];
        let z = Array1::from_shape_fn(z_dim, |_| normal.sample(&mut rng));
        let xa = data.row(a).to_owned();
        let xb = data.row(b).to_owned();
        let ha = f_phi.forward(&xa.clone().insert_axis(Axis(0)))?.row(0).to_owned();
        let hb = f_phi.forward(&xb.clone().insert_axis(Axis(0)))?.row(0).to_owned();
        let out = generate(&ha, &hb, t, pitch, &z)?;
        inputs.push(xa);
        outputs.push(out);
        pitch_idx.push(p_i);
    }
    let dim_in = inputs[0].len();
    let dim_out = outputs[0].len();
    if dim_in != dim_out {
        return Err(Error::invalid_argument("generator output dimension differs from data"));
    }
    let to_mat = |rows: &[Array1<f64>]| {
        Array2::from_shape_fn((rows.len(), dim_in), |(r, c)| rows[r][c])
    };
    let in_mat = to_mat(&inputs);
    let out_mat = to_mat(&outputs);
    let in_feat = fid_extractor.forward(&in_mat)?;
    let out_feat = fid_extractor.forward(&out_mat)?;
    let fid = frechet_distance(&gaussian_stats(&in_feat)?, &gaussian_stats(&out_feat)?)?;
    let acc = pitch_accuracy(pitch_classifier, &out_mat, &pitch_idx)?;
    let mse = feature_mse(&in_feat, &out_feat)?;

    let mut per_pitch = Vec::new();
    for (p_i, &p) in pitch_classes.iter().enumerate() {
        let trials: Vec<usize> = (0..n_trials).filter(|&i| pitch_idx[i] == p_i).collect();
        if trials.is_empty() {
            continue;
        }
        let sub = out_mat.select(Axis(0), &trials);
        let labels = vec![p_i; trials.len()];
        let acc_p = pitch_accuracy(pitch_classifier, &sub, &labels)?;
        per_pitch.push((p, acc_p, trials.len()));
    }
    Ok(MetricReport {
        fid,
        pitch_accuracy: acc,
        feature_mse: mse,
        per_pitch,
    })
}

/// Interpolation study on a trained GAN bundle.
pub fn interpolation_eval(
    bundle: &GanBundle,
    f_phi: &ToyNet,
    fid_extractor: &ToyNet,
    pitch_classifier: &ToyNet,
    data: &Array2<f64>,
    n_trials: usize,
    seed: u64,
) -> Result<MetricReport> {
    interpolation_eval_with(
        |ha, hb, t, pitch, z| interpolate(bundle, ha, hb, t, pitch, z),
        f_phi,
        fid_extractor,
        pitch_classifier,
        data,
        &bundle.pitch_classes,
        bundle.z_dim,
        n_trials,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::net::{Activation, Layer};

    fn stats_1d(mu: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: Array1::from_vec(vec![mu]),
            cov: Array2::from_elem((1, 1), var),
            count: 2,
        }
    }

    fn identity_net(dim: usize) -> ToyNet {
        ToyNet {
            layers: vec![Layer {
                w: Array2::eye(dim),
                b: Array1::zeros(dim),
                act: Activation::Identity,
            }],
        }
    }

    #[test]
    fn gaussian_stats_closed_forms() {
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let s = gaussian_stats(&x).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.cov[[0, 0]], 2.0);

        let same = Array2::from_elem((5, 3), 1.5);
        let s = gaussian_stats(&same).unwrap();
        assert!(s.cov.iter().all(|&v| v == 0.0));

        let one = Array2::zeros((1, 2));
        assert!(gaussian_stats(&one).is_err());
    }

    #[test]
    fn gaussian_stats_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((100, 4), |_| rng.gen_range(-2.0..2.0));
        let s = gaussian_stats(&x).unwrap();
        // independent two-pass computation
        let n = 100usize;
        let mut mean = vec![0.0; 4];
        for r in x.rows() {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n as f64;
            }
        }
        for a in 0..4 {
            assert!((s.mean[a] - mean[a]).abs() < 1e-10);
            for b in 0..4 {
                let mut c = 0.0;
                for r in x.rows() {
                    c += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
                c /= (n - 1) as f64;
                assert!((s.cov[[a, b]] - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn frechet_closed_forms() {
        // identical Gaussians
        let a = stats_1d(0.7, 1.3);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-12);
        // 1-D: (mu1-mu2)^2 + (sigma1-sigma2)^2
        let d = frechet_distance(&stats_1d(0.0, 1.0), &stats_1d(3.0, 1.0)).unwrap();
        assert!((d - 9.0).abs() < 1e-10);
        let d = frechet_distance(&stats_1d(0.0, 1.0), &stats_1d(0.0, 4.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn frechet_symmetric_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xa = Array2::from_shape_fn((40, 3), |_| rng.gen_range(-1.0..1.0));
        let xb = Array2::from_shape_fn((40, 3), |(_, c)| rng.gen_range(-1.0..1.0) + c as f64);
        let a = gaussian_stats(&xa).unwrap();
        let b = gaussian_stats(&xb).unwrap();
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!(ab >= 0.0);
        assert!((ab - ba).abs() < 1e-8, "asymmetry {}", (ab - ba).abs());

        let mismatched = gaussian_stats(&Array2::from_elem((3, 2), 0.5));
        // stats with different dims must be rejected
        assert!(frechet_distance(&a, &mismatched.unwrap()).is_err());
    }

    #[test]
    fn pitch_accuracy_random_classifier_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ToyNet::new(&[4, 8], &[Activation::Identity], &mut rng).unwrap();
        let n = 10_000;
        let x = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..8)).collect();
        let acc = pitch_accuracy(&net, &x, &labels).unwrap();
        let p = 1.0 / 8.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - p).abs() < 3.0 * sigma, "acc {acc}");

        let empty = Array2::zeros((0, 4));
        assert!(pitch_accuracy(&net, &empty, &[]).is_err());
    }

    #[test]
    fn feature_mse_closed_forms() {
        let a = Array2::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
        let b = Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap();
        assert_eq!(feature_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(feature_mse(&a, &b).unwrap(), 5.0);
        let c = Array2::zeros((3, 1));
        assert!(feature_mse(&a, &c).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((20, 5), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((20, 5), |_| rng.gen_range(-1.0..1.0));
        let got = feature_mse(&x, &y).unwrap();
        let mut oracle = 0.0;
        for i in 0..20 {
            for j in 0..5 {
                oracle += (x[[i, j]] - y[[i, j]]).powi(2);
            }
        }
        oracle /= 20.0;
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn interpolation_eval_degenerate_memorizer() {
        // generator ignores z and pitch and returns h_a when t -> 0; with
        // identity f_phi this reproduces the input exactly
        let dim = 3;
        let data = Array2::from_shape_vec(
            (2, dim),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let ident = identity_net(dim);
        let report = interpolation_eval_with(
            |ha, _hb, _t, _p, _z| Ok(ha.clone()),
            &ident,
            &ident,
            &ident,
            &data,
            &[60, 61, 62],
            2,
            50,
            7,
        )
        .unwrap();
        assert!(report.fid < 1e-9, "fid {}", report.fid);
        assert!(report.feature_mse < 1e-18);
    }

    #[test]
    fn interpolation_eval_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = Array2::from_shape_fn((10, 4), |_| rng.gen_range(0.0..1.0));
        let f = ToyNet::new(&[4, 3], &[Activation::Identity], &mut rng).unwrap();
        let cls = ToyNet::new(&[4, 2], &[Activation::Identity], &mut rng).unwrap();
        let gen = |ha: &Array1<f64>, hb: &Array1<f64>, t: f64, _p: u8, _z: &Array1<f64>| {
            let h = ha * (1.0 - t) + hb * t;
            let mut out = Array1::zeros(4);
            for i in 0..3 {
                out[i] = h[i];
            }
            Ok(out)
        };
        let a = interpolation_eval_with(gen, &f, &f, &cls, &data, &[60, 61], 2, 30, 5).unwrap();
        let b = interpolation_eval_with(gen, &f, &f, &cls, &data, &[60, 61], 2, 30, 5).unwrap();
        assert_eq!(a.fid, b.fid);
        assert_eq!(a.pitch_accuracy, b.pitch_accuracy);
        assert_eq!(a.feature_mse, b.feature_mse);
        assert!(interpolation_eval_with(gen, &f, &f, &cls, &data.slice(ndarray::s![..1, ..]).to_owned(), &[60], 2, 30, 5).is_err());
    }
}
