use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use gstrument::bench::{run_inversion_bench, BenchConfig};
use gstrument::config::{load_config, Config};
use gstrument::dataset::{factorized_toy_dataset, load_labeled, save_labeled};
use gstrument::eval::{feature_mse, frechet_distance, gaussian_stats, interpolation_eval};
use gstrument::inversion::{invert_mel, NnlsInit};
use gstrument::neighborhood::{FeatureStore, StoreItem};
use gstrument::signal::{analyze, preprocess, PreprocessConfig};
use gstrument::tensor::{load_matrix, save_matrix_atomic, Tensor};
use gstrument::toymodel::extractor::train_classifier;
use gstrument::toymodel::{
    generate_from_feature, interpolate, load_gan, load_net, probe_retrain, save_gan, save_net,
    train_extractor, train_gan,
};
use gstrument::wav::{read_wav, write_wav};
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_distr::Distribution;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "gstrument", about = "Mel analysis, NNLS audio inversion and toy instance-conditioned GAN pipelines", version)]
struct Cli {
    /// Plain-text key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// WAV -> preprocessed mel spectrogram tensor.
    Analyze {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mel tensor -> waveform via NNLS + Griffin-Lim; prints stage timings.
    Invert {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// NNLS initialization: svd, random or zeros.
        #[arg(long)]
        init: Option<String>,
        /// Overrides nnls.max_iters.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Compare NNLS initializations on a synthetic corpus; writes CSV.
    BenchInversion {
        #[arg(long)]
        out: PathBuf,
        /// Number of synthetic inputs (>= 1).
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Frames per input.
        #[arg(long, default_value_t = 8)]
        frames: usize,
    },
    /// Generate the factorized synthetic dataset into a directory.
    Dataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        identities: usize,
        #[arg(long, default_value_t = 8)]
        pitches: usize,
        #[arg(long, default_value_t = 16)]
        per_cell: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
    },
    /// Train the pitch-invariant feature extractor on a dataset directory.
    TrainExtractor {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the instance-conditioned GAN on a dataset + extractor.
    TrainGan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        extractor: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// k for the conditioning neighborhoods.
        #[arg(long, default_value_t = 16)]
        k: usize,
    },
    /// Generate one sample conditioned on a dataset row's features.
    Generate {
        #[arg(long)]
        gan: PathBuf,
        #[arg(long)]
        extractor: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Dataset row supplying the instance feature.
        #[arg(long)]
        index: usize,
        /// MIDI pitch to condition on.
        #[arg(long)]
        pitch: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate from a blend of two dataset rows' features.
    Interpolate {
        #[arg(long)]
        gan: PathBuf,
        #[arg(long)]
        extractor: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        b: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        pitch: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric report: either --real/--fake feature sets, or a trained GAN's
    /// interpolation study.
    Eval {
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long)]
        fake: Option<PathBuf>,
        #[arg(long)]
        gan: Option<PathBuf>,
        #[arg(long)]
        extractor: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_cfg(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p).with_context(|| format!("reading config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.nnls.seed = seed;
        cfg.adv.seed = seed;
        cfg.gan.seed = seed;
    } else {
        cfg.nnls.seed = cfg.seed;
        cfg.adv.seed = cfg.seed;
        cfg.gan.seed = cfg.seed;
    }
    Ok(cfg)
}

fn write_text_atomic(path: &std::path::Path, text: &str) -> anyhow::Result<()> {
    use std::io::Write as _;
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn run() -> anyhow::Result<()> {
    if let Ok(threads) = std::env::var("GSTRUMENT_THREADS") {
        let n: usize = threads
            .parse()
            .context("GSTRUMENT_THREADS must be a positive integer")?;
        if n == 0 {
            bail!("GSTRUMENT_THREADS must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("installing thread pool")?;
    }
    let cli = Cli::parse();
    let cfg = load_cfg(&cli)?;

    match &cli.command {
        Command::Analyze { input, out } => {
            let w = read_wav(input).with_context(|| format!("reading {}", input.display()))?;
            let pre = preprocess(&w, &PreprocessConfig::default())?;
            let fb = cfg.filterbank()?;
            let mel = analyze(&pre, &cfg.stft, &fb)?;
            save_matrix_atomic(out, &mel)?;
            let max = mel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = mel.mean().unwrap_or(0.0);
            println!(
                "analyzed {} -> {} ({} x {}, max {:.6}, mean {:.6})",
                input.display(),
                out.display(),
                mel.nrows(),
                mel.ncols(),
                max,
                mean
            );
        }
        Command::Invert {
            input,
            out,
            init,
            iters,
        } => {
            let mel = load_matrix(input)?;
            let fb = cfg.filterbank()?;
            let mut nnls = cfg.nnls;
            if let Some(init) = init {
                nnls.init = NnlsInit::from_str(init).map_err(anyhow::Error::from)?;
            }
            if let Some(iters) = iters {
                nnls.max_iters = *iters;
            }
            let samples = cfg.sample_rate as usize; // one second, matching preprocess
            let (wave, report) =
                invert_mel(&fb, &mel, &cfg.stft, &nnls, &cfg.griffin_lim, samples, cfg.sample_rate)?;
            write_wav(out, &wave)?;
            let mut trace_csv = Vec::new();
            report.nnls.write_csv(&mut trace_csv)?;
            write_text_atomic(
                &out.with_extension("trace.csv"),
                &String::from_utf8(trace_csv)?,
            )?;
            println!(
                "nnls: {} iterations, residual {:.6e}, {:.3} s",
                report.nnls.iterations(),
                report.nnls.final_residual(),
                report.nnls.seconds
            );
            println!(
                "griffin-lim: {} iterations, inconsistency {:.6e}, {:.3} s",
                report.griffin_lim.iterations(),
                report.griffin_lim.final_residual(),
                report.griffin_lim.seconds
            );
            println!("istft: folded into griffin-lim timing");
            println!("total: {:.3} s -> {}", report.total_seconds, out.display());
        }
        Command::BenchInversion { out, count, frames } => {
            let fb = cfg.filterbank()?;
            let bench = BenchConfig {
                count: *count,
                frames: *frames,
                seed: cfg.seed,
                nnls: cfg.nnls,
                ..BenchConfig::default()
            };
            let report = run_inversion_bench(&fb, &cfg.stft, &bench)?;
            let mut csv = Vec::new();
            report.write_csv(&mut csv)?;
            write_text_atomic(out, &String::from_utf8(csv)?)?;
            println!(
                "median iterations-to-target ratio (random / svd): {:.3}",
                report.median_ratio
            );
            println!(
                "monotonicity violations: {}",
                report.total_monotonicity_violations()
            );
            println!("report: {}", out.display());
        }
        Command::Dataset {
            out,
            identities,
            pitches,
            per_cell,
            dim,
            noise,
        } => {
            let data = factorized_toy_dataset(*identities, *pitches, *per_cell, *dim, *noise, cfg.seed);
            save_labeled(out, &data)?;
            println!(
                "dataset: {} samples ({} identities x {} pitches x {}), dim {} -> {}",
                data.len(),
                identities,
                pitches,
                per_cell,
                dim,
                out.display()
            );
        }
        Command::TrainExtractor { data, out } => {
            let ds = load_labeled(data)?;
            let bundle = train_extractor(&ds, &cfg.adv)?;
            save_net(out.join("f_phi"), &bundle.f_phi)?;
            save_net(out.join("c_id"), &bundle.c_id)?;
            save_net(out.join("c_pitch"), &bundle.c_pitch)?;
            let (pitch_acc, id_acc) = probe_retrain(&bundle.f_phi, &ds, cfg.seed)?;
            println!("adversarial extractor: pitch probe {pitch_acc:.4}, identity probe {id_acc:.4}");
            // ablation: identical run without the adversarial term
            let mut plain = cfg.adv.clone();
            plain.lambda_adv = 0.0;
            let baseline = train_extractor(&ds, &plain)?;
            let (p0, i0) = probe_retrain(&baseline.f_phi, &ds, cfg.seed)?;
            println!("lambda=0 baseline:     pitch probe {p0:.4}, identity probe {i0:.4}");
            println!("checkpoints: {}", out.display());
        }
        Command::TrainGan {
            data,
            extractor,
            out,
            k,
        } => {
            let ds = load_labeled(data)?;
            let f_phi = load_net(extractor.join("f_phi"))?;
            let features = f_phi.forward(&ds.x)?;
            let items: Vec<StoreItem> = (0..ds.len())
                .map(|r| StoreItem {
                    id: r as u64,
                    feature: features.row(r).to_vec(),
                    pitch: 21 + ds.pitch[r] as u8,
                    instrument_id: ds.identity[r] as u32,
                    instrument_category: ds.identity[r] as u32,
                })
                .collect();
            let store = FeatureStore::new(items, *k)?;
            let bundle = train_gan(&store, &ds.x, &cfg.gan)?;
            save_gan(out, &bundle)?;
            store.save(out.join("store_features.gstm"), out.join("store_labels.csv"))?;
            let (_, d_last, g_last) = bundle.log.last().copied().unwrap_or((0, 0.0, 0.0));
            println!(
                "gan: {} steps, final loss_d {:.4}, loss_g {:.4} -> {}",
                cfg.gan.steps,
                d_last,
                g_last,
                out.display()
            );
        }
        Command::Generate {
            gan,
            extractor,
            data,
            index,
            pitch,
            out,
        } => {
            let bundle = load_gan(gan)?;
            let f_phi = load_net(extractor.join("f_phi"))?;
            let ds = load_labeled(data)?;
            if *index >= ds.len() {
                bail!("index {} out of range ({} rows)", index, ds.len());
            }
            let x = ds.x.row(*index).to_owned().insert_axis(Axis(0));
            let h = f_phi.forward(&x)?.row(0).to_owned();
            let z = seeded_z(bundle.z_dim, cfg.seed);
            let sample = generate_from_feature(&bundle, &h, *pitch, &z)?;
            save_sample(out, &sample)?;
            println!("generated {} values -> {}", sample.len(), out.display());
        }
        Command::Interpolate {
            gan,
            extractor,
            data,
            a,
            b,
            t,
            pitch,
            out,
        } => {
            let bundle = load_gan(gan)?;
            let f_phi = load_net(extractor.join("f_phi"))?;
            let ds = load_labeled(data)?;
            if *a >= ds.len() || *b >= ds.len() {
                bail!("row index out of range ({} rows)", ds.len());
            }
            let feat = |i: usize| -> anyhow::Result<Array1<f64>> {
                let x = ds.x.row(i).to_owned().insert_axis(Axis(0));
                Ok(f_phi.forward(&x)?.row(0).to_owned())
            };
            let (ha, hb) = (feat(*a)?, feat(*b)?);
            let z = seeded_z(bundle.z_dim, cfg.seed);
            let sample = interpolate(&bundle, &ha, &hb, *t, *pitch, &z)?;
            save_sample(out, &sample)?;
            println!(
                "interpolated rows {} and {} at t = {} -> {}",
                a,
                b,
                t,
                out.display()
            );
        }
        Command::Eval {
            real,
            fake,
            gan,
            extractor,
            data,
            trials,
            out,
        } => {
            let text = match (real, fake, gan, extractor, data) {
                (Some(real), Some(fake), None, None, None) => {
                    let a = load_matrix(real)?;
                    let b = load_matrix(fake)?;
                    let fid = frechet_distance(&gaussian_stats(&a)?, &gaussian_stats(&b)?)?;
                    let mut text = format!("fid = {fid:.6}\n");
                    if a.dim() == b.dim() {
                        text.push_str(&format!("feature_mse = {:.6}\n", feature_mse(&a, &b)?));
                    }
                    text
                }
                (None, None, Some(gan), Some(extractor), Some(data)) => {
                    let bundle = load_gan(gan)?;
                    let f_phi = load_net(extractor.join("f_phi"))?;
                    let ds = load_labeled(data)?;
                    // evaluation-time classifiers trained on the dataset:
                    // identity net doubles as the FID feature extractor
                    let fid_net =
                        train_classifier(&ds.x, &ds.identity, ds.n_identity, 32, 400, cfg.seed)?;
                    // pitch classifier maps conditioning MIDI pitches back to
                    // dataset pitch indices via the bundle vocabulary
                    let pitch_net = {
                        let labels: Vec<usize> = ds
                            .pitch
                            .iter()
                            .map(|&p| {
                                bundle
                                    .pitch_index(21 + p as u8)
                                    .map_err(anyhow::Error::from)
                            })
                            .collect::<anyhow::Result<_>>()?;
                        train_classifier(
                            &ds.x,
                            &labels,
                            bundle.pitch_classes.len(),
                            32,
                            400,
                            cfg.seed.wrapping_add(1),
                        )?
                    };
                    let report = interpolation_eval(
                        &bundle, &f_phi, &fid_net, &pitch_net, &ds.x, *trials, cfg.seed,
                    )?;
                    report.to_text()
                }
                _ => bail!("eval needs either --real/--fake tensors or --gan/--extractor/--data"),
            };
            print!("{text}");
            if let Some(out) = out {
                write_text_atomic(out, &text)?;
                println!("report: {}", out.display());
            }
        }
    }
    Ok(())
}

fn seeded_z(dim: usize, seed: u64) -> Array1<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    Array1::from_shape_fn(dim, |_| normal.sample(&mut rng))
}

fn save_sample(path: &PathBuf, sample: &Array1<f64>) -> anyhow::Result<()> {
    let m = Array2::from_shape_fn((1, sample.len()), |(_, j)| sample[j]);
    let t = Tensor::from_matrix(&m);
    t.save(path)?;
    Ok(())
}
