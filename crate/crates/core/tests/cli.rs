//! End-to-end CLI checks: every command re-run with the same seed must
//! produce byte-identical artifacts (timing fields excluded).

use gstrument::dataset::{harmonic_waveform, HarmonicTone};
use gstrument::tensor::save_matrix_atomic;
use gstrument::wav::write_wav;
use ndarray::Array2;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = "\
stft.window_size = 256
stft.hop_size = 64
stft.fft_size = 512
stft.target_frames = 16
mel.bins = 48
nnls.max_iters = 40
gl.iters = 8
adv.steps = 60
adv.batch = 16
adv.feature_dim = 8
adv.hidden = 16
gan.steps = 25
gan.batch = 8
gan.z_dim = 4
gan.hidden = 16
seed = 7
";

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gstrument")
}

fn run(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env("GSTRUMENT_THREADS", "2")
        .output()
        .expect("spawn gstrument");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
}

fn strip_seconds_column(csv: &[u8]) -> String {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            fields.pop();
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_12_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("config.txt"), CONFIG).unwrap();

    // input WAV for analyze
    let tone = HarmonicTone {
        f0: 440.0,
        n_harmonics: 5,
        rolloff: 1.0,
        decay: 1.0,
    };
    let wave = harmonic_waveform(&tone, 16_000, 16_000).unwrap();
    write_wav(dir.join("in.wav"), &wave).unwrap();

    
    fn pair<'a>(rel_args: &[&'a str]) -> Vec<&'a str> {
        let mut a: Vec<&str> = rel_args.to_vec();
        a.extend_from_slice(&["--config", "config.txt"]);
        a
    }

    // analyze
    run(dir, &pair(&["analyze", "in.wav", "--out", "mel_a.gstm"]));
    run(dir, &pair(&["analyze", "in.wav", "--out", "mel_b.gstm"]));
    assert_eq!(read(dir, "mel_a.gstm"), read(dir, "mel_b.gstm"), "analyze");

    // invert (default init and explicit random init both succeed)
    run(dir, &pair(&["invert", "mel_a.gstm", "--out", "out_a.wav"]));
    run(dir, &pair(&["invert", "mel_a.gstm", "--out", "out_b.wav"]));
    assert_eq!(read(dir, "out_a.wav"), read(dir, "out_b.wav"), "invert");
    assert!(dir.join("out_a.trace.csv").exists());
    run(
        dir,
        &pair(&["invert", "mel_a.gstm", "--init", "random", "--out", "out_r.wav"]),
    );

    // bench-inversion: identical modulo the wall-clock seconds column
    let bench = ["bench-inversion", "--count", "3", "--frames", "3"];
    run(dir, &pair(&[&bench[..], &["--out", "bench_a.csv"]].concat()));
    run(dir, &pair(&[&bench[..], &["--out", "bench_b.csv"]].concat()));
    assert_eq!(
        strip_seconds_column(&read(dir, "bench_a.csv")),
        strip_seconds_column(&read(dir, "bench_b.csv")),
        "bench-inversion"
    );

    // dataset
    let ds = [
        "dataset",
        "--identities",
        "2",
        "--pitches",
        "3",
        "--per-cell",
        "4",
        "--dim",
        "8",
    ];
    run(dir, &pair(&[&ds[..], &["--out", "ds_a"]].concat()));
    run(dir, &pair(&[&ds[..], &["--out", "ds_b"]].concat()));
    assert_eq!(read(dir, "ds_a/x.gstm"), read(dir, "ds_b/x.gstm"), "dataset");
    assert_eq!(read(dir, "ds_a/labels.csv"), read(dir, "ds_b/labels.csv"));

    // train-extractor
    run(dir, &pair(&["train-extractor", "--data", "ds_a", "--out", "ext_a"]));
    run(dir, &pair(&["train-extractor", "--data", "ds_a", "--out", "ext_b"]));
    for rel in ["f_phi/layer0.w.gstm", "f_phi/layer1.w.gstm", "c_pitch/layer0.w.gstm"] {
        assert_eq!(
            read(dir, &format!("ext_a/{rel}")),
            read(dir, &format!("ext_b/{rel}")),
            "train-extractor {rel}"
        );
    }

    // train-gan
    let tg = ["train-gan", "--data", "ds_a", "--extractor", "ext_a", "--k", "4"];
    run(dir, &pair(&[&tg[..], &["--out", "gan_a"]].concat()));
    run(dir, &pair(&[&tg[..], &["--out", "gan_b"]].concat()));
    for rel in ["generator/layer0.w.gstm", "generator/layer2.w.gstm", "meta.txt"] {
        assert_eq!(
            read(dir, &format!("gan_a/{rel}")),
            read(dir, &format!("gan_b/{rel}")),
            "train-gan {rel}"
        );
    }

    // generate (twice) and interpolate at t = 0 (must equal generate)
    let gen = [
        "generate", "--gan", "gan_a", "--extractor", "ext_a", "--data", "ds_a", "--index", "0",
        "--pitch", "22",
    ];
    run(dir, &pair(&[&gen[..], &["--out", "gen_a.gstm"]].concat()));
    run(dir, &pair(&[&gen[..], &["--out", "gen_b.gstm"]].concat()));
    assert_eq!(read(dir, "gen_a.gstm"), read(dir, "gen_b.gstm"), "generate");
    let interp = [
        "interpolate", "--gan", "gan_a", "--extractor", "ext_a", "--data", "ds_a", "--a", "0",
        "--b", "5", "--t", "0", "--pitch", "22",
    ];
    run(dir, &pair(&[&interp[..], &["--out", "interp0.gstm"]].concat()));
    assert_eq!(
        read(dir, "interp0.gstm"),
        read(dir, "gen_a.gstm"),
        "interpolate t=0 endpoint"
    );

    // eval in both modes; identical sets print FID 0
    let feats = Array2::from_shape_fn((6, 3), |(r, c)| (r * 3 + c) as f64 * 0.25);
    save_matrix_atomic(dir.join("feat.gstm"), &feats).unwrap();
    let out = run(
        dir,
        &pair(&["eval", "--real", "feat.gstm", "--fake", "feat.gstm", "--out", "eval_same.txt"]),
    );
    assert!(out.contains("fid = 0.000000"), "eval output: {out}");
    let ev = [
        "eval", "--gan", "gan_a", "--extractor", "ext_a", "--data", "ds_a", "--trials", "40",
    ];
    let a = run(dir, &pair(&[&ev[..], &["--out", "eval_a.txt"]].concat()));
    run(dir, &pair(&[&ev[..], &["--out", "eval_b.txt"]].concat()));
    assert_eq!(read(dir, "eval_a.txt"), read(dir, "eval_b.txt"), "eval");
    assert!(a.contains("pitch_accuracy"), "eval output: {a}");

    println!("acceptance 12 [cli determinism]: PASS (all commands byte-stable under fixed seed)");
}

#[test]
fn cli_failures_exit_nonzero_without_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = Command::new(bin())
        .args(["analyze", "missing.wav", "--out", "never.gstm"])
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!dir.join("never.gstm").exists());

    // corrupt WAV
    std::fs::write(dir.join("bad.wav"), b"not a wav file").unwrap();
    let out = Command::new(bin())
        .args(["analyze", "bad.wav", "--out", "never.gstm"])
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!dir.join("never.gstm").exists());

    // unknown config key
    std::fs::write(dir.join("bad.cfg"), "no.such.key = 1\n").unwrap();
    let out = Command::new(bin())
        .args(["dataset", "--out", "ds", "--config", "bad.cfg"])
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(!out.status.success());

    // zero mel tensor inverts to silence with exit 0
    let zero = Array2::zeros((48, 16));
    save_matrix_atomic(dir.join("zero.gstm"), &zero).unwrap();
    std::fs::write(dir.join("cfg.txt"), CONFIG).unwrap();
    let out = Command::new(bin())
        .args(["invert", "zero.gstm", "--out", "silent.wav", "--config", "cfg.txt"])
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let wav = gstrument::wav::read_wav(dir.join("silent.wav")).unwrap();
    assert!(wav.samples.iter().all(|&s| s == 0.0));
}
