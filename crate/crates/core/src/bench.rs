//! Inversion initialization benchmark: compares SVD-clip, random and zero
//! initializations of the NNLS mel inversion on a seeded synthetic corpus
//! and reports iterations-to-target ratios.

use crate::dataset::synthetic_mel_corpus;
use crate::error::{Error, Result};
use crate::inversion::{mel_to_linear, ConvergenceTrace, NnlsConfig, NnlsInit};
use crate::signal::{MelFilterbank, StftConfig};
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Number of synthetic mel inputs.
    pub count: usize,
    /// Frames per input.
    pub frames: usize,
    pub seed: u64,
    /// Refinement settings shared by all runs; `max_iters` bounds the
    /// SVD-initialized run, and non-SVD runs get `max_iters_other`.
    pub nnls: NnlsConfig,
    pub max_iters_other: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            count: 20,
            frames: 8,
            seed: 0,
            nnls: NnlsConfig::default(),
            max_iters_other: 4000,
        }
    }
}

/// Result for a single input and a single initialization.
#[derive(Debug, Clone)]
pub struct InitRun {
    pub iterations_to_target: Option<usize>,
    pub total_iterations: usize,
    pub final_residual: f64,
    pub seconds: f64,
    pub monotonicity_violations: usize,
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub input: usize,
    pub target_residual: f64,
    pub svd: InitRun,
    pub random: InitRun,
    pub zeros: InitRun,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Median over inputs of random-init iterations-to-target divided by
    /// SVD-init iterations-to-target.
    pub median_ratio: f64,
    pub total_seconds: f64,
}

/// First iteration index whose residual is at or below `target`.
pub fn iterations_to_target(trace: &ConvergenceTrace, target: f64) -> Option<usize> {
    trace.residuals.iter().position(|&r| r <= target)
}

/// Count of steps where the residual increased by more than 1e-12.
pub fn monotonicity_violations(trace: &ConvergenceTrace) -> usize {
    trace
        .residuals
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12)
        .count()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn summarize(trace: &ConvergenceTrace, target: f64) -> InitRun {
    InitRun {
        iterations_to_target: iterations_to_target(trace, target),
        total_iterations: trace.iterations(),
        final_residual: trace.final_residual(),
        seconds: trace.seconds,
        monotonicity_violations: monotonicity_violations(trace),
    }
}

pub fn run_inversion_bench(
    fb: &MelFilterbank,
    stft_cfg: &StftConfig,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if cfg.count == 0 {
        return Err(Error::invalid_argument("benchmark needs at least one input"));
    }
    let start = std::time::Instant::now();
    let corpus = synthetic_mel_corpus(fb, stft_cfg, cfg.count, cfg.frames, cfg.seed)?;
    // warm the cached filterbank SVD outside the timed runs
    let _ = fb.sigma_max();

    let records: Vec<BenchRecord> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, mel)| -> Result<BenchRecord> {
            let svd_cfg = NnlsConfig {
                init: NnlsInit::SvdClip,
                ..cfg.nnls.clone()
            };
            let (_, svd_trace) = mel_to_linear(fb, mel, &svd_cfg)?;
            let target = 1.01 * svd_trace.final_residual();

            let other = |init: NnlsInit| -> Result<ConvergenceTrace> {
                let c = NnlsConfig {
                    init,
                    max_iters: cfg.max_iters_other,
                    seed: cfg.seed.wrapping_add(i as u64),
                    ..cfg.nnls.clone()
                };
                Ok(mel_to_linear(fb, mel, &c)?.1)
            };
            let random_trace = other(NnlsInit::Random)?;
            let zeros_trace = other(NnlsInit::Zeros)?;
            Ok(BenchRecord {
                input: i,
                target_residual: target,
                svd: summarize(&svd_trace, target),
                random: summarize(&random_trace, target),
                zeros: summarize(&zeros_trace, target),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ratios: Vec<f64> = records
        .iter()
        .map(|r| {
            let svd_iters = r.svd.iterations_to_target.unwrap_or(r.svd.total_iterations);
            // if random never reached the target, its full run is a lower
            // bound, which only under-reports the ratio
            let rand_iters = r
                .random
                .iterations_to_target
                .unwrap_or(r.random.total_iterations);
            rand_iters as f64 / svd_iters.max(1) as f64
        })
        .collect();
    let median_ratio = median(&mut ratios);
    Ok(BenchReport {
        records,
        median_ratio,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

impl BenchReport {
    pub fn total_monotonicity_violations(&self) -> usize {
        self.records
            .iter()
            .map(|r| {
                r.svd.monotonicity_violations
                    + r.random.monotonicity_violations
                    + r.zeros.monotonicity_violations
            })
            .sum()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "input,init,iterations_to_target,reached_target,total_iterations,final_residual,seconds"
        )?;
        for r in &self.records {
            for (name, run) in [("svd", &r.svd), ("random", &r.random), ("zeros", &r.zeros)] {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.input,
                    name,
                    run.iterations_to_target.unwrap_or(run.total_iterations),
                    run.iterations_to_target.is_some(),
                    run.total_iterations,
                    run.final_residual,
                    run.seconds
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterations_to_target_scans_trace() {
        let trace = ConvergenceTrace {
            residuals: vec![10.0, 5.0, 2.0, 1.5, 1.49],
            seconds: 0.0,
        };
        assert_eq!(iterations_to_target(&trace, 2.0), Some(2));
        assert_eq!(iterations_to_target(&trace, 100.0), Some(0));
        assert_eq!(iterations_to_target(&trace, 0.1), None);
        assert_eq!(monotonicity_violations(&trace), 0);
        let bad = ConvergenceTrace {
            residuals: vec![1.0, 2.0, 1.0],
            seconds: 0.0,
        };
        assert_eq!(monotonicity_violations(&bad), 1);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_scale_bench_favors_svd_init() {
        // reduced filterbank keeps this a fast smoke test; the full-scale
        // run lives in the acceptance suite
        let fb = MelFilterbank::new(96, 512, 16000, 0.0, 8000.0).unwrap();
        let stft_cfg = StftConfig {
            window_size: 256,
            hop_size: 64,
            fft_size: 512,
            target_frames: 16,
        };
        let cfg = BenchConfig {
            count: 4,
            frames: 4,
            seed: 3,
            max_iters_other: 2000,
            ..BenchConfig::default()
        };
        let report = run_inversion_bench(&fb, &stft_cfg, &cfg).unwrap();
        assert_eq!(report.records.len(), 4);
        assert_eq!(report.total_monotonicity_violations(), 0);
        assert!(
            report.median_ratio > 1.0,
            "median ratio {}",
            report.median_ratio
        );
        // deterministic
        let again = run_inversion_bench(&fb, &stft_cfg, &cfg).unwrap();
        assert_eq!(report.median_ratio, again.median_ratio);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 4);
    }
}
