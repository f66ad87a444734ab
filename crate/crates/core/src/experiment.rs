//! Randomized end-to-end trials: random message, encode, channel, decode,
//! compare with ground truth.
//!
//! Trial `t` is driven entirely by a ChaCha8 stream seeded with
//! `base_seed + t` (wrapping), so rows do not depend on how trials are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{expected_unrecoverable, poisson_interval};
use crate::channel::{corrupt_table, ChannelError, ChannelSpec};
use crate::codec::{decode_timed, encode, CodecError, CodecParams, TimingMode};
use crate::hashing::{low_mask, ChecksumFlavor};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Clean patch, vary the cell count around the peeling threshold.
    Threshold,
    /// Corrupted patch cells; count trials left with unrecovered symbols.
    Failure,
    /// Stage timings of the decoder.
    Timing,
    /// Bursty message errors instead of uniform ones.
    Burst,
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "threshold" => Ok(ExperimentKind::Threshold),
            "failure" => Ok(ExperimentKind::Failure),
            "timing" => Ok(ExperimentKind::Timing),
            "burst" => Ok(ExperimentKind::Burst),
            other => Err(format!("unknown experiment `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub message_len: usize,
    pub symbol_bits: u32,
    pub k: usize,
    pub cells: usize,
    /// Uniform symbol errors (ignored by burst experiments).
    pub errors: usize,
    pub burst_len: usize,
    pub burst_count: usize,
    pub cell_errors: usize,
    pub flavor: ChecksumFlavor,
    pub checksum_bits: u32,
    pub base_seed: u64,
    pub timing_mode: TimingMode,
    pub single_thread: bool,
}

impl ExperimentConfig {
    /// One million 20-bit symbols, 10000 symbol errors, k = 4; the cell
    /// count and patch damage depend on the experiment.
    pub fn standard(kind: ExperimentKind) -> Self {
        let (cells, cell_errors) = match kind {
            ExperimentKind::Threshold => (26_000, 0),
            ExperimentKind::Failure | ExperimentKind::Timing => (30_000, 600),
            ExperimentKind::Burst => (26_000, 0),
        };
        ExperimentConfig {
            kind,
            trials: 1000,
            message_len: 1_000_000,
            symbol_bits: 20,
            k: 4,
            cells,
            errors: 10_000,
            burst_len: 1000,
            burst_count: 10,
            cell_errors,
            flavor: ChecksumFlavor::Hash,
            checksum_bits: 32,
            base_seed: 0,
            timing_mode: if kind == ExperimentKind::Timing { TimingMode::SyntheticIndex } else { TimingMode::WithHash },
            single_thread: kind == ExperimentKind::Timing,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    pub fn channel(&self) -> ChannelSpec {
        let spec = match self.kind {
            ExperimentKind::Burst => ChannelSpec::burst(self.burst_len, self.burst_count),
            _ => ChannelSpec::uniform(self.errors),
        };
        spec.with_cell_errors(self.cell_errors)
    }

    /// Symbol errors injected per trial.
    pub fn symbol_errors(&self) -> usize {
        self.channel().message.total()
    }

    pub fn params(&self, seed: u64) -> CodecParams {
        CodecParams::new(self.message_len as u64, self.symbol_bits, self.k, self.cells)
            .with_seed(seed)
            .with_checksum(self.flavor, self.checksum_bits)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.params(0).validate().map_err(CodecError::from)?;
        if !self.cells.is_multiple_of(self.k) {
            return Err(ExperimentError::Config(format!(
                "cells ({}) must be a multiple of k ({})",
                self.cells, self.k
            )));
        }
        if self.symbol_errors() > self.message_len {
            return Err(ExperimentError::Config(format!(
                "{} symbol errors exceed the message length {}",
                self.symbol_errors(),
                self.message_len
            )));
        }
        if self.kind == ExperimentKind::Burst && self.burst_count > 0 && self.burst_len == 0 {
            return Err(ExperimentError::Config("burst length must be positive".into()));
        }
        if self.cell_errors > self.cells {
            return Err(ExperimentError::Config(format!(
                "{} cell errors exceed the {} cells",
                self.cell_errors, self.cells
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub message_len: usize,
    pub symbol_errors: usize,
    pub cells: usize,
    pub k: usize,
    pub cell_errors: usize,
    /// Decoder's own verdict (no residual cells).
    pub success: bool,
    /// Output equals the original message.
    pub recovered: bool,
    pub corrections: usize,
    pub residual_cells: usize,
    pub anomalies: usize,
    /// Corrupted positions still wrong after decoding.
    pub unrecovered_symbols: usize,
    /// Corrections that wrote a wrong value.
    pub miscorrections: usize,
    pub stage1_ms: f64,
    pub stage2_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingSummary {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl TimingSummary {
    fn of(mut samples: Vec<f64>) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        let pick = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
        Some(TimingSummary {
            mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    pub recovered: usize,
    pub failures: usize,
    pub recovery_rate: f64,
    pub decoder_success: usize,
    /// Failed trials that left exactly one corrupted symbol unrecovered.
    pub single_symbol_failures: usize,
    pub miscorrections: usize,
    /// `trials * E * z^k` from the all-cells-corrupted failure model.
    pub expected_failures: f64,
    /// 99% Poisson acceptance interval around `expected_failures`.
    pub failure_interval: (u64, u64),
    pub stage1: Option<TimingSummary>,
    pub stage2: Option<TimingSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRow>,
    pub summary: ExperimentSummary,
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialRow, ExperimentError> {
    let seed = cfg.trial_seed(trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = low_mask(cfg.symbol_bits);
    let message: Vec<u64> = (0..cfg.message_len).map(|_| rng.random::<u64>() & mask).collect();
    let params = cfg.params(rng.random());
    let patch = encode(&message, &params)?;

    let channel = cfg.channel();
    let (received, positions) = channel.corrupt_message(&message, cfg.symbol_bits, &mut rng)?;
    let (patch, _) = corrupt_table(&patch, channel.cell_errors, &mut rng)?;

    let out = decode_timed(&received, &patch, &params, cfg.timing_mode)?;
    let unrecovered_symbols = positions.iter().filter(|&&i| out.message[i] != message[i]).count();
    let miscorrections = out.report.corrections.iter().filter(|c| message[c.position as usize] != c.new).count();

    Ok(TrialRow {
        trial,
        seed,
        message_len: cfg.message_len,
        symbol_errors: positions.len(),
        cells: cfg.cells,
        k: cfg.k,
        cell_errors: channel.cell_errors,
        success: out.report.success,
        recovered: out.message == message,
        corrections: out.report.corrections.len(),
        residual_cells: out.report.residual_cells,
        anomalies: out.report.anomalies,
        unrecovered_symbols,
        miscorrections,
        stage1_ms: out.timings.stage1.as_secs_f64() * 1e3,
        stage2_ms: out.timings.stage2.as_secs_f64() * 1e3,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let rows: Vec<TrialRow> = if cfg.single_thread {
        (0..cfg.trials).map(|t| run_trial(cfg, t)).collect::<Result<_, _>>()?
    } else {
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect::<Result<_, _>>()?
    };
    let summary = summarize(cfg, &rows);
    Ok(ExperimentReport { config: cfg.clone(), rows, summary })
}

pub fn summarize(cfg: &ExperimentConfig, rows: &[TrialRow]) -> ExperimentSummary {
    let trials = rows.len();
    let recovered = rows.iter().filter(|r| r.recovered).count();
    let z = if cfg.cells == 0 { 0.0 } else { cfg.cell_errors as f64 / cfg.cells as f64 };
    let per_trial = expected_unrecoverable(cfg.symbol_errors() as f64, z.min(1.0), cfg.k as u32).unwrap_or(0.0);
    let expected_failures = per_trial * trials as f64;
    ExperimentSummary {
        trials,
        recovered,
        failures: trials - recovered,
        recovery_rate: if trials == 0 { 0.0 } else { recovered as f64 / trials as f64 },
        decoder_success: rows.iter().filter(|r| r.success).count(),
        single_symbol_failures: rows.iter().filter(|r| !r.recovered && r.unrecovered_symbols == 1).count(),
        miscorrections: rows.iter().map(|r| r.miscorrections).sum(),
        expected_failures,
        failure_interval: poisson_interval(expected_failures, 0.99),
        stage1: TimingSummary::of(rows.iter().map(|r| r.stage1_ms).collect()),
        stage2: TimingSummary::of(rows.iter().map(|r| r.stage2_ms).collect()),
    }
}
