//! Closed-form and numeric models: peeling thresholds, the failure model
//! for corrupted patches, table sizing, and overhead accounting.

use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{patch_len, CodecParams};
use crate::hashing::MAX_K;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("thresholds are computed for k >= 3 (got {0})")]
    KTooSmall(usize),
    #[error("slack {slack} is below the peeling threshold {threshold:.4} for k = {k}")]
    BelowThreshold { slack: f64, threshold: f64, k: usize },
    #[error("{name} must be in {range} (got {value})")]
    OutOfRange { name: &'static str, range: &'static str, value: f64 },
}

/// Grid resolution for the inner `for all x` check.
pub const THRESHOLD_GRID: usize = 100_000;
/// Bisection stops once the bracket on `1 / c_k` is this narrow.
pub const THRESHOLD_BISECT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub k: usize,
    /// Load threshold `c_k`; peeling succeeds w.h.p. with `m > c_k * pairs`.
    pub c_k: f64,
    /// Largest load `1 / c_k` at which the inequality was verified to hold.
    pub alpha: f64,
    /// Width of the final bisection bracket, in `alpha`.
    pub tolerance: f64,
}

/// The 2-core threshold `c_k`, where
/// `1 / c_k = sup { a in (0, 1) : 1 - exp(-k a x^(k-1)) < x for all x in (0, 1) }`.
pub fn threshold(k: usize) -> Result<ThresholdResult, AnalysisError> {
    if k < 3 {
        return Err(AnalysisError::KTooSmall(k));
    }
    // The inequality holds for tiny loads and fails at a = 1 for every k >= 3.
    let (mut lo, mut hi) = (1e-6, 1.0);
    while hi - lo > THRESHOLD_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if inequality_holds(mid, k) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdResult { k, c_k: 1.0 / lo, alpha: lo, tolerance: hi - lo })
}

/// `c_k`, computed once per `k` and cached.
pub fn cached_threshold(k: usize) -> Result<f64, AnalysisError> {
    static CACHE: [OnceLock<f64>; MAX_K + 1] = [const { OnceLock::new() }; MAX_K + 1];
    if k < 3 {
        return Err(AnalysisError::KTooSmall(k));
    }
    match CACHE.get(k) {
        Some(slot) => Ok(*slot.get_or_init(|| threshold(k).map(|r| r.c_k).unwrap())),
        None => threshold(k).map(|r| r.c_k),
    }
}

/// Whether `x - (1 - exp(-k a x^(k-1))) > 0` on all of `(0, 1)`.
pub fn inequality_holds(alpha: f64, k: usize) -> bool {
    min_gap(alpha, k).1 > 0.0
}

fn gap(alpha: f64, k: usize, x: f64) -> f64 {
    x - 1.0 + (-(k as f64) * alpha * x.powi(k as i32 - 1)).exp()
}

/// First and second derivative of [`gap`] in `x`.
fn gap_derivs(alpha: f64, k: usize, x: f64) -> (f64, f64) {
    let kf = k as f64;
    let u = kf * alpha * x.powi(k as i32 - 1);
    let du = kf * alpha * (kf - 1.0) * x.powi(k as i32 - 2);
    let ddu = kf * alpha * (kf - 1.0) * (kf - 2.0) * x.powi(k as i32 - 3);
    let e = (-u).exp();
    (1.0 - du * e, e * (du * du - ddu))
}

/// Location and value of the smallest gap on `(0, 1)`: a grid scan, then a
/// bracketed Newton solve of `gap' = 0` around each promising local minimum.
pub fn min_gap(alpha: f64, k: usize) -> (f64, f64) {
    let n = THRESHOLD_GRID;
    let h = 1.0 / n as f64;
    let values: Vec<f64> = (1..n).map(|i| gap(alpha, k, i as f64 * h)).collect();
    let global = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..values.len() {
        let left = if i == 0 { f64::INFINITY } else { values[i - 1] };
        let right = values.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let v = values[i];
        if v > left || v > right || v > global + 1e-3 {
            continue;
        }
        let x0 = (i + 1) as f64 * h;
        let x = refine_minimum(alpha, k, (x0 - h).max(h * 0.5), (x0 + h).min(1.0 - h * 0.5), x0);
        let g = gap(alpha, k, x).min(v);
        if g < best.1 {
            best = (x, g);
        }
    }
    best
}

fn refine_minimum(alpha: f64, k: usize, mut a: f64, mut b: f64, mut x: f64) -> f64 {
    let (da, _) = gap_derivs(alpha, k, a);
    let (db, _) = gap_derivs(alpha, k, b);
    if da > 0.0 || db < 0.0 {
        return x;
    }
    for _ in 0..60 {
        let (d1, d2) = gap_derivs(alpha, k, x);
        if d1 == 0.0 {
            break;
        }
        if d1 < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - d1 / d2;
        x = if d2 > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a < 1e-15 {
            break;
        }
    }
    x
}

/// Expected number of erroneous symbols whose `k` cells are all corrupted,
/// `E * z^k`, for a patch with a fraction `z` of bad cells.
pub fn expected_unrecoverable(errors: f64, z: f64, k: u32) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(AnalysisError::OutOfRange { name: "z", range: "[0, 1]", value: z });
    }
    if errors.is_nan() || errors < 0.0 {
        return Err(AnalysisError::OutOfRange { name: "E", range: "[0, inf)", value: errors });
    }
    Ok(errors * z.powi(k as i32))
}

fn ln_pmf(lambda: f64, x: u64) -> f64 {
    if lambda == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let ln_fact: f64 = (2..=x).map(|i| (i as f64).ln()).sum();
    -lambda + x as f64 * lambda.ln() - ln_fact
}

pub fn poisson_pmf(lambda: f64, x: u64) -> f64 {
    ln_pmf(lambda, x).exp()
}

/// `P(X <= x)` for `X ~ Poisson(lambda)`.
pub fn poisson_cdf(lambda: f64, x: u64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let mut ln_p = -lambda;
    let mut total = ln_p.exp();
    for i in 1..=x {
        ln_p += lambda.ln() - (i as f64).ln();
        total += ln_p.exp();
    }
    total.min(1.0)
}

/// `P(X > x)`.
pub fn poisson_sf(lambda: f64, x: u64) -> f64 {
    (1.0 - poisson_cdf(lambda, x)).max(0.0)
}

/// Central acceptance interval `[lo, hi]` with at most `(1 - confidence) / 2`
/// probability mass strictly outside on each side.
pub fn poisson_interval(lambda: f64, confidence: f64) -> (u64, u64) {
    let tail = (1.0 - confidence) / 2.0;
    let mut lo = 0;
    while poisson_cdf(lambda, lo) <= tail {
        lo += 1;
    }
    let mut hi = lo;
    while poisson_sf(lambda, hi) > tail {
        hi += 1;
    }
    (lo, hi)
}

/// Cells for `error_bound` symbol errors: `ceil(slack * 2E / k) * k`.
/// Every error leaves two pairs in the table.
pub fn size_table(error_bound: u64, k: usize, slack: f64) -> Result<usize, AnalysisError> {
    let c_k = cached_threshold(k)?;
    if slack.is_nan() || slack < c_k {
        return Err(AnalysisError::BelowThreshold { slack, threshold: c_k, k });
    }
    Ok(cells_for_pairs(2 * error_bound, k, slack))
}

/// `ceil(slack * pairs / k) * k`, immune to float noise such as
/// `1.3 * 20000 = 26000.000000000004`.
pub fn cells_for_pairs(pairs: u64, k: usize, slack: f64) -> usize {
    let per_subtable = slack * pairs as f64 / k as f64;
    let nearest = per_subtable.round();
    let per_subtable =
        if (per_subtable - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { per_subtable.ceil() };
    per_subtable as usize * k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockScheme {
    /// Symbols per checksummed block at the optimum.
    pub block_size: f64,
    pub overhead_bits: f64,
}

/// Overhead of the block-checksum alternative, `f(B) = L c / B + kconst E B`:
/// one `c`-bit checksum per block plus `kconst` bits of code per dropped symbol.
pub fn block_scheme_cost(length: f64, errors: f64, checksum_bits: f64, kconst: f64, block: f64) -> f64 {
    length * checksum_bits / block + kconst * errors * block
}

/// Minimizer of [`block_scheme_cost`]: `B = sqrt(L c / (kconst E))` with
/// cost `2 sqrt(L c kconst E)`.
pub fn block_scheme_overhead(
    length: f64,
    errors: f64,
    checksum_bits: f64,
    kconst: f64,
) -> Result<BlockScheme, AnalysisError> {
    for (name, value) in [("L", length), ("E", errors), ("c", checksum_bits), ("kconst", kconst)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(AnalysisError::OutOfRange { name, range: "(0, inf)", value });
        }
    }
    Ok(BlockScheme {
        block_size: (length * checksum_bits / (kconst * errors)).sqrt(),
        overhead_bits: 2.0 * (length * checksum_bits * kconst * errors).sqrt(),
    })
}

/// Patch overhead relative to the `E * w` bits an optimal code would add.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadFactor {
    pub errors: u64,
    pub patch_bytes: usize,
    /// Serialized patch, header and byte padding included.
    pub serialized: f64,
    /// Cells at their exact bit widths (`w + p` key, `b` checksum).
    pub cell_bits: f64,
    /// As `cell_bits`, with the position half of each key treated as inherent.
    pub excluding_positions: f64,
}

pub fn biff_overhead_factor(params: &CodecParams, errors: u64) -> OverheadFactor {
    let optimal = errors.max(1) as f64 * params.symbol_bits as f64;
    let m = params.cells as f64;
    let w = params.symbol_bits as f64;
    let p = params.position_bits as f64;
    let b = params.checksum_bits as f64;
    let bytes = patch_len(params);
    OverheadFactor {
        errors,
        patch_bytes: bytes,
        serialized: bytes as f64 * 8.0 / optimal,
        cell_bits: m * (w + p + b) / optimal,
        excluding_positions: m * (w + b) / optimal,
    }
}

/// Bytes on the wire for an `M`-byte message at a given symbol error rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferSizes {
    /// Information-theoretic floor, `M / (1 - rate)`.
    pub optimal: f64,
    /// Reed-Solomon with two extra values per error, `M (1 + 2 rate)`.
    pub reed_solomon: f64,
    /// Biff code with the given overhead factor, `M (1 + factor * rate)`.
    pub biff: f64,
}

pub fn transfer_sizes(message_bytes: f64, error_rate: f64, overhead_factor: f64) -> TransferSizes {
    TransferSizes {
        optimal: message_bytes / (1.0 - error_rate),
        reed_solomon: message_bytes * (1.0 + 2.0 * error_rate),
        biff: message_bytes * (1.0 + overhead_factor * error_rate),
    }
}
