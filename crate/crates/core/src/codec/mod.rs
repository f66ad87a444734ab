//! Biff code encode/decode.
//!
//! The sender inserts `(x_i, i)` for every symbol into a table (the patch).
//! The receiver deletes `(y_i, i)` for every received symbol; only the pairs
//! at corrupted positions survive, and peeling recovers them. Corrections
//! are collected during peeling and applied once it stops.

mod params;
mod patch;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::hashing::{pack_unchecked, PairKey, ParamError};
use crate::iblt::{IbltTable, PeelOutcome};

pub use params::{position_bits_for, round_up_cells, CodecParams};
pub use patch::{
    deserialize_patch, encoded_len as patch_len, serialize_patch, Patch, PatchError, HEADER_LEN, MAGIC, VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("patch was built with different parameters")]
    ParamsMismatch,
    #[error("message has {actual} symbols but the parameters expect {expected}")]
    LengthMismatch { expected: u64, actual: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Correction {
    pub position: u64,
    /// Received value; `None` for an erased position.
    pub old: Option<u64>,
    pub new: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DecodeReport {
    /// Sorted by position, one entry per position.
    pub corrections: Vec<Correction>,
    pub residual_cells: usize,
    pub anomalies: usize,
    pub success: bool,
}

/// How the deletion pass is timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingMode {
    /// Hash evaluation happens inside the timed deletion pass.
    #[default]
    WithHash,
    /// Cell addresses and checksums are computed before the clock starts,
    /// so stage 1 times only the table updates.
    SyntheticIndex,
}

impl std::str::FromStr for TimingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "with-hash" | "hash" => Ok(TimingMode::WithHash),
            "synthetic-index" | "synthetic" => Ok(TimingMode::SyntheticIndex),
            other => Err(format!("unknown timing mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    /// Deleting the received pairs.
    pub stage1: Duration,
    /// Peeling the residual table.
    pub stage2: Duration,
}

#[derive(Debug, Clone)]
pub struct TimedDecode {
    pub message: Vec<u64>,
    pub report: DecodeReport,
    pub timings: StageTimings,
}

/// Insert `(message[i], i)` for every position.
pub fn encode(message: &[u64], params: &CodecParams) -> Result<IbltTable, CodecError> {
    check_len(message.len(), params)?;
    let mut table = params.empty_table()?;
    let mask = table.layout().symbol_mask();
    let w = params.symbol_bits;
    for (i, &x) in message.iter().enumerate() {
        if x & !mask != 0 {
            return Err(symbol_overflow(i, x, w).into());
        }
        table.toggle(pack_unchecked(i as u64, x, w), 1);
    }
    Ok(table)
}

/// Insert an arbitrary set of pairs, for reconciliation.
pub fn encode_set<'a>(
    pairs: impl IntoIterator<Item = &'a PairKey>,
    params: &CodecParams,
) -> Result<IbltTable, CodecError> {
    let mut table = params.empty_table()?;
    for pair in pairs {
        table.insert(*pair)?;
    }
    Ok(table)
}

pub fn decode(
    received: &[u64],
    patch: &IbltTable,
    params: &CodecParams,
) -> Result<(Vec<u64>, DecodeReport), CodecError> {
    let out = decode_timed(received, patch, params, TimingMode::WithHash)?;
    Ok((out.message, out.report))
}

/// [`decode`] with separate clocks for the deletion pass and the peel.
pub fn decode_timed(
    received: &[u64],
    patch: &IbltTable,
    params: &CodecParams,
    mode: TimingMode,
) -> Result<TimedDecode, CodecError> {
    check_patch(patch, params)?;
    check_len(received.len(), params)?;
    let mut work = patch.clone();

    let stage1 = match mode {
        TimingMode::WithHash => {
            let start = Instant::now();
            delete_received(&mut work, received)?;
            start.elapsed()
        }
        TimingMode::SyntheticIndex => {
            let plan = DeletionPlan::build(&work, received)?;
            let start = Instant::now();
            plan.apply(&mut work, received);
            start.elapsed()
        }
    };

    let start = Instant::now();
    let peeled = work.peel_within(params.message_len);
    let stage2 = start.elapsed();
    let (corrections, conflicts) = collect_corrections(&peeled, |pos| Some(received[pos as usize]));

    let mut message = received.to_vec();
    for c in &corrections {
        message[c.position as usize] = c.new;
    }
    let report = DecodeReport {
        corrections,
        residual_cells: peeled.residual_cells,
        anomalies: peeled.anomalies + conflicts,
        success: peeled.residual_cells == 0,
    };
    Ok(TimedDecode { message, report, timings: StageTimings { stage1, stage2 } })
}

/// Fill erased (`None`) positions. Only positions that were received are
/// deleted from the patch, so just the erased pairs remain to be peeled.
/// A recovered pair at a received position means that symbol was wrong; it
/// is counted as an anomaly and the decode is not reported successful.
pub fn decode_erasures(
    received: &[Option<u64>],
    patch: &IbltTable,
    params: &CodecParams,
) -> Result<(Vec<Option<u64>>, DecodeReport), CodecError> {
    check_patch(patch, params)?;
    check_len(received.len(), params)?;
    let mut work = patch.clone();
    let mask = work.layout().symbol_mask();
    let w = params.symbol_bits;
    for (i, y) in received.iter().enumerate() {
        if let Some(y) = *y {
            if y & !mask != 0 {
                return Err(symbol_overflow(i, y, w).into());
            }
            work.toggle(pack_unchecked(i as u64, y, w), -1);
        }
    }

    let peeled = work.peel_within(params.message_len);
    let mut anomalies = peeled.anomalies;
    let mut fills: Vec<(u64, u64)> = Vec::new();
    for pair in peeled.pairs() {
        if received[pair.position as usize].is_some() {
            anomalies += 1;
        } else {
            fills.push((pair.position, pair.value));
        }
    }
    let (fills, conflicts) = dedup_by_position(fills);
    anomalies += conflicts;

    let mut restored = received.to_vec();
    let corrections: Vec<Correction> = fills
        .into_iter()
        .map(|(position, new)| {
            restored[position as usize] = Some(new);
            Correction { position, old: None, new }
        })
        .collect();
    let all_filled = restored.iter().all(Option::is_some);
    let report = DecodeReport {
        corrections,
        residual_cells: peeled.residual_cells,
        anomalies,
        success: peeled.residual_cells == 0 && all_filled && anomalies == 0,
    };
    Ok((restored, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reconciliation {
    /// Pairs held only by the local side.
    pub local_only: Vec<PairKey>,
    /// Pairs held only by the side that built the patch.
    pub remote_only: Vec<PairKey>,
    pub complete: bool,
    pub anomalies: usize,
}

/// Delete the local pairs from a remote patch and peel what is left.
///
/// Recovered pairs are classified by count sign when the patch keeps counts
/// and by membership in `local` otherwise.
pub fn reconcile_sets(
    local: &HashSet<PairKey>,
    remote_patch: &IbltTable,
    params: &CodecParams,
) -> Result<Reconciliation, CodecError> {
    check_patch(remote_patch, params)?;
    let mut work = remote_patch.clone();
    for pair in local {
        work.delete(*pair)?;
    }
    let peeled = work.peel_within(params.message_len);
    let mut out = Reconciliation { complete: peeled.is_complete(), anomalies: peeled.anomalies, ..Default::default() };
    for p in &peeled.recovered {
        let local_side = if params.counting { p.sign < 0 } else { local.contains(&p.pair) };
        if local_side {
            out.local_only.push(p.pair);
        } else {
            out.remote_only.push(p.pair);
        }
    }
    out.local_only.sort_unstable();
    out.remote_only.sort_unstable();
    Ok(out)
}

fn check_patch(patch: &IbltTable, params: &CodecParams) -> Result<(), CodecError> {
    params.validate()?;
    if !params.matches(patch) {
        return Err(CodecError::ParamsMismatch);
    }
    Ok(())
}

fn check_len(len: usize, params: &CodecParams) -> Result<(), CodecError> {
    if len as u64 != params.message_len {
        return Err(CodecError::LengthMismatch { expected: params.message_len, actual: len as u64 });
    }
    Ok(())
}

fn symbol_overflow(position: usize, value: u64, symbol_bits: u32) -> ParamError {
    ParamError::SymbolOverflow { position: position as u64, value, symbol_bits }
}

fn delete_received(table: &mut IbltTable, received: &[u64]) -> Result<(), CodecError> {
    let mask = table.layout().symbol_mask();
    let w = table.layout().symbol_bits();
    for (i, &y) in received.iter().enumerate() {
        if y & !mask != 0 {
            return Err(symbol_overflow(i, y, w).into());
        }
        table.toggle(pack_unchecked(i as u64, y, w), -1);
    }
    Ok(())
}

/// Precomputed cell addresses and checksums for a deletion pass.
struct DeletionPlan {
    k: usize,
    cells: Vec<u32>,
    checksums: Vec<u64>,
}

impl DeletionPlan {
    fn build(table: &IbltTable, received: &[u64]) -> Result<Self, CodecError> {
        let cfg = table.config();
        let k = cfg.k();
        let size = cfg.subtable_size();
        let mask = table.layout().symbol_mask();
        let w = table.layout().symbol_bits();
        let mut cells = Vec::with_capacity(received.len() * k);
        let mut checksums = Vec::with_capacity(received.len());
        for (i, &y) in received.iter().enumerate() {
            if y & !mask != 0 {
                return Err(symbol_overflow(i, y, w).into());
            }
            let packed = pack_unchecked(i as u64, y, w);
            cells.extend(cfg.cell_indices(packed).global(size).map(|g| g as u32));
            checksums.push(table.checksum_of(packed));
        }
        Ok(DeletionPlan { k, cells, checksums })
    }

    fn apply(&self, table: &mut IbltTable, received: &[u64]) {
        let w = table.layout().symbol_bits();
        let counting = table.is_counting();
        for (i, (&y, addrs)) in received.iter().zip(self.cells.chunks_exact(self.k)).enumerate() {
            let packed = pack_unchecked(i as u64, y, w);
            let chk = self.checksums[i];
            let cells = table.cells_mut();
            for &g in addrs {
                let cell = &mut cells[g as usize];
                cell.key_sum ^= packed;
                cell.value_sum ^= chk;
            }
            if counting {
                let counts = table.counts_mut().unwrap();
                for &g in addrs {
                    counts[g as usize] -= 1;
                }
            }
        }
    }
}

/// Corrections from peeled pairs whose value differs from the received one.
/// Returns the corrections and the number of positions dropped because they
/// received conflicting values.
fn collect_corrections(peeled: &PeelOutcome, received_at: impl Fn(u64) -> Option<u64>) -> (Vec<Correction>, usize) {
    let candidates: Vec<(u64, u64)> =
        peeled.pairs().filter(|p| received_at(p.position) != Some(p.value)).map(|p| (p.position, p.value)).collect();
    let (unique, conflicts) = dedup_by_position(candidates);
    let corrections =
        unique.into_iter().map(|(position, new)| Correction { position, old: received_at(position), new }).collect();
    (corrections, conflicts)
}

/// Sort by position; positions seen with more than one value are dropped.
fn dedup_by_position(mut pairs: Vec<(u64, u64)>) -> (Vec<(u64, u64)>, usize) {
    pairs.sort_unstable();
    pairs.dedup();
    let mut out = Vec::with_capacity(pairs.len());
    let mut conflicts = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i + 1;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        if j - i == 1 {
            out.push(pairs[i]);
        } else {
            conflicts += 1;
        }
        i = j;
    }
    (out, conflicts)
}
