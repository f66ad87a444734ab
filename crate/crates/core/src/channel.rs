//! Error injection for messages and patches.
//!
//! All corruption is exact-count: a request for `E` errors changes exactly
//! `E` distinct positions (or cells), and every changed symbol differs from
//! its original.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::hashing::low_mask;
use crate::iblt::IbltTable;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("cannot corrupt {requested} of {available} items")]
    TooMany { requested: usize, available: usize },
    #[error("{count} bursts of length {len} do not fit in {message_len} symbols")]
    BurstsDoNotFit { len: usize, count: usize, message_len: usize },
    #[error("symbol width {0} leaves no alternative value to mutate to")]
    SymbolWidth(u32),
}

/// Error model applied to the message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageErrors {
    Uniform { errors: usize },
    Burst { len: usize, count: usize },
}

impl MessageErrors {
    pub fn total(&self) -> usize {
        match *self {
            MessageErrors::Uniform { errors } => errors,
            MessageErrors::Burst { len, count } => len * count,
        }
    }
}

/// A full channel description: message errors plus patch cell corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSpec {
    pub message: MessageErrors,
    pub cell_errors: usize,
}

impl ChannelSpec {
    pub fn uniform(errors: usize) -> Self {
        ChannelSpec { message: MessageErrors::Uniform { errors }, cell_errors: 0 }
    }

    pub fn burst(len: usize, count: usize) -> Self {
        ChannelSpec { message: MessageErrors::Burst { len, count }, cell_errors: 0 }
    }

    pub fn with_cell_errors(mut self, cells: usize) -> Self {
        self.cell_errors = cells;
        self
    }

    pub fn corrupt_message<R: Rng + ?Sized>(
        &self,
        message: &[u64],
        symbol_bits: u32,
        rng: &mut R,
    ) -> Result<(Vec<u64>, Vec<usize>), ChannelError> {
        match self.message {
            MessageErrors::Uniform { errors } => corrupt_uniform(message, symbol_bits, errors, rng),
            MessageErrors::Burst { len, count } => corrupt_burst(message, symbol_bits, len, count, rng),
        }
    }

    pub fn corrupt_patch<R: Rng + ?Sized>(
        &self,
        patch: &IbltTable,
        rng: &mut R,
    ) -> Result<(IbltTable, Vec<usize>), ChannelError> {
        corrupt_table(patch, self.cell_errors, rng)
    }
}

/// A uniformly random `symbol_bits`-wide value different from `old`.
#[inline]
fn mutate<R: Rng + ?Sized>(old: u64, symbol_bits: u32, rng: &mut R) -> u64 {
    let top = low_mask(symbol_bits);
    let v = rng.random_range(0..top);
    if v >= old {
        v + 1
    } else {
        v
    }
}

/// Change exactly `errors` distinct, uniformly chosen positions. Returns the
/// corrupted message and the sorted corrupted positions.
pub fn corrupt_uniform<R: Rng + ?Sized>(
    message: &[u64],
    symbol_bits: u32,
    errors: usize,
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<usize>), ChannelError> {
    if errors > message.len() {
        return Err(ChannelError::TooMany { requested: errors, available: message.len() });
    }
    if symbol_bits == 0 && errors > 0 {
        return Err(ChannelError::SymbolWidth(symbol_bits));
    }
    let mut positions = index::sample(rng, message.len(), errors).into_vec();
    positions.sort_unstable();
    let mut out = message.to_vec();
    for &i in &positions {
        out[i] = mutate(out[i], symbol_bits, rng);
    }
    Ok((out, positions))
}

/// Place `count` non-overlapping runs of `len` corrupted symbols, uniformly
/// over all such placements.
pub fn corrupt_burst<R: Rng + ?Sized>(
    message: &[u64],
    symbol_bits: u32,
    len: usize,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<u64>, Vec<usize>), ChannelError> {
    let n = message.len();
    let covered = len.checked_mul(count);
    if count > 0 && (len == 0 || covered.is_none_or(|c| c > n)) {
        return Err(ChannelError::BurstsDoNotFit { len, count, message_len: n });
    }
    if symbol_bits == 0 && count > 0 {
        return Err(ChannelError::SymbolWidth(symbol_bits));
    }
    let mut out = message.to_vec();
    if count == 0 {
        return Ok((out, Vec::new()));
    }
    // Stars and bars: `count` sorted slots out of `free + count` fix the gaps.
    let free = n - len * count;
    let mut slots = index::sample(rng, free + count, count).into_vec();
    slots.sort_unstable();
    let mut positions = Vec::with_capacity(len * count);
    for (j, &s) in slots.iter().enumerate() {
        let start = s + j * (len - 1);
        for (i, x) in out[start..start + len].iter_mut().enumerate() {
            *x = mutate(*x, symbol_bits, rng);
            positions.push(start + i);
        }
    }
    Ok((out, positions))
}

/// Replace `cells` distinct cells with random contents. Key and checksum
/// fields are drawn uniformly over their serialized widths and redrawn if
/// the cell would be unchanged. Returns the sorted corrupted addresses.
pub fn corrupt_table<R: Rng + ?Sized>(
    patch: &IbltTable,
    cells: usize,
    rng: &mut R,
) -> Result<(IbltTable, Vec<usize>), ChannelError> {
    let m = patch.len();
    if cells > m {
        return Err(ChannelError::TooMany { requested: cells, available: m });
    }
    let key_mask = low_mask(patch.layout().key_bits().div_ceil(8) * 8);
    let chk_mask = low_mask(patch.config().checksum_bits().div_ceil(8) * 8);
    let mut out = patch.clone();
    let mut addrs = index::sample(rng, m, cells).into_vec();
    addrs.sort_unstable();
    for &a in &addrs {
        let old = out.cells()[a];
        let cell = &mut out.cells_mut()[a];
        loop {
            cell.key_sum = rng.random::<u64>() & key_mask;
            cell.value_sum = rng.random::<u64>() & chk_mask;
            if *cell != old {
                break;
            }
        }
    }
    Ok((out, addrs))
}
