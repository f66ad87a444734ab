use serde::{Deserialize, Serialize};

use crate::hashing::{ChecksumFlavor, HashConfig, KeyLayout, ParamError};
use crate::iblt::IbltTable;

/// Everything both ends must agree on to build and read a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecParams {
    /// Bits per message symbol (`w`).
    pub symbol_bits: u32,
    /// Bits for the 1-based position (`p`); `2^p > message_len` is required.
    pub position_bits: u32,
    /// Subtables, one cell per subtable per pair.
    pub k: usize,
    /// Total cells `m`, a positive multiple of `k`.
    pub cells: usize,
    pub checksum_bits: u32,
    pub seed: u64,
    pub flavor: ChecksumFlavor,
    /// Symbols in the protected message; positions must lie below it.
    pub message_len: u64,
    /// Keep a signed count per cell.
    pub counting: bool,
}

impl CodecParams {
    /// Defaults: 32-bit hash checksums, seed 0, no counts, the smallest
    /// position width for `message_len`, and `cells` rounded up to a
    /// multiple of `k`.
    pub fn new(message_len: u64, symbol_bits: u32, k: usize, cells: usize) -> Self {
        CodecParams {
            symbol_bits,
            position_bits: position_bits_for(message_len),
            k,
            cells: round_up_cells(cells, k),
            checksum_bits: 32,
            seed: 0,
            flavor: ChecksumFlavor::Hash,
            message_len,
            counting: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_checksum(mut self, flavor: ChecksumFlavor, bits: u32) -> Self {
        self.flavor = flavor;
        self.checksum_bits = bits;
        self
    }

    pub fn with_counting(mut self, counting: bool) -> Self {
        self.counting = counting;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.layout()?;
        self.hash_config()?;
        if self.message_len > self.layout()?.position_limit() {
            return Err(ParamError::PositionWidth { position_bits: self.position_bits, message_len: self.message_len });
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<KeyLayout, ParamError> {
        KeyLayout::new(self.symbol_bits, self.position_bits)
    }

    /// A zero-cell table is accepted only for an empty message, which has
    /// nothing to protect.
    pub fn hash_config(&self) -> Result<HashConfig, ParamError> {
        let empty_ok = self.cells == 0 && self.message_len == 0;
        if self.k == 0 || (self.cells == 0 && !empty_ok) || !self.cells.is_multiple_of(self.k) {
            return Err(ParamError::CellCount { cells: self.cells, k: self.k });
        }
        HashConfig::new(self.seed, self.k, self.cells / self.k, self.checksum_bits)
    }

    /// A fresh table for these parameters.
    pub fn empty_table(&self) -> Result<IbltTable, ParamError> {
        self.validate()?;
        Ok(IbltTable::new(self.hash_config()?, self.layout()?, self.flavor, self.counting))
    }

    /// Whether `table` was built with these parameters.
    pub fn matches(&self, table: &IbltTable) -> bool {
        match (self.hash_config(), self.layout()) {
            (Ok(cfg), Ok(layout)) => {
                *table.config() == cfg
                    && table.layout() == layout
                    && table.flavor() == self.flavor
                    && table.is_counting() == self.counting
            }
            _ => false,
        }
    }

    /// Bytes per serialized `keySum`.
    pub fn key_bytes(&self) -> usize {
        (self.symbol_bits + self.position_bits).div_ceil(8) as usize
    }

    /// Bytes per serialized `valueSum`.
    pub fn checksum_bytes(&self) -> usize {
        self.checksum_bits.div_ceil(8) as usize
    }

    /// Bytes per serialized cell.
    pub fn cell_bytes(&self) -> usize {
        self.key_bytes() + self.checksum_bytes() + if self.counting { 4 } else { 0 }
    }
}

/// Smallest `p >= 1` with `2^p > message_len`.
pub fn position_bits_for(message_len: u64) -> u32 {
    (64 - message_len.leading_zeros()).max(1)
}

/// Round `cells` up to a multiple of `k`, and to at least `k`.
pub fn round_up_cells(cells: usize, k: usize) -> usize {
    if k == 0 {
        return cells;
    }
    cells.max(1).div_ceil(k) * k
}
