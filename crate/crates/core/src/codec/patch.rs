//! Patch file format (version 1). All integers little-endian.
//!
//! ```text
//! offset size field
//!  0     4    magic "BIFF"
//!  4     2    format version
//!  6     1    symbol bits w
//!  7     1    position bits p
//!  8     1    k
//!  9     1    checksum bits b
//! 10     1    checksum flavor (0 = hash, 1 = poly)
//! 11     1    flags (bit 0 = counting mode)
//! 12     8    cells m
//! 20     8    message length n (symbols)
//! 28     8    hash seed
//! 36     8    original byte length (0 when not a byte stream)
//! 44     8    FNV-1a 64 digest of bytes 0..44
//! 52     ..   m cells, subtable-major: keySum (ceil((w+p)/8) bytes),
//!             valueSum (ceil(b/8) bytes), count (i32, counting mode only)
//! ```
//!
//! The body is deliberately not covered by the digest; damaged cells are
//! the decoder's job.

use thiserror::Error;

use super::params::CodecParams;
use crate::hashing::{ChecksumFlavor, ParamError};
use crate::iblt::{Cell, IbltTable};

pub const MAGIC: [u8; 4] = *b"BIFF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 52;

const DIGEST_OFFSET: usize = 44;
const FLAG_COUNTING: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("not a patch file (bad magic)")]
    BadMagic,
    #[error("unsupported patch format version {0}")]
    UnsupportedVersion(u16),
    #[error("patch truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("patch header digest mismatch")]
    HeaderDigest,
    #[error("invalid header field {field} = {value}")]
    InvalidField { field: &'static str, value: u64 },
    #[error("invalid header parameters: {0}")]
    InvalidParams(#[from] ParamError),
    #[error("patch body is {actual} bytes but the header implies {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("table does not match the patch parameters")]
    TableMismatch,
}

/// A table together with the parameters needed to read it back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub params: CodecParams,
    /// Length in bytes of the original file, when the message came from one.
    pub byte_len: u64,
    pub table: IbltTable,
}

impl Patch {
    pub fn new(params: CodecParams, table: IbltTable) -> Self {
        Patch { params, byte_len: 0, table }
    }

    pub fn with_byte_len(mut self, byte_len: u64) -> Self {
        self.byte_len = byte_len;
        self
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        encoded_len(&self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, PatchError> {
        serialize_patch(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PatchError> {
        deserialize_patch(bytes)
    }
}

/// Serialized size of a patch with these parameters.
pub fn encoded_len(params: &CodecParams) -> usize {
    HEADER_LEN + params.cells * params.cell_bytes()
}

pub fn serialize_patch(patch: &Patch) -> Result<Vec<u8>, PatchError> {
    let params = &patch.params;
    params.validate()?;
    if !params.matches(&patch.table) {
        return Err(PatchError::TableMismatch);
    }
    let mut out = Vec::with_capacity(encoded_len(params));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(params.symbol_bits as u8);
    out.push(params.position_bits as u8);
    out.push(params.k as u8);
    out.push(params.checksum_bits as u8);
    out.push(match params.flavor {
        ChecksumFlavor::Hash => 0,
        ChecksumFlavor::Poly => 1,
    });
    out.push(if params.counting { FLAG_COUNTING } else { 0 });
    out.extend_from_slice(&(params.cells as u64).to_le_bytes());
    out.extend_from_slice(&params.message_len.to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&patch.byte_len.to_le_bytes());
    let digest = fnv1a64(&out[..DIGEST_OFFSET]);
    out.extend_from_slice(&digest.to_le_bytes());

    let key_bytes = params.key_bytes();
    let chk_bytes = params.checksum_bytes();
    let counts = patch.table.counts();
    for (i, cell) in patch.table.cells().iter().enumerate() {
        out.extend_from_slice(&cell.key_sum.to_le_bytes()[..key_bytes]);
        out.extend_from_slice(&cell.value_sum.to_le_bytes()[..chk_bytes]);
        if let Some(counts) = counts {
            out.extend_from_slice(&counts[i].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn deserialize_patch(bytes: &[u8]) -> Result<Patch, PatchError> {
    let need = |needed: usize| {
        if bytes.len() < needed {
            Err(PatchError::Truncated { needed, available: bytes.len() })
        } else {
            Ok(())
        }
    };
    need(MAGIC.len())?;
    if bytes[..4] != MAGIC {
        return Err(PatchError::BadMagic);
    }
    need(6)?;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(PatchError::UnsupportedVersion(version));
    }
    need(HEADER_LEN)?;
    if fnv1a64(&bytes[..DIGEST_OFFSET]) != read_u64(bytes, DIGEST_OFFSET) {
        return Err(PatchError::HeaderDigest);
    }

    let flavor = match bytes[10] {
        0 => ChecksumFlavor::Hash,
        1 => ChecksumFlavor::Poly,
        v => return Err(PatchError::InvalidField { field: "flavor", value: v as u64 }),
    };
    let flags = bytes[11];
    if flags & !FLAG_COUNTING != 0 {
        return Err(PatchError::InvalidField { field: "flags", value: flags as u64 });
    }
    let cells = usize::try_from(read_u64(bytes, 12))
        .map_err(|_| PatchError::InvalidField { field: "cells", value: read_u64(bytes, 12) })?;
    let params = CodecParams {
        symbol_bits: bytes[6] as u32,
        position_bits: bytes[7] as u32,
        k: bytes[8] as usize,
        checksum_bits: bytes[9] as u32,
        flavor,
        counting: flags & FLAG_COUNTING != 0,
        cells,
        message_len: read_u64(bytes, 20),
        seed: read_u64(bytes, 28),
    };
    let byte_len = read_u64(bytes, 36);
    params.validate()?;

    let cell_bytes = params.cell_bytes();
    let expected =
        cells.checked_mul(cell_bytes).ok_or(PatchError::InvalidField { field: "cells", value: cells as u64 })?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < expected {
        return Err(PatchError::Truncated { needed: HEADER_LEN + expected, available: bytes.len() });
    }
    if body.len() > expected {
        return Err(PatchError::LengthMismatch { expected, actual: body.len() });
    }

    let mut table = params.empty_table()?;
    let key_bytes = params.key_bytes();
    let chk_bytes = params.checksum_bytes();
    for (i, raw) in body.chunks_exact(cell_bytes).enumerate() {
        table.cells_mut()[i] = Cell {
            key_sum: read_partial(&raw[..key_bytes]),
            value_sum: read_partial(&raw[key_bytes..key_bytes + chk_bytes]),
        };
        if let Some(counts) = table.counts_mut() {
            let c = &raw[key_bytes + chk_bytes..];
            counts[i] = i32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    Ok(Patch { params, byte_len, table })
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&bytes[at..at + 8]);
    u64::from_le_bytes(buf)
}

fn read_partial(bytes: &[u8]) -> u64 {
    let mut buf = [0u8; 8];
    buf[..bytes.len()].copy_from_slice(bytes);
    u64::from_le_bytes(buf)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
