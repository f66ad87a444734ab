//! Splitting a byte stream into fixed-width symbols and back.
//!
//! Bits are taken least-significant first: symbol `i` holds bits
//! `i * w .. (i + 1) * w` of the stream, where bit `j` is bit `j % 8` of
//! byte `j / 8`. A trailing partial symbol is zero-padded.

pub fn symbol_count(byte_len: usize, width: u32) -> usize {
    (byte_len * 8).div_ceil(width as usize)
}

pub fn to_symbols(bytes: &[u8], width: u32) -> Vec<u64> {
    assert!((1..=63).contains(&width));
    let mask = (1u64 << width) - 1;
    let mut out = Vec::with_capacity(symbol_count(bytes.len(), width));
    let mut acc: u128 = 0;
    let mut bits = 0u32;
    for &b in bytes {
        acc |= (b as u128) << bits;
        bits += 8;
        while bits >= width {
            out.push(acc as u64 & mask);
            acc >>= width;
            bits -= width;
        }
    }
    if bits > 0 {
        out.push(acc as u64 & mask);
    }
    out
}

/// Inverse of [`to_symbols`], truncated to `byte_len` bytes.
pub fn to_bytes(symbols: &[u64], width: u32, byte_len: usize) -> Vec<u8> {
    assert!((1..=63).contains(&width));
    let mut out = Vec::with_capacity(byte_len + 8);
    let mut acc: u128 = 0;
    let mut bits = 0u32;
    for &s in symbols {
        acc |= (s as u128) << bits;
        bits += width;
        while bits >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            bits -= 8;
        }
    }
    if bits > 0 {
        out.push(acc as u8);
    }
    out.resize(byte_len, 0);
    out
}
