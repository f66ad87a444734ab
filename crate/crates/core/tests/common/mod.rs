//! Reference implementations used as oracles by the integration tests.
//! They are written for clarity, not speed, and share no code with the
//! library beyond its public accessors.

#![allow(dead_code)]

use std::collections::HashMap;

use biff_core::{ChecksumFlavor, IbltTable, PairKey};

/// SplitMix64 finalizer, transcribed from its published constants.
pub fn splitmix_finalize(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn salt(seed: u64, counter: u64) -> u64 {
    splitmix_finalize(seed.wrapping_add((counter + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Where the documented placement scheme puts `packed`: digest `c` (for
/// `c >= 1`) feeds subtables `2(c-1)` and `2(c-1)+1` from its low and high
/// 32-bit halves, each scaled to the subtable size by a multiply-high.
pub fn reference_cells(seed: u64, k: usize, size: usize, packed: u64) -> Vec<usize> {
    (0..k)
        .map(|j| {
            let d = splitmix_finalize(packed ^ salt(seed, (j / 2 + 1) as u64));
            let half = if j % 2 == 0 { d & 0xffff_ffff } else { d >> 32 };
            j * size + ((half * size as u64) >> 32) as usize
        })
        .collect()
}

pub fn reference_hash_checksum(seed: u64, bits: u32, packed: u64) -> u64 {
    let d = splitmix_finalize(packed ^ salt(seed, 0));
    if bits == 64 {
        d
    } else {
        d & ((1u64 << bits) - 1)
    }
}

pub fn pack(p: PairKey, symbol_bits: u32) -> u64 {
    ((p.position + 1) << symbol_bits) | p.value
}

/// Net multiplicity of every pair after a sequence of signed operations.
pub fn net_multiset(ops: &[(PairKey, i32)]) -> HashMap<PairKey, i32> {
    let mut net: HashMap<PairKey, i32> = HashMap::new();
    for &(p, d) in ops {
        *net.entry(p).or_default() += d;
    }
    net.retain(|_, v| *v != 0);
    net
}

pub struct NaivePeel {
    pub recovered: Vec<PairKey>,
    pub residual: usize,
    pub cells: Vec<(u64, u64)>,
}

/// Peel by rescanning the whole table after every removal. Pure cells that
/// do not decode to a pair landing in that same cell, or that decode to a
/// position at or past `limit`, are skipped for good.
pub fn naive_peel(table: &IbltTable, limit: u64) -> NaivePeel {
    let cfg = table.config();
    let layout = table.layout();
    let w = layout.symbol_bits();
    let size = cfg.subtable_size();
    let k = cfg.k();
    let chk = |x: u64| -> u64 {
        match table.flavor() {
            ChecksumFlavor::Hash => reference_hash_checksum(cfg.seed(), cfg.checksum_bits(), x),
            ChecksumFlavor::Poly => {
                let i = (x >> w).wrapping_sub(1);
                let v = x & ((1u64 << w) - 1);
                let full = (2 * i as u128 + 1) * v as u128 + (i as u128) * (i as u128);
                (full as u64) & cfg.checksum_mask()
            }
        }
    };
    let mut cells: Vec<(u64, u64)> = table.cells().iter().map(|c| (c.key_sum, c.value_sum)).collect();
    let mut banned = vec![false; cells.len()];
    let mut recovered = Vec::new();
    loop {
        let found = (0..cells.len()).find(|&c| {
            let (key, val) = cells[c];
            !banned[c] && key != 0 && val == chk(key)
        });
        let Some(c) = found else { break };
        let (key, val) = cells[c];
        let high = key >> w;
        let valid = high != 0 && high >> layout.position_bits() == 0 && high - 1 < limit;
        let targets = reference_cells(cfg.seed(), k, size, key);
        if !valid || !targets.contains(&c) {
            banned[c] = true;
            continue;
        }
        for t in targets {
            cells[t].0 ^= key;
            cells[t].1 ^= val;
        }
        recovered.push(PairKey::new(high - 1, key & ((1u64 << w) - 1)));
    }
    let residual = cells.iter().filter(|&&(a, b)| a != 0 || b != 0).count();
    NaivePeel { recovered, residual, cells }
}

/// Upper `1 - alpha` quantile of chi-square with `df` degrees of freedom via
/// the Wilson-Hilferty cube approximation; `z` is the matching normal quantile.
pub fn chi_square_critical(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}
