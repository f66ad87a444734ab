//! Seeded placement and checksum derivation.
//!
//! Every pair is hashed with one fixed 64-bit mixer so that patches decode
//! identically across builds and platforms. The mixer is the SplitMix64
//! finalizer:
//!
//! ```text
//! mix(z) = z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!          z ^= z >> 27; z *= 0x94d049bb133111eb;
//!          z ^ (z >> 31)                                  (wrapping u64)
//! ```
//!
//! A keyed digest stream is derived from it. For stream counter `c`:
//!
//! ```text
//! salt(seed, c)      = mix(seed + (c + 1) * 0x9e3779b97f4a7c15)
//! digest(seed, c, w) = mix(w ^ salt(seed, c))
//! ```
//!
//! where `w` is the packed pair word. Counter 0 feeds the checksum (low `b`
//! bits). Counters 1, 2, ... feed the cell indices, two 32-bit halves per
//! digest: subtable `j` uses the low half of counter `1 + j/2` when `j` is
//! even and the high half when it is odd. A half `h` is reduced onto a
//! subtable of size `s` by `(h * s) >> 32`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported number of subtables.
pub const MAX_K: usize = 16;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const INDEX_DIGESTS: usize = MAX_K.div_ceil(2);

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Salt for digest stream `counter` under `seed`.
#[inline]
pub fn stream_salt(seed: u64, counter: u64) -> u64 {
    mix64(seed.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Invalid structural parameters for hashing, key packing or table layout.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("k = {0} is outside the supported range [2, {MAX_K}]")]
    SubtableCount(usize),
    #[error("subtable size {0} does not fit in 32 bits")]
    SubtableSize(usize),
    #[error("a table without cells cannot hold pairs")]
    NoCells,
    #[error("checksum width {0} is outside [8, 64]")]
    ChecksumBits(u32),
    #[error("symbol width {symbol_bits} + position width {position_bits} must be in [2, 63]")]
    KeyWidth { symbol_bits: u32, position_bits: u32 },
    #[error("position width {position_bits} cannot address {message_len} symbols")]
    PositionWidth { position_bits: u32, message_len: u64 },
    #[error("cell count {cells} is not a positive multiple of k = {k}")]
    CellCount { cells: usize, k: usize },
    #[error("value {value:#x} at position {position} does not fit in {symbol_bits} bits")]
    SymbolOverflow { position: u64, value: u64, symbol_bits: u32 },
    #[error("position {position} does not fit the key layout (limit {limit})")]
    PositionOverflow { position: u64, limit: u64 },
}

/// How the per-pair checksum stored in `valueSum` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChecksumFlavor {
    /// Keyed digest of the packed pair.
    #[default]
    Hash,
    /// `(2i + 1) * x + i^2` over position `i` and value `x`, truncated to `b` bits.
    Poly,
}

impl ChecksumFlavor {
    pub fn as_str(self) -> &'static str {
        match self {
            ChecksumFlavor::Hash => "hash",
            ChecksumFlavor::Poly => "poly",
        }
    }
}

impl std::str::FromStr for ChecksumFlavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" => Ok(ChecksumFlavor::Hash),
            "poly" => Ok(ChecksumFlavor::Poly),
            other => Err(format!("unknown checksum flavor `{other}` (expected hash or poly)")),
        }
    }
}

/// Seed and geometry that fix where each pair lands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashConfig {
    seed: u64,
    k: usize,
    subtable_size: usize,
    checksum_bits: u32,
    checksum_salt: u64,
    index_salts: [u64; INDEX_DIGESTS],
}

impl HashConfig {
    pub fn new(seed: u64, k: usize, subtable_size: usize, checksum_bits: u32) -> Result<Self, ParamError> {
        if !(2..=MAX_K).contains(&k) {
            return Err(ParamError::SubtableCount(k));
        }
        if subtable_size as u64 > u32::MAX as u64 {
            return Err(ParamError::SubtableSize(subtable_size));
        }
        if !(8..=64).contains(&checksum_bits) {
            return Err(ParamError::ChecksumBits(checksum_bits));
        }
        let mut index_salts = [0u64; INDEX_DIGESTS];
        for (c, salt) in index_salts.iter_mut().enumerate() {
            *salt = stream_salt(seed, c as u64 + 1);
        }
        Ok(HashConfig { seed, k, subtable_size, checksum_bits, checksum_salt: stream_salt(seed, 0), index_salts })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn subtable_size(&self) -> usize {
        self.subtable_size
    }

    pub fn checksum_bits(&self) -> u32 {
        self.checksum_bits
    }

    /// Total cells, `k * subtable_size`.
    pub fn cells(&self) -> usize {
        self.k * self.subtable_size
    }

    pub fn checksum_mask(&self) -> u64 {
        low_mask(self.checksum_bits)
    }

    /// Raw digest of stream `counter` (0 = checksum stream).
    #[inline]
    pub fn digest(&self, counter: usize, word: u64) -> u64 {
        let salt = if counter == 0 { self.checksum_salt } else { self.index_salts[counter - 1] };
        mix64(word ^ salt)
    }

    /// Local cell index in each subtable for a packed pair word.
    #[inline]
    pub fn cell_indices(&self, packed: u64) -> Placement {
        let mut indices = [0u32; MAX_K];
        let size = self.subtable_size;
        self.for_each_cell(packed, |g| indices[g / size] = (g % size) as u32);
        Placement { indices, k: self.k as u8 }
    }

    /// Call `f` with the global address (`j * subtable_size + local`) of the
    /// pair's cell in each subtable `j`, in subtable order.
    #[inline(always)]
    pub fn for_each_cell(&self, packed: u64, mut f: impl FnMut(usize)) {
        let size = self.subtable_size as u64;
        let k = self.k;
        let mut base = 0u64;
        let mut j = 0;
        while j < k {
            let d = mix64(packed ^ self.index_salts[j >> 1]);
            f((base + (((d & 0xffff_ffff) * size) >> 32)) as usize);
            base += size;
            if j + 1 < k {
                f((base + (((d >> 32) * size) >> 32)) as usize);
                base += size;
            }
            j += 2;
        }
    }

    /// Checksum stream value for a packed pair word, truncated to `b` bits.
    #[inline]
    pub fn hash_checksum(&self, packed: u64) -> u64 {
        mix64(packed ^ self.checksum_salt) & self.checksum_mask()
    }
}

/// The `k` per-subtable cell indices of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    indices: [u32; MAX_K],
    k: u8,
}

impl Placement {
    /// Local indices, entry `j` addressing subtable `j`.
    pub fn local(&self) -> &[u32] {
        &self.indices[..self.k as usize]
    }

    /// Global cell addresses in subtable-major order.
    pub fn global(&self, subtable_size: usize) -> impl Iterator<Item = usize> + '_ {
        self.local().iter().enumerate().map(move |(j, &a)| j * subtable_size + a as usize)
    }
}

/// Bit widths of the two halves of a packed pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyLayout {
    symbol_bits: u32,
    position_bits: u32,
}

impl KeyLayout {
    pub fn new(symbol_bits: u32, position_bits: u32) -> Result<Self, ParamError> {
        if symbol_bits == 0 || position_bits == 0 || symbol_bits + position_bits > 63 {
            return Err(ParamError::KeyWidth { symbol_bits, position_bits });
        }
        Ok(KeyLayout { symbol_bits, position_bits })
    }

    pub fn symbol_bits(&self) -> u32 {
        self.symbol_bits
    }

    pub fn position_bits(&self) -> u32 {
        self.position_bits
    }

    /// Bits used by a packed key.
    pub fn key_bits(&self) -> u32 {
        self.symbol_bits + self.position_bits
    }

    pub fn symbol_mask(&self) -> u64 {
        low_mask(self.symbol_bits)
    }

    /// Exclusive upper bound on representable positions.
    pub fn position_limit(&self) -> u64 {
        (1u64 << self.position_bits) - 1
    }
}

/// A `(position, value)` record, the unit stored in a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub position: u64,
    pub value: u64,
}

impl PairKey {
    pub fn new(position: u64, value: u64) -> Self {
        PairKey { position, value }
    }

    /// `(position + 1)` in the high bits, value in the low `symbol_bits`.
    /// Never zero, so an empty cell cannot be confused with a stored pair.
    pub fn pack(&self, layout: KeyLayout) -> Result<u64, ParamError> {
        if self.value & !layout.symbol_mask() != 0 {
            return Err(ParamError::SymbolOverflow {
                position: self.position,
                value: self.value,
                symbol_bits: layout.symbol_bits,
            });
        }
        if self.position >= layout.position_limit() {
            return Err(ParamError::PositionOverflow { position: self.position, limit: layout.position_limit() });
        }
        Ok(pack_unchecked(self.position, self.value, layout.symbol_bits))
    }

    /// Inverse of [`PairKey::pack`]; `None` for words no valid pair packs to.
    pub fn unpack(packed: u64, layout: KeyLayout) -> Option<PairKey> {
        let high = packed >> layout.symbol_bits;
        if high == 0 || high >> layout.position_bits != 0 {
            return None;
        }
        Some(PairKey { position: high - 1, value: packed & layout.symbol_mask() })
    }
}

#[inline(always)]
pub(crate) fn pack_unchecked(position: u64, value: u64, symbol_bits: u32) -> u64 {
    ((position + 1) << symbol_bits) | value
}

/// `(2i + 1) * x + i^2` with wrapping 64-bit arithmetic.
#[inline]
pub fn poly_checksum(position: u64, value: u64) -> u64 {
    position.wrapping_mul(2).wrapping_add(1).wrapping_mul(value).wrapping_add(position.wrapping_mul(position))
}

/// The cell indices of `key`, one per subtable.
pub fn derive_cell_indices(key: PairKey, layout: KeyLayout, cfg: &HashConfig) -> Result<Placement, ParamError> {
    Ok(cfg.cell_indices(key.pack(layout)?))
}

/// The `b`-bit checksum of `key`.
pub fn checksum(key: PairKey, layout: KeyLayout, cfg: &HashConfig, flavor: ChecksumFlavor) -> Result<u64, ParamError> {
    let packed = key.pack(layout)?;
    Ok(checksum_packed(packed, layout, cfg, flavor))
}

/// Checksum of an already packed word. Words that are not valid pairs still
/// get a deterministic value so the pure-cell test can run on any cell.
#[inline]
pub fn checksum_packed(packed: u64, layout: KeyLayout, cfg: &HashConfig, flavor: ChecksumFlavor) -> u64 {
    match flavor {
        ChecksumFlavor::Hash => cfg.hash_checksum(packed),
        ChecksumFlavor::Poly => {
            let position = (packed >> layout.symbol_bits).wrapping_sub(1);
            let value = packed & layout.symbol_mask();
            poly_checksum(position, value) & cfg.checksum_mask()
        }
    }
}

pub(crate) fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> KeyLayout {
        KeyLayout::new(20, 20).unwrap()
    }

    #[test]
    fn mixer_reference_values() {
        // SplitMix64 with state 0: first output is mix(0x9e3779b97f4a7c15).
        assert_eq!(mix64(GOLDEN_GAMMA), 0xe220_a839_7b1d_cdaf);
        assert_eq!(mix64(0), 0);
    }

    #[test]
    fn config_validation() {
        assert_eq!(HashConfig::new(0, 1, 8, 32), Err(ParamError::SubtableCount(1)));
        assert_eq!(HashConfig::new(0, 17, 8, 32), Err(ParamError::SubtableCount(17)));
        assert_eq!(HashConfig::new(0, 4, 0, 32).unwrap().cells(), 0);
        assert_eq!(HashConfig::new(0, 4, 1 << 32, 32), Err(ParamError::SubtableSize(1 << 32)));
        assert_eq!(HashConfig::new(0, 4, 8, 7), Err(ParamError::ChecksumBits(7)));
        assert_eq!(HashConfig::new(0, 4, 8, 65), Err(ParamError::ChecksumBits(65)));
        assert!(HashConfig::new(0, 4, 8, 64).is_ok());
    }

    #[test]
    fn indices_are_deterministic() {
        let cfg = HashConfig::new(42, 4, 1024, 32).unwrap();
        let key = PairKey::new(17, 0xabcde);
        let a = derive_cell_indices(key, layout(), &cfg).unwrap();
        let b = derive_cell_indices(key, layout(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.local().len(), 4);
    }

    #[test]
    fn single_cell_subtables_map_to_zero() {
        let cfg = HashConfig::new(9, 5, 1, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let key = PairKey::new(rng.random_range(0..1 << 19), rng.random_range(0..1 << 20));
            let p = derive_cell_indices(key, layout(), &cfg).unwrap();
            assert!(p.local().iter().all(|&a| a == 0));
        }
    }

    #[test]
    fn global_addresses_are_distinct_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 2..=MAX_K {
            let cfg = HashConfig::new(rng.random(), k, 37, 32).unwrap();
            for _ in 0..200 {
                let key = PairKey::new(rng.random_range(0..1 << 19), rng.random_range(0..1 << 20));
                let p = derive_cell_indices(key, layout(), &cfg).unwrap();
                let global: Vec<usize> = p.global(37).collect();
                assert_eq!(global.len(), k);
                for (j, &g) in global.iter().enumerate() {
                    assert!(g >= j * 37 && g < (j + 1) * 37);
                }
            }
        }
    }

    #[test]
    fn seed_changes_placement() {
        let a = HashConfig::new(1, 4, 1024, 32).unwrap();
        let b = HashConfig::new(2, 4, 1024, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let changed = (0..1000).any(|_| {
            let key = PairKey::new(rng.random_range(0..1 << 19), rng.random_range(0..1 << 20));
            derive_cell_indices(key, layout(), &a).unwrap() != derive_cell_indices(key, layout(), &b).unwrap()
        });
        assert!(changed);
    }

    #[test]
    fn poly_checksum_examples() {
        let cfg = HashConfig::new(0, 4, 16, 32).unwrap();
        let l = layout();
        assert_eq!(checksum(PairKey::new(3, 5), l, &cfg, ChecksumFlavor::Poly).unwrap(), 44);
        assert_eq!(checksum(PairKey::new(0, 0), l, &cfg, ChecksumFlavor::Poly).unwrap(), 0);
        // Truncation to the low b bits.
        let narrow = HashConfig::new(0, 4, 16, 8).unwrap();
        let big = PairKey::new(1000, 1000);
        let full = 2001u64 * 1000 + 1000 * 1000;
        assert_eq!(checksum(big, l, &narrow, ChecksumFlavor::Poly).unwrap(), full & 0xff);
    }

    #[test]
    fn hash_checksum_respects_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for b in [8u32, 13, 32, 63, 64] {
            let cfg = HashConfig::new(5, 4, 16, b).unwrap();
            for _ in 0..100 {
                let key = PairKey::new(rng.random_range(0..1 << 19), rng.random_range(0..1 << 20));
                let c = checksum(key, layout(), &cfg, ChecksumFlavor::Hash).unwrap();
                assert_eq!(c & !low_mask(b), 0);
            }
        }
    }

    #[test]
    fn hash_checksum_comes_from_separate_stream() {
        // The checksum must not reuse the bits that place the pair.
        let cfg = HashConfig::new(77, 2, 1 << 20, 32).unwrap();
        let packed = PairKey::new(5, 6).pack(layout()).unwrap();
        assert_ne!(cfg.digest(0, packed), cfg.digest(1, packed));
        assert_eq!(cfg.hash_checksum(packed), cfg.digest(0, packed) & 0xffff_ffff);
    }

    #[test]
    fn pack_round_trip_and_zero_pair() {
        let l = layout();
        let zero = PairKey::new(0, 0);
        let packed = zero.pack(l).unwrap();
        assert_ne!(packed, 0);
        assert_eq!(PairKey::unpack(packed, l), Some(zero));
        assert_eq!(PairKey::unpack(0, l), None);
        // Position field beyond p bits.
        assert_eq!(PairKey::unpack(1u64 << 40, l), None);
        assert!(matches!(PairKey::new(0, 1 << 20).pack(l), Err(ParamError::SymbolOverflow { .. })));
        assert!(matches!(PairKey::new((1 << 20) - 1, 0).pack(l), Err(ParamError::PositionOverflow { .. })));
    }

    #[test]
    fn layout_validation() {
        assert!(KeyLayout::new(0, 10).is_err());
        assert!(KeyLayout::new(10, 0).is_err());
        assert!(KeyLayout::new(32, 32).is_err());
        assert!(KeyLayout::new(32, 31).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn unpack_inverts_pack(position in 0u64..(1 << 20) - 1, value in 0u64..1 << 20) {
            let l = layout();
            let key = PairKey::new(position, value);
            proptest::prop_assert_eq!(PairKey::unpack(key.pack(l).unwrap(), l), Some(key));
        }

        #[test]
        fn indices_in_range(seed: u64, packed: u64, size in 1usize..100_000, k in 2usize..=MAX_K) {
            let cfg = HashConfig::new(seed, k, size, 32).unwrap();
            let p = cfg.cell_indices(packed);
            proptest::prop_assert!(p.local().iter().all(|&a| (a as usize) < size));
            proptest::prop_assert_eq!(p, cfg.cell_indices(packed));
        }
    }
}
