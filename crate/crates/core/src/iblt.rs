//! Invertible Bloom lookup table over packed `(position, value)` pairs.
//!
//! Cells hold XOR accumulators only, unless the table is built in counting
//! mode. Listing is done by peeling: a cell whose `valueSum` matches the
//! checksum of its `keySum` is taken to hold exactly one pair, which is then
//! removed from all of its cells.

use thiserror::Error;

use crate::hashing::{checksum_packed, ChecksumFlavor, HashConfig, KeyLayout, PairKey, ParamError, MAX_K};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Cell {
    pub key_sum: u64,
    pub value_sum: u64,
}

impl Cell {
    pub fn is_zero(&self) -> bool {
        self.key_sum == 0 && self.value_sum == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IbltError {
    #[error("count-based listing needs a table built in counting mode")]
    NotCounting,
    #[error("tables have different configurations")]
    Incompatible,
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// A pair removed by [`IbltTable::peel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PeeledPair {
    pub pair: PairKey,
    /// `+1` if the pair was net-inserted, `-1` if net-deleted, `0` when the
    /// table keeps no counts.
    pub sign: i8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeelOutcome {
    pub recovered: Vec<PeeledPair>,
    /// Cells still nonzero after peeling stalled.
    pub residual_cells: usize,
    /// Cells that passed the checksum test but did not hold a valid pair.
    pub anomalies: usize,
}

impl PeelOutcome {
    pub fn is_complete(&self) -> bool {
        self.residual_cells == 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = PairKey> + '_ {
        self.recovered.iter().map(|p| p.pair)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Listing {
    pub entries: Vec<PairKey>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IbltTable {
    cfg: HashConfig,
    layout: KeyLayout,
    flavor: ChecksumFlavor,
    cells: Vec<Cell>,
    counts: Option<Vec<i32>>,
}

impl IbltTable {
    pub fn new(cfg: HashConfig, layout: KeyLayout, flavor: ChecksumFlavor, counting: bool) -> Self {
        let m = cfg.cells();
        IbltTable { cfg, layout, flavor, cells: vec![Cell::default(); m], counts: counting.then(|| vec![0; m]) }
    }

    pub fn config(&self) -> &HashConfig {
        &self.cfg
    }

    pub fn layout(&self) -> KeyLayout {
        self.layout
    }

    pub fn flavor(&self) -> ChecksumFlavor {
        self.flavor
    }

    pub fn is_counting(&self) -> bool {
        self.counts.is_some()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Cell] {
        &mut self.cells
    }

    pub fn counts(&self) -> Option<&[i32]> {
        self.counts.as_deref()
    }

    pub fn counts_mut(&mut self) -> Option<&mut [i32]> {
        self.counts.as_deref_mut()
    }

    /// Cells of subtable `j`.
    pub fn subtable(&self, j: usize) -> &[Cell] {
        let s = self.cfg.subtable_size();
        &self.cells[j * s..(j + 1) * s]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// True when every cell (and count) is zero.
    pub fn is_clear(&self) -> bool {
        self.cells.iter().all(Cell::is_zero) && self.counts.as_ref().is_none_or(|c| c.iter().all(|&x| x == 0))
    }

    pub fn nonzero_cells(&self) -> usize {
        match &self.counts {
            None => self.cells.iter().filter(|c| !c.is_zero()).count(),
            Some(counts) => self.cells.iter().zip(counts).filter(|(c, &n)| !c.is_zero() || n != 0).count(),
        }
    }

    pub fn insert(&mut self, pair: PairKey) -> Result<(), ParamError> {
        let packed = pair.pack(self.layout)?;
        if self.cells.is_empty() {
            return Err(ParamError::NoCells);
        }
        self.toggle(packed, 1);
        Ok(())
    }

    pub fn delete(&mut self, pair: PairKey) -> Result<(), ParamError> {
        let packed = pair.pack(self.layout)?;
        if self.cells.is_empty() {
            return Err(ParamError::NoCells);
        }
        self.toggle(packed, -1);
        Ok(())
    }

    /// XOR a packed pair into its `k` cells and add `delta` to their counts.
    #[inline]
    pub(crate) fn toggle(&mut self, packed: u64, delta: i32) {
        let chk = self.checksum_of(packed);
        let cells = &mut self.cells;
        match &mut self.counts {
            None => self.cfg.for_each_cell(packed, |g| {
                let cell = &mut cells[g];
                cell.key_sum ^= packed;
                cell.value_sum ^= chk;
            }),
            Some(counts) => self.cfg.for_each_cell(packed, |g| {
                let cell = &mut cells[g];
                cell.key_sum ^= packed;
                cell.value_sum ^= chk;
                counts[g] += delta;
            }),
        }
    }

    #[inline]
    pub(crate) fn checksum_of(&self, packed: u64) -> u64 {
        checksum_packed(packed, self.layout, &self.cfg, self.flavor)
    }

    #[inline]
    fn is_pure_cell(&self, c: Cell) -> bool {
        c.key_sum != 0 && c.value_sum == self.checksum_of(c.key_sum)
    }

    /// True if both tables place and checksum pairs identically.
    pub fn same_shape(&self, other: &IbltTable) -> bool {
        self.cfg == other.cfg
            && self.layout == other.layout
            && self.flavor == other.flavor
            && self.is_counting() == other.is_counting()
    }

    /// Cellwise XOR (and count subtraction) of `other` into `self`. The result
    /// holds the symmetric difference of the two tables' contents.
    pub fn subtract(&mut self, other: &IbltTable) -> Result<(), IbltError> {
        if !self.same_shape(other) {
            return Err(IbltError::Incompatible);
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.key_sum ^= b.key_sum;
            a.value_sum ^= b.value_sum;
        }
        if let (Some(a), Some(b)) = (&mut self.counts, &other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        Ok(())
    }

    /// Peel with any representable position accepted.
    pub fn peel(&mut self) -> PeelOutcome {
        self.peel_within(self.layout.position_limit())
    }

    /// Repeatedly remove pairs from pure cells until none remain.
    ///
    /// A pure cell whose key does not unpack, whose position is not below
    /// `position_limit`, or whose key does not hash back to that cell is
    /// counted as an anomaly and skipped for the rest of this call.
    pub fn peel_within(&mut self, position_limit: u64) -> PeelOutcome {
        let size = self.cfg.subtable_size();
        let k = self.cfg.k();
        let mut poisoned = vec![false; self.cells.len()];
        // Each entry carries the cell contents seen when it was found pure,
        // so an unchanged cell is not re-hashed on pop.
        let mut work: Vec<(u32, Cell)> =
            self.cells.iter().enumerate().filter(|(_, &c)| self.is_pure_cell(c)).map(|(i, &c)| (i as u32, c)).collect();
        let mut out = PeelOutcome::default();
        let mut addrs = [0usize; MAX_K];

        while let Some((c, seen)) = work.pop() {
            let c = c as usize;
            let cell = self.cells[c];
            if poisoned[c] || (cell != seen && !self.is_pure_cell(cell)) {
                continue;
            }
            let packed = cell.key_sum;
            let mut n = 0;
            self.cfg.for_each_cell(packed, |g| {
                addrs[n] = g;
                n += 1;
            });
            let sign = match &self.counts {
                Some(counts) => counts[c].signum() as i8,
                None => 0,
            };
            let pair = PairKey::unpack(packed, self.layout).filter(|p| p.position < position_limit);
            let pair = match pair {
                Some(p) if addrs[c / size] == c && (self.counts.is_none() || sign != 0) => p,
                _ => {
                    poisoned[c] = true;
                    out.anomalies += 1;
                    continue;
                }
            };

            for &g in &addrs[..k] {
                let target = &mut self.cells[g];
                target.key_sum ^= packed;
                target.value_sum ^= cell.value_sum;
                if let Some(counts) = &mut self.counts {
                    counts[g] -= sign as i32;
                }
            }
            for &g in &addrs[..k] {
                let now = self.cells[g];
                if g != c && !poisoned[g] && self.is_pure_cell(now) {
                    work.push((g as u32, now));
                }
            }
            out.recovered.push(PeeledPair { pair, sign });
        }

        out.residual_cells = self.nonzero_cells();
        out
    }

    /// Classic listing driven by `count == 1`. Valid for insert-only tables.
    pub fn list_with_counts(&mut self) -> Result<Listing, IbltError> {
        if self.counts.is_none() {
            return Err(IbltError::NotCounting);
        }
        let size = self.cfg.subtable_size();
        let counts_ref = self.counts.as_ref().unwrap();
        let mut work: Vec<u32> = (0..self.cells.len()).filter(|&c| counts_ref[c] == 1).map(|c| c as u32).collect();
        let mut entries = Vec::new();
        let mut stuck = vec![false; self.cells.len()];

        while let Some(c) = work.pop() {
            let c = c as usize;
            if stuck[c] || self.counts.as_ref().unwrap()[c] != 1 {
                continue;
            }
            let packed = self.cells[c].key_sum;
            let Some(pair) = PairKey::unpack(packed, self.layout) else {
                stuck[c] = true;
                continue;
            };
            let chk = self.checksum_of(packed);
            let placement = self.cfg.cell_indices(packed);
            let counts = self.counts.as_mut().unwrap();
            for g in placement.global(size) {
                self.cells[g].key_sum ^= packed;
                self.cells[g].value_sum ^= chk;
                counts[g] -= 1;
                if counts[g] == 1 {
                    work.push(g as u32);
                }
            }
            entries.push(pair);
        }

        let complete = self.is_clear();
        Ok(Listing { entries, complete })
    }
}
