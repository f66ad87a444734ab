//! Biff codes: fast error correction for large messages built from
//! invertible Bloom lookup tables.
//!
//! A sender hashes every `(symbol, position)` pair into a small table and
//! ships it next to the message. The receiver removes the pairs it actually
//! got; what is left is the set of corrupted positions with both their
//! received and original values, recovered by peeling. Encoding is linear
//! in the message, decoding is linear in the message plus the error count,
//! and the table needs only a constant number of cells per error.
//!
//! ```
//! use biff_core::{decode, encode, CodecParams};
//!
//! let message: Vec<u64> = (0..1000).map(|i| (i * 37) % 256).collect();
//! let params = CodecParams::new(1000, 8, 4, 40).with_seed(7);
//! let patch = encode(&message, &params).unwrap();
//!
//! let mut received = message.clone();
//! received[123] ^= 0x55;
//! let (repaired, report) = decode(&received, &patch, &params).unwrap();
//! assert!(report.success);
//! assert_eq!(repaired, message);
//! ```

pub mod analysis;
pub mod channel;
pub mod codec;
pub mod experiment;
pub mod hashing;
pub mod iblt;

pub use analysis::{
    biff_overhead_factor, block_scheme_overhead, expected_unrecoverable, size_table, threshold, AnalysisError,
    ThresholdResult,
};
pub use channel::{corrupt_burst, corrupt_table, corrupt_uniform, ChannelError, ChannelSpec};
pub use codec::{
    decode, decode_erasures, decode_timed, deserialize_patch, encode, encode_set, reconcile_sets, serialize_patch,
    CodecError, CodecParams, Correction, DecodeReport, Patch, PatchError, Reconciliation, StageTimings, TimingMode,
};
pub use experiment::{ExperimentConfig, ExperimentKind, ExperimentReport, TrialRow};
pub use hashing::{checksum, derive_cell_indices, ChecksumFlavor, HashConfig, KeyLayout, PairKey, ParamError};
pub use iblt::{Cell, IbltError, IbltTable, Listing, PeelOutcome};
