pub mod bench;
pub mod cache;
pub mod cli;
pub mod codec;
pub mod error;
pub mod filter;
pub mod format;
pub mod hash;
pub mod kmer;
pub mod lsm;
pub mod maplet;
pub mod report;

pub use error::{Error, Result};

/// Seed used by every randomized tool unless one is given explicitly.
pub const DEFAULT_SEED: u64 = 0x6d61_706c_6574_0001;
