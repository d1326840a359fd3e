use std::collections::BTreeMap;
use std::io::Write;

use crate::codec::{Counter, MergeOperator};
use crate::error::{Error, Result};
use crate::filter::{FilterParams, Fingerprint};
use crate::hash::{unmix, KeyHasher};
use crate::maplet::{Maplet, Mode, ShardedBuilder};

use super::encode::{decode_kmer, encode_kmer, canonical, Kmers, MAX_K};
use super::parse::SequenceRecord;

/// Fixed shard count for parallel builds, so output never depends on the
/// number of threads.
pub const SHARD_BITS: u8 = 4;
const BATCH: usize = 1 << 18;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KmerConfig {
    pub k: u8,
    /// Count a k-mer and its reverse complement together.
    pub canonical: bool,
    /// Use the full `2k`-bit k-mer as the fingerprint, making counts exact.
    pub exact: bool,
    /// Rows below this count are left out of dumps.
    pub min_count: u64,
}

impl Default for KmerConfig {
    fn default() -> Self {
        KmerConfig {
            k: 21,
            canonical: true,
            exact: false,
            min_count: 1,
        }
    }
}

impl KmerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_K).contains(&self.k) {
            return Err(Error::InvalidParams(format!("k={} outside 1..=31", self.k)));
        }
        Ok(())
    }

    pub fn kmers<'a>(&self, seq: &'a [u8]) -> Kmers<'a> {
        Kmers::new(seq, self.k, self.canonical)
    }

    /// Word for a k-mer given as text, after canonicalization.
    pub fn word(&self, kmer: &str) -> Option<u64> {
        if kmer.len() != self.k as usize {
            return None;
        }
        let w = encode_kmer(kmer.as_bytes())?;
        Some(if self.canonical { canonical(w, self.k) } else { w })
    }

    /// Fingerprint width in exact mode. For k <= 16 every possible k-mer may
    /// appear, so two spare bits let the table reach 4^k entries under the
    /// load limit. The mapping stays injective either way.
    pub fn exact_key_bits(&self) -> u8 {
        let bits = if self.k <= 16 { 2 * self.k + 2 } else { 2 * self.k };
        bits.max(crate::filter::MIN_QUOTIENT_BITS + 1)
    }

    pub fn filter_params(&self, opts: &BuildOptions, value_bits: u8) -> Result<FilterParams> {
        self.validate()?;
        let params = if self.exact {
            FilterParams::exact(self.exact_key_bits(), opts.expected_items, value_bits)?
        } else {
            FilterParams::for_capacity(opts.expected_items, opts.epsilon, value_bits)?
        };
        Ok(params.with_seed(opts.seed))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildOptions {
    pub epsilon: f64,
    /// Initial sizing hint; tables grow as needed.
    pub expected_items: u64,
    pub value_bits: u8,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            epsilon: 1.0 / 512.0,
            expected_items: 1 << 16,
            value_bits: 16,
            threads: 1,
            seed: crate::DEFAULT_SEED,
        }
    }
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))
}

/// Feeds `(fingerprint, value)` pairs produced per record into a sharded
/// builder in large batches.
pub(crate) fn build_sharded<O: MergeOperator>(
    params: FilterParams,
    op: O,
    threads: usize,
    fill: impl FnOnce(&mut dyn FnMut(Fingerprint, O::Value) -> Result<()>) -> Result<()>,
) -> Result<Maplet<O>> {
    let pool = thread_pool(threads)?;
    let mut builder = ShardedBuilder::new(params, op, Mode::MergedSlot, SHARD_BITS)?;
    let mut batch: Vec<(Fingerprint, O::Value)> = Vec::with_capacity(BATCH);
    fill(&mut |fp, v| {
        batch.push((fp, v));
        if batch.len() >= BATCH {
            pool.install(|| builder.insert_batch(&batch))?;
            batch.clear();
        }
        Ok(())
    })?;
    pool.install(|| builder.insert_batch(&batch))?;
    builder.finish()
}

/// A counting maplet keyed by k-mer.
#[derive(Clone, Debug)]
pub struct KmerCounts {
    maplet: Maplet<Counter>,
    config: KmerConfig,
    total: u64,
}

/// Counts every k-mer in `records`.
pub fn count_kmers(
    records: impl IntoIterator<Item = Result<SequenceRecord>>,
    config: &KmerConfig,
    opts: &BuildOptions,
) -> Result<KmerCounts> {
    let op = Counter::new(opts.value_bits)?;
    let params = config.filter_params(opts, opts.value_bits)?;
    let mut total = 0u64;
    let maplet = build_sharded(params, op, opts.threads, |emit| {
        for record in records {
            let record = record?;
            for word in config.kmers(&record.seq) {
                total += 1;
                emit(Fingerprint::of_u64(word, &params), 1)?;
            }
        }
        Ok(())
    })?;
    Ok(KmerCounts {
        maplet,
        config: config.clone(),
        total,
    })
}

impl KmerCounts {
    pub fn maplet(&self) -> &Maplet<Counter> {
        &self.maplet
    }

    pub fn config(&self) -> &KmerConfig {
        &self.config
    }

    /// Number of k-mer occurrences counted.
    pub fn total_kmers(&self) -> u64 {
        self.total
    }

    pub fn query_word(&self, word: u64) -> Option<u64> {
        self.maplet.query(&word)
    }

    /// Count for a k-mer given as text. `None` if absent or malformed.
    pub fn query(&self, kmer: &str) -> Option<u64> {
        self.query_word(self.config.word(kmer)?)
    }

    /// Number of stored k-mers (fingerprints) per count value.
    pub fn histogram(&self) -> BTreeMap<u64, u64> {
        let mut hist = BTreeMap::new();
        for (_, count) in self.maplet.enumerate() {
            *hist.entry(count).or_insert(0) += 1;
        }
        hist
    }

    /// `(k-mer text, count)` rows at or above `min_count`, sorted by k-mer.
    /// In approximate mode the k-mer column is the fingerprint in hex.
    pub fn rows(&self) -> Vec<(String, u64)> {
        let params = self.maplet.params();
        let k = self.config.k;
        let exact = params.hasher() == KeyHasher::Exact;
        let mut rows: Vec<(u64, u64)> = self
            .maplet
            .enumerate()
            .filter(|(_, c)| *c >= self.config.min_count)
            .map(|(fp, c)| {
                let key = if exact {
                    unmix(fp.raw(), params.hash_seed(), params.fingerprint_bits())
                } else {
                    fp.raw()
                };
                (key, c)
            })
            .collect();
        rows.sort_unstable();
        rows.into_iter()
            .map(|(key, c)| {
                let text = if exact {
                    decode_kmer(key, k)
                } else {
                    format!("{key:x}")
                };
                (text, c)
            })
            .collect()
    }

    pub fn write_dump(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "kmer\tcount")?;
        for (kmer, count) in self.rows() {
            writeln!(out, "{kmer}\t{count}")?;
        }
        Ok(())
    }

    pub fn write_histogram(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "count\tkmers")?;
        for (count, n) in self.histogram() {
            writeln!(out, "{count}\t{n}")?;
        }
        Ok(())
    }
}
