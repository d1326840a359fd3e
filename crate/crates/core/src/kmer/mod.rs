//! k-mer counting and colored k-mer indexing over FASTA/FASTQ input.

mod color;
mod count;
mod encode;
mod parse;

pub use color::{build_color_index, ColorIndex, ExperimentHit};
pub use count::{count_kmers, BuildOptions, KmerConfig, KmerCounts, SHARD_BITS};
pub use encode::{canonical, decode_kmer, encode_base, encode_kmer, reverse_complement, Kmers, MAX_K};
pub use parse::{maybe_gunzip, open_sequences, SequenceReader, SequenceRecord};
