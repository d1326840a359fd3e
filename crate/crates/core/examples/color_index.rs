//! Builds a k-mer to experiment index and asks which experiments contain a
//! transcript.

use maplet::kmer::{build_color_index, BuildOptions, ColorIndex, KmerConfig, SequenceRecord};

fn experiment(name: &str, seq: &str) -> (String, Vec<maplet::Result<SequenceRecord>>) {
    let rec = SequenceRecord { id: name.into(), seq: seq.as_bytes().to_vec() };
    (name.to_string(), vec![Ok(rec)])
}

fn main() -> maplet::Result<()> {
    let cfg = KmerConfig { k: 9, ..KmerConfig::default() };
    let opts = BuildOptions { epsilon: 1.0 / 1024.0, expected_items: 1000, ..BuildOptions::default() };
    let experiments = vec![
        experiment("liver", "ATGGCGTACGTTAGCCTAGGCTTACGATCGATCGGATCCA"),
        experiment("brain", "TTGACCGGTAACGTTAGCCTAGGCTTACGATAAACCCGGT"),
        experiment("heart", "CCCCGGGGAAAATTTTACGTACGTACGTTTGGCCAAGGTT"),
    ];
    let index = build_color_index(experiments, &cfg, &opts, None)?;
    let hits = index.query_experiments(b"CGTTAGCCTAGGCTTACGAT", 0.8)?;
    ColorIndex::write_hits(&hits, std::io::stdout().lock())
}
