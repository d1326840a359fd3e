//! Counts canonical k-mers in a few reads, exactly and approximately.

use maplet::kmer::{count_kmers, BuildOptions, KmerConfig, SequenceRecord};

fn reads() -> Vec<maplet::Result<SequenceRecord>> {
    ["ACGTTGCATGCATTGACCA", "TGGTCAATGCATGCAACGT", "GGGGCCCCAAAATTTT"]
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(SequenceRecord { id: format!("r{i}"), seq: s.as_bytes().to_vec() }))
        .collect()
}

fn main() -> maplet::Result<()> {
    let cfg = KmerConfig { k: 7, ..KmerConfig::default() };
    let opts = BuildOptions { epsilon: 0.05, expected_items: 64, ..BuildOptions::default() };

    let exact = count_kmers(reads(), &KmerConfig { exact: true, ..cfg.clone() }, &opts)?;
    let approx = count_kmers(reads(), &cfg, &opts)?;
    println!("{} k-mers total", exact.total_kmers());
    for kmer in ["ACGTTGC", "GCAACGT", "TTTTTTT"] {
        println!("{kmer}\texact {:?}\tapprox {:?}", exact.query(kmer), approx.query(kmer));
    }
    exact.write_histogram(std::io::stdout().lock())
}
