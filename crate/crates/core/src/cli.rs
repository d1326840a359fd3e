//! Command-line front end. The `maplet` binary calls [`main`].

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::bench::{bench_fpr, bench_strong, FprReport};
use crate::cache::{self, CacheConfig};
use crate::error::{Error, Result};
use crate::format::{self, AnyMaplet, Layout};
use crate::kmer::{build_color_index, count_kmers, open_sequences, BuildOptions, ColorIndex, KmerConfig};
use crate::lsm::{self, LsmConfig};
use crate::report::SimReport;
use crate::DEFAULT_SEED;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const ASSERTION: u8 = 5;
}

#[derive(Parser, Debug)]
#[command(name = "maplet", version, about = "Approximate key-value maps and the tools built on them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Aligned table instead of TSV (reports only).
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Args, Debug, Clone)]
pub struct KmerArgs {
    /// k-mer length, 1 to 31.
    #[arg(short = 'k', long = "kmer-size", default_value_t = 21)]
    pub k: u8,
    /// Count a k-mer and its reverse complement separately.
    #[arg(long)]
    pub no_canonical: bool,
    /// Use the whole k-mer as its fingerprint: no false positives.
    #[arg(long, conflicts_with = "epsilon")]
    pub exact: bool,
    /// False-positive rate at the sized capacity.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Expected distinct k-mers. Defaults to the total input size in bytes.
    #[arg(long)]
    pub capacity: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count k-mers in FASTA/FASTQ files (optionally gzipped).
    KmerCount {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        kmer: KmerArgs,
        /// Counter width in bits; counts saturate at 2^bits - 1.
        #[arg(long, default_value_t = 16)]
        value_bits: u8,
        /// Leave out k-mers seen fewer times.
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        /// Print the count histogram instead of per-k-mer counts.
        #[arg(long)]
        histogram: bool,
        /// Also write the counting maplet to this file.
        #[arg(long)]
        save: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Build a k-mer to experiment-set index; one input file per experiment.
    ColorIndex {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        kmer: KmerArgs,
        /// Bitset width; defaults to the number of inputs.
        #[arg(long)]
        value_bits: Option<u8>,
        /// Index file to write (a `.names` file is written next to it).
        #[arg(long, short = 'o')]
        output: PathBuf,
    },
    /// Report experiments containing most k-mers of each query sequence.
    ColorQuery {
        #[arg(long)]
        index: PathBuf,
        #[arg(required = true)]
        queries: Vec<PathBuf>,
        /// Minimum fraction of a query's distinct k-mers an experiment must hold.
        #[arg(long, default_value_t = 0.8)]
        theta: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Measure the false-positive rate on absent keys.
    BenchFpr {
        #[arg(long, default_value_t = 100_000)]
        capacity: u64,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1_000_000)]
        probes: u64,
        /// Fail unless the rate is below this multiple of epsilon.
        #[arg(long, default_value_t = 1.5)]
        tolerance: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Histogram of collisions per absent-key query on a multiset maplet.
    BenchStrong {
        #[arg(long, default_value_t = 100_000)]
        capacity: u64,
        #[arg(long, default_value_t = 1.0 / 32.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000_000)]
        probes: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compare per-SSTable filters with per-level maplets for LSM routing.
    LsmSim {
        /// `key = value` file; flags given on the command line win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        growth: Option<u32>,
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long)]
        keys_per_sstable: Option<u64>,
        /// `leveled` or `size-tiered`.
        #[arg(long)]
        compaction: Option<String>,
        #[arg(long)]
        present_fraction: Option<f64>,
        /// `uniform` or `zipf:<s>`.
        #[arg(long)]
        distribution: Option<String>,
        /// Per-SSTable filter error rate.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Per-level maplet error rate; defaults to the equal-memory rate.
        #[arg(long)]
        maplet_epsilon: Option<f64>,
        #[arg(long)]
        paged: bool,
        #[arg(long)]
        queries: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compare per-peer filters with one peer-set maplet and delta updates.
    CacheSim {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        peers: Option<u32>,
        #[arg(long)]
        cache_size: Option<u64>,
        /// Adds and deletes per peer per round.
        #[arg(long)]
        churn: Option<u64>,
        /// Rounds between summary refreshes.
        #[arg(long)]
        refresh: Option<u32>,
        #[arg(long)]
        rounds: Option<u32>,
        /// Per-peer filter error rate.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        maplet_epsilon: Option<f64>,
        /// Signed delta counter width.
        #[arg(long)]
        value_bits: Option<u8>,
        #[arg(long)]
        lookups: Option<u64>,
        /// Skip the rebuild comparison after each refresh.
        #[arg(long)]
        no_verify: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print every stored (fingerprint, value) of a maplet file.
    MapletDump {
        file: PathBuf,
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
    /// Merge two maplet files with identical parameters.
    MapletMerge {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, short = 'o')]
        output: PathBuf,
        /// Write the sparse layout instead of the dense one.
        #[arg(long)]
        sparse: bool,
    },
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => exit::IO,
        Error::Format(_)
        | Error::TruncatedStream
        | Error::Parse { .. }
        | Error::IncompatibleParams(_) => exit::FORMAT,
        Error::InvalidParams(_) | Error::Domain(_) | Error::TooManyExperiments { .. } => exit::USAGE,
        _ => exit::INTERNAL,
    }
}

/// Outcome of a successful command: whether its built-in check held.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    AssertionFailed,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_report(report: &SimReport, out: &OutputArgs) -> Result<()> {
    let mut w = sink(out.output.as_deref())?;
    if out.pretty {
        report.write_pretty(&mut w)?;
    } else {
        report.write_tsv(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_kv(path: &Option<PathBuf>) -> Result<Option<String>> {
    path.as_ref().map(std::fs::read_to_string).transpose().map_err(Error::from)
}

impl KmerArgs {
    fn config(&self, min_count: u64) -> KmerConfig {
        KmerConfig {
            k: self.k,
            canonical: !self.no_canonical,
            exact: self.exact,
            min_count,
        }
    }

    fn options(&self, inputs: &[PathBuf], value_bits: u8) -> Result<BuildOptions> {
        let defaults = BuildOptions::default();
        let capacity = match self.capacity {
            Some(c) => c,
            None => {
                let mut bytes = 0u64;
                for p in inputs {
                    bytes += std::fs::metadata(p)?.len();
                }
                bytes.max(1024)
            }
        };
        if self.threads == 0 {
            return Err(Error::InvalidParams("--threads must be at least 1".into()));
        }
        Ok(BuildOptions {
            epsilon: self.epsilon.unwrap_or(defaults.epsilon),
            expected_items: capacity,
            value_bits,
            threads: self.threads,
            seed: self.seed,
        })
    }
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::KmerCount { inputs, kmer, value_bits, min_count, histogram, save, out } => {
            let cfg = kmer.config(min_count);
            let opts = kmer.options(&inputs, value_bits)?;
            let records = inputs
                .iter()
                .map(open_sequences)
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten();
            let counts = count_kmers(records, &cfg, &opts)?;
            if let Some(path) = save {
                let mut w = BufWriter::new(File::create(path)?);
                format::write(counts.maplet(), Layout::Dense, &mut w)?;
                w.flush()?;
            }
            let mut w = sink(out.output.as_deref())?;
            if histogram {
                counts.write_histogram(&mut w)?;
            } else {
                counts.write_dump(&mut w)?;
            }
            w.flush()?;
        }
        Command::ColorIndex { inputs, kmer, value_bits, output } => {
            let cfg = kmer.config(1);
            let opts = kmer.options(&inputs, value_bits.unwrap_or(inputs.len().clamp(1, 64) as u8))?;
            let mut experiments = Vec::with_capacity(inputs.len());
            for p in &inputs {
                let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                experiments.push((name, open_sequences(p)?));
            }
            let index = build_color_index(experiments, &cfg, &opts, value_bits)?;
            index.save(&output)?;
        }
        Command::ColorQuery { index, queries, theta, out } => {
            let index = ColorIndex::load(&index)?;
            let mut w = sink(out.output.as_deref())?;
            for p in &queries {
                for record in open_sequences(p)? {
                    let record = record?;
                    writeln!(w, "# {}", record.id)?;
                    let hits = index.query_experiments(&record.seq, theta)?;
                    ColorIndex::write_hits(&hits, &mut w)?;
                }
            }
            w.flush()?;
        }
        Command::BenchFpr { capacity, epsilon, probes, tolerance, seed, out } => {
            let r = FprReport { tolerance, ..bench_fpr(capacity, epsilon, probes, seed)? };
            emit_report(&r.report(), &out)?;
            if !r.passed() {
                return Ok(Verdict::AssertionFailed);
            }
        }
        Command::BenchStrong { capacity, epsilon, probes, seed, out } => {
            let r = bench_strong(capacity, epsilon, probes, seed)?;
            emit_report(&r.report(), &out)?;
            if !r.passed() {
                return Ok(Verdict::AssertionFailed);
            }
        }
        Command::LsmSim {
            config,
            growth,
            levels,
            keys_per_sstable,
            compaction,
            present_fraction,
            distribution,
            epsilon,
            maplet_epsilon,
            paged,
            queries,
            seed,
            out,
        } => {
            let mut cfg = match read_kv(&config)? {
                Some(text) => LsmConfig::from_kv(&text)?,
                None => LsmConfig::default(),
            };
            if let Some(v) = growth {
                cfg.growth = v;
            }
            if let Some(v) = levels {
                cfg.levels = v;
            }
            if let Some(v) = keys_per_sstable {
                cfg.keys_per_sstable = v;
            }
            if let Some(v) = compaction {
                cfg.compaction = v.parse()?;
            }
            if let Some(v) = present_fraction {
                cfg.present_fraction = v;
            }
            if let Some(v) = distribution {
                cfg.distribution = v.parse()?;
            }
            if let Some(v) = epsilon {
                cfg.filter_epsilon = v;
            }
            if maplet_epsilon.is_some() {
                cfg.maplet_epsilon = maplet_epsilon;
            }
            cfg.paged |= paged;
            if let Some(v) = queries {
                cfg.queries = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            let outcome = lsm::simulate(&cfg)?;
            emit_report(&outcome.report(), &out)?;
        }
        Command::CacheSim {
            config,
            peers,
            cache_size,
            churn,
            refresh,
            rounds,
            epsilon,
            maplet_epsilon,
            value_bits,
            lookups,
            no_verify,
            seed,
            out,
        } => {
            let mut cfg = match read_kv(&config)? {
                Some(text) => CacheConfig::from_kv(&text)?,
                None => CacheConfig::default(),
            };
            let set = |slot: &mut u64, v: Option<u64>| {
                if let Some(v) = v {
                    *slot = v;
                }
            };
            if let Some(v) = peers {
                cfg.peers = v;
            }
            set(&mut cfg.cache_size, cache_size);
            set(&mut cfg.churn, churn);
            if let Some(v) = refresh {
                cfg.refresh = v;
            }
            if let Some(v) = rounds {
                cfg.rounds = v;
            }
            if let Some(v) = epsilon {
                cfg.filter_epsilon = v;
            }
            if let Some(v) = maplet_epsilon {
                cfg.maplet_epsilon = v;
            }
            if let Some(v) = value_bits {
                cfg.delta_bits = v;
            }
            set(&mut cfg.lookups, lookups);
            cfg.verify &= !no_verify;
            set(&mut cfg.seed, seed);
            let outcome = cache::simulate(&cfg)?;
            emit_report(&outcome.report(), &out)?;
            if outcome.violations > 0 || outcome.maplet.false_negatives > 0 || outcome.filter.false_negatives > 0 {
                return Ok(Verdict::AssertionFailed);
            }
        }
        Command::MapletDump { file, output } => {
            let m = AnyMaplet::read(io::BufReader::new(File::open(file)?))?;
            let mut w = sink(output.as_deref())?;
            write_dump(&m, &mut w)?;
            w.flush()?;
        }
        Command::MapletMerge { a, b, output, sparse } => {
            let a = AnyMaplet::read(io::BufReader::new(File::open(a)?))?;
            let b = AnyMaplet::read(io::BufReader::new(File::open(b)?))?;
            let merged = AnyMaplet::merge(&a, &b)?;
            let layout = if sparse { Layout::Sparse } else { Layout::Dense };
            std::fs::write(output, merged.to_bytes(layout))?;
        }
    }
    Ok(Verdict::Ok)
}

/// `fingerprint<TAB>value` rows sorted by fingerprint then value. The
/// fingerprint is zero-padded hex of `ceil(p / 4)` digits.
pub fn write_dump(m: &AnyMaplet, mut out: impl Write) -> Result<()> {
    let digits = (m.params().fingerprint_bits() as usize).div_ceil(4);
    let mut rows: Vec<(u64, String)> = m.dump().into_iter().map(|(fp, v)| (fp.raw(), v)).collect();
    rows.sort_unstable();
    writeln!(out, "fingerprint\tvalue")?;
    for (fp, v) in rows {
        writeln!(out, "{fp:0digits$x}\t{v}")?;
    }
    Ok(())
}

/// Parses `args` (including the program name), runs, and maps the result to
/// an exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(Verdict::Ok) => ExitCode::from(exit::OK),
        Ok(Verdict::AssertionFailed) => {
            eprintln!("maplet: check failed");
            ExitCode::from(exit::ASSERTION)
        }
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("maplet: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn main() -> ExitCode {
    main_with_args(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exact_conflicts_with_epsilon() {
        let r = Cli::try_parse_from(["maplet", "kmer-count", "x.fa", "--exact", "--epsilon", "0.01"]);
        assert!(r.is_err());
    }

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(exit_code(&Error::Format("x".into())), exit::FORMAT);
        assert_eq!(exit_code(&Error::TruncatedStream), exit::FORMAT);
        assert_eq!(exit_code(&io::Error::other("x").into()), exit::IO);
        assert_eq!(exit_code(&Error::InvalidParams("x".into())), exit::USAGE);
    }
}
