use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::codec::{Bitset, SetBits};
use crate::error::{Error, Result};
use crate::filter::Fingerprint;
use crate::format::{self, Layout};
use crate::maplet::Maplet;

use super::count::{build_sharded, BuildOptions, KmerConfig};
use super::parse::SequenceRecord;

/// Inverted index from k-mer to the set of experiments containing it.
#[derive(Clone, Debug)]
pub struct ColorIndex {
    maplet: Maplet<Bitset>,
    experiments: Vec<String>,
    config: KmerConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentHit {
    pub id: u32,
    pub name: String,
    pub hits: u64,
    pub fraction: f64,
}

/// Builds the index. `width` is the bitset width and defaults to the number
/// of experiments.
pub fn build_color_index<I>(
    experiments: Vec<(String, I)>,
    config: &KmerConfig,
    opts: &BuildOptions,
    width: Option<u8>,
) -> Result<ColorIndex>
where
    I: IntoIterator<Item = Result<SequenceRecord>>,
{
    let count = experiments.len();
    let width = width.map_or(count.clamp(1, 64), |w| w as usize);
    if count > width || count > 64 {
        return Err(Error::TooManyExperiments {
            count,
            width: width as u32,
        });
    }
    let op = Bitset::new(width as u8)?;
    let params = config.filter_params(opts, width as u8)?;
    let mut names = Vec::with_capacity(count);
    let mut sources = Vec::with_capacity(count);
    for (name, records) in experiments {
        names.push(name);
        sources.push(records);
    }
    let maplet = build_sharded(params, op, opts.threads, |emit| {
        for (id, records) in sources.into_iter().enumerate() {
            let color = SetBits::singleton(id as u32, width as u8)?;
            // Union is idempotent, so repeats inside a file only cost time.
            let mut seen = HashSet::new();
            for record in records {
                let record = record?;
                for word in config.kmers(&record.seq) {
                    if seen.insert(word) {
                        emit(Fingerprint::of_u64(word, &params), color)?;
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(ColorIndex {
        maplet,
        experiments: names,
        config: config.clone(),
    })
}

impl ColorIndex {
    pub fn maplet(&self) -> &Maplet<Bitset> {
        &self.maplet
    }

    pub fn experiments(&self) -> &[String] {
        &self.experiments
    }

    pub fn config(&self) -> &KmerConfig {
        &self.config
    }

    pub fn query_word(&self, word: u64) -> Option<SetBits> {
        self.maplet.query(&word)
    }

    pub fn query(&self, kmer: &str) -> Option<SetBits> {
        self.query_word(self.config.word(kmer)?)
    }

    /// Experiments containing at least a `theta` fraction of the distinct
    /// k-mers of `transcript`, ordered by id.
    pub fn query_experiments(&self, transcript: &[u8], theta: f64) -> Result<Vec<ExperimentHit>> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidParams(format!("theta {theta} outside (0, 1]")));
        }
        let kmers: HashSet<u64> = self.config.kmers(transcript).collect();
        let total = kmers.len() as u64;
        let mut hits = vec![0u64; self.experiments.len()];
        for word in kmers {
            if let Some(set) = self.query_word(word) {
                for id in set.ids() {
                    if let Some(h) = hits.get_mut(id as usize) {
                        *h += 1;
                    }
                }
            }
        }
        if total == 0 {
            return Ok(Vec::new());
        }
        Ok(hits
            .into_iter()
            .enumerate()
            .filter(|(_, h)| *h as f64 >= theta * total as f64)
            .map(|(id, h)| ExperimentHit {
                id: id as u32,
                name: self.experiments[id].clone(),
                hits: h,
                fraction: h as f64 / total as f64,
            })
            .collect())
    }

    pub fn write_hits(hits: &[ExperimentHit], mut out: impl Write) -> Result<()> {
        writeln!(out, "experiment_name\thits\tfraction")?;
        for h in hits {
            writeln!(out, "{}\t{}\t{:.6}", h.name, h.hits, h.fraction)?;
        }
        Ok(())
    }

    fn names_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".names");
        PathBuf::from(p)
    }

    /// Writes the maplet to `path` and the experiment table to
    /// `path` + `.names`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        format::write(&self.maplet, Layout::Dense, &mut out)?;
        out.flush()?;
        let mut names = BufWriter::new(File::create(Self::names_path(path))?);
        writeln!(
            names,
            "#k={}\tcanonical={}\texact={}",
            self.config.k, self.config.canonical as u8, self.config.exact as u8
        )?;
        for (id, name) in self.experiments.iter().enumerate() {
            writeln!(names, "{id}\t{name}")?;
        }
        names.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let maplet: Maplet<Bitset> = format::read(BufReader::new(File::open(path)?))?;
        let names_path = Self::names_path(path);
        let reader = BufReader::new(File::open(&names_path)?);
        let mut config = KmerConfig::default();
        let mut experiments = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let bad = |m: &str| Error::Parse { line: i as u64 + 1, message: m.to_string() };
            if let Some(meta) = line.strip_prefix('#') {
                for field in meta.split('\t') {
                    let (key, value) = field.split_once('=').ok_or_else(|| bad("expected key=value"))?;
                    let num: u8 = value.parse().map_err(|_| bad("expected integer"))?;
                    match key {
                        "k" => config.k = num,
                        "canonical" => config.canonical = num != 0,
                        "exact" => config.exact = num != 0,
                        _ => return Err(bad("unknown field")),
                    }
                }
                continue;
            }
            let (id, name) = line.split_once('\t').ok_or_else(|| bad("expected id<TAB>name"))?;
            if id.parse::<usize>().ok() != Some(experiments.len()) {
                return Err(bad("experiment ids must be consecutive from 0"));
            }
            experiments.push(name.to_string());
        }
        config.validate()?;
        Ok(ColorIndex { maplet, experiments, config })
    }
}
