//! Streaming FASTA / FASTQ reader. Gzip input is detected by magic bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    pub seq: Vec<u8>,
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Wraps `source` in a decompressor if it starts with the gzip magic.
pub fn maybe_gunzip<'a>(source: impl Read + 'a) -> Result<Box<dyn BufRead + 'a>> {
    let mut buf = BufReader::new(source);
    let head = buf.fill_buf()?;
    if head.starts_with(&GZIP_MAGIC) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(buf))))
    } else {
        Ok(Box::new(buf))
    }
}

pub fn open_sequences(path: impl AsRef<Path>) -> Result<SequenceReader<Box<dyn BufRead>>> {
    let file = File::open(path)?;
    Ok(SequenceReader::new(maybe_gunzip(file)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Unknown,
    Fasta,
    Fastq,
}

/// Iterator over records. Holds at most one record in memory.
pub struct SequenceReader<R> {
    input: R,
    format: Format,
    line_no: u64,
    line: String,
    /// A header line already read that starts the next record.
    pending: Option<String>,
    done: bool,
}

impl<R: BufRead> SequenceReader<R> {
    pub fn new(input: R) -> Self {
        SequenceReader {
            input,
            format: Format::Unknown,
            line_no: 0,
            line: String::new(),
            pending: None,
            done: false,
        }
    }

    /// Next line without its terminator, or `None` at end of input.
    fn next_line(&mut self) -> Result<Option<&str>> {
        self.line.clear();
        if self.input.read_line(&mut self.line)? == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        let trimmed = self.line.trim_end_matches(['\n', '\r']);
        Ok(Some(trimmed))
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line_no,
            message: message.into(),
        }
    }

    fn next_nonblank(&mut self) -> Result<Option<String>> {
        while let Some(line) = self.next_line()? {
            if !line.trim().is_empty() {
                return Ok(Some(line.to_string()));
            }
        }
        Ok(None)
    }

    fn read_record(&mut self) -> Result<Option<SequenceRecord>> {
        let header = match self.pending.take() {
            Some(h) => h,
            None => match self.next_nonblank()? {
                Some(h) => h,
                None => return Ok(None),
            },
        };
        if self.format == Format::Unknown {
            self.format = match header.as_bytes()[0] {
                b'>' => Format::Fasta,
                b'@' => Format::Fastq,
                _ => return Err(self.error("expected '>' or '@' record header")),
            };
        }
        match self.format {
            Format::Fasta => self.read_fasta(header),
            _ => self.read_fastq(header),
        }
    }

    fn read_fasta(&mut self, header: String) -> Result<Option<SequenceRecord>> {
        let Some(id) = header.strip_prefix('>') else {
            return Err(self.error("expected '>' header"));
        };
        let id = id.trim().to_string();
        let mut seq = Vec::new();
        while let Some(line) = self.next_line()? {
            if line.starts_with('>') {
                self.pending = Some(line.to_string());
                break;
            }
            let line = line.trim();
            if !line.is_ascii() {
                return Err(self.error("non-ASCII sequence data"));
            }
            seq.extend_from_slice(line.as_bytes());
        }
        Ok(Some(SequenceRecord { id, seq }))
    }

    fn read_fastq(&mut self, header: String) -> Result<Option<SequenceRecord>> {
        let Some(id) = header.strip_prefix('@') else {
            return Err(self.error("expected '@' header"));
        };
        let id = id.trim().to_string();
        let seq = match self.next_line()? {
            Some(s) => s.trim().as_bytes().to_vec(),
            None => return Err(self.error("missing sequence line")),
        };
        match self.next_line()? {
            Some(s) if s.starts_with('+') => {}
            Some(_) => return Err(self.error("expected '+' separator")),
            None => return Err(self.error("missing '+' separator")),
        }
        let qual_len = match self.next_line()? {
            Some(q) => q.trim().len(),
            None => return Err(self.error("missing quality line")),
        };
        if qual_len != seq.len() {
            return Err(self.error(format!(
                "quality length {qual_len} differs from sequence length {}",
                seq.len()
            )));
        }
        Ok(Some(SequenceRecord { id, seq }))
    }
}

impl<R: BufRead> Iterator for SequenceReader<R> {
    type Item = Result<SequenceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}
