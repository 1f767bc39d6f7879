//! Line-delimited log file: one header line, then one canonical-JSON event
//! per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BreakCause, ChainBroken, ChainHead, EventStore, LedgerError, MutationEvent};

pub const LOG_MAGIC: &str = "drbac-log";
pub const FORMAT_VERSION: u32 = 1;
const HASH_ALGORITHM: &str = "sha256";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub magic: String,
    pub format_version: u32,
    pub hash_algorithm: String,
}

impl Default for LogHeader {
    fn default() -> Self {
        Self {
            magic: LOG_MAGIC.into(),
            format_version: FORMAT_VERSION,
            hash_algorithm: HASH_ALGORITHM.into(),
        }
    }
}

impl LogHeader {
    pub fn to_line(&self) -> String {
        super::canonical_json(&serde_json::to_value(self).expect("header serializes"))
    }

    pub fn parse(line: &str) -> Result<Self, LedgerError> {
        let header: LogHeader = serde_json::from_str(line).map_err(|e| LedgerError::BadHeader(e.to_string()))?;
        if header.magic != LOG_MAGIC {
            return Err(LedgerError::BadHeader(format!("magic {:?}", header.magic)));
        }
        if header.format_version != FORMAT_VERSION {
            return Err(LedgerError::BadHeader(format!("format version {}", header.format_version)));
        }
        if header.hash_algorithm != HASH_ALGORITHM {
            return Err(LedgerError::BadHeader(format!("hash algorithm {:?}", header.hash_algorithm)));
        }
        Ok(header)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LedgerError + '_ {
    move |source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Splits a log into its header and raw event lines.
fn split_lines(path: &Path) -> Result<(LogHeader, Vec<String>), LedgerError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).split(b'\n');
    let header = match lines.next() {
        Some(line) => {
            let line = line.map_err(io_err(path))?;
            LogHeader::parse(&String::from_utf8_lossy(&line))?
        }
        None => return Err(LedgerError::BadHeader("empty file".into())),
    };
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(io_err(path))?;
        // Invalid UTF-8 becomes U+FFFD, which changes the hashed content.
        out.push(String::from_utf8_lossy(&line).into_owned());
    }
    Ok((header, out))
}

/// Reads every event. Any unparseable line is an error.
pub fn read_log(path: impl AsRef<Path>) -> Result<(LogHeader, Vec<MutationEvent>), LedgerError> {
    let path = path.as_ref();
    let (header, lines) = split_lines(path)?;
    let events = lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LedgerError::BadEvent {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok((header, events))
}

/// Verifies a log file line by line. An event line that does not parse is
/// reported as a break at the sequence it should have carried.
pub fn verify_log_file(path: impl AsRef<Path>) -> Result<Result<ChainHead, ChainBroken>, LedgerError> {
    let (_, lines) = split_lines(path.as_ref())?;
    let mut head = ChainHead::default();
    for line in &lines {
        let Ok(event) = serde_json::from_str::<MutationEvent>(line) else {
            return Ok(Err(ChainBroken {
                sequence: head.sequence + 1,
                cause: BreakCause::Unparseable,
            }));
        };
        match super::verify_chain_from(head, std::slice::from_ref(&event)) {
            Ok(next) => head = next,
            Err(broken) => return Ok(Err(broken)),
        }
    }
    Ok(Ok(head))
}

/// Durable event store over a log file. Every append is flushed and synced
/// before it returns.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    file: File,
}

impl FileStore {
    /// Opens `path`, creating it with a fresh header when missing or empty.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LedgerError> {
        let path = path.into();
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let len = file.metadata().map_err(io_err(&path))?.len();
        if len == 0 {
            writeln!(file, "{}", LogHeader::default().to_line()).map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
        } else {
            split_lines(&path)?;
        }
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventStore for FileStore {
    fn append(&mut self, event: &MutationEvent) -> Result<(), LedgerError> {
        let mut line = event.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }

    fn load(&self) -> Result<Vec<MutationEvent>, LedgerError> {
        read_log(&self.path).map(|(_, events)| events)
    }

    fn verify(&self) -> Result<Result<ChainHead, ChainBroken>, LedgerError> {
        verify_log_file(&self.path)
    }
}
