//! Response file: a JSON header line followed by one record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunError, RunHeader};
use crate::model_backend::ParseStatus;
use crate::prompt_dataset::Setting;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub prompt_id: String,
    pub setting: Setting,
    pub condition: String,
    pub rep_index: u32,
    pub context_text: String,
    pub full_prompt_text: String,
    pub raw_text: String,
    /// Normalized items; empty when the reply could not be used.
    pub items: Vec<String>,
    pub parse_status: ParseStatus,
    pub model_name: String,
    pub timestamp: String,
    pub seed_fingerprint: String,
}

impl ResponseRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            prompt_id: self.prompt_id.clone(),
            setting: self.setting,
            condition: self.condition.clone(),
            rep_index: self.rep_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub prompt_id: String,
    pub setting: Setting,
    pub condition: String,
    pub rep_index: u32,
}

/// A fully read response file.
#[derive(Debug, Clone)]
pub struct ResponseFile {
    pub path: PathBuf,
    pub header: RunHeader,
    pub records: Vec<ResponseRecord>,
}

impl ResponseFile {
    /// Reads a response file. A final line without a newline that does not
    /// parse is treated as a torn write and ignored.
    pub fn read(path: &Path) -> Result<Self, RunError> {
        let (file, _) = read_with_offset(path)?;
        Ok(file)
    }
}

/// Reads the file and returns the byte length of its intact prefix.
pub(crate) fn read_with_offset(path: &Path) -> Result<(ResponseFile, u64), RunError> {
    let f = File::open(path).map_err(|e| storage(path, e))?;
    let mut reader = BufReader::new(f);
    let mut line = String::new();
    let mut offset = 0u64;
    let mut header: Option<RunHeader> = None;
    let mut records = Vec::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| storage(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = line.ends_with('\n');
        let text = line.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            offset += n as u64;
            continue;
        }
        let parsed = if header.is_none() {
            serde_json::from_str::<RunHeader>(text).map(|h| header = Some(h))
        } else {
            serde_json::from_str::<ResponseRecord>(text).map(|r| records.push(r))
        };
        match parsed {
            // An unterminated but parseable last line is kept; reopen() adds the newline.
            Ok(()) => offset += n as u64,
            Err(_) if !complete => break,
            Err(e) => {
                return Err(RunError::Storage(format!(
                    "{}:{line_no}: corrupt line: {e}",
                    path.display()
                )))
            }
        }
    }
    let header = header
        .ok_or_else(|| RunError::Storage(format!("{}: missing header line", path.display())))?;
    Ok((
        ResponseFile {
            path: path.to_path_buf(),
            header,
            records,
        },
        offset,
    ))
}

pub(crate) fn storage(path: &Path, e: std::io::Error) -> RunError {
    RunError::Storage(format!("{}: {e}", path.display()))
}

/// Append-only line writer.
pub(crate) struct Appender {
    path: PathBuf,
    file: File,
}

impl Appender {
    pub fn create(path: &Path, header: &RunHeader) -> Result<Self, RunError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
        }
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| storage(path, e))?;
        let mut a = Self {
            path: path.to_path_buf(),
            file,
        };
        a.write_json(header)?;
        Ok(a)
    }

    /// Opens for appending after cutting the file to `intact_len` bytes,
    /// dropping a torn final line if there is one.
    pub fn reopen(path: &Path, intact_len: u64) -> Result<Self, RunError> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(path)
            .map_err(|e| storage(path, e))?;
        let len = file.metadata().map_err(|e| storage(path, e))?.len();
        if len > intact_len {
            file.set_len(intact_len).map_err(|e| storage(path, e))?;
        }
        let mut a = Self {
            path: path.to_path_buf(),
            file,
        };
        use std::io::{Read, Seek, SeekFrom};
        if intact_len > 0 {
            let mut last = [0u8; 1];
            a.file
                .seek(SeekFrom::Start(intact_len - 1))
                .and_then(|_| a.file.read_exact(&mut last))
                .map_err(|e| storage(path, e))?;
            a.file
                .seek(SeekFrom::End(0))
                .map_err(|e| storage(path, e))?;
            if last[0] != b'\n' {
                a.file.write_all(b"\n").map_err(|e| storage(path, e))?;
            }
        }
        Ok(a)
    }

    pub fn write_json<T: Serialize>(&mut self, value: &T) -> Result<(), RunError> {
        let mut line = serde_json::to_string(value)
            .map_err(|e| RunError::Storage(format!("serialize: {e}")))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(|e| storage(&self.path, e))
    }

    pub fn sync(&mut self) -> Result<(), RunError> {
        self.file.sync_data().map_err(|e| storage(&self.path, e))
    }
}
