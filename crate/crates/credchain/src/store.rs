//! On-disk state. A data directory holds:
//!
//! - `events.jsonl`: the registry journal, one event per line
//! - `chain.jsonl`: the chain as seen by node 0, one block per line
//! - `documents/<digest>`: uploaded certificate documents, off chain
//!
//! The journal is authoritative. On open it is replayed and the rebuilt chain
//! must match `chain.jsonl` line for line.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use credchain_core::ledger::{validate_chain, Block, Chain, ChainError, ChainParams};
use credchain_core::registry::{Event, Registry, RegistryConfig, RestoreError};
use credchain_core::Digest128;
use thiserror::Error;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const CHAIN_FILE: &str = "chain.jsonl";
pub const DOCUMENTS_DIR: &str = "documents";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: line {line}: {message}", path.display())]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Restore { path: PathBuf, source: RestoreError },
    #[error("{}: invalid chain: {source}", path.display())]
    InvalidChain { path: PathBuf, source: ChainError },
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One JSON line per block, fields in struct order.
pub fn encode_block(block: &Block) -> String {
    serde_json::to_string(block).expect("blocks always serialize")
}

fn read_lines(path: &Path) -> Result<Vec<String>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    Ok(lines)
}

/// Parses a chain file without validating it.
pub fn read_chain_file(path: &Path) -> Result<Vec<Block>, StoreError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parses and fully validates a chain file.
pub fn load_chain_file(path: &Path, params: ChainParams) -> Result<Chain, StoreError> {
    let chain = Chain::from_blocks(params, read_chain_file(path)?);
    validate_chain(&chain).map_err(|source| StoreError::InvalidChain {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(chain)
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, StoreError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// A registry plus where (if anywhere) it is persisted.
pub struct Store {
    dir: Option<PathBuf>,
    registry: Registry,
    blocks_written: usize,
    documents: BTreeMap<Digest128, Vec<u8>>,
}

impl Store {
    /// Registry kept only in memory. `persist` discards the journal.
    pub fn in_memory(config: RegistryConfig) -> Result<Self, StoreError> {
        let registry = Registry::new(config).map_err(|e| StoreError::Config(e.to_string()))?;
        Ok(Store {
            dir: None,
            blocks_written: registry.chain().len(),
            registry,
            documents: BTreeMap::new(),
        })
    }

    /// Opens or creates a data directory.
    pub fn open(dir: &Path, config: RegistryConfig) -> Result<Self, StoreError> {
        let docs = dir.join(DOCUMENTS_DIR);
        fs::create_dir_all(&docs).map_err(io_err(&docs))?;

        let events_path = dir.join(EVENTS_FILE);
        let events = if events_path.exists() {
            read_events(&events_path)?
        } else {
            Vec::new()
        };
        let registry = Registry::restore(config, events).map_err(|source| match source {
            RestoreError::Config(e) => StoreError::Config(e.to_string()),
            source => StoreError::Restore {
                path: events_path.clone(),
                source,
            },
        })?;

        let chain_path = dir.join(CHAIN_FILE);
        let expected: Vec<String> = registry.chain().blocks().iter().map(encode_block).collect();
        let on_disk = if chain_path.exists() {
            read_lines(&chain_path)?
        } else {
            Vec::new()
        };
        if on_disk.len() > expected.len() {
            return Err(StoreError::Corrupt {
                path: chain_path,
                line: expected.len() + 1,
                message: format!("block not accounted for by {EVENTS_FILE}"),
            });
        }
        if let Some(i) = on_disk.iter().zip(&expected).position(|(a, b)| a != b) {
            return Err(StoreError::Corrupt {
                path: chain_path,
                line: i + 1,
                message: format!("block differs from the one rebuilt from {EVENTS_FILE}"),
            });
        }

        let mut store = Store {
            dir: Some(dir.to_path_buf()),
            registry,
            // A crash between the two appends can leave the chain file short;
            // the missing tail is rewritten from the replayed chain.
            blocks_written: on_disk.len(),
            documents: BTreeMap::new(),
        };
        store.persist()?;
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut Registry {
        &mut self.registry
    }

    /// Appends new journal events and new blocks.
    pub fn persist(&mut self) -> Result<(), StoreError> {
        let events = self.registry.take_journal();
        let Some(dir) = &self.dir else {
            self.blocks_written = self.registry.chain().len();
            return Ok(());
        };
        if !events.is_empty() {
            let path = dir.join(EVENTS_FILE);
            let mut out = String::new();
            for event in &events {
                out.push_str(&serde_json::to_string(event).expect("events always serialize"));
                out.push('\n');
            }
            append(&path, &out)?;
        }
        let blocks = &self.registry.chain().blocks()[self.blocks_written..];
        if !blocks.is_empty() {
            let path = dir.join(CHAIN_FILE);
            let mut out = String::new();
            for block in blocks {
                out.push_str(&encode_block(block));
                out.push('\n');
            }
            append(&path, &out)?;
            self.blocks_written = self.registry.chain().len();
        }
        Ok(())
    }

    /// Flushes file contents to stable storage.
    pub fn sync(&mut self) -> Result<(), StoreError> {
        self.persist()?;
        if let Some(dir) = &self.dir {
            for name in [EVENTS_FILE, CHAIN_FILE] {
                let path = dir.join(name);
                if path.exists() {
                    File::open(&path)
                        .and_then(|f| f.sync_all())
                        .map_err(io_err(&path))?;
                }
            }
        }
        Ok(())
    }

    /// Keeps an uploaded document, addressed by its digest.
    pub fn save_document(&mut self, digest: &Digest128, bytes: &[u8]) -> Result<(), StoreError> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(DOCUMENTS_DIR).join(digest.to_hex());
                fs::write(&path, bytes).map_err(io_err(&path))
            }
            None => {
                self.documents.insert(*digest, bytes.to_vec());
                Ok(())
            }
        }
    }

    pub fn load_document(&self, digest: &Digest128) -> Result<Option<Vec<u8>>, StoreError> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(DOCUMENTS_DIR).join(digest.to_hex());
                match fs::read(&path) {
                    Ok(bytes) => Ok(Some(bytes)),
                    Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(io_err(&path)(e)),
                }
            }
            None => Ok(self.documents.get(digest).cloned()),
        }
    }
}

fn append(path: &Path, text: &str) -> Result<(), StoreError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(text.as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}
