//! Signed, sequence-numbered name records: a mutable pointer from a key-derived
//! name to the latest CID.
//!
//! A name is the lowercase hex SHA-256 of an Ed25519 public key. Each record
//! signs `(target, sequence)`; the registry keeps the highest valid sequence per
//! name and persists every accepted record to an append-only log (one JSON
//! object per line).

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ring::digest::{digest, SHA256};
use ring::rand::SystemRandom;
use ring::signature::{Ed25519KeyPair, KeyPair, UnparsedPublicKey, ED25519};
use serde::{Deserialize, Serialize};

use super::Cid;

#[derive(Debug, thiserror::Error)]
pub enum NameError {
    #[error("name not found: {0}")]
    NotFound(String),
    #[error("record signature does not verify for {0}")]
    BadSignature(String),
    #[error("stale sequence {attempted} for {name}; current is {current}")]
    Stale {
        name: String,
        current: u64,
        attempted: u64,
    },
    #[error("key material: {0}")]
    Key(String),
    #[error("name log I/O: {0}")]
    Io(#[from] io::Error),
}

/// Private half of a name. The name itself is derived from the public key.
pub struct NameKey {
    pkcs8: Vec<u8>,
    pair: Ed25519KeyPair,
}

impl NameKey {
    pub fn generate() -> Result<Self, NameError> {
        let doc = Ed25519KeyPair::generate_pkcs8(&SystemRandom::new())
            .map_err(|_| NameError::Key("entropy source failed".into()))?;
        Self::from_pkcs8(doc.as_ref())
    }

    pub fn from_pkcs8(pkcs8: &[u8]) -> Result<Self, NameError> {
        let pair = Ed25519KeyPair::from_pkcs8(pkcs8)
            .map_err(|e| NameError::Key(format!("invalid PKCS#8 Ed25519 key: {e}")))?;
        Ok(Self {
            pkcs8: pkcs8.to_vec(),
            pair,
        })
    }

    pub fn pkcs8(&self) -> &[u8] {
        &self.pkcs8
    }

    pub fn public_key(&self) -> &[u8] {
        self.pair.public_key().as_ref()
    }

    pub fn name(&self) -> String {
        name_for_public_key(self.public_key())
    }

    pub fn sign_record(&self, target: Cid, sequence: u64) -> NameRecord {
        let signature = self.pair.sign(&signing_message(&target, sequence));
        NameRecord {
            name: self.name(),
            public_key: hex::encode(self.public_key()),
            target,
            sequence,
            signature: B64.encode(signature.as_ref()),
        }
    }
}

impl std::fmt::Debug for NameKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NameKey").field("name", &self.name()).finish()
    }
}

pub fn name_for_public_key(public_key: &[u8]) -> String {
    hex::encode(digest(&SHA256, public_key))
}

fn signing_message(target: &Cid, sequence: u64) -> Vec<u8> {
    let mut msg = Vec::with_capacity(64);
    msg.extend_from_slice(b"omnilingo-name-record\0");
    msg.extend_from_slice(target.as_str().as_bytes());
    msg.push(0);
    msg.extend_from_slice(&sequence.to_be_bytes());
    msg
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameRecord {
    pub name: String,
    /// Hex Ed25519 public key; must hash to `name`.
    pub public_key: String,
    pub target: Cid,
    pub sequence: u64,
    /// Base64 Ed25519 signature over `(target, sequence)`.
    pub signature: String,
}

impl NameRecord {
    pub fn verify(&self) -> Result<(), NameError> {
        let bad = || NameError::BadSignature(self.name.clone());
        let public_key = hex::decode(&self.public_key).map_err(|_| bad())?;
        if name_for_public_key(&public_key) != self.name {
            return Err(bad());
        }
        let signature = B64.decode(&self.signature).map_err(|_| bad())?;
        UnparsedPublicKey::new(&ED25519, &public_key)
            .verify(&signing_message(&self.target, self.sequence), &signature)
            .map_err(|_| bad())
    }
}

struct LogState {
    latest: HashMap<String, NameRecord>,
    /// Bytes of the log already applied to `latest`.
    offset: u64,
}

pub struct NameRegistry {
    log_path: Option<PathBuf>,
    state: Mutex<LogState>,
}

impl NameRegistry {
    pub fn in_memory() -> Self {
        Self {
            log_path: None,
            state: Mutex::new(LogState {
                latest: HashMap::new(),
                offset: 0,
            }),
        }
    }

    /// Opens (or creates) the append-only log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, NameError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        OpenOptions::new().create(true).append(true).open(&path)?;
        let registry = Self {
            log_path: Some(path),
            state: Mutex::new(LogState {
                latest: HashMap::new(),
                offset: 0,
            }),
        };
        {
            let mut state = registry.state.lock().expect("name lock poisoned");
            registry.catch_up(&mut state)?;
        }
        Ok(registry)
    }

    /// Applies records appended to the log by other writers since the last read.
    fn catch_up(&self, state: &mut LogState) -> Result<(), NameError> {
        let Some(path) = &self.log_path else {
            return Ok(());
        };
        let mut file = File::open(path)?;
        file.seek(SeekFrom::Start(state.offset))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            // stop at EOF or at a torn trailing write
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            state.offset += n as u64;
            let Ok(record) = serde_json::from_str::<NameRecord>(line.trim_end()) else {
                tracing::warn!("skipping unparseable name log line");
                continue;
            };
            if record.verify().is_err() {
                tracing::warn!(name = %record.name, "skipping name record with bad signature");
                continue;
            }
            let newer = state
                .latest
                .get(&record.name)
                .is_none_or(|cur| record.sequence > cur.sequence);
            if newer {
                state.latest.insert(record.name.clone(), record);
            }
        }
        Ok(())
    }

    fn append(&self, state: &mut LogState, record: &NameRecord) -> Result<(), NameError> {
        if let Some(path) = &self.log_path {
            let mut line = serde_json::to_vec(record).expect("record serializes");
            line.push(b'\n');
            let mut file = OpenOptions::new().append(true).open(path)?;
            file.write_all(&line)?;
            file.sync_data()?;
            state.offset += line.len() as u64;
        }
        Ok(())
    }

    /// Accepts a pre-signed record iff it verifies and its sequence is strictly
    /// greater than the current one (compare-and-swap on sequence).
    pub fn insert(&self, record: NameRecord) -> Result<(), NameError> {
        record.verify()?;
        let mut state = self.state.lock().expect("name lock poisoned");
        self.catch_up(&mut state)?;
        if let Some(current) = state.latest.get(&record.name) {
            if record.sequence <= current.sequence {
                return Err(NameError::Stale {
                    name: record.name.clone(),
                    current: current.sequence,
                    attempted: record.sequence,
                });
            }
        }
        self.append(&mut state, &record)?;
        state.latest.insert(record.name.clone(), record);
        Ok(())
    }

    /// Signs and inserts a record pointing `key`'s name at `target`, with the
    /// next sequence number.
    pub fn publish(&self, key: &NameKey, target: &Cid) -> Result<NameRecord, NameError> {
        let name = key.name();
        let mut state = self.state.lock().expect("name lock poisoned");
        self.catch_up(&mut state)?;
        let sequence = state.latest.get(&name).map_or(1, |r| r.sequence + 1);
        let record = key.sign_record(target.clone(), sequence);
        self.append(&mut state, &record)?;
        state.latest.insert(name, record.clone());
        Ok(record)
    }

    pub fn record(&self, name: &str) -> Result<NameRecord, NameError> {
        let mut state = self.state.lock().expect("name lock poisoned");
        self.catch_up(&mut state)?;
        state
            .latest
            .get(name)
            .cloned()
            .ok_or_else(|| NameError::NotFound(name.to_owned()))
    }

    pub fn resolve(&self, name: &str) -> Result<Cid, NameError> {
        self.record(name).map(|r| r.target)
    }
}
