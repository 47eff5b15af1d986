//! Content-addressed block storage and the mutable name registry.
//!
//! Every immutable object (index JSON, MP3 clip, encrypted blob) lives in a
//! [`BlockStore`] under its [`Cid`]. Mutable pointers from a stable key-derived
//! name to the latest root live in the [`NameRegistry`].

mod base58;
mod cid;
mod gateway;
mod layered;
mod local;
mod memory;
mod names;

use std::sync::Arc;

pub use cid::{compute_cid, Cid};
pub use gateway::{GatewayStore, Verification, GATEWAY_ENV};
pub use layered::CachingStore;
pub use local::LocalStore;
pub use memory::MemoryStore;
pub use names::{NameError, NameKey, NameRecord, NameRegistry};

#[derive(Debug, thiserror::Error)]
pub enum CasError {
    #[error("block not found: {0}")]
    NotFound(Cid),
    #[error("content does not hash to {0}")]
    Integrity(Cid),
    #[error("malformed content identifier {0:?}")]
    InvalidCid(String),
    #[error("storage I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
}

impl CasError {
    /// Transient failures where retrying the same call may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, CasError::Io(_) | CasError::Unreachable(_))
    }
}

/// A store of immutable blocks addressed by content.
pub trait BlockStore: Send + Sync {
    /// Stores `content` and returns its identifier. Storing the same bytes
    /// twice is a no-op that returns the same identifier.
    fn put(&self, content: &[u8]) -> Result<Cid, CasError>;

    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError>;

    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        match self.get(cid) {
            Ok(_) => Ok(true),
            Err(CasError::NotFound(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

impl<S: BlockStore + ?Sized> BlockStore for &S {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        (**self).put(content)
    }
    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        (**self).get(cid)
    }
    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        (**self).contains(cid)
    }
}

impl<S: BlockStore + ?Sized> BlockStore for Arc<S> {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        (**self).put(content)
    }
    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        (**self).get(cid)
    }
    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        (**self).contains(cid)
    }
}

impl<S: BlockStore + ?Sized> BlockStore for Box<S> {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        (**self).put(content)
    }
    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        (**self).get(cid)
    }
    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        (**self).contains(cid)
    }
}
