use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{BlockStore, CasError, Cid};

/// In-process block store.
#[derive(Default, Clone)]
pub struct MemoryStore {
    blocks: Arc<RwLock<HashMap<Cid, Arc<[u8]>>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BlockStore for MemoryStore {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        let cid = Cid::for_content(content);
        let mut blocks = self.blocks.write().expect("store lock poisoned");
        blocks.entry(cid.clone()).or_insert_with(|| Arc::from(content));
        Ok(cid)
    }

    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        let blocks = self.blocks.read().expect("store lock poisoned");
        blocks
            .get(cid)
            .map(|b| b.to_vec())
            .ok_or_else(|| CasError::NotFound(cid.clone()))
    }

    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        Ok(self.blocks.read().expect("store lock poisoned").contains_key(cid))
    }
}
