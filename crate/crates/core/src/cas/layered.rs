use super::{BlockStore, CasError, Cid};

/// A fast local store in front of a remote one. Reads fall through to the
/// remote and are cached locally; writes go to both.
#[derive(Debug)]
pub struct CachingStore<L, R> {
    local: L,
    remote: R,
}

impl<L: BlockStore, R: BlockStore> CachingStore<L, R> {
    pub fn new(local: L, remote: R) -> Self {
        Self { local, remote }
    }

    pub fn local(&self) -> &L {
        &self.local
    }
}

impl<L: BlockStore, R: BlockStore> BlockStore for CachingStore<L, R> {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        let cid = self.local.put(content)?;
        self.remote.put(content)?;
        Ok(cid)
    }

    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        match self.local.get(cid) {
            Err(CasError::NotFound(_)) => {}
            other => return other,
        }
        let bytes = self.remote.get(cid)?;
        // only blocks whose address we can recompute are worth caching
        if cid.verifies(&bytes) {
            self.local.put(&bytes)?;
        }
        Ok(bytes)
    }

    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        Ok(self.local.contains(cid)? || self.remote.contains(cid)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::{compute_cid, MemoryStore};

    #[test]
    fn reads_fall_through_and_are_cached() {
        let remote = MemoryStore::new();
        let cid = remote.put(b"model weights").unwrap();
        let store = CachingStore::new(MemoryStore::new(), remote);
        assert!(!store.local().contains(&cid).unwrap());
        assert_eq!(store.get(&cid).unwrap(), b"model weights");
        assert!(store.local().contains(&cid).unwrap());
        assert!(matches!(store.get(&compute_cid(b"nope")), Err(CasError::NotFound(_))));
    }

    #[test]
    fn writes_reach_both() {
        let store = CachingStore::new(MemoryStore::new(), MemoryStore::new());
        let cid = store.put(b"x").unwrap();
        assert!(store.local.contains(&cid).unwrap());
        assert!(store.remote.contains(&cid).unwrap());
    }
}
