use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::{BlockStore, CasError, Cid};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// One file per block under `root`, named by the block's CID.
///
/// Writes go through a temporary file and a rename, so concurrent writers of the
/// same block never observe a partial file. Reads re-hash the content.
#[derive(Debug, Clone)]
pub struct LocalStore {
    root: PathBuf,
}

impl LocalStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CasError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn block_path(&self, cid: &Cid) -> PathBuf {
        self.root.join(cid.as_str())
    }

    /// Number of stored blocks.
    pub fn len(&self) -> Result<usize, CasError> {
        let mut count = 0;
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name();
            if name.to_str().is_some_and(|n| n.starts_with("Qm")) {
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn is_empty(&self) -> Result<bool, CasError> {
        Ok(self.len()? == 0)
    }
}

impl BlockStore for LocalStore {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        let cid = Cid::for_content(content);
        let path = self.block_path(&cid);
        if path.exists() {
            return Ok(cid);
        }
        let tmp = self.root.join(format!(
            ".{}.{}.{}.tmp",
            cid,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let written = (|| -> io::Result<()> {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(content)?;
            file.sync_data()?;
            fs::rename(&tmp, &path)
        })();
        if let Err(e) = written {
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        Ok(cid)
    }

    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        if cid.digest().is_none() {
            return Err(CasError::NotFound(cid.clone()));
        }
        let bytes = match fs::read(self.block_path(cid)) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CasError::NotFound(cid.clone()))
            }
            Err(e) => return Err(e.into()),
        };
        if !cid.verifies(&bytes) {
            return Err(CasError::Integrity(cid.clone()));
        }
        Ok(bytes)
    }

    fn contains(&self, cid: &Cid) -> Result<bool, CasError> {
        Ok(cid.digest().is_some() && self.block_path(cid).is_file())
    }
}
