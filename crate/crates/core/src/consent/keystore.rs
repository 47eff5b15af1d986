use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::key::{Jwk, SessionKey};
use super::ConsentError;
use crate::cas::NameKey;

const IDENTITY_FILE: &str = "identity.pk8";
const SESSIONS_FILE: &str = "sessions.json";

/// Directory of identities, one subdirectory per name, readable only by the
/// owner.
#[derive(Debug, Clone)]
pub struct Keystore {
    root: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SessionFile {
    active: Option<String>,
    keys: BTreeMap<String, Jwk>,
}

/// A name keypair and the session keys held locally for it.
#[derive(Debug)]
pub struct Identity {
    dir: PathBuf,
    key: NameKey,
    sessions: SessionFile,
}

impl Keystore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ConsentError> {
        let root = root.into();
        create_private_dir(&root)?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn create_identity(&self) -> Result<Identity, ConsentError> {
        let key = NameKey::generate()?;
        let dir = self.root.join(key.name());
        create_private_dir(&dir)?;
        write_private(&dir.join(IDENTITY_FILE), key.pkcs8())?;
        let identity = Identity {
            dir,
            key,
            sessions: SessionFile::default(),
        };
        identity.save()?;
        Ok(identity)
    }

    pub fn load(&self, name: &str) -> Result<Identity, ConsentError> {
        let dir = self.root.join(name);
        let pkcs8 = fs::read(dir.join(IDENTITY_FILE)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ConsentError::UnknownIdentity(name.to_owned()),
            _ => e.into(),
        })?;
        let key = NameKey::from_pkcs8(&pkcs8)?;
        let sessions = match fs::read(dir.join(SESSIONS_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| ConsentError::Keystore(format!("{}: {e}", dir.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => SessionFile::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Identity { dir, key, sessions })
    }

    /// Names of all identities in the store, sorted.
    pub fn identities(&self) -> Result<Vec<String>, ConsentError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.path().join(IDENTITY_FILE).is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        Ok(names)
    }
}

impl Identity {
    pub fn name(&self) -> String {
        self.key.name()
    }

    pub fn name_key(&self) -> &NameKey {
        &self.key
    }

    pub fn active_key(&self) -> Option<SessionKey> {
        self.session_key(self.sessions.active.as_deref()?)
    }

    pub fn session_key(&self, fingerprint: &str) -> Option<SessionKey> {
        SessionKey::from_jwk(self.sessions.keys.get(fingerprint)?).ok()
    }

    /// Fingerprints of locally held session keys.
    pub fn fingerprints(&self) -> Vec<String> {
        self.sessions.keys.keys().cloned().collect()
    }

    pub fn active_fingerprint(&self) -> Option<&str> {
        self.sessions.active.as_deref()
    }

    /// Starts a new session: a fresh key becomes the active one. Earlier keys
    /// stay in the store.
    pub fn roll_key(&mut self) -> Result<SessionKey, ConsentError> {
        let key = SessionKey::generate()?;
        self.sessions
            .keys
            .insert(key.fingerprint().to_owned(), key.to_jwk());
        self.sessions.active = Some(key.fingerprint().to_owned());
        self.save()?;
        Ok(key)
    }

    /// The active key, rolling one first if there is none.
    pub fn ensure_active_key(&mut self) -> Result<SessionKey, ConsentError> {
        match self.active_key() {
            Some(key) => Ok(key),
            None => self.roll_key(),
        }
    }

    pub(super) fn destroy_key(&mut self, fingerprint: &str) -> Result<(), ConsentError> {
        self.sessions.keys.remove(fingerprint);
        if self.sessions.active.as_deref() == Some(fingerprint) {
            self.sessions.active = None;
        }
        self.save()
    }

    fn save(&self) -> Result<(), ConsentError> {
        let bytes = serde_json::to_vec_pretty(&self.sessions).expect("serializable");
        write_private(&self.dir.join(SESSIONS_FILE), &bytes)
    }
}

fn create_private_dir(path: &Path) -> Result<(), ConsentError> {
    fs::create_dir_all(path)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o700))?;
    }
    Ok(())
}

/// Writes through an owner-only temporary file and renames it into place.
fn write_private(path: &Path, bytes: &[u8]) -> Result<(), ConsentError> {
    let dir = path.parent().expect("keystore files live in a directory");
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().expect("file name").to_string_lossy()
    ));
    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(&tmp)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}
