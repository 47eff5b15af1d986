//! Revocable publication of contributed recordings.
//!
//! Each session key encrypts a contributor's clips and the list describing
//! them. An identity's name points at an [`EncryptedRoot`] that maps session
//! fingerprints to per-session roots; publishing a session's key alongside
//! grants use of its clips, and withdrawing the key revokes it.

mod key;
mod keystore;
mod pgp_words;
mod roots;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cas::{BlockStore, CasError, Cid, NameError, NameRegistry};
use crate::datamodel::canonical::round_decimal;
use crate::datamodel::{decode, encode, ClipEntry, DecodeError, Extra, LanguageIndex, RootIndex, Sentence};
use crate::ingest::{chars_per_sec, mp3_duration, sentence_meta, NonPositiveLength, UnsupportedAudio};

pub use key::{
    fingerprint, is_fingerprint, words_for_fingerprint, Algorithm, EncryptedObject, Jwk, SessionKey,
    FINGERPRINT_LEN, KEY_LEN,
};
pub use keystore::{Identity, Keystore};
pub use roots::{decode_root, AnyRoot, EncryptedLanguageEntry, EncryptedRoot, SessionRoot};

#[derive(Debug, thiserror::Error)]
pub enum ConsentError {
    #[error("object was encrypted under {expected}, not {got}")]
    WrongKey { expected: String, got: String },
    #[error("ciphertext failed authentication")]
    Integrity,
    #[error("malformed fingerprint {0:?}")]
    BadFingerprint(String),
    #[error("invalid JSON Web Key: {0}")]
    Jwk(String),
    #[error("system random source failed")]
    Entropy,
    #[error("no session {0} in the published root")]
    UnknownSession(String),
    #[error("session {0} is already revoked")]
    AlreadyRevoked(String),
    #[error("session key {0} is not held locally")]
    MissingKey(String),
    #[error("no identity {0} in the keystore")]
    UnknownIdentity(String),
    #[error("published data for session {fingerprint} is unreadable: {detail}")]
    Corrupt { fingerprint: String, detail: String },
    #[error("keystore: {0}")]
    Keystore(String),
    #[error(transparent)]
    Audio(#[from] UnsupportedAudio),
    #[error(transparent)]
    Length(#[from] NonPositiveLength),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Store(#[from] CasError),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error("keystore I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Session keys a consumer has collected, by fingerprint.
pub type KeyCache = BTreeMap<String, SessionKey>;

/// A recording of one sentence, ready to be contributed.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub language: String,
    pub audio: Vec<u8>,
    pub sentence_cid: Cid,
    pub meta_cid: Cid,
}

impl Contribution {
    /// Builds a contribution for a stored sentence. Sentence metadata is
    /// derived and stored when `meta_cid` is absent; the language defaults to
    /// the sentence's own.
    pub fn prepare(
        store: &dyn BlockStore,
        audio: Vec<u8>,
        sentence_cid: Cid,
        meta_cid: Option<Cid>,
        language: Option<String>,
    ) -> Result<Self, ConsentError> {
        let sentence: Sentence = decode(&store.get(&sentence_cid)?)?;
        let meta_cid = match meta_cid {
            Some(cid) => cid,
            None => store.put(&encode(&sentence_meta(&sentence_cid, &sentence.content)))?,
        };
        Ok(Self {
            language: language.unwrap_or(sentence.language),
            audio,
            sentence_cid,
            meta_cid,
        })
    }
}

fn put_encrypted(
    store: &dyn BlockStore,
    key: &SessionKey,
    plaintext: &[u8],
) -> Result<Cid, ConsentError> {
    Ok(store.put(&encode(&key.encrypt(plaintext)?))?)
}

fn get_decrypted(store: &dyn BlockStore, key: &SessionKey, cid: &Cid) -> Result<Vec<u8>, ConsentError> {
    let object: EncryptedObject = decode(&store.get(cid)?)?;
    key.decrypt(&object)
}

/// The identity's current encrypted root, or an empty one if it has never
/// published.
pub fn current_root(
    store: &dyn BlockStore,
    registry: &NameRegistry,
    name: &str,
) -> Result<EncryptedRoot, ConsentError> {
    match registry.resolve(name) {
        Ok(cid) => Ok(decode(&store.get(&cid)?)?),
        Err(NameError::NotFound(_)) => Ok(EncryptedRoot::default()),
        Err(e) => Err(e.into()),
    }
}

/// All clips of one session, decrypted list by list.
pub fn decrypt_session(
    store: &dyn BlockStore,
    session_root: &Cid,
    key: &SessionKey,
) -> Result<BTreeMap<String, Vec<ClipEntry>>, ConsentError> {
    let root: SessionRoot = decode(&store.get(session_root)?)?;
    let mut out = BTreeMap::new();
    for (language, entry) in root.languages {
        let mut clips = Vec::new();
        for cid in &entry.cids {
            let list: LanguageIndex = decode(&get_decrypted(store, key, cid)?)?;
            clips.extend(list.clips);
        }
        out.insert(language, clips);
    }
    Ok(out)
}

/// The MP3 bytes behind an encrypted clip entry.
pub fn decrypt_clip_audio(
    store: &dyn BlockStore,
    clip: &ClipEntry,
    key: &SessionKey,
) -> Result<Vec<u8>, ConsentError> {
    get_decrypted(store, key, &clip.clip_cid)
}

/// Encrypts `contribution` under `key`, appends it to the session's clip list
/// for its language, and republishes the identity's root with the key
/// included. Returns the new root Cid.
pub fn contribute(
    identity: &Identity,
    key: &SessionKey,
    contribution: &Contribution,
    store: &dyn BlockStore,
    registry: &NameRegistry,
) -> Result<Cid, ConsentError> {
    let fpr = key.fingerprint().to_owned();
    if identity.session_key(&fpr).is_none() {
        return Err(ConsentError::MissingKey(fpr));
    }
    let corrupt = |detail: String| ConsentError::Corrupt {
        fingerprint: fpr.clone(),
        detail,
    };

    let mut root = current_root(store, registry, &identity.name())?;
    let mut session = match root.sessions.get(&fpr) {
        Some(cid) => decode::<SessionRoot>(&store.get(cid)?)?,
        None => SessionRoot::default(),
    };
    let mut clips = match session.languages.get(&contribution.language) {
        Some(entry) => {
            let mut clips = Vec::new();
            for cid in &entry.cids {
                let bytes = get_decrypted(store, key, cid).map_err(|e| corrupt(e.to_string()))?;
                let list: LanguageIndex = decode(&bytes).map_err(|e| corrupt(e.to_string()))?;
                clips.extend(list.clips);
            }
            clips
        }
        None => Vec::new(),
    };

    let sentence: Sentence = decode(&store.get(&contribution.sentence_cid)?)?;
    let length = round_decimal(mp3_duration(&contribution.audio)?);
    clips.push(ClipEntry {
        chars_sec: chars_per_sec(&sentence.content, length)?,
        clip_cid: put_encrypted(store, key, &contribution.audio)?,
        length,
        sentence_cid: contribution.sentence_cid.clone(),
        meta_cid: contribution.meta_cid.clone(),
        extra: Extra::new(),
    });
    let list_cid = put_encrypted(store, key, &encode(&LanguageIndex { clips }))?;

    session.languages.insert(
        contribution.language.clone(),
        EncryptedLanguageEntry {
            cids: vec![list_cid],
            extra: Extra::new(),
        },
    );
    root.sessions.insert(fpr.clone(), store.put(&encode(&session))?);
    root.keys.get_or_insert_with(BTreeMap::new).insert(fpr, key.to_jwk());
    publish(identity, root, store, registry)
}

fn publish(
    identity: &Identity,
    root: EncryptedRoot,
    store: &dyn BlockStore,
    registry: &NameRegistry,
) -> Result<Cid, ConsentError> {
    let cid = store.put(&encode(&root))?;
    registry.publish(identity.name_key(), &cid)?;
    Ok(cid)
}

/// Withdraws a session's key from the published root and destroys the local
/// copy. The session's fingerprint and data stay published, unreadable.
pub fn revoke(
    identity: &mut Identity,
    fingerprint: &str,
    store: &dyn BlockStore,
    registry: &NameRegistry,
) -> Result<Cid, ConsentError> {
    let mut root = current_root(store, registry, &identity.name())?;
    if !root.sessions.contains_key(fingerprint) {
        return Err(ConsentError::UnknownSession(fingerprint.to_owned()));
    }
    let removed = root.keys.as_mut().and_then(|keys| keys.remove(fingerprint));
    if removed.is_none() {
        return Err(ConsentError::AlreadyRevoked(fingerprint.to_owned()));
    }
    root.keys.get_or_insert_with(BTreeMap::new);
    let cid = publish(identity, root, store, registry)?;
    identity.destroy_key(fingerprint)?;
    Ok(cid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionContents {
    Decrypted { clips: BTreeMap<String, Vec<ClipEntry>> },
    /// No key available: consent withheld or revoked.
    Opaque,
    /// A key was available but the data did not decrypt.
    Failed { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub fingerprint: String,
    pub session_root: Cid,
    /// Whether the key came from the root itself rather than a cache.
    pub published: bool,
    pub contents: SessionContents,
}

impl SessionView {
    pub fn clip_count(&self) -> Option<usize> {
        match &self.contents {
            SessionContents::Decrypted { clips } => Some(clips.values().map(Vec::len).sum()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpenedRoot {
    Classic(RootIndex),
    Encrypted(Vec<SessionView>),
}

/// Collects the keys an encrypted root publishes. Invalid JWKs are skipped.
pub fn harvest_keys(root: &EncryptedRoot) -> KeyCache {
    root.keys
        .iter()
        .flatten()
        .filter_map(|(fpr, jwk)| {
            let key = SessionKey::from_jwk(jwk).ok()?;
            (key.fingerprint() == fpr).then(|| (fpr.clone(), key))
        })
        .collect()
}

/// Opens either kind of root. Encrypted sessions are decrypted with the keys
/// the root publishes, falling back to `cache`.
pub fn open_root(
    store: &dyn BlockStore,
    cid: &Cid,
    cache: &KeyCache,
) -> Result<OpenedRoot, ConsentError> {
    let root = match decode_root(&store.get(cid)?)? {
        AnyRoot::Classic(root) => return Ok(OpenedRoot::Classic(root)),
        AnyRoot::Encrypted(root) => root,
    };
    let published = harvest_keys(&root);
    let views = root
        .sessions
        .iter()
        .map(|(fpr, session_root)| {
            let (key, from_root) = match (published.get(fpr), cache.get(fpr)) {
                (Some(k), _) => (Some(k), true),
                (None, cached) => (cached, false),
            };
            let contents = match key {
                None => SessionContents::Opaque,
                Some(key) => match decrypt_session(store, session_root, key) {
                    Ok(clips) => SessionContents::Decrypted { clips },
                    Err(e) => SessionContents::Failed {
                        detail: e.to_string(),
                    },
                },
            };
            SessionView {
                fingerprint: fpr.clone(),
                session_root: session_root.clone(),
                published: from_root,
                contents,
            }
        })
        .collect();
    Ok(OpenedRoot::Encrypted(views))
}

/// Resolves `name` and opens what it points at using only published keys.
pub fn open_identity(
    store: &dyn BlockStore,
    registry: &NameRegistry,
    name: &str,
) -> Result<OpenedRoot, ConsentError> {
    open_root(store, &registry.resolve(name)?, &KeyCache::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::{compute_cid, MemoryStore};
    use crate::datamodel::LanguageEntry;
    use crate::ingest::sentence_meta;
    use std::collections::HashSet;

    struct World {
        store: MemoryStore,
        registry: NameRegistry,
        _dir: tempfile::TempDir,
        keystore: Keystore,
    }

    impl World {
        fn new() -> Self {
            let dir = tempfile::tempdir().unwrap();
            Self {
                store: MemoryStore::new(),
                registry: NameRegistry::in_memory(),
                keystore: Keystore::open(dir.path().join("keys")).unwrap(),
                _dir: dir,
            }
        }

        fn recording(&self, text: &str, frames: usize) -> Contribution {
            let sentence = Sentence::new(text, "CC0-1.0", "br");
            let sentence_cid = self.store.put(&encode(&sentence)).unwrap();
            let meta_cid = self.store.put(&encode(&sentence_meta(&sentence_cid, text))).unwrap();
            let mut audio = Vec::new();
            for _ in 0..frames {
                audio.extend_from_slice(&[0xff, 0xfb, 0x90, 0x64]);
                audio.resize(audio.len() + 413, 0);
            }
            Contribution {
                language: "br".into(),
                audio,
                sentence_cid,
                meta_cid,
            }
        }

        fn contribute(&self, id: &Identity, key: &SessionKey, i: usize) -> Cid {
            let c = self.recording(&format!("Frazenn {i}"), 40 + i);
            contribute(id, key, &c, &self.store, &self.registry).unwrap()
        }

        fn root(&self, cid: &Cid) -> EncryptedRoot {
            decode(&self.store.get(cid).unwrap()).unwrap()
        }
    }

    fn sessions(opened: OpenedRoot) -> Vec<SessionView> {
        match opened {
            OpenedRoot::Encrypted(views) => views,
            OpenedRoot::Classic(_) => panic!("expected an encrypted root"),
        }
    }

    #[test]
    fn first_and_second_contribution() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let key = id.roll_key().unwrap();
        let first = w.contribute(&id, &key, 0);
        let root = w.root(&first);
        assert_eq!(root.sessions.len(), 1);
        assert_eq!(root.keys.as_ref().unwrap().len(), 1);
        assert!(root.is_published(key.fingerprint()));
        let views = sessions(open_identity(&w.store, &w.registry, &id.name()).unwrap());
        assert_eq!(views[0].clip_count(), Some(1));

        let second = w.contribute(&id, &key, 1);
        assert_ne!(first, second);
        assert_eq!(w.registry.resolve(&id.name()).unwrap(), second);
        let root = w.root(&second);
        assert_eq!(root.sessions.len(), 1);
        let views = sessions(open_identity(&w.store, &w.registry, &id.name()).unwrap());
        assert_eq!(views[0].clip_count(), Some(2));
    }

    #[test]
    fn prepare_fills_in_meta_and_language() {
        let w = World::new();
        let text = "Demat d'an holl";
        let sentence_cid = w.store.put(&encode(&Sentence::new(text, "CC0-1.0", "br"))).unwrap();
        let c = Contribution::prepare(&w.store, vec![1], sentence_cid.clone(), None, None).unwrap();
        assert_eq!(c.language, "br");
        assert_eq!(c.meta_cid, compute_cid(&encode(&sentence_meta(&sentence_cid, text))));
        assert!(w.store.contains(&c.meta_cid).unwrap());
        let given = Contribution::prepare(&w.store, vec![1], sentence_cid, Some(c.sentence_cid.clone()), Some("fr".into())).unwrap();
        assert_eq!((given.language.as_str(), &given.meta_cid), ("fr", &c.sentence_cid));
        let missing = Contribution::prepare(&w.store, vec![], compute_cid(b"nope"), None, None);
        assert!(matches!(missing, Err(ConsentError::Store(CasError::NotFound(_)))));
    }

    #[test]
    fn clips_decrypt_to_the_recording() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let key = id.roll_key().unwrap();
        let c = w.recording("Demat d'an holl", 100);
        contribute(&id, &key, &c, &w.store, &w.registry).unwrap();
        let views = sessions(open_identity(&w.store, &w.registry, &id.name()).unwrap());
        let SessionContents::Decrypted { clips } = &views[0].contents else {
            panic!("not decrypted")
        };
        let clip = &clips["br"][0];
        assert_eq!(decrypt_clip_audio(&w.store, clip, &key).unwrap(), c.audio);
        assert_eq!(clip.length, 2.6122);
        assert_eq!(clip.chars_sec, chars_per_sec("Demat d'an holl", 2.6122).unwrap());
        // the stored audio block itself is ciphertext
        let raw = w.store.get(&clip.clip_cid).unwrap();
        assert!(decode::<EncryptedObject>(&raw).is_ok());
    }

    #[test]
    fn roll_then_contribute() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let k1 = id.roll_key().unwrap();
        w.contribute(&id, &k1, 0);
        let before = w.root(&w.registry.resolve(&id.name()).unwrap());
        let k2 = id.roll_key().unwrap();
        let cid = w.contribute(&id, &k2, 1);
        let root = w.root(&cid);
        assert_eq!(root.keys.as_ref().unwrap().len(), 2);
        assert_eq!(root.sessions[k1.fingerprint()], before.sessions[k1.fingerprint()]);
        let views = sessions(open_identity(&w.store, &w.registry, &id.name()).unwrap());
        let counts: BTreeMap<_, _> = views.iter().map(|v| (v.fingerprint.clone(), v.clip_count())).collect();
        assert_eq!(counts[k1.fingerprint()], Some(1));
        assert_eq!(counts[k2.fingerprint()], Some(1));
    }

    #[test]
    fn lifecycle_with_cached_consumer() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let k1 = id.roll_key().unwrap();
        let mut published = Vec::new();
        for i in 0..3 {
            published.push(w.contribute(&id, &k1, i));
        }
        let k2 = id.roll_key().unwrap();
        for i in 3..5 {
            published.push(w.contribute(&id, &k2, i));
        }
        // a consumer reads the identity and keeps every key it sees
        let cache = harvest_keys(&w.root(&w.registry.resolve(&id.name()).unwrap()));
        assert_eq!(cache.len(), 2);

        let revoked = revoke(&mut id, k1.fingerprint(), &w.store, &w.registry).unwrap();
        published.push(revoked.clone());
        let root = w.root(&revoked);
        assert_eq!(root.keys.as_ref().unwrap().len(), 1);
        assert_eq!(root.sessions.len(), 2);
        assert!(id.session_key(k1.fingerprint()).is_none());
        assert!(published.windows(2).all(|p| p[0] != p[1]));
        for cid in &published {
            let r = w.root(cid);
            let sessions: HashSet<_> = r.sessions.keys().collect();
            assert!(r.keys.iter().flatten().all(|(f, _)| sessions.contains(f)));
        }

        let views = sessions(open_identity(&w.store, &w.registry, &id.name()).unwrap());
        let decryptable: usize = views.iter().filter_map(SessionView::clip_count).sum();
        assert_eq!(decryptable, 2);
        let opaque: Vec<_> = views
            .iter()
            .filter(|v| v.contents == SessionContents::Opaque)
            .map(|v| v.fingerprint.as_str())
            .collect();
        assert_eq!(opaque, [k1.fingerprint()]);

        let cached = sessions(open_root(&w.store, &revoked, &cache).unwrap());
        let old = cached.iter().find(|v| v.fingerprint == k1.fingerprint()).unwrap();
        assert!(!old.published);
        assert_eq!(old.clip_count(), Some(3));
    }

    #[test]
    fn revoke_errors() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let key = id.roll_key().unwrap();
        w.contribute(&id, &key, 0);
        assert!(matches!(
            revoke(&mut id, &"0".repeat(40), &w.store, &w.registry),
            Err(ConsentError::UnknownSession(_))
        ));
        let cid = revoke(&mut id, key.fingerprint(), &w.store, &w.registry).unwrap();
        let root = w.root(&cid);
        assert_eq!(root.keys, Some(BTreeMap::new()));
        assert_eq!(root.sessions.len(), 1);
        assert!(matches!(
            revoke(&mut id, key.fingerprint(), &w.store, &w.registry),
            Err(ConsentError::AlreadyRevoked(_))
        ));
        // the revoked key is gone locally, so it cannot be used again
        assert!(matches!(
            contribute(&id, &key, &w.recording("x", 5), &w.store, &w.registry),
            Err(ConsentError::MissingKey(_))
        ));
    }

    #[test]
    fn corrupt_existing_list() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let key = id.roll_key().unwrap();
        let cid = w.contribute(&id, &key, 0);
        // republish a root whose session list is encrypted under another key
        let mut root = w.root(&cid);
        let other = SessionKey::generate().unwrap();
        let bogus = put_encrypted(&w.store, &other, b"[]").unwrap();
        let session = SessionRoot {
            languages: BTreeMap::from([(
                "br".to_string(),
                EncryptedLanguageEntry {
                    cids: vec![bogus],
                    extra: Extra::new(),
                },
            )]),
        };
        root.sessions.insert(key.fingerprint().into(), w.store.put(&encode(&session)).unwrap());
        let forged = w.store.put(&encode(&root)).unwrap();
        w.registry.publish(id.name_key(), &forged).unwrap();

        let err = contribute(&id, &key, &w.recording("y", 5), &w.store, &w.registry);
        assert!(matches!(err, Err(ConsentError::Corrupt { .. })));
        let views = sessions(open_identity(&w.store, &w.registry, &id.name()).unwrap());
        assert!(matches!(views[0].contents, SessionContents::Failed { .. }));
    }

    #[test]
    fn classic_and_missing() {
        let w = World::new();
        let mut classic = RootIndex::new();
        classic.entries.insert(
            "br".into(),
            LanguageEntry::new(vec![crate::cas::compute_cid(b"b")], crate::cas::compute_cid(b"m")),
        );
        let cid = w.store.put(&encode(&classic)).unwrap();
        assert_eq!(open_root(&w.store, &cid, &KeyCache::new()).unwrap(), OpenedRoot::Classic(classic));

        let id = w.keystore.create_identity().unwrap();
        assert!(matches!(
            open_identity(&w.store, &w.registry, &id.name()),
            Err(ConsentError::Name(NameError::NotFound(_)))
        ));
    }

    #[test]
    fn unmeasurable_audio_is_rejected() {
        let w = World::new();
        let mut id = w.keystore.create_identity().unwrap();
        let key = id.roll_key().unwrap();
        let mut c = w.recording("z", 1);
        c.audio = b"not audio".to_vec();
        assert!(matches!(
            contribute(&id, &key, &c, &w.store, &w.registry),
            Err(ConsentError::Audio(_))
        ));
        assert!(w.registry.resolve(&id.name()).is_err());
    }
}
