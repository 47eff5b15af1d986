use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use super::key::{is_fingerprint, Jwk};
use crate::cas::Cid;
use crate::datamodel::{decode, is_language_code, DecodeError, Extra, IndexObject, RootIndex};

/// Fingerprint → session root, with the still-consented keys published
/// alongside under `"keys"`.
///
/// On the wire everything shares one JSON object:
/// `{"keys": {fpr: JWK}, fpr: Cid, ...}`. Fingerprints are 40 hex
/// characters, so they cannot collide with `"keys"`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncryptedRoot {
    pub keys: Option<BTreeMap<String, Jwk>>,
    pub sessions: BTreeMap<String, Cid>,
}

impl EncryptedRoot {
    pub fn published_key(&self, fingerprint: &str) -> Option<&Jwk> {
        self.keys.as_ref()?.get(fingerprint)
    }

    pub fn is_published(&self, fingerprint: &str) -> bool {
        self.published_key(fingerprint).is_some()
    }
}

impl Serialize for EncryptedRoot {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = Map::new();
        if let Some(keys) = &self.keys {
            map.insert(
                "keys".into(),
                serde_json::to_value(keys).map_err(serde::ser::Error::custom)?,
            );
        }
        for (fpr, cid) in &self.sessions {
            map.insert(fpr.clone(), Value::String(cid.to_string()));
        }
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EncryptedRoot {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = Map::<String, Value>::deserialize(d)?;
        let mut root = EncryptedRoot::default();
        for (field, value) in map {
            if field == "keys" {
                root.keys = Some(serde_json::from_value(value).map_err(D::Error::custom)?);
            } else if is_fingerprint(&field) {
                let cid = serde_json::from_value(value).map_err(D::Error::custom)?;
                root.sessions.insert(field, cid);
            } else {
                return Err(D::Error::custom(format!("unexpected field {field:?}")));
            }
        }
        Ok(root)
    }
}

impl IndexObject for EncryptedRoot {
    const KIND: &'static str = "encrypted root";

    fn check(&self) -> Result<(), String> {
        for fpr in self.keys.iter().flat_map(BTreeMap::keys) {
            if !self.sessions.contains_key(fpr) {
                return Err(format!("key {fpr} published without a session"));
            }
        }
        Ok(())
    }
}

/// A root whose language entries point at encrypted clip lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionRoot {
    pub languages: BTreeMap<String, EncryptedLanguageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncryptedLanguageEntry {
    /// Encrypted objects, each wrapping a list of clips.
    pub cids: Vec<Cid>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl IndexObject for SessionRoot {
    const KIND: &'static str = "session root";

    fn check(&self) -> Result<(), String> {
        for (code, entry) in &self.languages {
            if !is_language_code(code) {
                return Err(format!("invalid language code {code:?}"));
            }
            if entry.cids.is_empty() {
                return Err(format!("{code}: empty cids"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyRoot {
    Classic(RootIndex),
    Encrypted(EncryptedRoot),
}

/// Tells the two root flavours apart. A `"keys"` field marks an encrypted
/// root; so does a non-empty object whose fields are all fingerprints, which
/// covers roots with every session withheld.
pub fn decode_root(bytes: &[u8]) -> Result<AnyRoot, DecodeError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|source| DecodeError::Json {
        kind: RootIndex::KIND,
        source,
    })?;
    let encrypted = match value.as_object() {
        Some(map) => {
            map.contains_key("keys") || (!map.is_empty() && map.keys().all(|k| is_fingerprint(k)))
        }
        None => false,
    };
    if encrypted {
        decode(bytes).map(AnyRoot::Encrypted)
    } else {
        decode(bytes).map(AnyRoot::Classic)
    }
}
