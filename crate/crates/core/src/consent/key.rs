use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine;
use ring::aead::{Aad, LessSafeKey, Nonce, UnboundKey, AES_256_GCM, NONCE_LEN};
use ring::digest::{digest, SHA1_FOR_LEGACY_USE_ONLY};
use ring::rand::{SecureRandom, SystemRandom};
use serde::{Deserialize, Serialize};

use super::pgp_words::{EVEN, ODD};
use super::ConsentError;
use crate::datamodel::IndexObject;

pub const KEY_LEN: usize = 32;
pub const FINGERPRINT_LEN: usize = 40;

pub fn is_fingerprint(s: &str) -> bool {
    s.len() == FINGERPRINT_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// A 256-bit AES-GCM key, the unit of consent.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    bytes: [u8; KEY_LEN],
    fingerprint: String,
}

impl SessionKey {
    pub fn generate() -> Result<Self, ConsentError> {
        let mut bytes = [0u8; KEY_LEN];
        SystemRandom::new()
            .fill(&mut bytes)
            .map_err(|_| ConsentError::Entropy)?;
        Ok(Self::from_bytes(bytes))
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self {
            fingerprint: fingerprint(&bytes),
            bytes,
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn words(&self) -> Vec<&'static str> {
        words_for_fingerprint(&self.fingerprint).expect("fingerprints are well formed")
    }

    pub fn to_jwk(&self) -> Jwk {
        Jwk {
            kty: "oct".into(),
            k: URL_SAFE_NO_PAD.encode(self.bytes),
            alg: Some("A256GCM".into()),
            ext: Some(true),
            key_ops: Some(vec!["encrypt".into(), "decrypt".into()]),
        }
    }

    pub fn from_jwk(jwk: &Jwk) -> Result<Self, ConsentError> {
        if jwk.kty != "oct" {
            return Err(ConsentError::Jwk(format!("kty {:?}, expected \"oct\"", jwk.kty)));
        }
        if let Some(alg) = &jwk.alg {
            if alg != "A256GCM" {
                return Err(ConsentError::Jwk(format!("alg {alg:?}, expected \"A256GCM\"")));
            }
        }
        let bytes = URL_SAFE_NO_PAD
            .decode(jwk.k.trim_end_matches('='))
            .map_err(|e| ConsentError::Jwk(format!("k: {e}")))?;
        let bytes: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|b: Vec<u8>| ConsentError::Jwk(format!("{}-byte key, expected 32", b.len())))?;
        Ok(Self::from_bytes(bytes))
    }

    pub fn encrypt(&self, plaintext: &[u8]) -> Result<EncryptedObject, ConsentError> {
        let mut iv = [0u8; NONCE_LEN];
        SystemRandom::new()
            .fill(&mut iv)
            .map_err(|_| ConsentError::Entropy)?;
        let mut data = plaintext.to_vec();
        self.aead()
            .seal_in_place_append_tag(Nonce::assume_unique_for_key(iv), Aad::empty(), &mut data)
            .map_err(|_| ConsentError::Entropy)?;
        Ok(EncryptedObject {
            alg: Algorithm::default(),
            keyfpr: self.fingerprint.clone(),
            iv: iv.to_vec(),
            encdata: data,
        })
    }

    /// Checks the fingerprint first; nothing is decrypted under a key the
    /// object was not made for.
    pub fn decrypt(&self, object: &EncryptedObject) -> Result<Vec<u8>, ConsentError> {
        if object.keyfpr != self.fingerprint {
            return Err(ConsentError::WrongKey {
                expected: object.keyfpr.clone(),
                got: self.fingerprint.clone(),
            });
        }
        let iv: [u8; NONCE_LEN] = object
            .iv
            .as_slice()
            .try_into()
            .map_err(|_| ConsentError::Integrity)?;
        let mut data = object.encdata.clone();
        let plain_len = self
            .aead()
            .open_in_place(Nonce::assume_unique_for_key(iv), Aad::empty(), &mut data)
            .map_err(|_| ConsentError::Integrity)?
            .len();
        data.truncate(plain_len);
        Ok(data)
    }

    fn aead(&self) -> LessSafeKey {
        LessSafeKey::new(UnboundKey::new(&AES_256_GCM, &self.bytes).expect("32-byte key"))
    }
}

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionKey")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

/// Lowercase hex SHA-1 of the raw key bytes.
pub fn fingerprint(key_bytes: &[u8]) -> String {
    hex::encode(digest(&SHA1_FOR_LEGACY_USE_ONLY, key_bytes))
}

pub fn words_for_fingerprint(fingerprint: &str) -> Result<Vec<&'static str>, ConsentError> {
    let bytes = hex::decode(fingerprint)
        .ok()
        .filter(|b| b.len() == FINGERPRINT_LEN / 2)
        .ok_or_else(|| ConsentError::BadFingerprint(fingerprint.to_owned()))?;
    Ok(bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| if i % 2 == 0 { EVEN[b as usize] } else { ODD[b as usize] })
        .collect())
}

/// JSON Web Key for a symmetric key, in the shape browsers export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jwk {
    pub kty: String,
    pub k: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_ops: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Algorithm {
    pub name: String,
    pub length: u32,
}

impl Default for Algorithm {
    fn default() -> Self {
        Self {
            name: "AES-GCM".into(),
            length: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedObject {
    pub alg: Algorithm,
    pub keyfpr: String,
    #[serde(with = "b64")]
    pub iv: Vec<u8>,
    #[serde(with = "b64")]
    pub encdata: Vec<u8>,
}

impl IndexObject for EncryptedObject {
    const KIND: &'static str = "encrypted object";

    fn check(&self) -> Result<(), String> {
        if self.alg != Algorithm::default() {
            return Err(format!("unsupported algorithm {} / {}", self.alg.name, self.alg.length));
        }
        if !is_fingerprint(&self.keyfpr) {
            return Err(format!("malformed keyfpr {:?}", self.keyfpr));
        }
        if self.iv.len() != NONCE_LEN {
            return Err(format!("{}-byte iv, expected {NONCE_LEN}", self.iv.len()));
        }
        Ok(())
    }
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}
