use std::fmt;
use std::str::FromStr;

use ring::digest::{digest, SHA256};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::base58;
use super::CasError;

/// Multihash code for SHA2-256.
const SHA2_256: u8 = 0x12;
/// Digest length in bytes, second byte of the multihash.
const DIGEST_LEN: u8 = 0x20;

/// Content identifier: base58btc of the multihash `0x12 0x20 || sha256(content)`.
///
/// Parsing accepts any CIDv0-shaped string (34-byte sha2-256 multihash). Whether
/// the digest matches a given payload is only checked by [`Cid::verifies`].
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cid(String);

impl Cid {
    pub fn for_content(content: &[u8]) -> Self {
        let hash = digest(&SHA256, content);
        let mut multihash = Vec::with_capacity(34);
        multihash.push(SHA2_256);
        multihash.push(DIGEST_LEN);
        multihash.extend_from_slice(hash.as_ref());
        Cid(base58::encode(&multihash))
    }

    /// Wraps an identifier handed out by an external daemon without validating it.
    pub fn opaque(text: impl Into<String>) -> Self {
        Cid(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn verifies(&self, content: &[u8]) -> bool {
        *self == Cid::for_content(content)
    }

    /// The raw 32-byte digest, when this is a well-formed local CID.
    pub fn digest(&self) -> Option<[u8; 32]> {
        let bytes = base58::decode(&self.0)?;
        if bytes.len() != 34 || bytes[0] != SHA2_256 || bytes[1] != DIGEST_LEN {
            return None;
        }
        let mut out = [0u8; 32];
        out.copy_from_slice(&bytes[2..]);
        Some(out)
    }
}

pub fn compute_cid(content: &[u8]) -> Cid {
    Cid::for_content(content)
}

impl FromStr for Cid {
    type Err = CasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cid = Cid(s.to_owned());
        if !s.starts_with("Qm") || cid.digest().is_none() {
            return Err(CasError::InvalidCid(s.to_owned()));
        }
        Ok(cid)
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", self.0)
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
