//! Client for an IPFS-style daemon: `POST /api/v0/add` and `GET /ipfs/{cid}`.

use std::time::Duration;

use super::{BlockStore, CasError, Cid};

/// Environment variable holding the gateway base URL.
pub const GATEWAY_ENV: &str = "OMNILINGO_GATEWAY";

const MAX_BLOCK: u64 = 256 * 1024 * 1024;

/// How much to trust identifiers and bytes coming back from the daemon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Verification {
    /// Identifiers are whatever the daemon says; content is not re-hashed.
    #[default]
    Opaque,
    /// The daemon must speak the local raw-SHA-256 scheme; every add and fetch
    /// is checked against it.
    Sha256,
}

#[derive(Clone)]
pub struct GatewayStore {
    api_url: String,
    gateway_url: String,
    verification: Verification,
    agent: ureq::Agent,
}

impl std::fmt::Debug for GatewayStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GatewayStore")
            .field("api_url", &self.api_url)
            .field("gateway_url", &self.gateway_url)
            .field("verification", &self.verification)
            .finish()
    }
}

impl GatewayStore {
    /// Uses `base_url` for both the add API and the `/ipfs/` read path.
    pub fn new(base_url: &str) -> Self {
        let base = base_url.trim_end_matches('/').to_owned();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            api_url: base.clone(),
            gateway_url: base,
            verification: Verification::Opaque,
            agent,
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(GATEWAY_ENV)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .map(|url| Self::new(&url))
    }

    /// Reads go to a separate gateway (daemons usually serve the API and the
    /// gateway on different ports).
    pub fn with_gateway(mut self, gateway_url: &str) -> Self {
        self.gateway_url = gateway_url.trim_end_matches('/').to_owned();
        self
    }

    pub fn with_verification(mut self, verification: Verification) -> Self {
        self.verification = verification;
        self
    }

    fn unreachable(e: impl std::fmt::Display) -> CasError {
        CasError::Unreachable(e.to_string())
    }
}

fn multipart_body(content: &[u8]) -> (String, Vec<u8>) {
    let boundary = format!("omnilingo-{:016x}", rand::random::<u64>());
    let mut body = Vec::with_capacity(content.len() + 256);
    body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
    body.extend_from_slice(
        b"Content-Disposition: form-data; name=\"file\"; filename=\"blob\"\r\n\
          Content-Type: application/octet-stream\r\n\r\n",
    );
    body.extend_from_slice(content);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    (boundary, body)
}

/// The add endpoint answers either with a JSON object carrying `Hash`, or with
/// the bare identifier.
fn parse_add_response(text: &str) -> Option<String> {
    let text = text.trim();
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
        return value
            .get("Hash")
            .or_else(|| value.get("cid"))
            .and_then(|h| h.as_str())
            .map(str::to_owned);
    }
    // newline-delimited JSON progress lines; the last one carries the hash
    if let Some(last) = text.lines().last() {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(last) {
            return value.get("Hash").and_then(|h| h.as_str()).map(str::to_owned);
        }
    }
    (!text.is_empty() && !text.contains(char::is_whitespace)).then(|| text.to_owned())
}

impl BlockStore for GatewayStore {
    fn put(&self, content: &[u8]) -> Result<Cid, CasError> {
        let (boundary, body) = multipart_body(content);
        let mut response = self
            .agent
            .post(format!("{}/api/v0/add?pin=true", self.api_url))
            .header(
                "Content-Type",
                format!("multipart/form-data; boundary={boundary}"),
            )
            .send(&body[..])
            .map_err(Self::unreachable)?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(Self::unreachable)?;
        if !status.is_success() {
            return Err(CasError::Unreachable(format!("add failed ({status}): {text}")));
        }
        let returned = parse_add_response(&text)
            .ok_or_else(|| CasError::Unreachable(format!("unparseable add response: {text}")))?;
        match self.verification {
            Verification::Opaque => Ok(Cid::opaque(returned)),
            Verification::Sha256 => {
                let expected = Cid::for_content(content);
                if returned != expected.as_str() {
                    return Err(CasError::Integrity(expected));
                }
                Ok(expected)
            }
        }
    }

    fn get(&self, cid: &Cid) -> Result<Vec<u8>, CasError> {
        let mut response = self
            .agent
            .get(format!("{}/ipfs/{}", self.gateway_url, cid))
            .call()
            .map_err(Self::unreachable)?;
        let status = response.status();
        if status.as_u16() == 404 {
            return Err(CasError::NotFound(cid.clone()));
        }
        if !status.is_success() {
            return Err(CasError::Unreachable(format!("fetch of {cid} failed ({status})")));
        }
        let bytes = response
            .body_mut()
            .with_config()
            .limit(MAX_BLOCK)
            .read_to_vec()
            .map_err(Self::unreachable)?;
        if self.verification == Verification::Sha256 && !cid.verifies(&bytes) {
            return Err(CasError::Integrity(cid.clone()));
        }
        Ok(bytes)
    }
}
