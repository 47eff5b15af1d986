use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use omnilingo::align::InputTooLong;
use omnilingo::cas::{CasError, NameError};
use omnilingo::consent::ConsentError;
use omnilingo::datamodel::DecodeError;
use omnilingo::game::GameError;

/// An error response: `{"error": code, "detail": text}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    detail: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl ToString) -> Self {
        Self {
            status,
            code,
            detail: detail.to_string(),
        }
    }

    pub fn bad_request(detail: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }

    pub fn internal(detail: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, detail = %self.detail, "request failed");
        }
        let body = Json(Body {
            error: self.code,
            detail: &self.detail,
        });
        (self.status, body).into_response()
    }
}

impl From<CasError> for ApiError {
    fn from(e: CasError) -> Self {
        let (status, code) = match &e {
            CasError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            CasError::InvalidCid(_) => (StatusCode::BAD_REQUEST, "invalid_cid"),
            CasError::Integrity(_) => (StatusCode::BAD_GATEWAY, "integrity"),
            CasError::Unreachable(_) => (StatusCode::BAD_GATEWAY, "unreachable"),
            CasError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
        };
        Self::new(status, code, e)
    }
}

impl From<DecodeError> for ApiError {
    fn from(e: DecodeError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_object", e)
    }
}

impl From<NameError> for ApiError {
    fn from(e: NameError) -> Self {
        let (status, code) = match &e {
            NameError::NotFound(_) => (StatusCode::NOT_FOUND, "unknown_name"),
            NameError::BadSignature(_) => (StatusCode::BAD_REQUEST, "bad_signature"),
            NameError::Stale { .. } => (StatusCode::CONFLICT, "stale_record"),
            NameError::Key(_) | NameError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "names"),
        };
        Self::new(status, code, e)
    }
}

impl From<GameError> for ApiError {
    fn from(e: GameError) -> Self {
        let (status, code) = match e {
            GameError::Store(e) => return e.into(),
            GameError::Decode(e) => return e.into(),
            GameError::UnknownLanguage(_) => (StatusCode::NOT_FOUND, "unknown_language"),
            GameError::NoSuchBucket { .. } => (StatusCode::BAD_REQUEST, "no_such_bucket"),
            GameError::Shortfall { .. } => (StatusCode::CONFLICT, "shortfall"),
            GameError::Unusable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unusable_clip"),
            GameError::NotInGroup(_) => (StatusCode::BAD_REQUEST, "not_in_group"),
            GameError::AlreadyAnswered(_) => (StatusCode::CONFLICT, "already_answered"),
            GameError::Exhausted => (StatusCode::CONFLICT, "exhausted"),
            GameError::BadElapsed(_) => (StatusCode::BAD_REQUEST, "bad_elapsed"),
            GameError::Profile(_) | GameError::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "profile")
            }
        };
        Self::new(status, code, e)
    }
}

impl From<ConsentError> for ApiError {
    fn from(e: ConsentError) -> Self {
        let (status, code) = match e {
            ConsentError::Store(e) => return e.into(),
            ConsentError::Decode(e) => return e.into(),
            ConsentError::Name(e) => return e.into(),
            ConsentError::WrongKey { .. } => (StatusCode::BAD_REQUEST, "wrong_key"),
            ConsentError::BadFingerprint(_) => (StatusCode::BAD_REQUEST, "bad_fingerprint"),
            ConsentError::Jwk(_) => (StatusCode::BAD_REQUEST, "bad_jwk"),
            ConsentError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session_key"),
            ConsentError::MissingKey(_) => (StatusCode::NOT_FOUND, "missing_key"),
            ConsentError::UnknownIdentity(_) => (StatusCode::NOT_FOUND, "unknown_identity"),
            ConsentError::AlreadyRevoked(_) => (StatusCode::CONFLICT, "already_revoked"),
            ConsentError::Audio(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_audio"),
            ConsentError::Length(_) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_length"),
            ConsentError::Integrity | ConsentError::Corrupt { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "integrity")
            }
            ConsentError::Entropy | ConsentError::Keystore(_) | ConsentError::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "keystore")
            }
        };
        Self::new(status, code, e)
    }
}

impl From<InputTooLong> for ApiError {
    fn from(e: InputTooLong) -> Self {
        Self::new(StatusCode::PAYLOAD_TOO_LARGE, "input_too_long", e)
    }
}

impl From<axum::extract::rejection::JsonRejection> for ApiError {
    fn from(e: axum::extract::rejection::JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<axum::extract::multipart::MultipartError> for ApiError {
    fn from(e: axum::extract::multipart::MultipartError) -> Self {
        Self::bad_request(e.body_text())
    }
}
