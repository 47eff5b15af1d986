use std::collections::{BTreeMap, HashMap};
use std::path::Path as FsPath;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use omnilingo::align::{feedback, FeedbackSegment};
use omnilingo::cas::{Cid, NameRecord};
use omnilingo::consent::{self, words_for_fingerprint, Contribution, Identity, OpenedRoot};
use omnilingo::datamodel::Tag;
use omnilingo::game::{DisplayState, GameSession, LevelResult, Task};

use crate::error::ApiError;
use crate::{Catalogue, DataDir};

const MAX_UPLOAD: usize = 64 * 1024 * 1024;
const IMMUTABLE: &str = "public, max-age=31536000, immutable";
const NO_CACHE: &str = "no-cache";

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    data: DataDir,
    catalogue: Catalogue,
    identity_name: Option<String>,
    sessions: Mutex<HashMap<String, Arc<Mutex<GameSession>>>>,
    /// Held for the whole of a contribute or revoke, so one identity has a
    /// single writer.
    identity: Mutex<Option<Identity>>,
}

impl AppState {
    pub fn new(data: DataDir, catalogue: Catalogue, identity_name: Option<String>) -> Self {
        Self(Arc::new(Inner {
            data,
            catalogue,
            identity_name,
            sessions: Mutex::new(HashMap::new()),
            identity: Mutex::new(None),
        }))
    }

    fn root_cid(&self) -> Result<Cid, ApiError> {
        match &self.0.catalogue {
            Catalogue::Root(cid) => Ok(cid.clone()),
            Catalogue::Name(name) => Ok(self.0.data.registry.resolve(name)?),
        }
    }

    fn session(&self, token: &str) -> Result<Arc<Mutex<GameSession>>, ApiError> {
        self.0
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(token)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", token))
    }

    /// Runs `f` with the contributor identity loaded, serialising writers.
    fn with_identity<T>(&self, f: impl FnOnce(&mut Identity, &DataDir) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut slot = self.0.identity.lock().expect("identity lock poisoned");
        if slot.is_none() {
            let keystore = &self.0.data.keystore;
            let name = match &self.0.identity_name {
                Some(name) => name.clone(),
                None => {
                    let mut names = keystore.identities().map_err(ApiError::from)?;
                    if names.len() != 1 {
                        return Err(ApiError::new(
                            StatusCode::CONFLICT,
                            "no_identity",
                            format!("{} identities in the keystore and none configured", names.len()),
                        ));
                    }
                    names.remove(0)
                }
            };
            *slot = Some(keystore.load(&name)?);
        }
        f(slot.as_mut().expect("loaded above"), &self.0.data)
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(ApiError::internal)?
}

fn parse_cid(text: &str) -> Result<Cid, ApiError> {
    text.parse::<Cid>()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_cid", e))
}

pub fn router(state: AppState, static_dir: Option<&FsPath>) -> Router {
    let api = Router::new()
        .route("/api/root", get(get_root))
        .route("/api/block", post(post_block))
        .route("/api/block/{cid}", get(get_block))
        .route("/api/name/{name}", get(get_name).post(post_name))
        .route("/api/session", post(create_session))
        .route("/api/session/{token}/task", get(get_task))
        .route("/api/session/{token}/answer", post(answer))
        .route("/api/session/{token}/discard", post(discard))
        .route("/api/session/{token}/skip", post(skip))
        .route("/api/feedback", post(post_feedback))
        .route("/api/contribute", post(contribute))
        .route("/api/revoke", post(revoke))
        .route("/api/keys", get(list_keys))
        .route("/api/keys/roll", post(roll_key))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such endpoint")
        }),
    }
}

async fn get_root(State(state): State<AppState>) -> Result<Response, ApiError> {
    let (cid, bytes) = blocking(move || {
        let cid = state.root_cid()?;
        let bytes = state.0.data.store.get(&cid)?;
        Ok((cid, bytes))
    })
    .await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/json".to_owned()),
            (header::CACHE_CONTROL, NO_CACHE.to_owned()),
            (header::HeaderName::from_static("x-root-cid"), cid.to_string()),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Serialize)]
struct Stored {
    cid: Cid,
}

async fn post_block(State(state): State<AppState>, body: Bytes) -> Result<Json<Stored>, ApiError> {
    let cid = blocking(move || Ok(state.0.data.store.put(&body)?)).await?;
    Ok(Json(Stored { cid }))
}

fn content_type(bytes: &[u8]) -> &'static str {
    match bytes {
        [b'{' | b'[', ..] => "application/json",
        [b'I', b'D', b'3', ..] => "audio/mpeg",
        [0xff, b, ..] if b & 0xe0 == 0xe0 => "audio/mpeg",
        _ => "application/octet-stream",
    }
}

/// A single `bytes=` range against a body of `len` bytes. `None` means serve
/// the whole body; `Some(Err)` means the range cannot be satisfied.
pub(crate) fn parse_range(value: &str, len: u64) -> Option<Result<(u64, u64), ()>> {
    let spec = value.trim().strip_prefix("bytes=")?;
    if spec.contains(',') {
        return None;
    }
    let (start, end) = spec.split_once('-')?;
    let (start, end) = (start.trim(), end.trim());
    let range = if start.is_empty() {
        let suffix: u64 = end.parse().ok()?;
        if suffix == 0 || len == 0 {
            return Some(Err(()));
        }
        (len.saturating_sub(suffix), len - 1)
    } else {
        let start: u64 = start.parse().ok()?;
        let end = if end.is_empty() {
            len.saturating_sub(1)
        } else {
            end.parse::<u64>().ok()?.min(len.saturating_sub(1))
        };
        if start >= len || start > end {
            return Some(Err(()));
        }
        (start, end)
    };
    Some(Ok(range))
}

async fn get_block(
    State(state): State<AppState>,
    Path(cid): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let cid = parse_cid(&cid)?;
    let etag = format!("\"{cid}\"");
    if headers
        .get(header::IF_NONE_MATCH)
        .is_some_and(|v| v.as_bytes() == etag.as_bytes())
    {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response());
    }
    let bytes = blocking(move || Ok(state.0.data.store.get(&cid)?)).await?;
    let len = bytes.len() as u64;
    let mut response_headers = HeaderMap::new();
    response_headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type(&bytes)));
    response_headers.insert(header::CACHE_CONTROL, HeaderValue::from_static(IMMUTABLE));
    response_headers.insert(header::ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    response_headers.insert(header::ETAG, HeaderValue::from_str(&etag).expect("cid is ascii"));

    let range = headers
        .get(header::RANGE)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| parse_range(v, len));
    match range {
        None => Ok((response_headers, bytes).into_response()),
        Some(Ok((start, end))) => {
            response_headers.insert(
                header::CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes {start}-{end}/{len}")).expect("ascii"),
            );
            let slice = bytes[start as usize..=end as usize].to_vec();
            Ok((StatusCode::PARTIAL_CONTENT, response_headers, slice).into_response())
        }
        Some(Err(())) => {
            response_headers.insert(
                header::CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes */{len}")).expect("ascii"),
            );
            Ok((StatusCode::RANGE_NOT_SATISFIABLE, response_headers).into_response())
        }
    }
}

async fn get_name(State(state): State<AppState>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let record = blocking(move || Ok(state.0.data.registry.record(&name)?)).await?;
    Ok(([(header::CACHE_CONTROL, NO_CACHE)], Json(record)).into_response())
}

async fn post_name(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Result<Json<NameRecord>, JsonRejection>,
) -> Result<Json<NameRecord>, ApiError> {
    let Json(record) = body?;
    if record.name != name {
        return Err(ApiError::bad_request(format!(
            "record is for {}, posted to {name}",
            record.name
        )));
    }
    blocking(move || {
        state.0.data.registry.insert(record.clone())?;
        Ok(Json(record))
    })
    .await
}

#[derive(Debug, Serialize)]
pub struct TaskView {
    pub clip_cid: Cid,
    /// Where to fetch the MP3.
    pub audio: String,
    pub length: f64,
    pub chars_sec: f64,
    /// Sentence tokens with the gapped one blanked out.
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    pub gap_index: usize,
}

impl From<&Task> for TaskView {
    fn from(task: &Task) -> Self {
        let mut tokens = task.tokens.clone();
        tokens[task.gap_index].clear();
        Self {
            clip_cid: task.clip.clip_cid.clone(),
            audio: format!("/api/block/{}", task.clip.clip_cid),
            length: task.clip.length,
            chars_sec: task.clip.chars_sec,
            tokens,
            tags: task.tags.clone(),
            gap_index: task.gap_index,
        }
    }
}

#[derive(Serialize)]
struct SessionView {
    token: String,
    state: DisplayState,
    task: Option<TaskView>,
}

fn view(token: String, session: &GameSession) -> SessionView {
    SessionView {
        token,
        state: session.display_state(),
        task: session.current().map(TaskView::from),
    }
}

#[derive(Deserialize)]
struct CreateSession {
    language: String,
    bucket: usize,
    seed: Option<u64>,
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let Json(req) = body?;
    blocking(move || {
        let root = state.root_cid()?;
        let seed = req.seed.unwrap_or_else(rand::random);
        let session = GameSession::new(state.0.data.store.clone(), &root, &req.language, req.bucket, seed)?;
        let token = format!("{:032x}", rand::random::<u128>());
        let out = view(token.clone(), &session);
        state
            .0
            .sessions
            .lock()
            .expect("session map poisoned")
            .insert(token, Arc::new(Mutex::new(session)));
        Ok(Json(out))
    })
    .await
}

async fn get_task(State(state): State<AppState>, Path(token): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let session = state.session(&token)?;
    let session = session.lock().expect("session poisoned");
    Ok(Json(view(token, &session)))
}

#[derive(Deserialize)]
struct AnswerRequest {
    answer: String,
    elapsed: f64,
    /// Defaults to the current task.
    clip_cid: Option<Cid>,
}

#[derive(Serialize)]
struct AnswerResponse {
    correct: bool,
    expected: String,
    level: Option<LevelResult>,
    state: DisplayState,
    task: Option<TaskView>,
}

fn target_clip(session: &GameSession, requested: Option<Cid>) -> Result<Cid, ApiError> {
    match requested {
        Some(cid) => Ok(cid),
        None => session
            .current()
            .map(|t| t.clip.clip_cid.clone())
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no_task", "no unanswered task")),
    }
}

async fn answer(
    State(state): State<AppState>,
    Path(token): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<AnswerResponse>, ApiError> {
    let Json(req) = body?;
    let session = state.session(&token)?;
    blocking(move || {
        let mut session = session.lock().expect("session poisoned");
        let clip = target_clip(&session, req.clip_cid)?;
        let outcome = session.submit(&clip, &req.answer, req.elapsed)?;
        Ok(Json(AnswerResponse {
            correct: outcome.check.correct,
            expected: outcome.check.expected,
            level: outcome.level,
            state: session.display_state(),
            task: session.current().map(TaskView::from),
        }))
    })
    .await
}

#[derive(Deserialize, Default)]
struct ClipRequest {
    clip_cid: Option<Cid>,
}

fn optional_json<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

async fn discard(State(state): State<AppState>, Path(token): Path<String>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let req: ClipRequest = optional_json(&body)?;
    let session = state.session(&token)?;
    blocking(move || {
        let mut session = session.lock().expect("session poisoned");
        let clip = target_clip(&session, req.clip_cid)?;
        session.discard(&clip)?;
        Ok(Json(view(token, &session)))
    })
    .await
}

async fn skip(State(state): State<AppState>, Path(token): Path<String>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let req: ClipRequest = optional_json(&body)?;
    let session = state.session(&token)?;
    let mut session = session.lock().expect("session poisoned");
    let clip = target_clip(&session, req.clip_cid)?;
    session.skip(&clip)?;
    Ok(Json(view(token, &session)))
}

#[derive(Deserialize)]
struct FeedbackRequest {
    reference: String,
    hypothesis: String,
}

async fn post_feedback(body: Result<Json<FeedbackRequest>, JsonRejection>) -> Result<Json<Vec<FeedbackSegment>>, ApiError> {
    let Json(req) = body?;
    Ok(Json(feedback(&req.reference, &req.hypothesis)?))
}

#[derive(Serialize)]
struct Published {
    root: Cid,
    name: String,
    fingerprint: String,
}

async fn contribute(State(state): State<AppState>, mut form: Multipart) -> Result<Json<Published>, ApiError> {
    let mut audio = None;
    let mut fields = BTreeMap::new();
    while let Some(field) = form.next_field().await? {
        let name = field.name().unwrap_or_default().to_owned();
        if name == "audio" {
            audio = Some(field.bytes().await?.to_vec());
        } else {
            fields.insert(name, field.text().await?);
        }
    }
    let audio = audio.ok_or_else(|| ApiError::bad_request("missing `audio` part"))?;
    let sentence_cid = parse_cid(
        fields
            .get("sentence_cid")
            .ok_or_else(|| ApiError::bad_request("missing `sentence_cid` part"))?,
    )?;
    let meta_cid = fields.get("meta_cid").map(|c| parse_cid(c)).transpose()?;
    let requested = fields.get("fingerprint").cloned().filter(|f| !f.is_empty());
    let language = fields.get("language").cloned();

    blocking(move || {
        state.with_identity(|identity, data| {
            let store = data.store.as_ref();
            let contribution = Contribution::prepare(store, audio, sentence_cid, meta_cid, language)?;
            let key = match requested {
                Some(fpr) => identity
                    .session_key(&fpr)
                    .ok_or(consent::ConsentError::MissingKey(fpr))?,
                None => identity.ensure_active_key()?,
            };
            let root = consent::contribute(identity, &key, &contribution, store, &data.registry)?;
            Ok(Json(Published {
                root,
                name: identity.name(),
                fingerprint: key.fingerprint().to_owned(),
            }))
        })
    })
    .await
}

#[derive(Deserialize)]
struct RevokeRequest {
    fingerprint: String,
}

async fn revoke(
    State(state): State<AppState>,
    body: Result<Json<RevokeRequest>, JsonRejection>,
) -> Result<Json<Published>, ApiError> {
    let Json(req) = body?;
    blocking(move || {
        state.with_identity(|identity, data| {
            let root = consent::revoke(identity, &req.fingerprint, data.store.as_ref(), &data.registry)?;
            Ok(Json(Published {
                root,
                name: identity.name(),
                fingerprint: req.fingerprint,
            }))
        })
    })
    .await
}

#[derive(Debug, Serialize)]
struct KeyView {
    fingerprint: String,
    words: String,
    active: bool,
    held_locally: bool,
    /// Whether the published root carries this key.
    published: bool,
    /// Clips readable under published keys; absent for opaque sessions.
    clips: Option<usize>,
}

#[derive(Serialize)]
struct KeysResponse {
    name: String,
    root: Option<Cid>,
    keys: Vec<KeyView>,
}

async fn list_keys(State(state): State<AppState>) -> Result<Json<KeysResponse>, ApiError> {
    blocking(move || {
        state.with_identity(|identity, data| {
            let name = identity.name();
            let store = data.store.as_ref();
            let root = data.registry.resolve(&name).ok();
            let sessions = match &root {
                Some(cid) => match consent::open_root(store, cid, &Default::default())? {
                    OpenedRoot::Encrypted(views) => views,
                    OpenedRoot::Classic(_) => Vec::new(),
                },
                None => Vec::new(),
            };
            let mut fingerprints: Vec<String> = identity.fingerprints();
            fingerprints.extend(sessions.iter().map(|s| s.fingerprint.clone()));
            fingerprints.sort();
            fingerprints.dedup();
            let keys = fingerprints
                .into_iter()
                .map(|fpr| {
                    let session = sessions.iter().find(|s| s.fingerprint == fpr);
                    KeyView {
                        words: words_for_fingerprint(&fpr).map(|w| w.join(" ")).unwrap_or_default(),
                        active: identity.active_fingerprint() == Some(fpr.as_str()),
                        held_locally: identity.session_key(&fpr).is_some(),
                        published: session.is_some_and(|s| s.published),
                        clips: session.and_then(|s| s.clip_count()),
                        fingerprint: fpr,
                    }
                })
                .collect();
            Ok(Json(KeysResponse { name, root, keys }))
        })
    })
    .await
}

#[derive(Serialize)]
struct RolledKey {
    fingerprint: String,
    words: String,
}

async fn roll_key(State(state): State<AppState>) -> Result<Json<RolledKey>, ApiError> {
    blocking(move || {
        state.with_identity(|identity, _| {
            let key = identity.roll_key()?;
            Ok(Json(RolledKey {
                fingerprint: key.fingerprint().to_owned(),
                words: key.words().join(" "),
            }))
        })
    })
    .await
}
