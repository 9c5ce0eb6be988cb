//! HTTP generation API over a frozen model bundle.
//!
//! `GET /classes`, `GET /health`, `POST /generate` (JSON with base64 PNGs,
//! or the grid alone as `image/png` with `?format=grid`).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::color::ColorClass;
use crate::error::Result;
use crate::models::GeneratorNet;
use crate::training::{encode_png, sample_class, tile_grid, ModelBundle};

pub const MAX_COUNT: usize = 256;
pub const DEFAULT_PORT: u16 = 8080;
pub const CKPT_ENV: &str = "LOGAN_CKPT";
/// Fresh seeds stay below 2^53 so JavaScript clients can echo them exactly.
pub const MAX_FRESH_SEED: u64 = (1 << 53) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub class: ColorClass,
    pub count: usize,
    pub seed: Option<u64>,
}

/// A rejected request: which field was wrong and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn bad(field: Option<&str>, error: impl Into<String>) -> Self {
        ApiError { status: 400, error: error.into(), field: field.map(str::to_string) }
    }

    fn internal(error: impl ToString) -> Self {
        ApiError { status: 500, error: error.to_string(), field: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// Validates a JSON body field by field.
pub fn parse_generate_request(body: &[u8]) -> std::result::Result<GenerateRequest, ApiError> {
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ApiError::bad(None, format!("body is not valid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(ApiError::bad(None, "body must be a JSON object"));
    };
    if let Some(k) = obj.keys().find(|k| !["class", "count", "seed"].contains(&k.as_str())) {
        return Err(ApiError::bad(Some(k), format!("unknown field {k:?}")));
    }
    let class = match obj.get("class") {
        Some(Value::String(s)) => s.parse::<ColorClass>().map_err(|e| ApiError::bad(Some("class"), e.to_string()))?,
        Some(_) => return Err(ApiError::bad(Some("class"), "class must be a string")),
        None => return Err(ApiError::bad(Some("class"), "class is required")),
    };
    let count = match obj.get("count") {
        Some(v) => v.as_u64().ok_or_else(|| ApiError::bad(Some("count"), "count must be a positive integer"))?,
        None => return Err(ApiError::bad(Some("count"), "count is required")),
    };
    if count == 0 || count > MAX_COUNT as u64 {
        return Err(ApiError::bad(Some("count"), format!("count must be between 1 and {MAX_COUNT}, got {count}")));
    }
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| ApiError::bad(Some("seed"), "seed must be a non-negative integer"))?),
    };
    Ok(GenerateRequest { class, count: count as usize, seed })
}

/// PNG bytes for one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub class: ColorClass,
    pub seed_used: u64,
    pub images: Vec<Vec<u8>>,
    pub grid: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub class: ColorClass,
    pub count: usize,
    pub seed_used: u64,
    /// Base64 PNGs.
    pub images: Vec<String>,
    /// Base64 PNG of all images tiled `ceil(sqrt(count))` wide.
    pub grid: Option<String>,
}

impl From<Generated> for GenerateResponse {
    fn from(g: Generated) -> Self {
        let b64 = |b: &[u8]| base64::engine::general_purpose::STANDARD.encode(b);
        GenerateResponse {
            class: g.class,
            count: g.images.len(),
            seed_used: g.seed_used,
            images: g.images.iter().map(|b| b64(b)).collect(),
            grid: Some(b64(&g.grid)),
        }
    }
}

/// Samples with the request seed, or a fresh one that is echoed back.
pub fn handle_generate(req: &GenerateRequest, generator: &GeneratorNet) -> Result<Generated> {
    let seed = req.seed.unwrap_or_else(|| rand::rng().random_range(0..=MAX_FRESH_SEED));
    let images = sample_class(generator, req.class, req.count, seed)?;
    Ok(Generated {
        class: req.class,
        seed_used: seed,
        grid: encode_png(&tile_grid(&images)),
        images: images.iter().map(encode_png).collect(),
    })
}

/// Read-only state shared by all requests.
pub struct AppState {
    pub bundle: ModelBundle,
    pub checkpoint_id: String,
}

impl AppState {
    pub fn new(bundle: ModelBundle, checkpoint_id: impl Into<String>) -> Arc<Self> {
        Arc::new(AppState { bundle, checkpoint_id: checkpoint_id.into() })
    }

    pub fn load(path: &Path) -> Result<Arc<Self>> {
        let bytes = std::fs::read(path)?;
        let bundle = ModelBundle::from_bytes(&bytes)?;
        Ok(Self::new(bundle, checkpoint_id(path, &bytes)))
    }
}

/// `<file name>:<first 16 hex digits of SHA-256>`
pub fn checkpoint_id(path: &Path, bytes: &[u8]) -> String {
    let digest: String = Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{name}:{digest}")
}

async fn classes() -> Json<Vec<&'static str>> {
    Json(ColorClass::names())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::json!({ "status": "ok", "checkpoint": state.checkpoint_id }))
}

async fn generate(
    State(state): State<Arc<AppState>>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> std::result::Result<Response, ApiError> {
    let grid_only = match query.get("format").map(String::as_str) {
        None | Some("json") => false,
        Some("grid") => true,
        Some(other) => return Err(ApiError::bad(Some("format"), format!("unknown format {other:?}; use json or grid"))),
    };
    let req = parse_generate_request(&body)?;
    let generated = tokio::task::spawn_blocking(move || handle_generate(&req, &state.bundle.generator))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok(if grid_only {
        let seed = generated.seed_used.to_string();
        ([(header::CONTENT_TYPE, "image/png".to_string()), (header::HeaderName::from_static("x-seed-used"), seed)], generated.grid)
            .into_response()
    } else {
        Json(GenerateResponse::from(generated)).into_response()
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/classes", get(classes))
        .route("/health", get(health))
        .route("/generate", post(generate))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = parse_generate_request(br#"{"class":"blue","count":16,"seed":42}"#).unwrap();
        assert_eq!(ok, GenerateRequest { class: ColorClass::Blue, count: 16, seed: Some(42) });
        assert_eq!(parse_generate_request(br#"{"class":"red","count":1}"#).unwrap().seed, None);
        let cases: [(&[u8], Option<&str>); 8] = [
            (br#"{"class":"crimson","count":1}"#, Some("class")),
            (br#"{"class":3,"count":1}"#, Some("class")),
            (br#"{"count":1}"#, Some("class")),
            (br#"{"class":"red","count":0}"#, Some("count")),
            (br#"{"class":"red","count":257}"#, Some("count")),
            (br#"{"class":"red","count":2,"seed":-1}"#, Some("seed")),
            (br#"{"class":"red","count":2,"colour":1}"#, Some("colour")),
            (b"not json", None),
        ];
        for (body, field) in cases {
            let e = parse_generate_request(body).unwrap_err();
            assert_eq!(e.status, 400);
            assert_eq!(e.field.as_deref(), field, "{}", String::from_utf8_lossy(body));
        }
    }

    #[test]
    fn unknown_class_message_lists_classes() {
        let e = parse_generate_request(br#"{"class":"crimson","count":1}"#).unwrap_err();
        for name in ColorClass::names() {
            assert!(e.error.contains(name), "{}", e.error);
        }
    }
}
