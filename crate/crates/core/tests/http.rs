use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine;
use http_body_util::BodyExt;
use logogen::color::{canonical_shade, ColorClass};
use logogen::evaluation::canonical_oracle_bundle;
use logogen::service::{router, AppState, GenerateResponse};
use tower::ServiceExt;

fn state() -> Arc<AppState> {
    AppState::new(canonical_oracle_bundle().unwrap(), "oracle.bin:0123456789abcdef")
}

async fn call(state: &Arc<AppState>, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, ctype)
}

fn post(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()
}

fn decode(b64: &str) -> image::RgbImage {
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
    image::load_from_memory(&bytes).unwrap().to_rgb8()
}

#[tokio::test]
async fn classes_and_health() {
    let s = state();
    let (status, body, _) = call(&s, Request::get("/classes").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<String> = serde_json::from_slice(&body).unwrap();
    assert_eq!(names, ColorClass::names());
    let (status, body, _) = call(&s, Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["checkpoint"], "oracle.bin:0123456789abcdef");
}

#[tokio::test]
async fn seeded_requests_are_byte_identical() {
    let s = state();
    let before = s.bundle.checksum();
    let body = r#"{"class":"blue","count":4,"seed":9}"#;
    let (status, a, ctype) = call(&s, post("/generate", body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("application/json"));
    let (_, b, _) = call(&s, post("/generate", body)).await;
    assert_eq!(a, b);
    let resp: GenerateResponse = serde_json::from_slice(&a).unwrap();
    assert_eq!((resp.count, resp.images.len(), resp.seed_used), (4, 4, 9));
    let blue = canonical_shade(ColorClass::Blue);
    assert!(decode(&resp.images[0]).pixels().all(|p| p.0 == [blue.r, blue.g, blue.b]));
    assert_eq!(decode(resp.grid.as_ref().unwrap()).dimensions(), (64, 64));
    assert_eq!(s.bundle.checksum(), before);
}

#[tokio::test]
async fn count_64_gives_grid_of_256() {
    let s = state();
    let (status, body, _) = call(&s, post("/generate", r#"{"class":"green","count":64,"seed":1}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let resp: GenerateResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.images.len(), 64);
    assert_eq!(decode(resp.grid.as_ref().unwrap()).dimensions(), (256, 256));

    let (status, png, ctype) = call(&s, post("/generate?format=grid", r#"{"class":"green","count":64,"seed":1}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("image/png"));
    assert_eq!(image::load_from_memory(&png).unwrap().to_rgb8().dimensions(), (256, 256));
    assert_eq!(base64::engine::general_purpose::STANDARD.encode(&png), resp.grid.unwrap());
}

#[tokio::test]
async fn fresh_seed_is_echoed_and_replays() {
    let s = state();
    let (_, body, _) = call(&s, post("/generate", r#"{"class":"red","count":2}"#)).await;
    let first: GenerateResponse = serde_json::from_slice(&body).unwrap();
    assert!(first.seed_used < (1 << 53));
    let replay = format!(r#"{{"class":"red","count":2,"seed":{}}}"#, first.seed_used);
    let (_, body, _) = call(&s, post("/generate", &replay)).await;
    let second: GenerateResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(first, second);
}

#[tokio::test]
async fn bad_requests_are_400_with_field() {
    let s = state();
    for (uri, body, field) in [
        ("/generate", r#"{"class":"red","count":0}"#, Some("count")),
        ("/generate", r#"{"class":"red","count":300}"#, Some("count")),
        ("/generate", r#"{"class":"crimson","count":1}"#, Some("class")),
        ("/generate", r#"{"class":"red"}"#, Some("count")),
        ("/generate", "{", None),
        ("/generate?format=svg", r#"{"class":"red","count":1}"#, Some("format")),
    ] {
        let (status, body, _) = call(&s, post(uri, body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {}", String::from_utf8_lossy(&body));
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].is_string());
        assert_eq!(v["field"].as_str(), field);
    }
}
