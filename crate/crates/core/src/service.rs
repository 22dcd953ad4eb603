//! Read-only HTTP delivery of built bundles.
//!
//! Artifact responses carry a strong `ETag` (the SHA-256 recorded in `meta.json`) and are served
//! only if listed in the bundle's checksums. The bundle index is immutable and swapped wholesale
//! when it is refreshed.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Body;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tracing::{info, warn};

use crate::error::{Error, Result};
use crate::pipeline::{BundleStore, PreviewBundle, SIDECAR_FILE, THUMBNAIL_FILE};
use crate::volume::Dims;

pub const IMMUTABLE: &str = "public, max-age=31536000, immutable";
pub const REVALIDATE: &str = "no-cache";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DatasetSummary {
    pub id: String,
    pub name: String,
    pub dims: Dims,
    pub thumbnail_url: Option<String>,
}

#[derive(Default)]
struct Index {
    bundles: BTreeMap<String, Arc<PreviewBundle>>,
}

struct AppState {
    store: BundleStore,
    index: RwLock<Arc<Index>>,
}

impl AppState {
    fn refresh(&self) -> Result<Arc<Index>> {
        let bundles = self
            .store
            .list()?
            .into_iter()
            .map(|b| (b.meta.id.clone(), Arc::new(b)))
            .collect();
        let index = Arc::new(Index { bundles });
        *self.index.write().expect("index lock") = index.clone();
        Ok(index)
    }

    fn current(&self) -> Arc<Index> {
        self.index.read().expect("index lock").clone()
    }

    /// Looks the bundle up, refreshing the index once on a miss.
    fn bundle(&self, id: &str) -> Option<Arc<PreviewBundle>> {
        if let Some(b) = self.current().bundles.get(id) {
            return Some(b.clone());
        }
        self.refresh().ok()?.bundles.get(id).cloned()
    }
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl ApiError {
    fn not_found(what: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, what.into())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::UnknownDataset(id) => ApiError::not_found(format!("unknown dataset {id}")),
            Error::InvalidId(id) => ApiError::not_found(format!("unknown dataset {id}")),
            _ => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.1, "status": self.0.as_u16() });
        (self.0, Json(body)).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn etag_matches(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .any(|t| t == "*" || t == etag)
}

fn respond(headers: &HeaderMap, etag: String, cache: &'static str, content_type: &'static str, body: Vec<u8>) -> Response {
    let mut resp = if etag_matches(headers, &etag) {
        StatusCode::NOT_MODIFIED.into_response()
    } else {
        let mut r = Response::new(Body::from(body));
        r.headers_mut()
            .insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
        r
    };
    let h = resp.headers_mut();
    h.insert(header::ETAG, HeaderValue::from_str(&etag).expect("hex etag"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static(cache));
    resp
}

fn json_response(headers: &HeaderMap, value: &impl Serialize) -> ApiResult {
    let body = serde_json::to_vec(value).map_err(Error::from)?;
    let etag = format!("\"{}\"", hex::encode(Sha256::digest(&body)));
    Ok(respond(headers, etag, REVALIDATE, "application/json", body))
}

fn content_type(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("png") => "image/png",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn list_datasets(State(st): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    let index = st.refresh()?;
    let list: Vec<DatasetSummary> = index
        .bundles
        .values()
        .map(|b| DatasetSummary {
            id: b.meta.id.clone(),
            name: b.meta.name.clone(),
            dims: b.meta.dims,
            thumbnail_url: b
                .checksums
                .contains_key(THUMBNAIL_FILE)
                .then(|| format!("/api/datasets/{}/{THUMBNAIL_FILE}", b.meta.id)),
        })
        .collect();
    json_response(&headers, &list)
}

async fn get_dataset(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> ApiResult {
    let bundle = st
        .bundle(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset {id}")))?;
    json_response(&headers, bundle.as_ref())
}

async fn serve_file(st: &AppState, id: &str, rel: String, headers: &HeaderMap) -> ApiResult {
    let bundle = st
        .bundle(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset {id}")))?;
    let digest = bundle
        .checksums
        .get(&rel)
        .ok_or_else(|| ApiError::not_found(format!("{id} has no file {rel}")))?;
    let path = st.store.bundle_dir(id).join(&rel);
    let body = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::not_found(format!("{id} has no file {rel}")))?;
    if body.len() as u64 != digest.bytes {
        warn!(id, file = %rel, "file changed under the index, refreshing");
        let _ = st.refresh();
        return Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, format!("{id} is being rebuilt")));
    }
    let etag = format!("\"{}\"", digest.sha256);
    Ok(respond(headers, etag, IMMUTABLE, content_type(&rel), body))
}

async fn get_thumbnail(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> ApiResult {
    serve_file(&st, &id, THUMBNAIL_FILE.into(), &headers).await
}

async fn get_sidecar(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> ApiResult {
    serve_file(&st, &id, SIDECAR_FILE.into(), &headers).await
}

async fn get_data(
    State(st): State<Arc<AppState>>,
    UrlPath((id, file)): UrlPath<(String, String)>,
    headers: HeaderMap,
) -> ApiResult {
    serve_file(&st, &id, format!("data/{file}"), &headers).await
}

async fn get_interactive(
    State(st): State<Arc<AppState>>,
    UrlPath((id, scheme, file)): UrlPath<(String, String, String)>,
    headers: HeaderMap,
) -> ApiResult {
    serve_file(&st, &id, format!("interactive/{scheme}/{file}"), &headers).await
}

async fn api_fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn builtin_index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn access_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().clone();
    let started = Instant::now();
    let resp = next.run(req).await;
    info!(
        %method,
        path = %uri.path(),
        status = resp.status().as_u16(),
        micros = started.elapsed().as_micros() as u64,
        "request"
    );
    resp
}

/// Router over a bundle root. `assets` is an optional directory of static viewer files served at
/// `/`; without it a minimal built-in page lists the datasets.
pub fn router(store: BundleStore, assets: Option<PathBuf>) -> Result<Router> {
    let state = Arc::new(AppState {
        store,
        index: RwLock::new(Arc::new(Index::default())),
    });
    state.refresh()?;
    let api = Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/thumbnail.png", get(get_thumbnail))
        .route("/datasets/{id}/thumbnail.json", get(get_sidecar))
        .route("/datasets/{id}/data/{file}", get(get_data))
        .route("/datasets/{id}/interactive/{scheme}/{file}", get(get_interactive))
        .fallback(api_fallback)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(builtin_index)),
    };
    Ok(app.layer(middleware::from_fn(access_log)))
}

/// Serves until Ctrl-C on an already bound listener.
pub async fn serve_listener(listener: TcpListener, app: Router) -> Result<()> {
    info!(addr = ?listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub async fn serve(store: BundleStore, addr: SocketAddr, assets: Option<PathBuf>) -> Result<()> {
    let app = router(store, assets)?;
    let listener = TcpListener::bind(addr).await?;
    serve_listener(listener, app).await
}

const INDEX_HTML: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>ctprev</title>
<style>body{font-family:sans-serif;margin:2em}figure{display:inline-block;margin:1em;text-align:center}img{width:256px;height:256px;background:#000}</style>
</head><body><h1>Datasets</h1><div id="list"></div>
<script>
fetch('/api/datasets').then(r=>r.json()).then(ds=>{
  const list=document.getElementById('list');
  if(!ds.length){list.textContent='No bundles built yet.';return;}
  for(const d of ds){
    const f=document.createElement('figure');
    if(d.thumbnail_url){const i=document.createElement('img');i.src=d.thumbnail_url;f.appendChild(i);}
    const c=document.createElement('figcaption');c.textContent=d.name+' '+d.dims.join('x');f.appendChild(c);
    list.appendChild(f);
  }
});
</script></body></html>
"#;
