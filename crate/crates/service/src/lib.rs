//! HTTP service for conducting Hi3+3 trials cohort by cohort.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | calibrate and open a session |
//! | GET | `/sessions/{id}` | full snapshot |
//! | DELETE | `/sessions/{id}` | remove a session |
//! | POST | `/sessions/{id}/cohorts` | record a cohort, get the decision |
//! | GET | `/sessions/{id}/tables` | per-dose decision tables |
//! | POST | `/sessions/{id}/select-mtd` | MTD selection on current data |
//!
//! Errors are `{"code", "message", "field"?}`.

pub mod error;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{ApiError, ApiResult};
pub use session::{CohortInput, CreateSession, Session};
pub use store::Store;

use session::{CalibrationView, CohortResult, MtdView, SessionView, TableView};

#[derive(Serialize)]
struct Created {
    id: String,
    calibration: CalibrationView,
    tables: Vec<TableView>,
}

#[derive(Serialize)]
struct Tables {
    id: String,
    tables: Vec<TableView>,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("request body: {e}")))
}

async fn create(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult<(StatusCode, Json<Created>)> {
    let request: CreateSession = parse(&body)?;
    let session = Session::create(uuid::Uuid::new_v4().to_string(), request)?;
    store.insert(&session)?;
    let created = Created { id: session.id.clone(), calibration: session.calibration_view()?, tables: session.tables()? };
    Ok((StatusCode::CREATED, Json(created)))
}

async fn snapshot(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(store.load(&id)?.view()?))
}

async fn remove(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    store.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn cohort(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<CohortResult>> {
    let input: CohortInput = parse(&body)?;
    Ok(Json(store.update(&id, |s| s.add_cohort(&input))?))
}

async fn tables(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Json<Tables>> {
    let session = store.load(&id)?;
    Ok(Json(Tables { id, tables: session.tables()? }))
}

async fn select(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Json<MtdView>> {
    Ok(Json(store.load(&id)?.mtd_view()?))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(snapshot).delete(remove))
        .route("/sessions/{id}/cohorts", post(cohort))
        .route("/sessions/{id}/tables", get(tables))
        .route("/sessions/{id}/select-mtd", post(select))
        .with_state(store)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, store: Arc<Store>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
