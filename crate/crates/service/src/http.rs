//! HTTP and websocket front of [`StudyService`].
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/studies` | create a study from a [`StudyConfig`] |
//! | POST | `/api/studies/{id}/sessions` | start or resume `{"participant": n}` |
//! | GET | `/api/sessions/{id}/channel` | websocket carrying wire messages |
//! | POST | `/api/sessions/{id}/messages` | one client message, replies as a JSON array |
//! | GET | `/api/studies/{id}/logs` | log file names |
//! | GET | `/api/studies/{id}/logs/{file}` | one log file, verbatim |

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::study::{ServiceError, StudyConfig, StudyService};
use crate::wire::{ClientMessage, ServerBody, ServerMessage};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownStudy(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
            ServiceError::ParticipantFinished(_) => StatusCode::CONFLICT,
            ServiceError::Corrupt(_) | ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type AppState = Arc<StudyService>;

pub fn router(service: Arc<StudyService>) -> Router {
    Router::new()
        .route("/api/studies", post(create_study))
        .route("/api/studies/{id}/sessions", post(start_session))
        .route("/api/studies/{id}/logs", get(list_logs))
        .route("/api/studies/{id}/logs/{file}", get(download_log))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/channel", get(channel))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Arc<StudyService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Store(std::io::Error::other(e.to_string())))?
}

async fn create_study(State(svc): State<AppState>, Json(config): Json<StudyConfig>) -> Result<Response, ServiceError> {
    let id = blocking(move || svc.create_study(config)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "study_id": id }))).into_response())
}

#[derive(Deserialize)]
struct StartRequest {
    participant: u32,
}

async fn start_session(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<StartRequest>,
) -> Result<Response, ServiceError> {
    let started = blocking(move || svc.start_session(&id, req.participant)).await?;
    Ok(Json(started).into_response())
}

async fn list_logs(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let files = blocking(move || svc.list_logs(&id)).await?;
    Ok(Json(files).into_response())
}

async fn download_log(
    State(svc): State<AppState>,
    Path((id, file)): Path<(String, String)>,
) -> Result<Response, ServiceError> {
    let name = file.clone();
    match blocking(move || svc.read_log(&id, &file)).await? {
        Some(text) => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response()),
        None => Ok((StatusCode::NOT_FOUND, Json(json!({ "error": format!("no log {name}") }))).into_response()),
    }
}

async fn post_message(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Json(msg): Json<ClientMessage>,
) -> Result<Response, ServiceError> {
    let replies = blocking(move || svc.handle(&id, &msg)).await?;
    Ok(Json(replies).into_response())
}

async fn channel(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ServiceError> {
    let session = svc.session(&id)?;
    let greeting = session.lock().unwrap().current_state(0);
    Ok(ws.on_upgrade(move |socket| run_channel(socket, svc, id, greeting)))
}

async fn send_all(socket: &mut WebSocket, messages: &[ServerMessage]) -> bool {
    for m in messages {
        let text = serde_json::to_string(m).expect("server messages serialise");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn run_channel(mut socket: WebSocket, svc: AppState, id: String, greeting: Vec<ServerMessage>) {
    if !send_all(&mut socket, &greeting).await {
        return;
    }
    while let Some(Ok(frame)) = socket.recv().await {
        let text = match frame {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let replies = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(msg) => {
                let svc = Arc::clone(&svc);
                let id = id.clone();
                match blocking(move || svc.handle(&id, &msg)).await {
                    Ok(r) => r,
                    Err(e) => vec![ServerMessage::new(0, ServerBody::Error { message: e.to_string() })],
                }
            }
            Err(e) => vec![ServerMessage::new(
                0,
                ServerBody::Error {
                    message: format!("bad message: {e}"),
                },
            )],
        };
        if !send_all(&mut socket, &replies).await {
            break;
        }
    }
}
