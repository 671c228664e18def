use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use peakvol_core::interaction::ControllerSample;
use peakvol_core::transfer::TransferFunction;
use tokio::sync::broadcast::error::RecvError;

use crate::protocol::{ErrorBody, Message, Outbound};
use crate::service::Shared;

type AppState = State<Arc<Shared>>;

pub(crate) fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/state/tf", get(get_tf).put(put_tf))
        .route("/state/histogram", get(get_histogram))
        .route("/state/clip", get(get_clip))
        .route("/input/sample", post(post_sample))
        .route("/frame/latest", get(get_frame))
        .route("/stats", get(get_stats))
        .route("/stream", get(stream))
        .with_state(shared)
}

fn error(status: StatusCode, body: ErrorBody) -> Response {
    (status, Json(body)).into_response()
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

/// Canonical transfer-function file bytes.
async fn get_tf(State(shared): AppState) -> Response {
    json_text(shared.snapshot().tf_json.clone())
}

async fn put_tf(State(shared): AppState, body: String) -> Response {
    let tf = match TransferFunction::from_json(&body) {
        Ok(tf) => tf,
        Err(e) => {
            let body = ErrorBody::from(&e);
            let status = if body.error == "parse" {
                StatusCode::BAD_REQUEST
            } else {
                StatusCode::UNPROCESSABLE_ENTITY
            };
            return error(status, body);
        }
    };
    match shared.set_tf(tf).await {
        Some(snap) => json_text(snap.tf_json.clone()),
        None => error(
            StatusCode::SERVICE_UNAVAILABLE,
            ErrorBody::new("shutdown", "service is shutting down"),
        ),
    }
}

async fn get_histogram(State(shared): AppState) -> Response {
    Json(&shared.histogram).into_response()
}

async fn get_clip(State(shared): AppState) -> Response {
    Json(shared.snapshot().plane).into_response()
}

async fn post_sample(State(shared): AppState, body: String) -> Response {
    let sample: ControllerSample = match serde_json::from_str(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, ErrorBody::new("parse", e.to_string())),
    };
    if let Err(reason) = sample.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, ErrorBody::new("invalid_sample", reason));
    }
    shared.inject(sample);
    StatusCode::ACCEPTED.into_response()
}

async fn get_frame(State(shared): AppState) -> Response {
    let Some(frame) = shared.latest_frame() else {
        return error(
            StatusCode::SERVICE_UNAVAILABLE,
            ErrorBody::new("no_frame", "no frame rendered yet"),
        );
    };
    let mut res = ([(header::CONTENT_TYPE, "image/png")], frame.png.clone()).into_response();
    let headers = res.headers_mut();
    headers.insert("x-frame-seq", HeaderValue::from(frame.seq));
    headers.insert("x-state-version", HeaderValue::from(frame.state_version));
    res
}

async fn get_stats(State(shared): AppState) -> Response {
    Json(shared.stats()).into_response()
}

async fn stream(State(shared): AppState, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run_stream(shared, socket))
}

async fn send_frame(socket: &mut WebSocket, frame: &crate::service::Frame) -> bool {
    socket
        .send(WsMessage::Text(Message::frame(frame).to_text().into()))
        .await
        .is_ok()
        && socket.send(WsMessage::Binary(frame.png.clone())).await.is_ok()
}

async fn send_current(socket: &mut WebSocket, shared: &Shared) -> bool {
    let state = Message::state(&shared.snapshot()).to_text();
    if socket.send(WsMessage::Text(state.into())).await.is_err() {
        return false;
    }
    match shared.latest_frame() {
        Some(f) => send_frame(socket, &f).await,
        None => true,
    }
}

async fn run_stream(shared: Arc<Shared>, mut socket: WebSocket) {
    // Subscribe before the greeting so nothing published in between is lost.
    let mut rx = shared.outbound.subscribe();
    if !send_current(&mut socket, &shared).await {
        return;
    }
    loop {
        tokio::select! {
            msg = rx.recv() => {
                let ok = match msg {
                    Ok(Outbound::State(s)) => socket
                        .send(WsMessage::Text(Message::state(&s).to_text().into()))
                        .await
                        .is_ok(),
                    Ok(Outbound::Event { version, event }) => socket
                        .send(WsMessage::Text(Message::Event { version, event: &event }.to_text().into()))
                        .await
                        .is_ok(),
                    Ok(Outbound::Frame(f)) => send_frame(&mut socket, &f).await,
                    // Slow client: skip ahead to the current state.
                    Err(RecvError::Lagged(_)) => send_current(&mut socket, &shared).await,
                    Err(RecvError::Closed) => false,
                };
                if !ok {
                    return;
                }
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(WsMessage::Close(_))) => return,
                Some(Ok(_)) => {}
            }
        }
    }
}
